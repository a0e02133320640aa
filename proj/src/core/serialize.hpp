#pragma once

// Binary tensor container and named-tensor checkpoints.
//
// Container: magic "F32T" or "F64T", u32 LE rank, rank x u32 LE dims, then
// the row-major IEEE-754 LE payload in the magic's precision.
//
// Checkpoint body: u32 LE count, then per entry u16 LE name length, UTF-8
// name, embedded container. Model checkpoints prepend a versioned text
// header ("CORLD-CKPT v1", key=value lines, blank line) before the body.

#include <string>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace corld {

void write_tensor_file(const std::string& path, const Tensor& t);
Tensor read_tensor_file(const std::string& path);

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void write_checkpoint(const std::string& path, const NamedTensors& entries,
                      const std::vector<std::string>& header_lines = {});
NamedTensors read_checkpoint(const std::string& path, std::vector<std::string>* header_lines = nullptr);

uint32_t crc32_file(const std::string& path);
uint32_t crc32_bytes(const void* data, size_t n);

}  // namespace corld
