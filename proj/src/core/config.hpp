#pragma once

// Versioned key=value config files ("CORLD-CFG v1") and per-run manifests
// recording the full configuration, seed, and artifact checksums.

#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/training.hpp"

namespace corld {

std::vector<std::pair<std::string, std::string>> config_to_kv(const TrainConfig& cfg);
std::vector<std::pair<std::string, std::string>> genspec_to_kv(const GenSpec& spec);

// Applies file keys onto cfg; unknown keys are rejected.
void load_train_config(const std::string& path, TrainConfig& cfg);
void save_train_config(const std::string& path, const TrainConfig& cfg);

// One key applied onto cfg, e.g. from a CLI override. Throws on unknown keys
// or unparseable values.
void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value);

// manifest.txt next to every run's outputs: command, config echo, artifacts.
void write_run_manifest(const std::string& dir, const std::string& command,
                        const std::vector<std::pair<std::string, std::string>>& config,
                        const std::vector<std::string>& artifact_files);

}  // namespace corld
