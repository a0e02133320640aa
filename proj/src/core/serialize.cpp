#include "core/serialize.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>

namespace corld {

namespace {

void put_u16(std::ostream& os, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  if (!is) fail("serialize", "truncated payload reading u16");
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) fail("serialize", "truncated payload reading u32");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

void write_tensor_stream(std::ostream& os, const Tensor& t) {
  os.write(t.dtype() == Dtype::F32 ? "F32T" : "F64T", 4);
  put_u32(os, static_cast<uint32_t>(t.rank()));
  for (int d : t.shape()) put_u32(os, static_cast<uint32_t>(d));
  if (t.dtype() == Dtype::F32) {
    std::vector<float> buf(t.data().size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(t.data()[i]);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
  } else {
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.data().size() * sizeof(double)));
  }
}

Tensor read_tensor_stream(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is) fail("serialize", "truncated payload reading magic");
  Dtype dt;
  if (std::memcmp(magic, "F32T", 4) == 0)
    dt = Dtype::F32;
  else if (std::memcmp(magic, "F64T", 4) == 0)
    dt = Dtype::F64;
  else
    fail("serialize", std::string("bad tensor magic '") + std::string(magic, 4) + "'");
  uint32_t rank = get_u32(is);
  if (rank > 8) fail("serialize", "implausible tensor rank " + std::to_string(rank));
  std::vector<int> shape(rank);
  for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(get_u32(is));
  Tensor t(shape, dt);
  size_t n = t.data().size();
  if (dt == Dtype::F32) {
    std::vector<float> buf(n);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!is) fail("serialize", "truncated tensor payload");
    for (size_t i = 0; i < n; ++i) t.data()[i] = static_cast<double>(buf[i]);
  } else {
    is.read(reinterpret_cast<char*>(t.data().data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) fail("serialize", "truncated tensor payload");
  }
  return t;
}

}  // namespace

void write_tensor_file(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("serialize", "cannot open " + path + " for writing");
  write_tensor_stream(os, t);
  if (!os) fail("serialize", "write failed for " + path);
}

Tensor read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("serialize", "cannot open " + path);
  return read_tensor_stream(is);
}

void write_checkpoint(const std::string& path, const NamedTensors& entries,
                      const std::vector<std::string>& header_lines) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("serialize", "cannot open " + path + " for writing");
  if (!header_lines.empty()) {
    os << "CORLD-CKPT v1\n";
    for (const std::string& line : header_lines) os << line << "\n";
    os << "\n";
  }
  put_u32(os, static_cast<uint32_t>(entries.size()));
  for (const auto& [name, tensor] : entries) {
    if (name.size() > 0xffff) fail("serialize", "checkpoint name too long");
    put_u16(os, static_cast<uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor_stream(os, tensor);
  }
  if (!os) fail("serialize", "write failed for " + path);
}

NamedTensors read_checkpoint(const std::string& path, std::vector<std::string>* header_lines) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("serialize", "cannot open " + path);
  if (header_lines) header_lines->clear();
  if (is.peek() == 'C') {
    std::string line;
    std::getline(is, line);
    if (line != "CORLD-CKPT v1")
      fail("serialize", "checkpoint version mismatch: '" + line + "'");
    while (std::getline(is, line) && !line.empty())
      if (header_lines) header_lines->push_back(line);
  }
  uint32_t count = get_u32(is);
  NamedTensors entries;
  entries.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t len = get_u16(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (!is) fail("serialize", "truncated checkpoint name");
    entries.emplace_back(std::move(name), read_tensor_stream(is));
  }
  return entries;
}

uint32_t crc32_bytes(const void* data, size_t n) {
  return static_cast<uint32_t>(
      ::crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

uint32_t crc32_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("serialize", "cannot open " + path);
  uLong crc = ::crc32(0L, Z_NULL, 0);
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof(buf));
    std::streamsize got = is.gcount();
    if (got > 0) crc = ::crc32(crc, reinterpret_cast<const Bytef*>(buf), static_cast<uInt>(got));
  }
  return static_cast<uint32_t>(crc);
}

}  // namespace corld
