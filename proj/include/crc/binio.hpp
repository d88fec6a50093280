#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "crc/errors.hpp"

namespace crc {

// Small endian-explicit binary I/O helpers. IDX headers are big-endian by
// format definition; checkpoints and probability matrices are little-endian.

inline void store_be32(std::uint32_t v, unsigned char out[4]) {
  out[0] = static_cast<unsigned char>(v >> 24);
  out[1] = static_cast<unsigned char>(v >> 16);
  out[2] = static_cast<unsigned char>(v >> 8);
  out[3] = static_cast<unsigned char>(v);
}

inline std::uint32_t load_be32(const unsigned char in[4]) {
  return (static_cast<std::uint32_t>(in[0]) << 24) | (static_cast<std::uint32_t>(in[1]) << 16) |
         (static_cast<std::uint32_t>(in[2]) << 8) | static_cast<std::uint32_t>(in[3]);
}

inline void store_le32(std::uint32_t v, unsigned char out[4]) {
  out[0] = static_cast<unsigned char>(v);
  out[1] = static_cast<unsigned char>(v >> 8);
  out[2] = static_cast<unsigned char>(v >> 16);
  out[3] = static_cast<unsigned char>(v >> 24);
}

inline std::uint32_t load_le32(const unsigned char in[4]) {
  return static_cast<std::uint32_t>(in[0]) | (static_cast<std::uint32_t>(in[1]) << 8) |
         (static_cast<std::uint32_t>(in[2]) << 16) | (static_cast<std::uint32_t>(in[3]) << 24);
}

inline void store_le64(std::uint64_t v, unsigned char out[8]) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<unsigned char>(v >> (8 * i));
}

inline std::uint64_t load_le64(const unsigned char in[8]) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | in[i];
  return v;
}

inline void store_le_double(double d, unsigned char out[8]) {
  store_le64(std::bit_cast<std::uint64_t>(d), out);
}

inline double load_le_double(const unsigned char in[8]) {
  return std::bit_cast<double>(load_le64(in));
}

// Cursor over an in-memory byte buffer; every decode error reports the byte
// offset it happened at.
class ByteReader {
 public:
  ByteReader(const unsigned char* data, std::size_t size, std::string source)
      : data_(data), size_(size), source_(std::move(source)) {}

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return size_ - offset_; }

  const unsigned char* take(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw ParseError(source_ + ": truncated while reading " + what + " at byte offset " +
                       std::to_string(offset_) + " (need " + std::to_string(n) + " bytes, have " +
                       std::to_string(remaining()) + ")");
    }
    const unsigned char* p = data_ + offset_;
    offset_ += n;
    return p;
  }

  std::uint32_t take_be32(const char* what) { return load_be32(take(4, what)); }
  std::uint32_t take_le32(const char* what) { return load_le32(take(4, what)); }
  std::uint64_t take_le64(const char* what) { return load_le64(take(8, what)); }

  void expect_exhausted() const {
    if (offset_ != size_) {
      throw ParseError(source_ + ": " + std::to_string(size_ - offset_) +
                       " unexpected trailing bytes at offset " + std::to_string(offset_));
    }
  }

  const std::string& source() const { return source_; }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t offset_ = 0;
  std::string source_;
};

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  if (size < 0) throw IoError("cannot determine size of " + path.string());
  std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
  in.seekg(0, std::ios::beg);
  if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw IoError("short read from " + path.string());
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  if (!bytes.empty()) out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  out.flush();
  if (!out) throw IoError("short write to " + path.string());
}

// FNV-1a over a whole file; used for the manifest's dataset and checkpoint
// checksums. Not cryptographic, only a reproducibility fingerprint.
inline std::uint64_t file_checksum(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace crc
