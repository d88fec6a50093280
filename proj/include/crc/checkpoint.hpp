#pragma once

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "crc/binio.hpp"
#include "crc/errors.hpp"
#include "crc/nn.hpp"

namespace crc {

// Checkpoint layout ("CRCNNCKP", version 1), all integers little-endian:
//   8 bytes   magic "CRCNNCKP"
//   u32       format version (1)
//   8 x u32   architecture echo: input_h, input_w, conv_filters, conv_kernel,
//             pool, fc1, fc2, num_classes
//   u32       metadata length, then that many bytes (UTF-8, provenance)
//   8 x (u64 count + count doubles)  parameter segments in fixed order:
//             conv_w, conv_b, fc1_w, fc1_b, fc2_w, fc2_b, out_w, out_b
// Doubles are raw little-endian bit patterns, so save/load round-trips are
// bit-exact and save(load(x)) reproduces x byte for byte.

inline constexpr char kCheckpointMagic[8] = {'C', 'R', 'C', 'N', 'N', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string dataset;  // e.g. "mnist-D1-train"
  std::uint64_t seed = 0;
  std::string config;   // textual echo of the training configuration

  std::string serialize() const {
    return "dataset=" + dataset + "\nseed=" + std::to_string(seed) + "\nconfig=" + config + "\n";
  }

  static CheckpointMeta parse(const std::string& text) {
    CheckpointMeta meta;
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t eol = text.find('\n', pos);
      if (eol == std::string::npos) eol = text.size();
      const std::string line = text.substr(pos, eol - pos);
      pos = eol + 1;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 1);
      if (key == "dataset") meta.dataset = value;
      else if (key == "seed") meta.seed = std::strtoull(value.c_str(), nullptr, 10);
      else if (key == "config") meta.config = value;
    }
    return meta;
  }
};

inline void save_model(const CnnModel& model, const CheckpointMeta& meta,
                       const std::filesystem::path& path) {
  model.arch.validate();
  std::vector<unsigned char> bytes;
  bytes.reserve(64 + meta.serialize().size() + model.params.size() * 8);
  bytes.insert(bytes.end(), kCheckpointMagic, kCheckpointMagic + 8);
  unsigned char b4[4];
  unsigned char b8[8];
  store_le32(kCheckpointVersion, b4);
  bytes.insert(bytes.end(), b4, b4 + 4);
  const CnnArch& a = model.arch;
  for (int dim : {a.input_height, a.input_width, a.conv_filters, a.conv_kernel, a.pool, a.fc1,
                  a.fc2, a.num_classes}) {
    store_le32(static_cast<std::uint32_t>(dim), b4);
    bytes.insert(bytes.end(), b4, b4 + 4);
  }
  const std::string meta_text = meta.serialize();
  store_le32(static_cast<std::uint32_t>(meta_text.size()), b4);
  bytes.insert(bytes.end(), b4, b4 + 4);
  bytes.insert(bytes.end(), meta_text.begin(), meta_text.end());
  for (const auto* segment : model.params.segments()) {
    store_le64(segment->size(), b8);
    bytes.insert(bytes.end(), b8, b8 + 8);
    for (double v : *segment) {
      store_le_double(v, b8);
      bytes.insert(bytes.end(), b8, b8 + 8);
    }
  }
  write_file_bytes(path, bytes);
}

struct LoadedCheckpoint {
  CnnModel model;
  CheckpointMeta meta;
};

inline LoadedCheckpoint load_model(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes.data(), bytes.size(), path.string());
  const unsigned char* magic = r.take(8, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw ParseError(path.string() + ": bad checkpoint magic at byte offset 0");
  const std::uint32_t version = r.take_le32("format version");
  if (version != kCheckpointVersion)
    throw ParseError(path.string() + ": unsupported checkpoint version " +
                     std::to_string(version) + " (expected " +
                     std::to_string(kCheckpointVersion) + ")");
  CnnArch a;
  a.input_height = static_cast<int>(r.take_le32("input height"));
  a.input_width = static_cast<int>(r.take_le32("input width"));
  a.conv_filters = static_cast<int>(r.take_le32("conv filters"));
  a.conv_kernel = static_cast<int>(r.take_le32("conv kernel"));
  a.pool = static_cast<int>(r.take_le32("pool"));
  a.fc1 = static_cast<int>(r.take_le32("fc1"));
  a.fc2 = static_cast<int>(r.take_le32("fc2"));
  a.num_classes = static_cast<int>(r.take_le32("num classes"));
  try {
    a.validate();
  } catch (const ValidationError& e) {
    throw ParseError(path.string() + ": architecture echo invalid: " + e.what());
  }
  for (int dim : {a.input_height, a.input_width, a.conv_filters, a.conv_kernel, a.pool, a.fc1,
                  a.fc2, a.num_classes}) {
    if (dim > 4096)
      throw ParseError(path.string() + ": implausible architecture dimension " +
                       std::to_string(dim));
  }
  // Size the payload from the echoed architecture before allocating anything.
  const std::uint64_t flatten = static_cast<std::uint64_t>(a.pool_out_h()) * a.pool_out_w() *
                                static_cast<std::uint64_t>(a.conv_filters);
  const std::uint64_t kk = static_cast<std::uint64_t>(a.conv_kernel) * a.conv_kernel;
  const std::uint64_t param_count =
      static_cast<std::uint64_t>(a.conv_filters) * kk + a.conv_filters +
      static_cast<std::uint64_t>(a.fc1) * flatten + a.fc1 +
      static_cast<std::uint64_t>(a.fc2) * a.fc1 + a.fc2 +
      static_cast<std::uint64_t>(a.num_classes) * a.fc2 + a.num_classes;
  if (param_count > (1ull << 28))
    throw ParseError(path.string() + ": architecture echo implies " +
                     std::to_string(param_count) + " parameters, refusing");
  const std::uint32_t meta_len = r.take_le32("metadata length");
  const unsigned char* meta_bytes = r.take(meta_len, "metadata");
  CheckpointMeta meta =
      CheckpointMeta::parse(std::string(meta_bytes, meta_bytes + meta_len));

  const std::uint64_t expected_bytes = 8 * 8 + param_count * 8;
  if (r.remaining() != expected_bytes)
    throw ParseError(path.string() + ": architecture/payload size mismatch at byte offset " +
                     std::to_string(r.offset()) + ": have " + std::to_string(r.remaining()) +
                     " bytes, architecture echo implies " + std::to_string(expected_bytes) +
                     (r.remaining() < expected_bytes ? " (truncated)" : " (trailing bytes)"));
  CnnModel model = CnnModel::zeros(a);
  for (auto* segment : model.params.segments()) {
    const std::uint64_t count = r.take_le64("segment length");
    if (count != segment->size())
      throw ParseError(path.string() + ": architecture mismatch, parameter segment of " +
                       std::to_string(count) + " values where " +
                       std::to_string(segment->size()) + " expected (byte offset " +
                       std::to_string(r.offset() - 8) + ")");
    for (double& v : *segment) v = load_le_double(r.take(8, "parameter"));
  }
  r.expect_exhausted();
  return LoadedCheckpoint{std::move(model), std::move(meta)};
}

}  // namespace crc
