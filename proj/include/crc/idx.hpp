#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "crc/binio.hpp"
#include "crc/dataset.hpp"
#include "crc/errors.hpp"
#include "crc/image.hpp"

namespace crc {

// IDX is the binary container MNIST-family datasets are distributed in:
//   bytes 0-3   magic: 00 00 <type> <rank>; type 0x08 = unsigned byte,
//               rank 3 for image files, 1 for label files
//   next        rank big-endian u32 dimensions
//   payload     row-major unsigned bytes
// Image magic is 0x00000803, label magic 0x00000801. Pixels map to [0, 1] by
// division by 255; writing quantizes with round-half-up.

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803u;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801u;

inline std::vector<Image> read_idx_images(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes.data(), bytes.size(), path.string());
  const std::uint32_t magic = r.take_be32("magic");
  if (magic != kIdxImagesMagic) {
    char hex[16];
    std::snprintf(hex, sizeof(hex), "0x%08x", magic);
    throw ParseError(path.string() + ": bad image magic " + hex +
                     " at byte offset 0 (expected 0x00000803)");
  }
  const std::uint32_t count = r.take_be32("image count");
  const std::uint32_t rows = r.take_be32("row count");
  const std::uint32_t cols = r.take_be32("column count");
  if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096)
    throw ParseError(path.string() + ": implausible image dimensions " + std::to_string(rows) +
                     "x" + std::to_string(cols) + " at byte offset 8");
  const std::size_t pixels_per_image = static_cast<std::size_t>(rows) * cols;
  // Check the payload size against the header claim before any allocation;
  // a corrupt count must produce a parse error, not an allocation failure.
  const std::uint64_t expected = static_cast<std::uint64_t>(count) * pixels_per_image;
  if (r.remaining() != expected)
    throw ParseError(path.string() + ": payload of " + std::to_string(r.remaining()) +
                     " bytes at offset 16 does not match header claim of " +
                     std::to_string(count) + " x " + std::to_string(rows) + " x " +
                     std::to_string(cols) + " = " + std::to_string(expected) + " bytes" +
                     (r.remaining() < expected ? " (truncated)" : " (trailing bytes)"));
  std::vector<Image> images;
  images.reserve(count);
  for (std::uint32_t n = 0; n < count; ++n) {
    const unsigned char* p = r.take(pixels_per_image, "image payload");
    Image img(static_cast<int>(rows), static_cast<int>(cols));
    for (std::size_t i = 0; i < pixels_per_image; ++i)
      img.pixels[i] = static_cast<double>(p[i]) / 255.0;
    images.push_back(std::move(img));
  }
  r.expect_exhausted();
  return images;
}

inline LabelVector read_idx_labels(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes.data(), bytes.size(), path.string());
  const std::uint32_t magic = r.take_be32("magic");
  if (magic != kIdxLabelsMagic) {
    char hex[16];
    std::snprintf(hex, sizeof(hex), "0x%08x", magic);
    throw ParseError(path.string() + ": bad label magic " + hex +
                     " at byte offset 0 (expected 0x00000801)");
  }
  const std::uint32_t count = r.take_be32("label count");
  const unsigned char* p = r.take(count, "label payload");
  LabelVector labels(p, p + count);
  r.expect_exhausted();
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= kNumClasses)
      throw ValidationError(path.string() + ": label " + std::to_string(labels[i]) +
                            " at index " + std::to_string(i) + " out of range [0,10) (byte offset " +
                            std::to_string(8 + i) + ")");
  return labels;
}

// Round-half-up quantization used when persisting [0,1] intensities as bytes.
inline unsigned char quantize_pixel(double p) {
  const double scaled = std::floor(p * 255.0 + 0.5);
  return static_cast<unsigned char>(std::clamp(scaled, 0.0, 255.0));
}

inline void write_idx_images(const std::vector<Image>& images,
                             const std::filesystem::path& path) {
  if (images.empty()) throw ValidationError("write_idx_images: refusing to write empty dataset");
  const int h = images[0].height;
  const int w = images[0].width;
  std::vector<unsigned char> bytes;
  bytes.reserve(16 + images.size() * images[0].size());
  unsigned char buf[4];
  store_be32(kIdxImagesMagic, buf);
  bytes.insert(bytes.end(), buf, buf + 4);
  store_be32(static_cast<std::uint32_t>(images.size()), buf);
  bytes.insert(bytes.end(), buf, buf + 4);
  store_be32(static_cast<std::uint32_t>(h), buf);
  bytes.insert(bytes.end(), buf, buf + 4);
  store_be32(static_cast<std::uint32_t>(w), buf);
  bytes.insert(bytes.end(), buf, buf + 4);
  for (const Image& img : images) {
    if (img.height != h || img.width != w)
      throw ValidationError("write_idx_images: mixed image sizes in dataset");
    for (double p : img.pixels) bytes.push_back(quantize_pixel(p));
  }
  write_file_bytes(path, bytes);
}

inline void write_idx_labels(const LabelVector& labels, const std::filesystem::path& path) {
  if (labels.empty()) throw ValidationError("write_idx_labels: refusing to write empty dataset");
  std::vector<unsigned char> bytes;
  bytes.reserve(8 + labels.size());
  unsigned char buf[4];
  store_be32(kIdxLabelsMagic, buf);
  bytes.insert(bytes.end(), buf, buf + 4);
  store_be32(static_cast<std::uint32_t>(labels.size()), buf);
  bytes.insert(bytes.end(), buf, buf + 4);
  bytes.insert(bytes.end(), labels.begin(), labels.end());
  write_file_bytes(path, bytes);
}

// Naming convention for persisted datasets: <name>-<split>-images.idx and
// <name>-<split>-labels.idx, where <name> is e.g. "mnist-D2".
inline std::string idx_images_filename(const std::string& name, Split split) {
  return name + "-" + split_token(split) + "-images.idx";
}

inline std::string idx_labels_filename(const std::string& name, Split split) {
  return name + "-" + split_token(split) + "-labels.idx";
}

inline void write_idx(const LabeledDataset& dataset, const std::filesystem::path& dir) {
  dataset.validate();
  if (dataset.size() == 0)
    throw ValidationError("write_idx: refusing to write empty dataset " + dataset.name);
  write_idx_images(dataset.images, dir / idx_images_filename(dataset.name, dataset.split));
  write_idx_labels(dataset.labels, dir / idx_labels_filename(dataset.name, dataset.split));
}

inline LabeledDataset read_idx_dataset(const std::filesystem::path& images_path,
                                       const std::filesystem::path& labels_path,
                                       const std::string& name, Split split) {
  LabeledDataset d;
  d.name = name;
  d.split = split;
  d.images = read_idx_images(images_path);
  d.labels = read_idx_labels(labels_path);
  if (d.images.size() != d.labels.size())
    throw ValidationError(name + ": " + std::to_string(d.images.size()) + " images in " +
                          images_path.string() + " but " + std::to_string(d.labels.size()) +
                          " labels in " + labels_path.string());
  return d;
}

inline LabeledDataset read_idx_dataset(const std::filesystem::path& dir, const std::string& name,
                                       Split split) {
  return read_idx_dataset(dir / idx_images_filename(name, split),
                          dir / idx_labels_filename(name, split), name, split);
}

}  // namespace crc
