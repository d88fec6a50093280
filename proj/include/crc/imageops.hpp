#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "crc/dataset.hpp"
#include "crc/errors.hpp"
#include "crc/image.hpp"
#include "crc/rng.hpp"

namespace crc {

// The four perturbations used to derive datasets D1-D4 from an original D0:
//   1  Gaussian lowpass filter, size 7, sigma 1
//   2  3x3 Laplacian-approximation filter
//   3  additive Gaussian white noise, mean 0, variance 0.02
//   4  additive Gaussian white noise, mean 0, variance 0.1
// Filtering is correlation with zero padding (output size = input size), and
// every produced pixel is clamped back to [0, 1].

struct Kernel2D {
  int height = 0;
  int width = 0;
  std::vector<double> weights;

  Kernel2D(int h, int w) : height(h), width(w), weights(static_cast<std::size_t>(h) * w, 0.0) {}

  double& at(int i, int j) { return weights[static_cast<std::size_t>(i) * width + j]; }
  double at(int i, int j) const { return weights[static_cast<std::size_t>(i) * width + j]; }
};

// Rotationally symmetric Gaussian lowpass kernel, normalized to sum 1.
inline Kernel2D gaussian_kernel(int size, double sigma) {
  if (size < 1 || size % 2 == 0)
    throw ValidationError("gaussian_kernel: size must be odd and positive, got " +
                          std::to_string(size));
  if (!(sigma > 0.0))
    throw ValidationError("gaussian_kernel: sigma must be positive");
  Kernel2D k(size, size);
  const int r = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double di = i - r;
      const double dj = j - r;
      k.at(i, j) = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      sum += k.at(i, j);
    }
  }
  for (double& w : k.weights) w /= sum;
  return k;
}

// 3x3 Laplacian approximation in the parametric alpha form; alpha = 0.2 is
// the common default for this filter shape. The kernel sums to zero.
//   4/(alpha+1) * [ a/4 (1-a)/4 a/4 ; (1-a)/4 -1 (1-a)/4 ; a/4 (1-a)/4 a/4 ]
inline Kernel2D laplacian_kernel(double alpha = 0.2) {
  if (alpha < 0.0 || alpha > 1.0)
    throw ValidationError("laplacian_kernel: alpha must be in [0,1]");
  Kernel2D k(3, 3);
  const double scale = 4.0 / (alpha + 1.0);
  const double corner = scale * alpha / 4.0;
  const double edge = scale * (1.0 - alpha) / 4.0;
  k.at(0, 0) = corner; k.at(0, 1) = edge;   k.at(0, 2) = corner;
  k.at(1, 0) = edge;   k.at(1, 1) = -scale; k.at(1, 2) = edge;
  k.at(2, 0) = corner; k.at(2, 1) = edge;   k.at(2, 2) = corner;
  return k;
}

// 2-D correlation (no kernel flip) with zero padding; output has the input's
// size and is clamped to [0, 1]. Both study kernels are symmetric, so the
// correlation/convolution distinction does not matter for them.
inline Image filter2d(const Image& img, const Kernel2D& kernel) {
  if (kernel.height > img.height || kernel.width > img.width)
    throw ValidationError("filter2d: kernel " + std::to_string(kernel.height) + "x" +
                          std::to_string(kernel.width) + " larger than image " +
                          std::to_string(img.height) + "x" + std::to_string(img.width));
  if (kernel.height % 2 == 0 || kernel.width % 2 == 0)
    throw ValidationError("filter2d: kernel dimensions must be odd");
  Image out(img.height, img.width);
  const int ry = kernel.height / 2;
  const int rx = kernel.width / 2;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kernel.height; ++i) {
        const int sy = y + i - ry;
        if (sy < 0 || sy >= img.height) continue;  // zero padding
        for (int j = 0; j < kernel.width; ++j) {
          const int sx = x + j - rx;
          if (sx < 0 || sx >= img.width) continue;
          acc += kernel.at(i, j) * img.at(sy, sx);
        }
      }
      out.at(y, x) = std::clamp(acc, 0.0, 1.0);
    }
  }
  return out;
}

// Adds an independent Normal(mean, variance) draw to every pixel, then clamps
// to [0, 1]. Deterministic for a given seed.
inline Image add_gaussian_noise(const Image& img, double mean, double variance,
                                std::uint64_t seed) {
  if (variance < 0.0) throw ValidationError("add_gaussian_noise: negative variance");
  Image out = img;
  if (variance == 0.0 && mean == 0.0) return out;
  const double stddev = std::sqrt(variance);
  Rng rng(seed);
  for (double& p : out.pixels) p = std::clamp(p + rng.next_normal(mean, stddev), 0.0, 1.0);
  return out;
}

inline constexpr int kMinOperationId = 1;
inline constexpr int kMaxOperationId = 4;

// Applies operation `op_id` to one image. The noise operations derive their
// stream from (seed, image_index), so a dataset can be processed in any order
// or in parallel with identical results.
inline Image apply_operation_to_image(const Image& img, int op_id, std::uint64_t seed,
                                      std::uint64_t image_index) {
  switch (op_id) {
    case 1:
      return filter2d(img, gaussian_kernel(7, 1.0));
    case 2:
      return filter2d(img, laplacian_kernel());
    case 3:
      return add_gaussian_noise(img, 0.0, 0.02, derive_seed(seed, "noise-image", image_index));
    case 4:
      return add_gaussian_noise(img, 0.0, 0.1, derive_seed(seed, "noise-image", image_index));
    default:
      throw ValidationError("unknown image operation id " + std::to_string(op_id) +
                            " (expected 1..4)");
  }
}

// Transforms every image of a dataset with one operation. Labels and dataset
// size are preserved; only the pixels change.
inline LabeledDataset apply_operation(const LabeledDataset& dataset, int op_id,
                                      std::uint64_t seed) {
  if (op_id < kMinOperationId || op_id > kMaxOperationId)
    throw ValidationError("unknown image operation id " + std::to_string(op_id) +
                          " (expected 1..4)");
  // The filter kernels never change across images; build them once.
  LabeledDataset out;
  out.name = dataset.name;
  out.split = dataset.split;
  out.labels = dataset.labels;
  out.images.reserve(dataset.images.size());
  if (op_id == 1 || op_id == 2) {
    const Kernel2D kernel = op_id == 1 ? gaussian_kernel(7, 1.0) : laplacian_kernel();
    for (const Image& img : dataset.images) out.images.push_back(filter2d(img, kernel));
  } else {
    const double variance = op_id == 3 ? 0.02 : 0.1;
    for (std::size_t i = 0; i < dataset.images.size(); ++i)
      out.images.push_back(add_gaussian_noise(dataset.images[i], 0.0, variance,
                                              derive_seed(seed, "noise-image", i)));
  }
  return out;
}

}  // namespace crc
