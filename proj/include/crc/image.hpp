#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "crc/errors.hpp"

namespace crc {

// Grayscale image, row-major, intensities normalized to [0, 1]. The study's
// datasets are 28x28; the container itself works for any size so tests can
// use small inputs.
struct Image {
  int height = 28;
  int width = 28;
  std::vector<double> pixels;

  Image() : pixels(static_cast<std::size_t>(height) * width, 0.0) {}
  Image(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, 0.0) {
    if (h <= 0 || w <= 0)
      throw ValidationError("image dimensions must be positive, got " + std::to_string(h) +
                            "x" + std::to_string(w));
  }

  double& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  std::size_t size() const { return pixels.size(); }
};

}  // namespace crc
