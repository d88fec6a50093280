#pragma once

#include <string>
#include <vector>

#include "crc/errors.hpp"
#include "crc/image.hpp"
#include "crc/prob_matrix.hpp"

namespace crc {

// Number of classes in every dataset this toolkit handles.
inline constexpr int kNumClasses = 10;

enum class Split { kTrain, kTest };

inline const char* split_token(Split s) { return s == Split::kTrain ? "train" : "test"; }

// Images paired with class labels. `name` is the dataset identifier used in
// file names and reports, e.g. "mnist-D2".
struct LabeledDataset {
  std::string name;
  Split split = Split::kTrain;
  std::vector<Image> images;
  LabelVector labels;

  std::size_t size() const { return images.size(); }

  void validate() const {
    if (images.size() != labels.size())
      throw ValidationError(name + ": " + std::to_string(images.size()) + " images but " +
                            std::to_string(labels.size()) + " labels");
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] >= kNumClasses)
        throw ValidationError(name + ": label " + std::to_string(labels[i]) + " at index " +
                              std::to_string(i) + " out of range");
  }
};

// Row subset in the order given by `indices`.
inline LabeledDataset take_indices(const LabeledDataset& d,
                                   const std::vector<std::size_t>& indices) {
  LabeledDataset out;
  out.name = d.name;
  out.split = d.split;
  out.images.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= d.size())
      throw ValidationError(d.name + ": subset index " + std::to_string(i) + " out of range");
    out.images.push_back(d.images[i]);
    out.labels.push_back(d.labels[i]);
  }
  return out;
}

}  // namespace crc
