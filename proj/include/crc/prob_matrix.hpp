#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crc/binio.hpp"
#include "crc/errors.hpp"

namespace crc {

// One confidence value per input image.
using ConfidenceVector = std::vector<double>;

// Class indices, one per input.
using LabelVector = std::vector<std::uint8_t>;

// Row-major N x C matrix of softmax outputs from a single model: row n is the
// probability vector the model assigned to input n.
class ProbabilityMatrix {
 public:
  static constexpr double kRowSumTolerance = 1e-9;

  ProbabilityMatrix() = default;
  ProbabilityMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& at(std::size_t n, std::size_t c) { return values_[n * cols_ + c]; }
  double at(std::size_t n, std::size_t c) const { return values_[n * cols_ + c]; }

  std::span<const double> row(std::size_t n) const {
    return std::span<const double>(values_.data() + n * cols_, cols_);
  }
  std::span<double> row(std::size_t n) {
    return std::span<double>(values_.data() + n * cols_, cols_);
  }

  const std::vector<double>& values() const { return values_; }

  // Enforces the documented invariants: N >= 2, C >= 2, all entries finite
  // and in [0, 1], every row summing to 1 within kRowSumTolerance. Errors
  // name the first offending row.
  void validate() const {
    if (rows_ < 2)
      throw ValidationError("probability matrix needs at least 2 rows, got " +
                            std::to_string(rows_));
    if (cols_ < 2)
      throw ValidationError("probability matrix needs at least 2 classes, got " +
                            std::to_string(cols_));
    for (std::size_t n = 0; n < rows_; ++n) {
      double sum = 0.0;
      for (std::size_t c = 0; c < cols_; ++c) {
        const double p = at(n, c);
        if (std::isnan(p))
          throw ValidationError("probability matrix row " + std::to_string(n) + " column " +
                                std::to_string(c) + " is NaN");
        if (p < 0.0 || p > 1.0)
          throw ValidationError("probability matrix row " + std::to_string(n) + " column " +
                                std::to_string(c) + " out of [0,1]: " + std::to_string(p));
        sum += p;
      }
      if (std::abs(sum - 1.0) > kRowSumTolerance)
        throw ValidationError("probability matrix row " + std::to_string(n) +
                              " sums to " + std::to_string(sum) + ", expected 1");
    }
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Binary persistence for probability matrices ("CRCPMAT1": magic, u64 rows,
// u64 cols, row-major little-endian doubles). Round-trip is bit-exact.
inline void save_probability_matrix(const ProbabilityMatrix& m,
                                    const std::filesystem::path& path) {
  std::vector<unsigned char> bytes;
  bytes.reserve(8 + 16 + m.rows() * m.cols() * 8);
  const char magic[8] = {'C', 'R', 'C', 'P', 'M', 'A', 'T', '1'};
  bytes.insert(bytes.end(), magic, magic + 8);
  unsigned char buf[8];
  store_le64(m.rows(), buf);
  bytes.insert(bytes.end(), buf, buf + 8);
  store_le64(m.cols(), buf);
  bytes.insert(bytes.end(), buf, buf + 8);
  for (double v : m.values()) {
    store_le_double(v, buf);
    bytes.insert(bytes.end(), buf, buf + 8);
  }
  write_file_bytes(path, bytes);
}

inline ProbabilityMatrix load_probability_matrix(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes.data(), bytes.size(), path.string());
  const unsigned char* magic = r.take(8, "magic");
  if (std::memcmp(magic, "CRCPMAT1", 8) != 0)
    throw ParseError(path.string() + ": bad probability-matrix magic at byte offset 0");
  const std::uint64_t rows = r.take_le64("row count");
  const std::uint64_t cols = r.take_le64("column count");
  if (cols == 0 || rows > (1ull << 32) || cols > (1ull << 16))
    throw ParseError(path.string() + ": implausible matrix shape " + std::to_string(rows) +
                     "x" + std::to_string(cols));
  if (r.remaining() != rows * cols * 8)
    throw ParseError(path.string() + ": payload of " + std::to_string(r.remaining()) +
                     " bytes does not match " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " doubles");
  ProbabilityMatrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
  for (std::size_t n = 0; n < m.rows(); ++n)
    for (std::size_t c = 0; c < m.cols(); ++c)
      m.at(n, c) = load_le_double(r.take(8, "matrix entry"));
  r.expect_exhausted();
  return m;
}

}  // namespace crc
