#pragma once

#include <stdexcept>
#include <string>

namespace crc {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller-supplied data violates a documented precondition or invariant
// (NaN probabilities, bad row sums, mismatched lengths, out-of-range labels).
struct ValidationError : Error {
  using Error::Error;
};

// An on-disk artifact (IDX file, checkpoint, probability matrix) is malformed.
struct ParseError : Error {
  using Error::Error;
};

// Filesystem-level failure: missing file, short write, unreadable path.
struct IoError : Error {
  using Error::Error;
};

}  // namespace crc
