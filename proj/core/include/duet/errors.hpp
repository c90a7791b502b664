#pragma once

#include <stdexcept>
#include <string>

namespace duet {

/// Bad or missing input data: malformed files, inconsistent shapes,
/// out-of-range parameters. Maps to exit code 2 in the CLI.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure: NaN loss, zero-norm embedding, non-finite gradient.
/// Maps to exit code 3 in the CLI.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace duet
