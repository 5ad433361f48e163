#pragma once

#include <stdexcept>
#include <string>

namespace echoloc {

/// Invalid or inconsistent input data (shapes, schemas, infeasible geometry).
/// Maps to CLI exit code 2.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure (divergence, degenerate configuration).
/// Maps to CLI exit code 3.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace echoloc
