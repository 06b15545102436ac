#pragma once

#include <stdexcept>
#include <string>

namespace bayesdyn {

/// Malformed or inconsistent input data (CSV rows, checkpoints, grids).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bayesdyn
