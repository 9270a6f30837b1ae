#pragma once

#include <stdexcept>
#include <string>

namespace evsplat {

// Bad arguments, malformed files, inconsistent inputs. The CLI maps these to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Failures discovered while computing (NaN loss, I/O failure mid-run). Exit code 3.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace evsplat
