#pragma once

#include <stdexcept>
#include <string>

namespace lakescout {

// Bad input: malformed files, dangling ids, invalid configuration.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A pipeline stage failed on valid input (non-finite loss, exhausted sampling, I/O).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lakescout
