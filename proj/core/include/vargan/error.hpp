#pragma once

#include <stdexcept>
#include <string>

namespace vargan {

// Raised for invalid inputs, shapes, configs and file contents. Anything else
// thrown from the library is treated as a runtime failure by the CLI.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vargan
