#pragma once

#include <stdexcept>
#include <string>

namespace shaperl {

// Bad user input: malformed config, out-of-range parameter, invalid shape.
// The CLI maps this family to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Internal fault at run time (non-finite numerics, I/O failure mid-run).
// The CLI maps anything else to exit code 3.
class RuntimeFault : public std::runtime_error {
 public:
  explicit RuntimeFault(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace shaperl
