#pragma once

#include <stdexcept>
#include <string>

namespace kpalign {

// Bad inputs: malformed files, broken invariants, contract violations.
// CLI maps these to exit code 2.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical breakdown: non-finite gradients, log outside the principal
// branch, divergent iterations. CLI maps these to exit code 3.
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem failures, surfaced with the offending path. Exit code 4.
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace kpalign
