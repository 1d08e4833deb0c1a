#pragma once

// ============================================================================
// Error taxonomy.
//
// Every failure in the library is reported by throwing one of the exception
// types below.  They all derive from canet::error (itself a
// std::runtime_error) so callers can catch the whole family at once, while
// the CLI distinguishes configuration mistakes (exit code 1) from runtime
// failures (exit code 2).
// ============================================================================

#include <stdexcept>
#include <string>

namespace canet {

// Root of the library's exception hierarchy.
class error : public std::runtime_error {
 public:
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor shapes do not line up (matmul inner dims, broadcast, concat...).
class shape_error : public error {
 public:
  explicit shape_error(const std::string& what) : error(what) {}
};

// Invalid or inconsistent configuration (bad JSON, unknown keys, out-of-range
// hyperparameters, mismatched checkpoint config...).
class config_error : public error {
 public:
  explicit config_error(const std::string& what) : error(what) {}
};

// An API contract was violated (backward on a non-scalar, reading a gradient
// that was never produced, degenerate statistical input...).
class contract_error : public error {
 public:
  explicit contract_error(const std::string& what) : error(what) {}
};

// Filesystem / parsing problems (missing file, malformed CSV or checkpoint).
class io_error : public error {
 public:
  explicit io_error(const std::string& what) : error(what) {}
};

// Numerical failure at run time (NaN loss, exploding values...).
class numeric_error : public error {
 public:
  explicit numeric_error(const std::string& what) : error(what) {}
};

}  // namespace canet
