#pragma once

#include <stdexcept>
#include <string>

namespace dsm {

// Precondition failures derive from std::invalid_argument, runtime failures
// (numerical breakdown, divergence, I/O) from std::runtime_error.

class DimensionMismatch : public std::invalid_argument {
 public:
  DimensionMismatch(const std::string& what, std::size_t expected, std::size_t got)
      : std::invalid_argument(what + ": expected length " + std::to_string(expected) +
                              ", got " + std::to_string(got)) {}
};

class NonFiniteInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class OutOfDomain : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

inline void require_dim(std::size_t expected, std::size_t got, const char* where) {
  if (expected != got) throw DimensionMismatch(where, expected, got);
}

}  // namespace dsm
