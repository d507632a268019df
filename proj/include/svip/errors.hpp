#pragma once

#include <stdexcept>
#include <string>

namespace svip {

// Invalid configuration values (non-divisible patch size, K=0, M>N, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input files and labels.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse: missing gradients, empty traces, mismatched lengths.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A NaN or Inf appeared in a value or gradient.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace svip
