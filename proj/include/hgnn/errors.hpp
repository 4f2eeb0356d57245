#pragma once

#include <stdexcept>
#include <string>

namespace hgnn {

// Shape or dimension mismatch between tensors / graph structures.
class ShapeError : public std::invalid_argument {
public:
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Malformed or inconsistent input data (files, logs, pair lists).
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure during optimization (NaN loss and the like).
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hgnn
