#pragma once

#include <stdexcept>
#include <string>

namespace etalab {

// Each category maps onto one CLI exit code (see tools/etalab.cpp).

class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ShapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Raised when a fixed-step integrator leaves its accuracy envelope
/// (positivity loss, norm drift, trace drift).
class NumericalInstability : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AlgorithmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace etalab
