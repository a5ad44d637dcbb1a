#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mlopt {

// Base of every error raised by the library. Subclasses carry the structured
// context the CLI needs to pick an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape, index, or precondition violations in how the library was called.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Requested a capability an oracle does not provide (e.g. third-order slices).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Malformed or unusable input data (CSV parsing, degenerate columns, sizes).
class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Cholesky breakdown of a matrix that the theory requires to be SPD.
class SingularHessian : public NumericError {
 public:
  SingularHessian(const std::string& what, int pivot) : NumericError(what), pivot_(pivot) {}
  int pivot() const { return pivot_; }

 private:
  int pivot_;
};

// A lower level is not stationary enough for implicit differentiation to apply.
class StalePoint : public NumericError {
 public:
  StalePoint(const std::string& what, int level, double residual, double tol)
      : NumericError(what), level_(level), residual_(residual), tol_(tol) {}
  int level() const { return level_; }
  double residual() const { return residual_; }
  double tolerance() const { return tol_; }

 private:
  int level_;
  double residual_;
  double tol_;
};

class DivergedLowerLevel : public NumericError {
 public:
  DivergedLowerLevel(const std::string& what, int level) : NumericError(what), level_(level) {}
  int level() const { return level_; }

 private:
  int level_;
};

class ConvergenceBudget : public NumericError {
 public:
  ConvergenceBudget(const std::string& what, std::vector<double> residuals)
      : NumericError(what), residuals_(std::move(residuals)) {}
  const std::vector<double>& residuals() const { return residuals_; }

 private:
  std::vector<double> residuals_;
};

// Call inside a catch block: rethrows the in-flight library error as the same
// type with `suffix` appended to its message. Non-library exceptions are
// rethrown unchanged.
[[noreturn]] void rethrow_with_suffix(const std::string& suffix);

}  // namespace mlopt
