#pragma once

#include <stdexcept>
#include <string>

namespace irgn {

/// Root of the library's exception hierarchy.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched dimensions or weights, non-finite values, inconsistent traces.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver stopped before meeting its tolerance.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double final_residual)
      : Error(what), final_residual_(final_residual) {}

  double final_residual() const noexcept { return final_residual_; }

 private:
  double final_residual_;
};

/// Requested dense assembly exceeds the size guard.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// A point lies outside the admissible ball B_rho(center).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The operator is degenerate (e.g. zero derivative norm) for the requested use.
class DegenerateProblemError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameters or an experiment setup that violates a standing assumption.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// Coefficient outside the set where the elliptic operator is SPD.
class AdmissibilityError : public Error {
 public:
  using Error::Error;
};

/// Failure of a dense numerical kernel (SVD, eigen-solve).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File-system failure; the message carries the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace irgn
