#pragma once

#include <stdexcept>
#include <string>

namespace fraclayer {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// An argument lies outside the domain of the operation.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& msg) : Error("domain error: " + msg) {}
};

/// A numerical procedure did not reach the requested accuracy. Carries the
/// best estimate obtained and its error bound.
class AccuracyError : public Error {
 public:
  AccuracyError(const std::string& msg, double estimate, double error_bound)
      : Error("accuracy error: " + msg), estimate_(estimate), error_bound_(error_bound) {}

  double estimate() const noexcept { return estimate_; }
  double error_bound() const noexcept { return error_bound_; }

 private:
  double estimate_;
  double error_bound_;
};

/// A calibration whose consistency check failed (signals a discretization problem).
class CalibrationError : public AccuracyError {
 public:
  CalibrationError(const std::string& msg, double estimate, double spread)
      : AccuracyError("calibration: " + msg, estimate, spread) {}
};

/// An iterative solver stalled above its tolerance.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& msg, double best_residual)
      : Error("non-convergence: " + msg), best_residual_(best_residual) {}

  double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

/// A computed object violates a qualitative property it must have
/// (e.g. a converged layer that is not monotone).
class QualitativeFailure : public Error {
 public:
  explicit QualitativeFailure(const std::string& msg) : Error("qualitative failure: " + msg) {}
};

}  // namespace fraclayer
