#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fraclayer/errors.hpp"

namespace fraclayer {

/// Fractional order s in (0, 1) with extension weight exponent a = 1 - 2s.
class FracOrder {
 public:
  explicit FracOrder(double s) : s_(s) {
    if (!(s > 0.0 && s < 1.0)) throw DomainError("fractional order s must lie in (0, 1)");
  }
  double s() const noexcept { return s_; }
  double a() const noexcept { return 1.0 - 2.0 * s_; }

 private:
  double s_;
};

/// x_i = x0 + i h, i = 0..n-1.
struct UniformGrid {
  double x0 = 0.0;
  double h = 1.0;
  std::size_t n = 0;

  double x(std::size_t i) const noexcept { return x0 + static_cast<double>(i) * h; }
  double front() const noexcept { return x0; }
  double back() const noexcept { return x(n - 1); }

  /// N points on [-L, L) with spacing 2L/N (periodic layout, -L included, +L excluded).
  static UniformGrid periodic(double half_width, std::size_t n) {
    if (!(half_width > 0.0) || n < 2) throw DomainError("periodic grid needs L > 0 and N >= 2");
    return {-half_width, 2.0 * half_width / static_cast<double>(n), n};
  }
  /// N points on [a, b], both ends included.
  static UniformGrid closed(double a, double b, std::size_t n) {
    if (!(b > a) || n < 2) throw DomainError("closed grid needs b > a and N >= 2");
    return {a, (b - a) / static_cast<double>(n - 1), n};
  }

  void validate() const {
    if (!(h > 0.0) || !std::isfinite(h) || !std::isfinite(x0))
      throw DomainError("grid spacing must be positive and finite");
  }

  bool operator==(const UniformGrid&) const = default;
};

/// Far-field model |v(x) -/+ 1| ~ c_-/+ |x - center|^{-exponent} as x -> -/+ inf.
struct TailModel {
  double exponent = 0.0;
  double c_minus = 0.0;
  double c_plus = 0.0;
  double center = 0.0;
};

/// A one-dimensional profile sampled on a uniform grid.
struct Profile {
  UniformGrid grid;
  std::vector<double> values;
  std::optional<std::vector<double>> derivative;
  double left_limit = -1.0;
  double right_limit = 1.0;
  std::optional<TailModel> tail;
  bool monotone = false;

  std::size_t size() const noexcept { return values.size(); }
  double x(std::size_t i) const noexcept { return grid.x(i); }

  /// Checks the structural invariants; `layer_candidate` adds |v| <= 1 + 1e-12.
  void validate(bool layer_candidate = false) const {
    grid.validate();
    if (values.size() != grid.n) throw DomainError("profile size does not match its grid");
    if (grid.n < 16) throw DomainError("profile needs at least 16 points");
    if (derivative && derivative->size() != grid.n)
      throw DomainError("derivative column size does not match the grid");
    for (double v : values) {
      if (!std::isfinite(v)) throw DomainError("profile values must be finite");
      if (layer_candidate && std::abs(v) > 1.0 + 1e-12)
        throw DomainError("layer candidate leaves [-1, 1]");
    }
    if (monotone)
      for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] < values[i - 1]) throw DomainError("profile flagged monotone is decreasing somewhere");
    if (tail && !(tail->exponent > 0.0)) throw DomainError("tail exponent must be positive");
  }

  bool is_nondecreasing() const {
    for (std::size_t i = 1; i < values.size(); ++i)
      if (values[i] < values[i - 1]) return false;
    return true;
  }
};

}  // namespace fraclayer
