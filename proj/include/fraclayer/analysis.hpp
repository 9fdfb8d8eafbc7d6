#pragma once

// Tail-exponent fits and the comparison (sandwich) test against the explicit
// layer family for computed layers.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fraclayer/errors.hpp"
#include "fraclayer/heatlayer.hpp"
#include "fraclayer/layersolver.hpp"
#include "fraclayer/nonlinearity.hpp"
#include "fraclayer/profile.hpp"

namespace fraclayer::analysis {

enum class TailQuantity { derivative, value };

struct FitWindow {
  double lo = 0.0;  // in |x - center|
  double hi = 0.0;
};

struct AsymptoticsReport {
  double fitted_exponent_derivative = std::numeric_limits<double>::quiet_NaN();  // target 1 + 2s
  double fitted_exponent_value = std::numeric_limits<double>::quiet_NaN();       // target 2s
  double exponent_minus = std::numeric_limits<double>::quiet_NaN();  // per side, last fit
  double exponent_plus = std::numeric_limits<double>::quiet_NaN();
  double constant_minus = std::numeric_limits<double>::quiet_NaN();  // q ~ constant |x|^{-exponent}
  double constant_plus = std::numeric_limits<double>::quiet_NaN();
  double c_lower = std::numeric_limits<double>::quiet_NaN();  // from sandwich_check
  double c_upper = std::numeric_limits<double>::quiet_NaN();
  FitWindow fit_window;
  double center = 0.0;
  double fit_residual = 0.0;  // rms of the log-log fit
};

namespace detail {

inline double mid_crossing(const Profile& p) {
  const double level = 0.5 * (p.left_limit + p.right_limit);
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    const double a = p.values[i] - level, b = p.values[i + 1] - level;
    if (a == 0.0) return p.x(i);
    if ((a < 0.0) != (b < 0.0)) return p.x(i) + p.grid.h * a / (a - b);
  }
  throw DomainError("profile does not cross the mid level");
}

struct LineFit {
  double slope = 0.0, intercept = 0.0, ss = 0.0;
  std::size_t count = 0;
};

inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  f.count = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double r = y[k] - (f.intercept + f.slope * x[k]);
    f.ss += r * r;
  }
  return f;
}

}  // namespace detail

/// Least-squares fit of log q against log|x - c| on |x - c| in [0.5 L, 0.9 L],
/// where c is the mid-level crossing and L the distance from c to the nearer
/// grid end. q = v' (derivative) or |v - limit| (value). Sides with fewer
/// than 16 window points are skipped; the exponent is the average over fitted
/// sides.
inline AsymptoticsReport fit_tail_exponent(const Profile& p, TailQuantity which, double lo_fraction = 0.5,
                                           double hi_fraction = 0.9) {
  p.validate();
  if (!(0.0 < lo_fraction && lo_fraction < hi_fraction && hi_fraction <= 1.0))
    throw DomainError("fit window fractions must satisfy 0 < lo < hi <= 1");
  const double c = detail::mid_crossing(p);
  const double L = std::min(c - p.grid.front(), p.grid.back() - c);
  AsymptoticsReport rep;
  rep.center = c;
  rep.fit_window = {lo_fraction * L, hi_fraction * L};
  const std::vector<double> d = p.derivative ? *p.derivative : layersolver::detail::derivative(p.values, p.grid.h);

  std::vector<double> lx[2], ly[2];
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double r = p.x(i) - c;
    const double ar = std::abs(r);
    if (ar < rep.fit_window.lo || ar > rep.fit_window.hi) continue;
    const int side = r > 0.0 ? 1 : 0;
    const double q = which == TailQuantity::derivative ? d[i]
                                                       : std::abs(p.values[i] - (side ? p.right_limit : p.left_limit));
    if (!(q > 0.0)) throw DomainError("tail quantity must be positive in the fit window");
    lx[side].push_back(std::log(ar));
    ly[side].push_back(std::log(q));
  }
  double exponent_sum = 0.0, ss = 0.0;
  std::size_t fitted = 0, points = 0;
  for (int side = 0; side < 2; ++side) {
    if (lx[side].size() < 16) continue;
    const auto f = detail::least_squares(lx[side], ly[side]);
    (side ? rep.exponent_plus : rep.exponent_minus) = -f.slope;
    (side ? rep.constant_plus : rep.constant_minus) = std::exp(f.intercept);
    exponent_sum += -f.slope;
    ss += f.ss;
    points += f.count;
    ++fitted;
  }
  if (fitted == 0) throw DomainError("fewer than 16 points in the tail fit window");
  rep.fit_residual = std::sqrt(ss / static_cast<double>(points));
  (which == TailQuantity::derivative ? rep.fitted_exponent_derivative : rep.fitted_exponent_value) =
      exponent_sum / static_cast<double>(fitted);
  return rep;
}

struct SandwichOptions {
  std::optional<double> t_upper;  // defaults: 3 / min(-f'(+-1)) and 1 / (3 max(-f'(+-1)))
  std::optional<double> t_lower;
  double max_constant = 1e6;
  double slack = 1e-9;
};

struct SandwichReport {
  bool passed = false;
  double t_upper = 0.0, t_lower = 0.0;
  double c_upper = 0.0, c_lower = 0.0;
  double sign_change_radius = 0.0;  // largest |x| where phi^t - v' (or v' - phi^t) changes sign
  double allowed_radius = 0.0;      // L / 4
  std::string reason;
};

/// Compares v' (a layer derivative centered at x = 0) with the explicit
/// derivatives phi^t: C_upper phi^{t_upper} > v' and C_lower v' > phi^{t_lower}
/// on the whole grid, with 2 / t_upper < min(-f'(+-1)) and
/// max(-f'(+-1)) < 1 / (2 t_lower). The unscaled differences may change sign
/// only inside |x| <= L / 4 ("for |x| large enough").
inline SandwichReport sandwich_check(const Profile& vprime, const FracOrder& order, const Nonlinearity& nl,
                                     const SandwichOptions& opt = {}) {
  vprime.validate();
  const double dm = -nl.fprime(-1.0), dp = -nl.fprime(1.0);
  if (!(dm > 1e-8) || !(dp > 1e-8)) throw DomainError("sandwich comparison needs f'(+-1) < 0");
  SandwichReport rep;
  rep.t_upper = opt.t_upper.value_or(3.0 / std::min(dm, dp));
  rep.t_lower = opt.t_lower.value_or(1.0 / (3.0 * std::max(dm, dp)));
  if (!(rep.t_upper > 0.0) || !(rep.t_lower > 0.0)) throw DomainError("comparison times must be positive");
  const double L = std::min(-vprime.grid.front(), vprime.grid.back());
  if (!(L > 0.0)) throw DomainError("derivative profile must straddle x = 0");
  rep.allowed_radius = 0.25 * L;

  const heatlayer::HeatLayerParams up(order, rep.t_upper), lowp(order, rep.t_lower);
  const std::size_t n = vprime.size();
  std::vector<double> pu(n), pl(n);
  parallel_for(n, [&](std::size_t i) {
    pu[i] = heatlayer::layer_derivative(up, vprime.x(i));
    pl[i] = heatlayer::layer_derivative(lowp, vprime.x(i));
  });
  double ru = 0.0, rl = 0.0, radius = 0.0;
  int prev_u = 0, prev_l = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = vprime.values[i];
    if (!(d > 0.0)) {
      rep.reason = "derivative is not positive at x = " + std::to_string(vprime.x(i));
      return rep;
    }
    ru = std::max(ru, d / pu[i]);
    rl = std::max(rl, pl[i] / d);
    const int su = pu[i] > d ? 1 : -1, sl = d > pl[i] ? 1 : -1;
    if (i > 0 && (su != prev_u || sl != prev_l))
      radius = std::max({radius, std::abs(vprime.x(i)), std::abs(vprime.x(i - 1))});
    prev_u = su;
    prev_l = sl;
  }
  rep.c_upper = ru * (1.0 + opt.slack);
  rep.c_lower = rl * (1.0 + opt.slack);
  rep.sign_change_radius = radius;
  if (rep.c_upper > opt.max_constant || rep.c_lower > opt.max_constant) {
    rep.reason = "comparison constant exceeds " + std::to_string(opt.max_constant);
    return rep;
  }
  if (radius > rep.allowed_radius) {
    rep.reason = "comparison changes sign at |x| = " + std::to_string(radius) + " beyond L/4";
    return rep;
  }
  rep.passed = true;
  return rep;
}

/// Both tail fits and the sandwich constants for a converged, centered layer.
inline AsymptoticsReport asymptotics(const Profile& p, const FracOrder& order, const Nonlinearity& nl,
                                     SandwichReport* sandwich = nullptr) {
  AsymptoticsReport rep = fit_tail_exponent(p, TailQuantity::value);
  const AsymptoticsReport der = fit_tail_exponent(p, TailQuantity::derivative);
  rep.fitted_exponent_derivative = der.fitted_exponent_derivative;
  rep.exponent_minus = der.exponent_minus;
  rep.exponent_plus = der.exponent_plus;
  rep.constant_minus = der.constant_minus;
  rep.constant_plus = der.constant_plus;
  rep.fit_residual = std::max(rep.fit_residual, der.fit_residual);
  Profile vprime;
  vprime.grid = p.grid;
  vprime.values = p.derivative ? *p.derivative : layersolver::detail::derivative(p.values, p.grid.h);
  vprime.left_limit = vprime.right_limit = 0.0;
  const SandwichReport sw = sandwich_check(vprime, order, nl);
  if (sw.passed) {
    rep.c_lower = sw.c_lower;
    rep.c_upper = sw.c_upper;
  }
  if (sandwich) *sandwich = sw;
  return rep;
}

}  // namespace fraclayer::analysis
