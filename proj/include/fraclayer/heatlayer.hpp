#pragma once

// The explicit layer family built from the fractional heat kernel:
//   p(t, x) = (1/pi) int_0^inf cos(x r) exp(-t r^{2s}) dr,
//   v(x)    = 2 int_0^x p(t, y) dy,
// which solves (-d_xx)^s v = f(v) with f(v) = x(v) v'(x(v)) / (2 s t).

#include <cmath>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <numbers>
#include <tuple>
#include <utility>
#include <vector>

#include "fraclayer/errors.hpp"
#include "fraclayer/parallel.hpp"
#include "fraclayer/profile.hpp"
#include "fraclayer/quadrature.hpp"

namespace fraclayer::heatlayer {

struct HeatLayerParams {
  FracOrder order;
  double t = 1.0;

  HeatLayerParams(FracOrder o, double t_) : order(o), t(t_) {
    if (!(t_ > 0.0) || !std::isfinite(t_)) throw DomainError("heat layer time t must be positive");
  }
  HeatLayerParams(double s, double t_) : HeatLayerParams(FracOrder(s), t_) {}
  double s() const noexcept { return order.s(); }
};

/// Fractional heat kernel p_s(t, x) > 0, even in x.
inline double heat_kernel(const HeatLayerParams& p, double x,
                          const quadrature::QuadSpec& spec = {}) {
  const double s = p.s(), t = p.t;
  const double ax = std::abs(x);
  if (ax < 1.0) {
    auto amp = [=](double r) { return std::exp(-t * std::pow(r, 2.0 * s)); };
    return quadrature::integrate_oscillatory(amp, ax, quadrature::TrigKind::cosine, spec) /
           std::numbers::pi;
  }
  // z = |x| r, then one integration by parts: no cancellation at large |x|.
  auto amp = [=](double z) { return std::pow(z, 2.0 * s - 1.0) * std::exp(-t * std::pow(z / ax, 2.0 * s)); };
  const double integral = quadrature::integrate_oscillatory(amp, 1.0, quadrature::TrigKind::sine, spec);
  return 2.0 * s * t / std::numbers::pi * std::pow(ax, -1.0 - 2.0 * s) * integral;
}

/// Layer v_s^t(x), odd, strictly increasing from -1 to 1.
inline double layer_value(const HeatLayerParams& p, double x,
                          const quadrature::QuadSpec& spec = {}) {
  if (x == 0.0) return 0.0;
  const double s = p.s(), t = p.t;
  const double ax = std::abs(x);
  const double sign = x > 0.0 ? 1.0 : -1.0;
  double integral;
  if (ax < 1.0) {
    auto amp = [=](double r) { return std::exp(-t * std::pow(r, 2.0 * s)) / r; };
    integral = quadrature::integrate_oscillatory(amp, ax, quadrature::TrigKind::sine, spec);
  } else {
    auto amp = [=](double z) { return std::exp(-t * std::pow(z / ax, 2.0 * s)) / z; };
    integral = quadrature::integrate_oscillatory(amp, 1.0, quadrature::TrigKind::sine, spec);
  }
  return sign * 2.0 / std::numbers::pi * integral;
}

/// v'(x) = 2 p_s(t, x).
inline double layer_derivative(const HeatLayerParams& p, double x,
                               const quadrature::QuadSpec& spec = {}) {
  return 2.0 * heat_kernel(p, x, spec);
}

struct BoundaryDerivatives {
  double fprime_at_1;
  double fsecond_at_1;
};

/// f'(+-1) = -1/t and f''(1) = -(pi/t) cot(pi s) Gamma(4s) / Gamma(2s)^2 (f''(-1) = -f''(1)).
inline BoundaryDerivatives nonlinearity_boundary_derivatives(const HeatLayerParams& p) {
  const double s = p.s(), t = p.t;
  const double g2 = quadrature::gamma(2.0 * s);
  const double cot = s == 0.5 ? 0.0 : std::cos(std::numbers::pi * s) / std::sin(std::numbers::pi * s);
  return {-1.0 / t, -(std::numbers::pi / t) * cot * quadrature::gamma(4.0 * s) / (g2 * g2)};
}

struct AsymptoticConstants {
  double derivative_limit;  // lim |x|^{1+2s} v'(x)
  double value_limit;       // lim |x|^{2s} |v(x) -/+ 1|
};

inline AsymptoticConstants asymptotic_constant(const HeatLayerParams& p) {
  const double s = p.s(), t = p.t;
  const double common = std::sin(std::numbers::pi * s) * quadrature::gamma(2.0 * s) / std::numbers::pi;
  return {t * 4.0 * s * common, t * 2.0 * common};
}

/// lim_{x->inf} int_0^inf sin(z) z^{kappa s - 1} exp(-(z/x)^{2s}) dz = sin(kappa s pi/2) Gamma(kappa s).
inline double polya_limit(double kappa, double s) {
  if (!(kappa > 0.0)) throw DomainError("kappa must be positive");
  FracOrder check(s);
  (void)check;
  return std::sin(kappa * s * std::numbers::pi / 2.0) * quadrature::gamma(kappa * s);
}

/// The finite-x integral whose limit is polya_limit.
inline double polya_integral(double kappa, double s, double x, const quadrature::QuadSpec& spec = {}) {
  if (!(kappa > 0.0)) throw DomainError("kappa must be positive");
  if (!(x > 0.0)) throw DomainError("polya_integral needs x > 0");
  FracOrder check(s);
  (void)check;
  auto amp = [=](double z) { return std::pow(z, kappa * s - 1.0) * std::exp(-std::pow(z / x, 2.0 * s)); };
  return quadrature::integrate_oscillatory(amp, 1.0, quadrature::TrigKind::sine, spec);
}

namespace detail {

// Solves v^1(x) = v for v in (0, 1) (t = 1).
inline double invert_unit_layer(double s, double v, const quadrature::QuadSpec& spec) {
  const HeatLayerParams unit(s, 1.0);
  const double c_val = asymptotic_constant(unit).value_limit;
  const double slope0 = layer_derivative(unit, 0.0, spec);
  double guess = std::max(v / slope0, std::pow(c_val / (1.0 - v), 1.0 / (2.0 * s)));
  double lo = 0.0, hi = guess;
  if (layer_value(unit, hi, spec) < v) {
    lo = hi;
    hi *= 2.0;
    int guard = 0;
    while (layer_value(unit, hi, spec) < v) {
      lo = hi;
      hi *= 2.0;
      if (++guard > 200) throw AccuracyError("layer inversion could not bracket", hi, hi - lo);
    }
  } else {
    lo = hi / 2.0;
    int guard = 0;
    while (layer_value(unit, lo, spec) > v) {
      hi = lo;
      lo /= 2.0;
      if (++guard > 200) throw AccuracyError("layer inversion could not bracket", lo, hi - lo);
    }
  }
  while (hi - lo > 1e-12 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (layer_value(unit, mid, spec) < v)
      lo = mid;
    else
      hi = mid;
  }
  double x = 0.5 * (lo + hi);
  for (int k = 0; k < 2; ++k) {
    const double step = (layer_value(unit, x, spec) - v) / layer_derivative(unit, x, spec);
    const double next = x - step;
    if (!(next > 0.0) || !std::isfinite(next)) throw AccuracyError("layer inversion Newton step", x, std::abs(step));
    x = next;
  }
  return x;
}

}  // namespace detail

/// Profile inversion x(v) of the unit layer v^1.
inline double layer_inverse(const HeatLayerParams& p, double v, const quadrature::QuadSpec& spec = {}) {
  if (!(std::abs(v) < 1.0)) throw DomainError("layer_inverse needs |v| < 1");
  if (v == 0.0) return 0.0;
  const double x1 = detail::invert_unit_layer(p.s(), std::abs(v), spec);
  // v^t(x) = v^1(t^{-1/(2s)} x).
  return (v > 0.0 ? 1.0 : -1.0) * x1 * std::pow(p.t, 1.0 / (2.0 * p.s()));
}

/// f_s^t(v) = f_s^1(v) / t with f_s^1(v) = x(v) (v^1)'(x(v)) / (2s); odd, f(0) = f(+-1) = 0.
inline double induced_nonlinearity(const HeatLayerParams& p, double v,
                                   const quadrature::QuadSpec& spec = {}) {
  if (!(std::abs(v) <= 1.0)) throw DomainError("induced_nonlinearity needs |v| <= 1");
  if (v == 0.0 || std::abs(v) == 1.0) return 0.0;
  const double sign = v > 0.0 ? 1.0 : -1.0;
  const double av = std::abs(v);
  const double eps = 1.0 - av;
  if (eps < 1e-6) {
    const BoundaryDerivatives bd = nonlinearity_boundary_derivatives(p);
    return sign * (eps / p.t + 0.5 * bd.fsecond_at_1 * eps * eps);
  }
  const HeatLayerParams unit(p.s(), 1.0);
  const double x = detail::invert_unit_layer(p.s(), av, spec);
  const double f1 = x * layer_derivative(unit, x, spec) / (2.0 * p.s());
  return sign * f1 / p.t;
}

/// phi^t = (v^t)' on the grid; the comparison function for tail sandwiches.
inline Profile comparison_profile(const HeatLayerParams& p, const UniformGrid& grid,
                                  const quadrature::QuadSpec& spec = {}) {
  grid.validate();
  Profile out;
  out.grid = grid;
  out.values.assign(grid.n, 0.0);
  parallel_for(grid.n, [&](std::size_t i) { out.values[i] = layer_derivative(p, grid.x(i), spec); });
  out.left_limit = 0.0;
  out.right_limit = 0.0;
  const double c = asymptotic_constant(p).derivative_limit;
  out.tail = TailModel{1.0 + 2.0 * p.s(), c, c, 0.0};
  out.monotone = false;
  out.validate();
  return out;
}

namespace detail {

struct SampleKey {
  double s, t, center, x0, h;
  std::size_t n;
  bool operator==(const SampleKey&) const = default;
};

struct SampleCache {
  std::mutex mutex;
  std::list<std::pair<SampleKey, std::shared_ptr<const Profile>>> entries;
  static constexpr std::size_t kCapacity = 12;
};

inline SampleCache& sample_cache() {
  static SampleCache cache;
  return cache;
}

}  // namespace detail

/// Samples v^t(x - center) and its derivative on `grid`, with the exact tail
/// model (exponent 2s, constants from asymptotic_constant). Results are memoized.
inline std::shared_ptr<const Profile> sample_layer_shared(const HeatLayerParams& p, const UniformGrid& grid,
                                                          double center = 0.0) {
  grid.validate();
  const detail::SampleKey key{p.s(), p.t, center, grid.x0, grid.h, grid.n};
  auto& cache = detail::sample_cache();
  {
    std::lock_guard<std::mutex> lock(cache.mutex);
    for (auto it = cache.entries.begin(); it != cache.entries.end(); ++it)
      if (it->first == key) {
        cache.entries.splice(cache.entries.begin(), cache.entries, it);
        return it->second;
      }
  }
  auto prof = std::make_shared<Profile>();
  prof->grid = grid;
  prof->values.assign(grid.n, 0.0);
  prof->derivative = std::vector<double>(grid.n, 0.0);
  // Oddness of v and evenness of v' about the center: nodes whose mirror image
  // is also a node are evaluated once.
  std::vector<double> xs(grid.n);
  std::vector<std::int64_t> mirror(grid.n, -1);
  for (std::size_t i = 0; i < grid.n; ++i) xs[i] = grid.x(i) - center;
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < grid.n; ++i) {
    if (xs[i] < 0.0) {
      const double jf = std::round((center - xs[i] - grid.x0) / grid.h);
      if (jf >= 0.0 && jf < static_cast<double>(grid.n)) {
        const auto j = static_cast<std::size_t>(jf);
        if (std::abs(xs[j] + xs[i]) <= 1e-12 * grid.h) {
          mirror[i] = static_cast<std::int64_t>(j);
          continue;
        }
      }
    }
    todo.push_back(i);
  }
  auto& vals = prof->values;
  auto& ders = *prof->derivative;
  parallel_for(todo.size(), [&](std::size_t k) {
    const std::size_t i = todo[k];
    vals[i] = layer_value(p, xs[i]);
    ders[i] = layer_derivative(p, xs[i]);
  });
  for (std::size_t i = 0; i < grid.n; ++i)
    if (mirror[i] >= 0) {
      vals[i] = -vals[static_cast<std::size_t>(mirror[i])];
      ders[i] = ders[static_cast<std::size_t>(mirror[i])];
    }
  const double cv = asymptotic_constant(p).value_limit;
  prof->tail = TailModel{2.0 * p.s(), cv, cv, center};
  prof->monotone = prof->is_nondecreasing();
  std::shared_ptr<const Profile> result = prof;
  std::lock_guard<std::mutex> lock(cache.mutex);
  cache.entries.emplace_front(key, result);
  if (cache.entries.size() > detail::SampleCache::kCapacity) cache.entries.pop_back();
  return result;
}

inline Profile sample_layer(const HeatLayerParams& p, const UniformGrid& grid, double center = 0.0) {
  return *sample_layer_shared(p, grid, center);
}

}  // namespace fraclayer::heatlayer
