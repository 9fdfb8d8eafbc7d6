#pragma once

// Special functions and integration kernels: Gamma, adaptive Gauss-Kronrod
// quadrature on finite and semi-infinite ranges, and Fourier-type integrals
// summed lobe by lobe with Wynn epsilon acceleration.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <string>
#include <vector>

#include "fraclayer/errors.hpp"

namespace fraclayer::quadrature {

struct QuadSpec {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  int max_subdivisions = 2000;
  // Length of the window of lobe partial sums kept in the extrapolation table.
  int oscillatory_periods = 64;

  void validate() const {
    if (!(abs_tol >= 0.0) || !(rel_tol >= 0.0) || (abs_tol == 0.0 && rel_tol == 0.0))
      throw DomainError("QuadSpec needs abs_tol > 0 or rel_tol > 0");
    if (max_subdivisions < 1) throw DomainError("QuadSpec.max_subdivisions must be >= 1");
    if (oscillatory_periods < 4) throw DomainError("QuadSpec.oscillatory_periods must be >= 4");
  }

  double tolerance_for(double value) const { return std::max(abs_tol, rel_tol * std::abs(value)); }
};

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
  int evaluations = 0;
  bool converged = true;
};

/// Gamma function on the positive axis (Lanczos, g = 7, nine terms).
/// Arguments below 1/2 are lifted by the recurrence; no reflection is used.
inline double gamma(double x) {
  if (!std::isfinite(x) || x <= 0.0) throw DomainError("gamma requires a finite positive argument");
  if (x < 0.5) return gamma(x + 1.0) / x;
  static constexpr std::array<double, 9> c = {
      0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
      771.32342877765313,      -176.61502916214059,   12.507343278686905,
      -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};
  const double z = x - 1.0;
  double series = c[0];
  for (int i = 1; i < 9; ++i) series += c[i] / (z + i);
  const double t = z + 7.5;
  return std::sqrt(2.0 * std::numbers::pi) * std::pow(t, z + 0.5) * std::exp(-t) * series;
}

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK tables).
inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double a, b, value, error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

template <class F>
Segment gauss_kronrod15(F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kWgk[7];
  double gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const double sum = f(center - dx) + f(center + dx);
    kronrod += kWgk[j] * sum;
    if (j % 2 == 1) gauss += kWg[j / 2] * sum;
  }
  kronrod *= half;
  gauss *= half;
  double err = std::abs(kronrod - gauss);
  // Floor at the roundoff level of the rule.
  err = std::max(err, 50.0 * std::numeric_limits<double>::epsilon() * std::abs(kronrod));
  return {a, b, kronrod, err};
}

}  // namespace detail

/// Globally adaptive 15-point Gauss-Kronrod quadrature on [a, b] starting from
/// the partition given by `breakpoints` (sorted, inside (a, b)). Never throws on
/// non-convergence; inspect `converged`.
template <class F>
QuadResult integrate_adaptive(F&& f, double a, double b, double abs_tol, double rel_tol,
                              int max_subdivisions, const std::vector<double>& breakpoints = {}) {
  QuadResult out;
  if (a == b) return out;
  std::priority_queue<detail::Segment> heap;
  double total = 0.0;
  double total_err = 0.0;
  double lo = a;
  auto push = [&](double x0, double x1) {
    detail::Segment seg = detail::gauss_kronrod15(f, x0, x1);
    out.evaluations += 15;
    total += seg.value;
    total_err += seg.error;
    heap.push(seg);
  };
  for (double bp : breakpoints) {
    if (bp > lo && bp < b) {
      push(lo, bp);
      lo = bp;
    }
  }
  push(lo, b);
  int subdivisions = static_cast<int>(heap.size());
  while (total_err > std::max(abs_tol, rel_tol * std::abs(total))) {
    if (subdivisions >= max_subdivisions) {
      out.converged = false;
      break;
    }
    detail::Segment worst = heap.top();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      out.converged = false;
      break;
    }
    heap.pop();
    total -= worst.value;
    total_err -= worst.error;
    push(worst.a, mid);
    push(mid, worst.b);
    ++subdivisions;
  }
  // Re-sum to shed the drift of the running totals.
  double value = 0.0, err = 0.0;
  while (!heap.empty()) {
    value += heap.top().value;
    err += heap.top().error;
    heap.pop();
  }
  out.value = value;
  out.error = err;
  if (out.converged) out.converged = err <= std::max(abs_tol, rel_tol * std::abs(value));
  return out;
}

/// Integral over [a, b]; throws AccuracyError when the tolerance is not met.
template <class F>
double integrate(F&& f, double a, double b, const QuadSpec& spec = {},
                 const std::vector<double>& breakpoints = {}) {
  spec.validate();
  QuadResult r = integrate_adaptive(f, a, b, spec.abs_tol, spec.rel_tol, spec.max_subdivisions,
                                    breakpoints);
  if (!r.converged) throw AccuracyError("finite-interval quadrature", r.value, r.error);
  return r.value;
}

/// Integral over [0, inf) through the map r = u / (1 - u), u in (0, 1).
template <class F>
QuadResult integrate_semi_infinite_result(F&& f, const QuadSpec& spec = {}) {
  spec.validate();
  auto mapped = [&f](double u) {
    const double w = 1.0 - u;
    const double r = u / w;
    if (!std::isfinite(r)) return 0.0;
    const double val = f(r);
    return val == 0.0 ? 0.0 : val / (w * w);
  };
  // Breakpoints at r = 1/16 ... 16 keep the unit scale resolved from the start.
  static const std::vector<double> breaks = {1.0 / 17.0, 0.2, 0.5, 0.8, 16.0 / 17.0};
  return integrate_adaptive(mapped, 0.0, 1.0, spec.abs_tol, spec.rel_tol, spec.max_subdivisions,
                            breaks);
}

template <class F>
double integrate_semi_infinite(F&& f, const QuadSpec& spec = {}) {
  QuadResult r = integrate_semi_infinite_result(f, spec);
  if (!r.converged) throw AccuracyError("semi-infinite quadrature", r.value, r.error);
  return r.value;
}

/// Wynn epsilon algorithm, one term at a time (Weniger's EPSAL layout: `e`
/// stores the current counter-diagonal). Returns the newest estimate.
class EpsilonTable {
 public:
  double push(double partial_sum) {
    const std::size_t n = e_.size();
    e_.push_back(partial_sum);
    if (n == 0) return partial_sum;
    double aux2 = 0.0;
    for (std::size_t j = n; j >= 1; --j) {
      const double aux1 = aux2;
      aux2 = e_[j - 1];
      const double diff = e_[j] - aux2;
      e_[j - 1] = std::abs(diff) <= kTiny ? kHuge : aux1 + 1.0 / diff;
    }
    const double estimate = (n % 2 == 0) ? e_[0] : e_[1];
    // A degenerate column (equal neighbours) means the sums have already converged.
    return std::abs(estimate) >= 0.5 * kHuge ? partial_sum : estimate;
  }
  std::size_t size() const { return e_.size(); }
  void clear() { e_.clear(); }

 private:
  static constexpr double kTiny = 1e-300;
  static constexpr double kHuge = 1e300;
  std::vector<double> e_;
};

enum class TrigKind { sine, cosine };

/// Integral over [0, inf) of amplitude(r) * trig(phase_scale * r).
///
/// [0, inf) is cut at the zeros of the trigonometric factor. The first piece
/// is graded geometrically toward 0 (integrable endpoint singularities of the
/// amplitude), each half-period lobe is integrated adaptively, and the
/// sequence of partial sums is extrapolated with the epsilon algorithm.
template <class A>
QuadResult integrate_oscillatory_result(A&& amplitude, double phase_scale, TrigKind kind,
                                        const QuadSpec& spec = {}) {
  spec.validate();
  if (!std::isfinite(phase_scale)) throw DomainError("phase_scale must be finite");
  if (phase_scale == 0.0) {
    if (kind == TrigKind::sine) throw DomainError("sine transform with zero phase_scale");
    return integrate_semi_infinite_result(amplitude, spec);
  }
  const double sign = (kind == TrigKind::sine && phase_scale < 0.0) ? -1.0 : 1.0;
  const double w = std::abs(phase_scale);
  auto integrand = [&amplitude, w, kind](double r) {
    const double a = amplitude(r);
    if (a == 0.0) return 0.0;
    return a * (kind == TrigKind::sine ? std::sin(w * r) : std::cos(w * r));
  };
  const double period = std::numbers::pi / w;
  const double first_zero = (kind == TrigKind::sine ? 1.0 : 0.5) * period;
  const double lobe_abs_tol = 0.1 * spec.abs_tol;
  const double lobe_rel_tol = 0.1 * spec.rel_tol;

  QuadResult out;
  std::vector<double> graded;
  for (int k = 52; k >= 1; --k) graded.push_back(first_zero * std::ldexp(1.0, -k));
  QuadResult head = integrate_adaptive(integrand, 0.0, first_zero, lobe_abs_tol, lobe_rel_tol,
                                       spec.max_subdivisions, graded);
  out.evaluations += head.evaluations;
  double quad_err = head.error;
  bool lobes_ok = head.converged;

  std::vector<double> partial{head.value};
  EpsilonTable table;
  std::vector<double> estimates{table.push(head.value)};
  const std::size_t window = static_cast<std::size_t>(spec.oscillatory_periods);
  const int max_lobes = std::max(spec.max_subdivisions, 8);

  double best = head.value;
  double best_err = std::numeric_limits<double>::infinity();
  for (int k = 0; k < max_lobes; ++k) {
    const double a = first_zero + k * period;
    const double b = a + period;
    QuadResult lobe = integrate_adaptive(integrand, a, b, lobe_abs_tol, lobe_rel_tol,
                                         spec.max_subdivisions);
    out.evaluations += lobe.evaluations;
    quad_err += lobe.error;
    lobes_ok = lobes_ok && lobe.converged;
    const double s = partial.back() + lobe.value;
    partial.push_back(s);

    // Amplitude has died out: the plain sum is final.
    if (std::abs(lobe.value) <= 1e-3 * spec.tolerance_for(s) && k >= 2) {
      best = s;
      best_err = std::abs(lobe.value);
      break;
    }

    if (table.size() >= window) {
      table.clear();
      estimates.clear();
      for (std::size_t i = partial.size() - window / 2; i < partial.size(); ++i)
        estimates.push_back(table.push(partial[i]));
    } else {
      estimates.push_back(table.push(s));
    }
    const std::size_t m = estimates.size();
    if (m >= 5) {
      const double e0 = estimates[m - 1], e1 = estimates[m - 2], e2 = estimates[m - 3];
      const double spread = std::max(std::abs(e0 - e1), std::abs(e1 - e2));
      if (spread < best_err) {
        best_err = spread;
        best = e0;
      }
      // Roundoff floor of the extrapolation relative to the partial sums.
      const double noise = 64.0 * std::numeric_limits<double>::epsilon() *
                           std::max(std::abs(s), std::abs(partial[partial.size() - 2]));
      if (spread <= std::max(spec.tolerance_for(e0), noise)) {
        best = e0;
        best_err = spread;
        out.value = sign * best;
        out.error = best_err + quad_err;
        out.converged = lobes_ok;
        return out;
      }
    }
  }
  out.value = sign * best;
  out.error = best_err + quad_err;
  out.converged = lobes_ok && best_err <= spec.tolerance_for(best);
  return out;
}

template <class A>
double integrate_oscillatory(A&& amplitude, double phase_scale, TrigKind kind,
                             const QuadSpec& spec = {}) {
  QuadResult r = integrate_oscillatory_result(amplitude, phase_scale, kind, spec);
  if (!r.converged) throw AccuracyError("oscillatory quadrature", r.value, r.error);
  return r.value;
}

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton on P_n).
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

}  // namespace fraclayer::quadrature
