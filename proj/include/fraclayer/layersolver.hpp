#pragma once

// Layer solvers for (-d_xx)^s v = f(v): (A) an explicit gradient flow on the 1D
// nonlocal energy and (B) minimization of the extension energy on the half-strip
// (-R, R) x (0, R^{1/8}) with the boundary competitor arctan(x) / arctan(R).

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "fraclayer/errors.hpp"
#include "fraclayer/extension.hpp"
#include "fraclayer/fraclap.hpp"
#include "fraclayer/heatlayer.hpp"
#include "fraclayer/nonlinearity.hpp"
#include "fraclayer/profile.hpp"

namespace fraclayer::layersolver {

struct SolveConfig {
  FracOrder order{0.5};
  double domain_half_width = 100.0;
  std::size_t grid_points = 4096;
  double step = 0.0;  // 0 picks 0.9 / (Lambda + Lip f)
  std::size_t max_iterations = 200000;
  double residual_tolerance = 1e-5;
  bool clamp = true;
  double initial_shift = 0.0;       // initial datum (2/pi) arctan(x - shift)
  std::size_t refit_interval = 100;  // iterations between tail refits
  double exterior_fraction = 0.9;   // |x| >= fraction L carries the tail model
  std::size_t stall_window = 20000;  // iterations without a 1% gain in the best residual
  bool record_energy = false;

  void validate() const {
    if (!(domain_half_width > 0.0)) throw DomainError("domain half width must be positive");
    if (grid_points < 256 || (grid_points & (grid_points - 1)) != 0)
      throw DomainError("grid points must be a power of two >= 256");
    if (step < 0.0) throw DomainError("step must be positive (or 0 for automatic)");
    if (!(residual_tolerance > 0.0)) throw DomainError("residual tolerance must be positive");
    if (!(exterior_fraction > 0.5 && exterior_fraction < 1.0)) throw DomainError("exterior fraction must lie in (0.5, 1)");
    if (refit_interval < 1 || max_iterations < 1) throw DomainError("iteration counts must be positive");
  }
};

struct SolveResult {
  Profile profile;                // recentered so v(0) = 0
  double residual = 0.0;           // sup |(-d_xx)^s v - f(v)| on the central half, solver operator
  double flow_residual = 0.0;      // the same over all unknowns
  double verified_residual = 0.0;  // verify_layer on the recentered profile (independent tail model)
  std::size_t iterations = 0;
  bool monotone = false;
  double shift_applied = 0.0;
  double step = 0.0;
  std::vector<double> energy_history;  // when record_energy
  // Indices into energy_history where the functional changes (tail refits);
  // the energy is non-increasing between consecutive entries.
  std::vector<std::size_t> refit_iterations;
};

struct VerifyReport {
  double residual = 0.0;
  bool monotone = false;
  bool left_limit_ok = false;
  bool right_limit_ok = false;
  double odd_defect = std::numeric_limits<double>::quiet_NaN();  // NaN unless nl is odd
  double region_lo = 0.0;
  double region_hi = 0.0;
};

/// 4-point Lagrange interpolation of a profile at x (inside its grid).
inline double interpolate_profile(const Profile& p, double x) {
  const double pos = (x - p.grid.x0) / p.grid.h;
  if (pos < 0.0 || pos > static_cast<double>(p.size() - 1)) throw DomainError("interpolation outside the grid");
  long base = static_cast<long>(std::floor(pos)) - 1;
  base = std::clamp<long>(base, 0, static_cast<long>(p.size()) - 4);
  double acc = 0.0;
  for (int a = 0; a < 4; ++a) {
    double l = 1.0;
    for (int b = 0; b < 4; ++b)
      if (a != b) l *= (pos - static_cast<double>(base + b)) / static_cast<double>(a - b);
    acc += l * p.values[static_cast<std::size_t>(base + a)];
  }
  return acc;
}

namespace detail {

inline std::vector<double> derivative(const std::vector<double>& v, double h) {
  const std::size_t n = v.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= 2 && i + 2 < n)
      d[i] = (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * h);
    else if (i == 0)
      d[i] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    else if (i + 1 == n)
      d[i] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    else
      d[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
  }
  return d;
}

}  // namespace detail

/// Translates the grid so the zero crossing (linear interpolation) sits at x = 0.
inline std::pair<Profile, double> recenter(const Profile& p) {
  p.validate();
  std::optional<double> cross;
  for (std::size_t i = 0; i + 1 < p.size() && !cross; ++i) {
    const double a = p.values[i], b = p.values[i + 1];
    if (a == 0.0) cross = p.x(i);
    else if ((a < 0.0) != (b < 0.0) && b != 0.0) cross = p.x(i) + p.grid.h * a / (a - b);
    else if (b == 0.0) cross = p.x(i + 1);
  }
  if (!cross) throw DomainError("profile has no sign change to recenter on");
  Profile out = p;
  const double shift = -*cross;
  out.grid.x0 += shift;
  if (out.tail) out.tail->center += shift;
  return {out, shift};
}

/// Equation residual of a layer profile on the central half of its grid
/// (spectral operator with the layer tail model), plus qualitative flags.
inline VerifyReport verify_layer(const Profile& p, const Nonlinearity& nl, const FracOrder& order) {
  p.validate();
  if (!p.tail) throw DomainError("verify_layer needs a profile with tail metadata");
  fraclap::FracLapConfig cfg;
  cfg.order = order;
  cfg.method = fraclap::Method::spectral;
  cfg.domain_half_width = 0.5 * static_cast<double>(p.size()) * p.grid.h;
  cfg.spectral_points = p.size();
  cfg.tail_model = fraclap::TailMode::layer;
  const Profile lap = fraclap::apply_spectral(p, cfg);
  VerifyReport rep;
  const std::size_t offset = static_cast<std::size_t>(std::llround((lap.grid.x0 - p.grid.x0) / p.grid.h));
  for (std::size_t i = 0; i < lap.size(); ++i)
    rep.residual = std::max(rep.residual, std::abs(lap.values[i] - nl.f(p.values[offset + i])));
  rep.region_lo = lap.grid.front();
  rep.region_hi = lap.grid.back();
  rep.monotone = p.is_nondecreasing();
  const TailModel& tm = *p.tail;
  const double two_s = 2.0 * order.s();
  const double dl = tm.center - p.grid.front(), dr = p.grid.back() - tm.center;
  rep.left_limit_ok = dl > 0.0 && std::abs(p.values.front() - p.left_limit) <= 1.1 * tm.c_minus * std::pow(dl, -two_s);
  rep.right_limit_ok = dr > 0.0 && std::abs(p.values.back() - p.right_limit) <= 1.1 * tm.c_plus * std::pow(dr, -two_s);
  if (nl.odd) {
    const auto [centered, shift] = recenter(p);
    (void)shift;
    double defect = 0.0;
    const double reach = 0.5 * std::min(-centered.grid.front(), centered.grid.back());
    for (std::size_t i = 0; i < centered.size(); ++i) {
      const double x = centered.x(i);
      if (x < 0.0 || x > reach) continue;
      defect = std::max(defect, std::abs(centered.values[i] + interpolate_profile(centered, -x)));
    }
    rep.odd_defect = defect;
  }
  return rep;
}

/// Explicit flow v <- clamp(v - eta [(-d_xx)^s v - f(v)]) from (2/pi) arctan(x - shift)
/// on [-L, L) with N points. The region |x| >= fraction L is held at an
/// explicit-layer reference (a blend of v^1 and v^2 centered at the initial
/// crossing) refit to the solution at the interface every refit_interval
/// iterations; the spectral operator acts on v minus that
/// reference. Throws NonConvergenceError on stagnation and QualitativeFailure
/// when the converged profile is not monotone.
inline SolveResult solve_layer_direct(const Nonlinearity& nl, const SolveConfig& cfg) {
  cfg.validate();
  const double s = cfg.order.s();
  const double L = cfg.domain_half_width;
  const std::size_t n = cfg.grid_points;
  const UniformGrid grid = UniformGrid::periodic(L, n);
  const double center = cfg.initial_shift;
  std::vector<double> v(n);
  std::vector<char> interior(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = 2.0 / std::numbers::pi * std::atan(grid.x(i) - center);
    interior[i] = std::abs(grid.x(i)) < cfg.exterior_fraction * L;
  }
  fraclap::SpectralLaplacian op(s, n, L);
  const double lip = nl.lipschitz();
  const double eta = cfg.step > 0.0 ? cfg.step : 0.9 / (op.max_symbol() + lip);
  fraclap::LayerReference ref(s, grid, center, -1.0, 1.0, 1.0, 2.0);

  // Tail constants from the band (fraction - 0.1, fraction) L on each side.
  double c_minus = 0.0, c_plus = 0.0;
  auto fit_tail = [&] {
    double sm = 0.0, sp = 0.0;
    int km = 0, kp = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ax = std::abs(grid.x(i));
      if (!interior[i] || ax < (cfg.exterior_fraction - 0.1) * L) continue;
      const double d = std::abs(grid.x(i) - center);
      if (grid.x(i) < center) {
        sm += std::abs(v[i] + 1.0) * std::pow(d, 2.0 * s);
        ++km;
      } else {
        sp += std::abs(v[i] - 1.0) * std::pow(d, 2.0 * s);
        ++kp;
      }
    }
    c_minus = sm / std::max(km, 1);
    c_plus = sp / std::max(kp, 1);
  };
  // The blend weight is a least-squares match of v on the last interior nodes
  // before the interface, so the held exterior continues v without a jump.
  std::vector<double> wa, ia, wb, ib;
  ref.evaluate(0.0, wa, ia);
  ref.evaluate(1.0, wb, ib);
  std::vector<std::size_t> seam;
  for (std::size_t i = 0; i < n; ++i) {
    const bool edge = (i > 0 && !interior[i - 1]) || (i + 1 < n && !interior[i + 1]);
    const bool near = (i >= 4 && !interior[i - 4]) || (i + 4 < n && !interior[i + 4]);
    if (interior[i] && (edge || near)) seam.push_back(i);
  }
  std::vector<double> w(n), image(n), r(n), Ar(n), g(n);
  auto refit = [&] {
    fit_tail();
    double num = 0.0, den = 0.0;
    for (std::size_t i : seam) {
      num += (v[i] - wa[i]) * (wb[i] - wa[i]);
      den += (wb[i] - wa[i]) * (wb[i] - wa[i]);
    }
    const double beta = den > 0.0 ? num / den : ref.beta_for(0.5 * (c_minus + c_plus));
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = wa[i] + beta * (wb[i] - wa[i]);
      image[i] = ia[i] + beta * (ib[i] - ia[i]);
      if (!interior[i]) v[i] = w[i];
    }
  };
  auto residual = [&] {
    for (std::size_t i = 0; i < n; ++i) r[i] = v[i] - w[i];
    op.apply(r.data(), Ar.data());
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = interior[i] ? Ar[i] + image[i] - nl.f(v[i]) : 0.0;
      res = std::max(res, std::abs(g[i]));
    }
    return res;
  };

  SolveResult out;
  out.step = eta;
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_at = 0;
  std::size_t it = 0;
  double res = 0.0;
  bool converged = false;
  for (; it < cfg.max_iterations; ++it) {
    if (it % cfg.refit_interval == 0) {
      refit();
      out.refit_iterations.push_back(it);
    }
    res = residual();
    if (cfg.record_energy) {
      double e = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        e += 0.5 * r[i] * Ar[i] + r[i] * image[i];
        if (interior[i]) e += nl.G(v[i]);
      }
      out.energy_history.push_back(e * grid.h);
    }
    if (res <= cfg.residual_tolerance) {
      // Confirm against a fresh tail fit.
      refit();
      out.refit_iterations.push_back(it + 1);
      res = residual();
      if (res <= cfg.residual_tolerance) {
        converged = true;
        break;
      }
    }
    if (res < 0.99 * best) {
      best = res;
      best_at = it;
    } else if (it - best_at > cfg.stall_window) {
      throw NonConvergenceError("layer flow stagnated", best);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!interior[i]) continue;
      v[i] -= eta * g[i];
      if (cfg.clamp) v[i] = std::clamp(v[i], -1.0, 1.0);
    }
  }
  if (!converged) throw NonConvergenceError("layer flow reached the iteration limit", std::min(best, res));
  out.iterations = it;
  out.flow_residual = res;
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(grid.x(i)) <= 0.5 * L) out.residual = std::max(out.residual, std::abs(g[i]));

  Profile p;
  p.grid = grid;
  p.values = v;
  p.derivative = detail::derivative(v, grid.h);
  p.tail = TailModel{2.0 * s, c_minus, c_plus, center};
  if (!p.is_nondecreasing()) throw QualitativeFailure("converged layer is not monotone");
  p.monotone = true;
  auto [centered, shift] = recenter(p);
  out.profile = std::move(centered);
  out.shift_applied = shift;
  out.monotone = true;
  out.verified_residual = verify_layer(out.profile, nl, cfg.order).residual;
  return out;
}

struct HalfStripConfig {
  double hx = 0.125;
  double y_ratio = 0.8;
  double y1_factor = 1e-4;
  double ds = 0.0;      // d_s of the extension; 0 calibrates it
  double height = 0.0;  // strip height; 0 means R^{1/8}
  std::size_t max_iterations = 20000;
  double tolerance = 1e-10;  // sup-norm update size at convergence
};

struct HalfStripResult {
  extension::HalfStripField field;
  Profile trace;
  extension::EnergyReport energy;          // of the minimizer on Q_R^+
  extension::EnergyReport initial_energy;  // of the competitor v^R
  std::size_t iterations = 0;
  double shift = 0.0;                      // x_R with u(x_R, 0) = 0, as a recentering shift
};

namespace detail {

struct StripProblem {
  std::size_t nx = 0, ny = 0;
  double hx = 0.0;
  std::vector<double> y;
  Eigen::SparseMatrix<double> K;  // weighted Dirichlet form on all nodes
  std::vector<double> trace_weight;
};

inline StripProblem assemble_strip(double R, double a, const HalfStripConfig& cfg) {
  StripProblem sp;
  const double H = cfg.height > 0.0 ? cfg.height : std::pow(R, 0.125);
  sp.nx = static_cast<std::size_t>(std::llround(2.0 * R / cfg.hx)) + 1;
  sp.hx = 2.0 * R / static_cast<double>(sp.nx - 1);
  sp.y = extension::graded_levels(H, cfg.y_ratio, cfg.y1_factor);
  sp.ny = sp.y.size();
  const std::size_t nx = sp.nx;
  auto id = [nx](std::size_t i, std::size_t j) { return static_cast<int>(j * nx + i); };
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(16 * (sp.nx - 1) * (sp.ny - 1));
  for (std::size_t j = 0; j + 1 < sp.ny; ++j) {
    const double hy = sp.y[j + 1] - sp.y[j];
    const auto m = extension::detail::weighted_moments(a, sp.y[j], sp.y[j + 1]);
    const double i00 = m[0] - 2.0 * m[1] + m[2], i01 = m[1] - m[2], i11 = m[2];
    const double cy = sp.hx * m[0] / (3.0 * hy * hy);
    // Local order: 0 = (i, j), 1 = (i+1, j), 2 = (i, j+1), 3 = (i+1, j+1).
    const double av[4] = {-1, 1, 0, 0}, bv[4] = {0, 0, -1, 1}, cv[4] = {-1, 0, 1, 0}, dv[4] = {0, -1, 0, 1};
    double loc[4][4];
    for (int p = 0; p < 4; ++p)
      for (int q = 0; q < 4; ++q)
        loc[p][q] = (i00 * av[p] * av[q] + i01 * (av[p] * bv[q] + bv[p] * av[q]) + i11 * bv[p] * bv[q]) / sp.hx +
                    cy * (cv[p] * cv[q] + 0.5 * (cv[p] * dv[q] + dv[p] * cv[q]) + dv[p] * dv[q]);
    for (std::size_t i = 0; i + 1 < sp.nx; ++i) {
      const int ids[4] = {id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1)};
      for (int p = 0; p < 4; ++p)
        for (int q = 0; q < 4; ++q) trip.emplace_back(ids[p], ids[q], loc[p][q]);
    }
  }
  const int total = static_cast<int>(sp.nx * sp.ny);
  sp.K.resize(total, total);
  sp.K.setFromTriplets(trip.begin(), trip.end());
  sp.trace_weight.assign(sp.nx, sp.hx);
  sp.trace_weight.front() = sp.trace_weight.back() = 0.5 * sp.hx;
  return sp;
}

}  // namespace detail

/// Minimizer of E(u) = int_Q y^a |grad u|^2 / 2 + int_{-R}^{R} G(u(x,0)) / d_s over
/// Q = (-R, R) x (0, R^{1/8}) with u = arctan(x) / arctan(R) on the sides and top
/// (the extension potential is (1 + a) G / d_s). Majorize-minimize iteration:
/// each step minimizes the quadratic upper bound with curvature Lip(f) / d_s on
/// the trace, then projects onto |u| <= 1.
inline HalfStripResult solve_layer_halfstrip(const Nonlinearity& nl, const FracOrder& order, double R,
                                             HalfStripConfig cfg = {}) {
  if (!(R >= 4.0)) throw DomainError("half-strip construction needs R >= 4");
  if (!(cfg.hx > 0.0) || !(cfg.y_ratio > 0.0 && cfg.y_ratio < 1.0) || cfg.height < 0.0) throw DomainError("invalid half-strip grid");
  const double a = order.a();
  const double ds = cfg.ds > 0.0 ? cfg.ds : extension::calibrate_ds(order);
  const detail::StripProblem sp = detail::assemble_strip(R, a, cfg);
  const std::size_t nx = sp.nx, ny = sp.ny, total = nx * ny;
  const double atanR = std::atan(R);
  auto xcoord = [&](std::size_t i) { return -R + static_cast<double>(i) * sp.hx; };

  std::vector<double> u(total);
  std::vector<int> free_id(total, -1);
  int nf = 0;
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      u[j * nx + i] = std::atan(xcoord(i)) / atanR;
      if (i > 0 && i + 1 < nx && j + 1 < ny) free_id[j * nx + i] = nf++;
    }
  auto energy = [&](const std::vector<double>& field) {
    Eigen::Map<const Eigen::VectorXd> uv(field.data(), static_cast<Eigen::Index>(total));
    extension::EnergyReport e;
    e.R = R;
    e.dirichlet = 0.5 * uv.dot(sp.K * uv);
    for (std::size_t i = 0; i < nx; ++i) e.potential += sp.trace_weight[i] * nl.G(field[i]) / ds;
    e.total = e.dirichlet + e.potential;
    return e;
  };
  HalfStripResult out;
  out.initial_energy = energy(u);

  // Majorizing Hessian on the free nodes.
  const double lip = nl.lipschitz();
  std::vector<Eigen::Triplet<double>> trip;
  for (int k = 0; k < sp.K.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator itK(sp.K, k); itK; ++itK) {
      const int fr = free_id[static_cast<std::size_t>(itK.row())], fc = free_id[static_cast<std::size_t>(itK.col())];
      if (fr >= 0 && fc >= 0) trip.emplace_back(fr, fc, itK.value());
    }
  for (std::size_t i = 1; i + 1 < nx; ++i) trip.emplace_back(free_id[i], free_id[i], sp.trace_weight[i] * lip / ds);
  Eigen::SparseMatrix<double> H(nf, nf);
  H.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(H);
  if (solver.info() != Eigen::Success) throw AccuracyError("half-strip Hessian factorization failed", 0.0, INFINITY);

  Eigen::VectorXd grad(nf);
  double last_step = INFINITY;
  std::size_t it = 0;
  for (; it < cfg.max_iterations; ++it) {
    Eigen::Map<const Eigen::VectorXd> uv(u.data(), static_cast<Eigen::Index>(total));
    const Eigen::VectorXd Ku = sp.K * uv;
    for (std::size_t k = 0; k < total; ++k)
      if (free_id[k] >= 0) grad(free_id[k]) = Ku(static_cast<Eigen::Index>(k));
    for (std::size_t i = 1; i + 1 < nx; ++i) grad(free_id[i]) -= sp.trace_weight[i] * nl.f(u[i]) / ds;
    const Eigen::VectorXd step = solver.solve(grad);
    last_step = 0.0;
    for (std::size_t k = 0; k < total; ++k) {
      if (free_id[k] < 0) continue;
      const double next = std::clamp(u[k] - step(free_id[k]), -1.0, 1.0);
      last_step = std::max(last_step, std::abs(next - u[k]));
      u[k] = next;
    }
    if (last_step <= cfg.tolerance) break;
  }
  if (last_step > cfg.tolerance)
    throw NonConvergenceError("half-strip descent reached the iteration limit", last_step);
  out.iterations = it + 1;
  out.energy = energy(u);

  out.field.order = order;
  out.field.x_grid = UniformGrid{-R, sp.hx, nx};
  out.field.y = sp.y;
  out.field.values = u;
  Profile trace;
  trace.grid = out.field.x_grid;
  trace.values.assign(u.begin(), u.begin() + static_cast<long>(nx));
  trace.monotone = trace.is_nondecreasing();
  out.trace = trace;
  out.shift = recenter(trace).second;
  return out;
}

/// Least-squares slope of log E against log R.
inline double energy_growth_exponent(const std::vector<double>& R, const std::vector<double>& E) {
  if (R.size() != E.size() || R.size() < 2) throw DomainError("growth fit needs >= 2 matched samples");
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < R.size(); ++k) {
    if (!(R[k] > 0.0) || !(E[k] > 0.0)) throw DomainError("growth fit needs positive samples");
    mx += std::log(R[k]);
    my += std::log(E[k]);
  }
  mx /= static_cast<double>(R.size());
  my /= static_cast<double>(R.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < R.size(); ++k) {
    sxy += (std::log(R[k]) - mx) * (std::log(E[k]) - my);
    sxx += (std::log(R[k]) - mx) * (std::log(R[k]) - mx);
  }
  return sxy / sxx;
}

}  // namespace fraclayer::layersolver
