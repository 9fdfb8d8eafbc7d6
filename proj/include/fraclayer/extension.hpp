#pragma once

// The weighted extension div(y^a grad u) = 0 in the half-plane, a = 1 - 2s.
// Potentials G passed to energy, hamiltonian_residual and stability_eigenvalue
// belong to the extension problem (1 + a) du/dnu^a = f(u); for a solution of
// (-d_xx)^s v = f~(v) this is f = (1 + a) f~ / d_s (see extension_scale).

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <vector>

#include "fraclayer/errors.hpp"
#include "fraclayer/fraclap.hpp"
#include "fraclayer/heatlayer.hpp"
#include "fraclayer/parallel.hpp"
#include "fraclayer/profile.hpp"
#include "fraclayer/quadrature.hpp"

namespace fraclayer::extension {

/// c(s) with int_R c(s) y^{2s} / (x^2 + y^2)^{(1+2s)/2} dx = 1, computed by quadrature and cached.
inline double poisson_constant(const FracOrder& order) {
  static std::mutex mutex;
  static std::map<double, double> cache;
  const double s = order.s();
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(s);
  if (it != cache.end()) return it->second;
  // int_0^1 (1+u^2)^{-1/2-s} du plus the part beyond 1 mapped by u = w^{-1/(2s)}.
  const quadrature::QuadSpec spec{1e-15, 1e-13, 4000, 64};
  const double inner = quadrature::integrate([=](double u) { return std::pow(1.0 + u * u, -0.5 - s); }, 0.0, 1.0, spec);
  const double outer =
      quadrature::integrate([=](double w) { return std::pow(1.0 + std::pow(w, 1.0 / s), -0.5 - s); }, 0.0, 1.0, spec) /
      (2.0 * s);
  const double mass = 2.0 * (inner + outer);
  cache[s] = 1.0 / mass;
  return 1.0 / mass;
}

inline double poisson_kernel(const FracOrder& order, double x, double y) {
  if (!(y > 0.0)) throw DomainError("poisson_kernel needs y > 0");
  const double s = order.s();
  return poisson_constant(order) * std::pow(y, 2.0 * s) * std::pow(x * x + y * y, -0.5 - s);
}

/// Levels {0, y_1, ..., Y}: geometric between y_1 = y1_factor * Y and Y with
/// ratio as close to `ratio` as an integer number of steps allows.
inline std::vector<double> graded_levels(double Y, double ratio = 0.8, double y1_factor = 1e-4) {
  if (!(Y > 0.0) || !(ratio > 0.0 && ratio < 1.0) || !(y1_factor > 0.0 && y1_factor < 1.0))
    throw DomainError("graded_levels needs Y > 0, ratio and y1_factor in (0, 1)");
  const int steps = std::max(1, static_cast<int>(std::ceil(std::log(y1_factor) / std::log(ratio) - 1e-9)));
  const double r = std::pow(y1_factor, 1.0 / steps);
  std::vector<double> y{0.0};
  for (int k = steps; k >= 1; --k) y.push_back(Y * std::pow(r, k));
  y.push_back(Y);
  return y;
}

/// u(x_i, y_j) on a tensor grid; row j = 0 is the trace y = 0.
struct HalfStripField {
  UniformGrid x_grid;
  std::vector<double> y;
  std::vector<double> values;  // values[j * nx + i]
  FracOrder order{0.5};

  std::size_t nx() const noexcept { return x_grid.n; }
  std::size_t ny() const noexcept { return y.size(); }
  double at(std::size_t i, std::size_t j) const { return values[j * x_grid.n + i]; }
  double& at(std::size_t i, std::size_t j) { return values[j * x_grid.n + i]; }

  void validate(bool layer = false) const {
    x_grid.validate();
    if (y.size() < 2 || y[0] != 0.0) throw DomainError("field levels must start with the trace y = 0");
    for (std::size_t j = 1; j < y.size(); ++j)
      if (!(y[j] > y[j - 1])) throw DomainError("field levels must be strictly increasing");
    if (values.size() != nx() * ny()) throw DomainError("field size does not match its grids");
    for (double v : values) {
      if (!std::isfinite(v)) throw DomainError("field values must be finite");
      if (layer && std::abs(v) > 1.0 + 1e-12) throw DomainError("layer extension leaves [-1, 1]");
    }
  }

  /// Column index of x (node within 1e-9 h), if any.
  std::optional<std::size_t> column(double x) const {
    const double pos = (x - x_grid.x0) / x_grid.h;
    const double r = std::round(pos);
    if (std::abs(pos - r) > 1e-9 || r < 0.0 || r >= static_cast<double>(nx())) return std::nullopt;
    return static_cast<std::size_t>(r);
  }
};

namespace detail {

struct FarSide {
  bool power = false;
  double limit = 0.0;
  double c = 0.0;
  double p = 0.0;
  double center = 0.0;
};

inline std::pair<FarSide, FarSide> far_sides(const Profile& v) {
  fraclap::FracLapConfig cfg;
  cfg.tail_model = v.tail ? fraclap::TailMode::layer : fraclap::TailMode::none;
  const auto [l, r] = fraclap::detail::far_models(v, cfg, 0.5);
  return {FarSide{l.power, l.limit, l.c, l.p, l.center}, FarSide{r.power, r.limit, r.c, r.p, r.center}};
}

// int_A^inf P(w, y) (d + w)^{-p} dw (p = 0 gives the kernel mass beyond A).
inline double kernel_tail(double s, double cp, double y, double A, double d, double p) {
  const double alpha = 2.0 * s + p;
  auto g = [=](double w) {
    const double u = std::pow(w, 1.0 / alpha);
    const double z = u * y / A;
    double val = std::pow(1.0 + z * z, -0.5 - s);
    if (p > 0.0) val *= std::pow(u * d + A, -p) * std::pow(A, p);
    return val;
  };
  const double integral = quadrature::integrate(g, 0.0, 1.0, {1e-15, 1e-12, 2000, 64});
  return cp * std::pow(y / A, 2.0 * s) / alpha * integral * std::pow(A, -p);
}

}  // namespace detail

/// Poisson extension u(., y) = P_s(., y) * v on the profile nodes in [x_lo, x_hi].
/// Levels without a leading 0 get one. The profile beyond its grid is continued
/// by its tail model (or as a constant when it is flat at the edges).
inline HalfStripField extend(const Profile& v, const FracOrder& order, std::vector<double> levels, double x_lo,
                             double x_hi) {
  v.validate();
  if (levels.empty() || levels.front() != 0.0) levels.insert(levels.begin(), 0.0);
  const double s = order.s();
  const double cp = poisson_constant(order);
  const std::size_t n = v.size();
  const double h = v.grid.h;
  std::size_t i0 = n, i1 = 0;
  for (std::size_t i = 2; i + 2 < n; ++i)
    if (v.x(i) >= x_lo - 1e-12 && v.x(i) <= x_hi + 1e-12) {
      i0 = std::min(i0, i);
      i1 = std::max(i1, i);
    }
  if (i0 > i1) throw DomainError("extension column range holds no interior profile node");
  const auto [left, right] = detail::far_sides(v);

  HalfStripField out;
  out.order = order;
  out.x_grid = UniformGrid{v.x(i0), h, i1 - i0 + 1};
  out.y = levels;
  out.values.assign(out.nx() * out.ny(), 0.0);
  for (std::size_t i = i0; i <= i1; ++i) out.at(i - i0, 0) = v.values[i];

  std::vector<double> gx, gw;
  quadrature::gauss_legendre(20, gx, gw);
  const double delta = 2.0 * h;

  parallel_for(levels.size() - 1, [&](std::size_t jj) {
    const std::size_t j = jj + 1;
    const double y = levels[j];
    auto P = [&](double w) { return cp * std::pow(y, 2.0 * s) * std::pow(w * w + y * y, -0.5 - s); };
    // Second moment of the kernel over the core |w| < 2h.
    std::vector<double> bps;
    if (y < delta) bps.push_back(y);
    const double m2 =
        2.0 * quadrature::integrate([&](double w) { return P(w) * w * w; }, 0.0, delta, {1e-300, 1e-13, 2000, 64}, bps);
    fraclap::detail::PanelWeights pw;
    pw.quad.resize(n / 2 + 1);
    pw.lin.assign(n + 1, {0.0, 0.0});
    for (std::size_t k = 0; k < pw.quad.size(); ++k) {
      const double m = 2.0 + 2.0 * static_cast<double>(k);
      std::array<double, 3> acc{0.0, 0.0, 0.0};
      for (std::size_t q = 0; q < gx.size(); ++q) {
        const double u = 1.0 + gx[q];
        const double kern = gw[q] * P((m + u) * h) * h;
        acc[0] += kern * 0.5 * (u - 1.0) * (u - 2.0);
        acc[1] += kern * u * (2.0 - u);
        acc[2] += kern * 0.5 * u * (u - 1.0);
      }
      pw.quad[k] = acc;
    }
    for (std::size_t m = 2; m <= n; ++m) {
      std::array<double, 2> acc{0.0, 0.0};
      for (std::size_t q = 0; q < gx.size(); ++q) {
        const double u = 0.5 * (1.0 + gx[q]);
        const double kern = 0.5 * gw[q] * P((static_cast<double>(m) + u) * h) * h;
        acc[0] += kern * (1.0 - u);
        acc[1] += kern * u;
      }
      pw.lin[m] = acc;
    }
    for (std::size_t i = i0; i <= i1; ++i) {
      const double vi = v.values[i];
      const double v2 = (v.values[i + 1] - 2.0 * vi + v.values[i - 1]) / (h * h);
      double d = 0.5 * v2 * m2;
      const std::size_t cr = n - 1 - i, cl = i;
      d -= fraclap::detail::one_side(pw, vi, cr, [&](std::size_t m) { return v.values[i + m]; });
      d -= fraclap::detail::one_side(pw, vi, cl, [&](std::size_t m) { return v.values[i - m]; });
      const double xi = v.x(i);
      const double Ar = static_cast<double>(cr) * h, Al = static_cast<double>(cl) * h;
      d += (right.limit - vi) * detail::kernel_tail(s, cp, y, Ar, 0.0, 0.0);
      d += (left.limit - vi) * detail::kernel_tail(s, cp, y, Al, 0.0, 0.0);
      if (right.power) d -= right.c * detail::kernel_tail(s, cp, y, Ar, xi - right.center, right.p);
      if (left.power) d += left.c * detail::kernel_tail(s, cp, y, Al, left.center - xi, left.p);
      out.at(i - i0, j) = vi + d;
    }
  });
  return out;
}

namespace detail {

// q_k = 2s (u(y_k) - u(0)) / y_k^{2s} along a column, interpolated in x if needed.
inline std::vector<double> column_values(const HalfStripField& u, double x) {
  std::vector<double> col(u.ny());
  if (auto c = u.column(x)) {
    for (std::size_t j = 0; j < u.ny(); ++j) col[j] = u.at(*c, j);
    return col;
  }
  const double pos = (x - u.x_grid.x0) / u.x_grid.h;
  if (u.nx() < 4 || pos < 0.0 || pos > static_cast<double>(u.nx() - 1))
    throw DomainError("point outside the field's x range");
  long base = static_cast<long>(std::floor(pos)) - 1;
  base = std::clamp<long>(base, 0, static_cast<long>(u.nx()) - 4);
  for (std::size_t j = 0; j < u.ny(); ++j) {
    double acc = 0.0;
    for (int a = 0; a < 4; ++a) {
      double l = 1.0;
      for (int b = 0; b < 4; ++b)
        if (a != b) l *= (pos - static_cast<double>(base + b)) / static_cast<double>(a - b);
      acc += l * u.at(static_cast<std::size_t>(base + a), j);
    }
    col[j] = acc;
  }
  return col;
}

inline double richardson3(const std::array<double, 3>& y, const std::array<double, 3>& q, double e1, double e2) {
  Eigen::Matrix3d A;
  Eigen::Vector3d b;
  for (int k = 0; k < 3; ++k) {
    A(k, 0) = 1.0;
    A(k, 1) = std::pow(y[k], e1);
    A(k, 2) = std::pow(y[k], e2);
    b(k) = q[k];
  }
  return A.colPivHouseholderQr().solve(b)(0);
}

}  // namespace detail

/// -lim_{y->0} y^a u_y at x, from q(y) = 2s (u - v) / y^{2s} = Q + b1 y^{2-2s} + b2 y^2 + ...
/// extrapolated over the three lowest levels. Throws AccuracyError when the
/// estimate from levels (2,3,4) differs by more than 1e-3 relative.
inline double conormal_derivative(const HalfStripField& u, double x) {
  if (u.ny() < 5) throw DomainError("conormal derivative needs at least four levels above the trace");
  const double s = u.order.s();
  const std::vector<double> col = detail::column_values(u, x);
  std::array<double, 4> q{};
  for (int k = 0; k < 4; ++k) q[k] = 2.0 * s * (col[k + 1] - col[0]) / std::pow(u.y[k + 1], 2.0 * s);
  const double e1 = 2.0 - 2.0 * s, e2 = 2.0;
  const double low = detail::richardson3({u.y[1], u.y[2], u.y[3]}, {q[0], q[1], q[2]}, e1, e2);
  const double high = detail::richardson3({u.y[2], u.y[3], u.y[4]}, {q[1], q[2], q[3]}, e1, e2);
  const double spread = std::abs(low - high);
  if (spread > 1e-3 * std::abs(low) + 1e-9) throw AccuracyError("conormal extrapolation spread", -low, spread);
  return -low;
}

namespace detail {

// Fornberg weights for derivatives 0..2 at z on nodes x[0..m).
inline std::array<std::vector<double>, 3> fd_weights(double z, const std::vector<double>& x) {
  const std::size_t m = x.size();
  std::array<std::vector<double>, 3> c;
  for (auto& row : c) row.assign(m, 0.0);
  double c1 = 1.0, c4 = x[0] - z;
  c[0][0] = 1.0;
  for (std::size_t i = 1; i < m; ++i) {
    const std::size_t mn = std::min<std::size_t>(i, 2);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i] - z;
    for (std::size_t j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (std::size_t k = mn; k >= 1; --k)
          c[k][i] = c1 * (static_cast<double>(k) * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
        c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
      }
      for (std::size_t k = mn; k >= 1; --k) c[k][j] = (c4 * c[k][j] - static_cast<double>(k) * c[k - 1][j]) / c3;
      c[0][j] = c4 * c[0][j] / c3;
    }
    c1 = c2;
  }
  return c;
}

}  // namespace detail

/// sup of |y^{-a} div(y^a grad u)| = |u_xx + u_yy + a u_y / y| over columns 2..nx-3
/// and levels with y in [y_min, y_max]. u_xx by fourth-order centered differences,
/// the y part as y^{-2} (D^2 u + (a - 1) D u) with D = d/d ln y on five levels.
inline double interior_residual(const HalfStripField& u, double y_min, double y_max) {
  u.validate();
  const double a = u.order.a(), h = u.x_grid.h;
  const std::size_t m = u.ny() - 1;
  if (m < 5 || u.nx() < 5) throw DomainError("interior residual needs five levels and five columns");
  double worst = 0.0;
  bool any = false;
  for (std::size_t k = 0; k < m; ++k) {
    const double y = u.y[k + 1];
    if (y < y_min || y > y_max) continue;
    const std::size_t lo = k < 2 ? 0 : std::min(k - 2, m - 5);
    std::vector<double> ln;
    for (std::size_t p = lo; p < lo + 5; ++p) ln.push_back(std::log(u.y[p + 1]));
    const auto w = detail::fd_weights(std::log(y), ln);
    for (std::size_t i = 2; i + 2 < u.nx(); ++i) {
      double d1 = 0.0, d2 = 0.0;
      for (std::size_t p = 0; p < 5; ++p) {
        d1 += w[1][p] * u.at(i, lo + p + 1);
        d2 += w[2][p] * u.at(i, lo + p + 1);
      }
      const double uxx = (-u.at(i - 2, k + 1) + 16.0 * u.at(i - 1, k + 1) - 30.0 * u.at(i, k + 1) +
                          16.0 * u.at(i + 1, k + 1) - u.at(i + 2, k + 1)) /
                         (12.0 * h * h);
      worst = std::max(worst, std::abs(uxx + (d2 + (a - 1.0) * d1) / (y * y)));
      any = true;
    }
  }
  if (!any) throw DomainError("no field level inside the residual window");
  return worst;
}

struct DsCalibration {
  double value = 0.0;
  double rel_std = 0.0;
  std::vector<double> xs;
  std::vector<double> ratios;
};

/// d_s from a profile and reference values of (-d_xx)^s v at the points xs:
/// ratio of the reference to the conormal derivative of the extension.
inline DsCalibration calibrate_ds_with(const Profile& v, const FracOrder& order, const std::vector<double>& xs,
                                       const std::vector<double>& reference, double Y = 1.0) {
  if (xs.size() != reference.size() || xs.size() < 2) throw DomainError("calibration needs >= 2 matched points");
  const double lo = *std::min_element(xs.begin(), xs.end());
  const double hi = *std::max_element(xs.begin(), xs.end());
  const HalfStripField u = extend(v, order, graded_levels(Y), lo - 2 * v.grid.h, hi + 2 * v.grid.h);
  DsCalibration out;
  out.xs = xs;
  for (std::size_t k = 0; k < xs.size(); ++k) out.ratios.push_back(reference[k] / conormal_derivative(u, xs[k]));
  double mean = 0.0;
  for (double r : out.ratios) mean += r;
  mean /= static_cast<double>(out.ratios.size());
  double var = 0.0;
  for (double r : out.ratios) var += (r - mean) * (r - mean);
  out.value = mean;
  out.rel_std = std::sqrt(var / static_cast<double>(out.ratios.size())) / std::abs(mean);
  if (out.rel_std > 1e-2) throw CalibrationError("d_s ratio varies across x", mean, out.rel_std);
  return out;
}

/// d_s in (-d_xx)^s v = d_s du/dnu^a, from the explicit layer v_s^1 (h = 1/64,
/// [-64, 64), x in {0.5, 1, 2, 4}) where (-d_xx)^s v = x v'(x) / (2s) exactly.
inline DsCalibration calibrate_ds_report(const FracOrder& order) {
  const auto grid = UniformGrid::periodic(64.0, 8192);
  const heatlayer::HeatLayerParams p(order, 1.0);
  const Profile v = heatlayer::sample_layer(p, grid);
  const std::vector<double> xs{0.5, 1.0, 2.0, 4.0};
  std::vector<double> ref;
  for (double x : xs) ref.push_back(x * heatlayer::layer_derivative(p, x) / (2.0 * order.s()));
  return calibrate_ds_with(v, order, xs, ref);
}

inline double calibrate_ds(const FracOrder& order) {
  static std::mutex mutex;
  static std::map<double, double> cache;
  {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(order.s());
    if (it != cache.end()) return it->second;
  }
  const double d = calibrate_ds_report(order).value;
  std::lock_guard<std::mutex> lock(mutex);
  cache[order.s()] = d;
  return d;
}

/// Factor (1 + a) / d_s turning a fractional-problem potential into the extension-problem one.
inline double extension_scale(const FracOrder& order, double ds) { return (1.0 + order.a()) / ds; }

struct EnergyReport {
  double dirichlet = 0.0;
  double potential = 0.0;
  double total = 0.0;
  double R = 0.0;
};

namespace detail {

// int_{y0}^{y1} y^a eta^k dy, eta = (y - y0) / (y1 - y0), k = 0, 1, 2.
inline std::array<double, 3> weighted_moments(double a, double y0, double y1) {
  std::array<double, 3> m{0.0, 0.0, 0.0};
  const double hy = y1 - y0;
  if (y0 == 0.0) {
    const double base = std::pow(y1, a + 1.0);
    for (int k = 0; k < 3; ++k) m[k] = base / (a + 1.0 + k);
    return m;
  }
  static const auto gl = [] {
    std::pair<std::vector<double>, std::vector<double>> r;
    quadrature::gauss_legendre(16, r.first, r.second);
    return r;
  }();
  for (std::size_t q = 0; q < gl.first.size(); ++q) {
    const double eta = 0.5 * (1.0 + gl.first[q]);
    const double w = 0.5 * hy * gl.second[q] * std::pow(y0 + eta * hy, a);
    m[0] += w;
    m[1] += w * eta;
    m[2] += w * eta * eta;
  }
  return m;
}

}  // namespace detail

/// E = int_{B_R^+} y^a |grad u|^2 / 2 + int_{-R}^{R} (G(u(x,0)) - G(1)) / (1 + a).
/// Bilinear cells with exact y^a weights; cells cut by the circle are weighted
/// by their covered fraction (8 x 8 sampling).
inline EnergyReport energy(const HalfStripField& u, const std::function<double(double)>& G, double R) {
  u.validate();
  if (!(R > 0.0)) throw DomainError("energy radius must be positive");
  const auto& g = u.x_grid;
  if (g.front() > -R + 1e-12 || g.back() < R - 1e-12 || u.y.back() < R - 1e-12)
    throw DomainError("half-ball B_R^+ is not contained in the field");
  const double a = u.order.a();
  const double G1 = G(1.0);
  EnergyReport rep;
  rep.R = R;
  const double hx = g.h;
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i + 1 < u.nx(); ++i)
    if (g.x(i + 1) > -R && g.x(i) < R) cols.push_back(i);
  std::vector<double> row_energy(u.ny() - 1, 0.0);
  parallel_for(u.ny() - 1, [&](std::size_t j) {
    const double y0 = u.y[j], y1 = u.y[j + 1];
    if (y0 >= R) return;
    const double hy = y1 - y0;
    const auto m = detail::weighted_moments(a, y0, y1);
    const double i00 = m[0] - 2.0 * m[1] + m[2];  // (1 - eta)^2
    const double i01 = m[1] - m[2];               // eta (1 - eta)
    const double i11 = m[2];                      // eta^2
    double acc = 0.0;
    for (std::size_t i : cols) {
      const double x0 = g.x(i), x1 = g.x(i + 1);
      // Covered fraction of the cell inside x^2 + y^2 <= R^2.
      const double far_x = std::max(std::abs(x0), std::abs(x1));
      const double near_x = (x0 <= 0.0 && x1 >= 0.0) ? 0.0 : std::min(std::abs(x0), std::abs(x1));
      double frac;
      if (far_x * far_x + y1 * y1 <= R * R) {
        frac = 1.0;
      } else if (near_x * near_x + y0 * y0 >= R * R) {
        continue;
      } else {
        int inside = 0;
        for (int p = 0; p < 8; ++p)
          for (int q = 0; q < 8; ++q) {
            const double xs = x0 + (p + 0.5) / 8.0 * hx, ys = y0 + (q + 0.5) / 8.0 * hy;
            if (xs * xs + ys * ys <= R * R) ++inside;
          }
        frac = inside / 64.0;
      }
      const double u00 = u.at(i, j), u10 = u.at(i + 1, j), u01 = u.at(i, j + 1), u11 = u.at(i + 1, j + 1);
      const double A = u10 - u00, B = u11 - u01, C = u01 - u00, D = u11 - u10;
      const double ex = (A * A * i00 + 2.0 * A * B * i01 + B * B * i11) / hx;
      const double ey = hx * (C * C + C * D + D * D) / 3.0 * m[0] / (hy * hy);
      acc += frac * 0.5 * (ex + ey);
    }
    row_energy[j] = acc;
  });
  for (double e : row_energy) rep.dirichlet += e;
  // Boundary potential, trapezoid on the trace clipped to [-R, R].
  double pot = 0.0;
  for (std::size_t i = 0; i + 1 < u.nx(); ++i) {
    double xa = g.x(i), xb = g.x(i + 1);
    if (xb <= -R || xa >= R) continue;
    double ua = u.at(i, 0), ub = u.at(i + 1, 0);
    auto lerp = [&](double x) { return u.at(i, 0) + (u.at(i + 1, 0) - u.at(i, 0)) * (x - g.x(i)) / hx; };
    if (xa < -R) {
      ua = lerp(-R);
      xa = -R;
    }
    if (xb > R) {
      ub = lerp(R);
      xb = R;
    }
    pot += 0.5 * (xb - xa) * ((G(ua) - G1) + (G(ub) - G1));
  }
  rep.potential = pot / (1.0 + a);
  rep.total = rep.dirichlet + rep.potential;
  return rep;
}

struct HamiltonianReport {
  double x = 0.0;
  double lhs = 0.0;       // (1+a) int_0^inf t^a (u_x^2 - u_y^2) / 2 dt
  double rhs = 0.0;       // G(u(x,0)) - G(1)
  double residual = 0.0;  // lhs - rhs
  double tail = 0.0;      // analytic tail beyond the top level (inside lhs)
  double tail_exponent = 0.0;
};

namespace detail {

// Integrand g(t) = t^a (u_x^2 - u_y^2) / 2 at the levels j >= 1 of column c.
// u_y from fourth-order differences in ln y (the levels above the trace are geometric).
inline std::vector<double> hamiltonian_integrand(const HalfStripField& u, std::size_t c) {
  const std::size_t ny = u.ny();
  const double a = u.order.a();
  const double hx = u.x_grid.h;
  const std::size_t m = ny - 1;  // levels 1..ny-1
  if (m < 5) throw DomainError("Hamiltonian needs at least five levels above the trace");
  std::vector<double> lny(m), col(m);
  for (std::size_t k = 0; k < m; ++k) {
    lny[k] = std::log(u.y[k + 1]);
    col[k] = u.at(c, k + 1);
  }
  std::vector<double> g(m);
  for (std::size_t k = 0; k < m; ++k) {
    // Five-point stencil on the local ln y nodes (general spacing via Lagrange weights).
    std::size_t lo = k < 2 ? 0 : std::min(k - 2, m - 5);
    double du = 0.0;
    for (std::size_t p = lo; p < lo + 5; ++p) {
      double w = 0.0;
      for (std::size_t q = lo; q < lo + 5; ++q) {
        if (q == p) continue;
        double prod = 1.0 / (lny[p] - lny[q]);
        for (std::size_t r = lo; r < lo + 5; ++r)
          if (r != p && r != q) prod *= (lny[k] - lny[r]) / (lny[p] - lny[r]);
        w += prod;
      }
      du += w * col[p];
    }
    const double t = u.y[k + 1];
    const double uy = du / t;
    const double ux = (u.at(c + 1, k + 1) - u.at(c - 1, k + 1)) / (2.0 * hx);
    g[k] = 0.5 * std::pow(t, a) * (ux * ux - uy * uy);
  }
  return g;
}

// int over [y_1, y_top] of g, Simpson in ln t (trapezoid on a leftover interval).
inline double integrate_log(const std::vector<double>& y, const std::vector<double>& g, std::size_t last) {
  double acc = 0.0;
  std::size_t k = 0;
  while (k + 2 <= last) {
    const double l0 = std::log(y[k]), l1 = std::log(y[k + 1]), l2 = std::log(y[k + 2]);
    const double f0 = g[k] * y[k], f1 = g[k + 1] * y[k + 1], f2 = g[k + 2] * y[k + 2];
    const double h0 = l1 - l0, h1 = l2 - l1;
    // Simpson on a possibly unequal pair of intervals.
    const double hs = h0 + h1;
    acc += hs / 6.0 * ((2.0 - h1 / h0) * f0 + hs * hs / (h0 * h1) * f1 + (2.0 - h0 / h1) * f2);
    k += 2;
  }
  if (k < last) acc += 0.5 * (std::log(y[k + 1]) - std::log(y[k])) * (g[k] * y[k] + g[k + 1] * y[k + 1]);
  return acc;
}

}  // namespace detail

/// (1+a) int_0^y t^a (u_x^2 - u_y^2) / 2 dt at a column x (0 < y <= top level).
inline double hamiltonian_partial(const HalfStripField& u, double x, double y) {
  const auto c = u.column(x);
  if (!c || *c == 0 || *c + 1 >= u.nx()) throw DomainError("Hamiltonian needs an interior column at x");
  if (!(y > 0.0) || y > u.y.back() * (1.0 + 1e-12)) throw DomainError("partial Hamiltonian height out of range");
  const double a = u.order.a(), s = u.order.s();
  const std::vector<double> g = detail::hamiltonian_integrand(u, *c);
  std::vector<double> ly(u.y.begin() + 1, u.y.end());
  // Lowest segment [0, y_1]: u_x constant, u_y ~ y^{2s-1}.
  const double y1 = ly[0];
  const double ux = (u.at(*c + 1, 1) - u.at(*c - 1, 1)) / (2.0 * u.x_grid.h);
  const double uy2 = std::max(0.0, ux * ux - 2.0 * g[0] / std::pow(y1, a));
  auto head = [&](double top) {
    return 0.5 * (ux * ux * std::pow(top, 1.0 + a) / (1.0 + a) - uy2 * std::pow(y1, 1.0 + a) / (2.0 * s) *
                                                                      std::pow(top / y1, 2.0 * s));
  };
  if (y <= y1) return (1.0 + a) * head(y);
  std::size_t last = 0;
  while (last + 1 < ly.size() && ly[last + 1] <= y) ++last;
  double acc = head(y1) + detail::integrate_log(ly, g, last);
  if (ly[last] < y) {
    // Linear in ln t on the partial interval.
    const double l0 = std::log(ly[last]), l1 = std::log(ly[last + 1]), l = std::log(y);
    const double f0 = g[last] * ly[last], f1 = g[last + 1] * ly[last + 1];
    const double fy = f0 + (f1 - f0) * (l - l0) / (l1 - l0);
    acc += 0.5 * (l - l0) * (f0 + fy);
  }
  return (1.0 + a) * acc;
}

/// Residual of the Hamiltonian equality along the vertical ray through x,
/// with the integral beyond the top level from a power law fitted to the last decade.
inline HamiltonianReport hamiltonian_residual(const HalfStripField& u, const std::function<double(double)>& G,
                                              double x) {
  u.validate();
  const auto c = u.column(x);
  if (!c || *c == 0 || *c + 1 >= u.nx()) throw DomainError("Hamiltonian needs an interior column at x");
  const double a = u.order.a();
  HamiltonianReport rep;
  rep.x = x;
  rep.rhs = G(u.at(*c, 0)) - G(1.0);
  const double Y = u.y.back();
  const double body = hamiltonian_partial(u, x, Y);
  const std::vector<double> g = detail::hamiltonian_integrand(u, *c);
  std::vector<double> lx, lg;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double t = u.y[k + 1];
    if (t >= Y / 10.0 && g[k] != 0.0) {
      lx.push_back(std::log(t));
      lg.push_back(std::log(std::abs(g[k])));
    }
  }
  if (lx.size() < 3) throw AccuracyError("too few levels in the last decade for the tail fit", body, INFINITY);
  // Quadratic fit of ln|g| in ln t over the last decade; the tail exponent is its slope at Y.
  Eigen::MatrixXd A(static_cast<Eigen::Index>(lx.size()), 3);
  Eigen::VectorXd b(static_cast<Eigen::Index>(lx.size()));
  const double lY = std::log(Y);
  for (std::size_t k = 0; k < lx.size(); ++k) {
    const double z = lx[k] - lY;
    A(static_cast<Eigen::Index>(k), 0) = 1.0;
    A(static_cast<Eigen::Index>(k), 1) = z;
    A(static_cast<Eigen::Index>(k), 2) = z * z;
    b(static_cast<Eigen::Index>(k)) = lg[k];
  }
  const Eigen::Vector3d coef = A.colPivHouseholderQr().solve(b);
  const double q = -coef(1);
  rep.tail_exponent = q;
  if (!(q > 1.0)) throw AccuracyError("Hamiltonian integrand decays too slowly for a tail bound", body, INFINITY);
  rep.tail = (1.0 + a) * g.back() * Y / (q - 1.0);
  rep.lhs = body + rep.tail;
  rep.residual = rep.lhs - rep.rhs;
  if (std::abs(rep.tail) > 0.1 * std::abs(rep.rhs) && std::abs(rep.tail) > 1e-12)
    throw AccuracyError("Hamiltonian tail beyond the top level is too large", rep.lhs, std::abs(rep.tail));
  return rep;
}

struct StabilityOptions {
  int radial = 0;   // rings; 0 picks 16 per unit radius
  int angular = 96;
  int max_iterations = 10000;
};

struct StabilityReport {
  double R = 0.0;
  double lambda = 0.0;
  std::vector<double> trace_x;
  std::vector<double> trace;
  int iterations = 0;
  // Dense matrices of the reduced problem S xi = lambda M xi, kept for cross-checks.
  Eigen::MatrixXd schur;
  Eigen::MatrixXd mass;
};

namespace detail {

// int_T y^a dA for a triangle in y >= 0.
inline double triangle_weight(double a, std::array<double, 2> p0, std::array<double, 2> p1, std::array<double, 2> p2) {
  std::array<std::array<double, 2>, 3> v{p0, p1, p2};
  std::sort(v.begin(), v.end(), [](const auto& l, const auto& r) { return l[1] < r[1]; });
  const double y0 = v[0][1], y1 = v[1][1], y2 = v[2][1];
  const double area = 0.5 * std::abs((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]));
  if (area == 0.0) return 0.0;
  if (y0 > 1e-14 * (1.0 + y2)) {
    // Degree-5 rule (7 points); y^a is smooth away from y = 0.
    static constexpr double w0 = 0.225, w1 = 0.132394152788506, w2 = 0.125939180544827;
    static constexpr double a1 = 0.059715871789770, b1 = 0.470142064105115;
    static constexpr double a2 = 0.797426985353087, b2 = 0.101286507323456;
    auto at = [&](double l0, double l1, double l2) {
      return std::pow(l0 * v[0][1] + l1 * v[1][1] + l2 * v[2][1], a);
    };
    double sum = w0 * at(1.0 / 3, 1.0 / 3, 1.0 / 3);
    sum += w1 * (at(a1, b1, b1) + at(b1, a1, b1) + at(b1, b1, a1));
    sum += w2 * (at(a2, b2, b2) + at(b2, a2, b2) + at(b2, b2, a2));
    return area * sum;
  }
  // Exact: width is linear on [y0, y1] and [y1, y2]; y0 = 0 here.
  const double xl = v[0][0] + (v[2][0] - v[0][0]) * (y1 - y0) / (y2 - y0);
  const double W1 = std::abs(v[1][0] - xl);
  double total = 0.0;
  if (y1 > 0.0) total += W1 * std::pow(y1, a + 1.0) / (a + 2.0);
  if (y2 > y1) {
    const double t1 = y2 * (std::pow(y2, a + 1.0) - std::pow(y1, a + 1.0)) / (a + 1.0);
    const double t2 = (std::pow(y2, a + 2.0) - std::pow(y1, a + 2.0)) / (a + 2.0);
    total += W1 * (t1 - t2) / (y2 - y1);
  }
  return total;
}

}  // namespace detail

/// Smallest lambda with Q_R(xi) = int_{B_R^+} y^a |grad xi|^2 + int_{Gamma0_R} d xi^2
/// = lambda int_{Gamma0_R} xi^2 over xi vanishing on |z| = R. P1 elements on a
/// polar mesh; interior unknowns are eliminated (Schur complement onto the
/// diameter) and the reduced pencil is solved by shifted inverse iteration.
inline StabilityReport stability_eigenvalue(const std::function<double(double)>& d, const FracOrder& order, double R,
                                            StabilityOptions opts = {}) {
  if (!(R > 0.0)) throw DomainError("stability radius must be positive");
  const int nr = opts.radial > 0 ? opts.radial : std::max(8, static_cast<int>(std::ceil(16.0 * R)));
  const int nt = opts.angular;
  if (nt < 4) throw DomainError("angular resolution must be >= 4");
  const double a = order.a();
  const int per_ring = nt + 1;
  const int nodes = 1 + nr * per_ring;
  auto id = [&](int k, int l) { return k == 0 ? 0 : 1 + (k - 1) * per_ring + l; };
  std::vector<std::array<double, 2>> pos(nodes);
  pos[0] = {0.0, 0.0};
  for (int k = 1; k <= nr; ++k)
    for (int l = 0; l <= nt; ++l) {
      const double r = R * k / nr, th = std::numbers::pi * l / nt;
      pos[id(k, l)] = {r * std::cos(th), l == 0 || l == nt ? 0.0 : r * std::sin(th)};
    }
  std::vector<std::array<int, 3>> tris;
  for (int l = 0; l < nt; ++l) tris.push_back({0, id(1, l), id(1, l + 1)});
  for (int k = 1; k < nr; ++k)
    for (int l = 0; l < nt; ++l) {
      tris.push_back({id(k, l), id(k + 1, l), id(k + 1, l + 1)});
      tris.push_back({id(k, l), id(k + 1, l + 1), id(k, l + 1)});
    }
  // Unknown classes: boundary (diameter, not the rim), interior, rim (Dirichlet).
  std::vector<int> cls(nodes, 1), local(nodes, -1);
  for (int l = 0; l <= nt; ++l) cls[id(nr, l)] = 2;
  cls[0] = 0;
  for (int k = 1; k < nr; ++k) cls[id(k, 0)] = cls[id(k, nt)] = 0;
  // Boundary nodes ordered by x.
  std::vector<int> bnodes;
  for (int k = nr - 1; k >= 1; --k) bnodes.push_back(id(k, nt));
  bnodes.push_back(0);
  for (int k = 1; k < nr; ++k) bnodes.push_back(id(k, 0));
  int nb = 0, ni = 0;
  for (int b : bnodes) local[b] = nb++;
  for (int v = 0; v < nodes; ++v)
    if (cls[v] == 1) local[v] = ni++;

  std::vector<Eigen::Triplet<double>> tii, tib;
  Eigen::MatrixXd Abb = Eigen::MatrixXd::Zero(nb, nb);
  for (const auto& t : tris) {
    const auto &p0 = pos[t[0]], &p1 = pos[t[1]], &p2 = pos[t[2]];
    const double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    const double area = 0.5 * std::abs(det);
    if (area == 0.0) continue;
    // Gradients of the barycentric basis.
    std::array<std::array<double, 2>, 3> gr;
    gr[0] = {(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det};
    gr[1] = {(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det};
    gr[2] = {(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det};
    const double wmass = detail::triangle_weight(a, p0, p1, p2);
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3; ++q) {
        const int vp = t[p], vq = t[q];
        if (cls[vp] == 2 || cls[vq] == 2) continue;
        const double kpq = wmass * (gr[p][0] * gr[q][0] + gr[p][1] * gr[q][1]);
        if (cls[vp] == 1 && cls[vq] == 1) tii.emplace_back(local[vp], local[vq], kpq);
        else if (cls[vp] == 1 && cls[vq] == 0) tib.emplace_back(local[vp], local[vq], kpq);
        else if (cls[vp] == 0 && cls[vq] == 0) Abb(local[vp], local[vq]) += kpq;
      }
  }
  // Diameter segments: mass and the d-term (3-point Gauss per segment). The
  // rim endpoints x = +-R carry zero values.
  std::vector<double> bx(nb);
  for (int k = 0; k < nb; ++k) bx[k] = pos[bnodes[k]][0];
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(nb, nb);
  double dmax = 0.0;
  std::vector<double> sx{-R};
  sx.insert(sx.end(), bx.begin(), bx.end());
  sx.push_back(R);
  const std::array<double, 3> gq{-std::sqrt(0.6), 0.0, std::sqrt(0.6)}, gwt{5.0 / 9, 8.0 / 9, 5.0 / 9};
  for (std::size_t e = 0; e + 1 < sx.size(); ++e) {
    const double x0 = sx[e], x1 = sx[e + 1], hl = x1 - x0;
    const int i0 = static_cast<int>(e) - 1, i1 = static_cast<int>(e);  // local indices, -1 / nb = rim
    for (int q = 0; q < 3; ++q) {
      const double xi = 0.5 * (1.0 + gq[q]);
      const double x = x0 + xi * hl;
      const double dv = d(x);
      dmax = std::max(dmax, std::abs(dv));
      const double w = 0.5 * hl * gwt[q];
      const double phi[2] = {1.0 - xi, xi};
      const int idx[2] = {i0, i1};
      for (int p = 0; p < 2; ++p)
        for (int r = 0; r < 2; ++r) {
          if (idx[p] < 0 || idx[p] >= nb || idx[r] < 0 || idx[r] >= nb) continue;
          M(idx[p], idx[r]) += w * phi[p] * phi[r];
          Abb(idx[p], idx[r]) += w * dv * phi[p] * phi[r];
        }
    }
  }
  Eigen::SparseMatrix<double> Aii(ni, ni), Aib(ni, nb);
  Aii.setFromTriplets(tii.begin(), tii.end());
  Aib.setFromTriplets(tib.begin(), tib.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(Aii);
  if (ldlt.info() != Eigen::Success) throw AccuracyError("interior stiffness factorization failed", 0.0, INFINITY);
  const Eigen::MatrixXd Aib_dense = Eigen::MatrixXd(Aib);
  const Eigen::MatrixXd X = ldlt.solve(Aib_dense);
  Eigen::MatrixXd S = Abb - Aib_dense.transpose() * X;
  S = 0.5 * (S + S.transpose());

  // Shifted inverse iteration on S xi = lambda M xi.
  const double sigma = -dmax - 1.0;
  Eigen::LLT<Eigen::MatrixXd> shifted(S - sigma * M);
  if (shifted.info() != Eigen::Success) throw AccuracyError("shifted pencil is not definite", 0.0, INFINITY);
  Eigen::VectorXd xi = Eigen::VectorXd::Ones(nb);
  xi /= std::sqrt(xi.dot(M * xi));
  double lambda = xi.dot(S * xi);
  int it = 0;
  bool converged = false;
  for (; it < opts.max_iterations; ++it) {
    Eigen::VectorXd next = shifted.solve(M * xi);
    next /= std::sqrt(next.dot(M * next));
    const double lam = next.dot(S * next);
    const double change = std::abs(lam - lambda);
    xi = next;
    lambda = lam;
    const double resid = (S * xi - lambda * (M * xi)).norm();
    if (change <= 1e-13 * (1.0 + std::abs(lambda)) && resid <= 1e-9 * (1.0 + std::abs(lambda))) {
      converged = true;
      break;
    }
  }
  if (!converged) throw AccuracyError("stability inverse iteration did not converge", lambda, INFINITY);
  if (xi.sum() < 0.0) xi = -xi;
  StabilityReport rep;
  rep.R = R;
  rep.lambda = lambda;
  rep.iterations = it + 1;
  rep.trace_x = bx;
  rep.trace.assign(xi.data(), xi.data() + nb);
  rep.schur = std::move(S);
  rep.mass = std::move(M);
  return rep;
}

}  // namespace fraclayer::extension
