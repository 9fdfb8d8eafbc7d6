#pragma once

// (-d_xx)^s on sampled profiles, by two independent routes:
//  - direct: C_{1,s} P.V. int (v(x) - v(y)) / |x - y|^{1+2s} dy, with a Taylor
//    regularized core, quadratic product integration on the grid and an
//    analytic far field from the profile's tail model;
//  - spectral: FFT, multiplication by |xi|^{2s}, inverse FFT, with a matched
//    explicit layer subtracted first for non-periodic layer profiles.

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "fraclayer/errors.hpp"
#include "fraclayer/heatlayer.hpp"
#include "fraclayer/parallel.hpp"
#include "fraclayer/profile.hpp"
#include "fraclayer/quadrature.hpp"

namespace fraclayer::fraclap {

enum class Method { spectral, direct };
enum class TailMode { none, layer };

struct FracLapConfig {
  FracOrder order{0.5};
  Method method = Method::spectral;
  double domain_half_width = 100.0;
  std::size_t spectral_points = 4096;
  TailMode tail_model = TailMode::layer;

  void validate() const {
    if (!(domain_half_width > 0.0)) throw DomainError("domain_half_width must be positive");
    if (method == Method::spectral) {
      if (spectral_points < 64) throw DomainError("spectral_points must be >= 64");
      if ((spectral_points & (spectral_points - 1)) != 0)
        throw DomainError("spectral_points must be a power of two");
    }
  }
};

namespace detail {

// Panel weights of the kernel |y|^{-1-2s} in units of h (h^{-2s} factored out).
// quad[k] holds the weights of the quadratic panel on offsets (2+2k, 3+2k, 4+2k);
// lin[m] the linear-cell weights on offsets (m, m+1).
struct PanelWeights {
  std::vector<std::array<double, 3>> quad;
  std::vector<std::array<double, 2>> lin;
};

inline const PanelWeights& panel_weights(double s, std::size_t max_offset) {
  static std::mutex mutex;
  static std::map<double, std::shared_ptr<PanelWeights>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[s];
  if (!slot) slot = std::make_shared<PanelWeights>();
  PanelWeights& w = *slot;
  const std::size_t want_quad = max_offset / 2 + 1;
  if (w.quad.size() >= want_quad && w.lin.size() >= max_offset + 1) return w;
  std::vector<double> gx, gw;
  quadrature::gauss_legendre(20, gx, gw);
  const double p = -1.0 - 2.0 * s;
  for (std::size_t k = w.quad.size(); k < want_quad; ++k) {
    const double m = 2.0 + 2.0 * static_cast<double>(k);
    std::array<double, 3> acc{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double u = 1.0 + gx[i];  // [0, 2]
      const double kern = gw[i] * std::pow(m + u, p);
      acc[0] += kern * 0.5 * (u - 1.0) * (u - 2.0);
      acc[1] += kern * u * (2.0 - u);
      acc[2] += kern * 0.5 * u * (u - 1.0);
    }
    w.quad.push_back(acc);
  }
  for (std::size_t m = w.lin.size(); m <= max_offset; ++m) {
    std::array<double, 2> acc{0.0, 0.0};
    if (m >= 2) {
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const double u = 0.5 * (1.0 + gx[i]);  // [0, 1]
        const double kern = 0.5 * gw[i] * std::pow(static_cast<double>(m) + u, p);
        acc[0] += kern * (1.0 - u);
        acc[1] += kern * u;
      }
    }
    w.lin.push_back(acc);
  }
  return w;
}

// One side of the grid part: sum over offsets 2..count of W_m (vc - v(m)),
// in units with h^{-2s} factored out. `at(m)` returns the sample at offset m.
template <class At>
double one_side(const PanelWeights& w, double vc, std::size_t count, At&& at) {
  double sum = 0.0;
  std::size_t m = 2;
  std::size_t k = 0;
  while (m + 2 <= count) {
    const auto& q = w.quad[k];
    sum += q[0] * (vc - at(m)) + q[1] * (vc - at(m + 1)) + q[2] * (vc - at(m + 2));
    m += 2;
    ++k;
  }
  if (m < count) {
    const auto& l = w.lin[m];
    sum += l[0] * (vc - at(m)) + l[1] * (vc - at(m + 1));
  }
  return sum;
}

// int_Y^inf (d + y)^{-p} y^{-1-2s} dy for d + Y > 0, via y = Y / u, u = w^{1/alpha}.
inline double far_power_integral(double s, double p, double d, double Y) {
  const double alpha = 2.0 * s + p;
  auto g = [=](double w) { return std::pow(std::pow(w, 1.0 / alpha) * d + Y, -p); };
  const double val = quadrature::integrate(g, 0.0, 1.0, {1e-15, 1e-13, 2000, 64});
  return std::pow(Y, -2.0 * s) / alpha * val;
}

// Far-field continuation of a profile beyond one edge.
struct FarModel {
  bool power = false;   // v(z) = limit -/+ c |z - center|^{-p} beyond the edge
  double limit = 0.0;   // or the constant continuation value when !power
  double c = 0.0;
  double p = 0.0;
  double center = 0.0;
};

// Un-normalized P.V. integral at node c of `vals` (spacing h), with far models.
inline double pv_at_node(const std::vector<double>& vals, std::size_t c, double h, double s, double x,
                         const FarModel& left, const FarModel& right) {
  const std::size_t n = vals.size();
  if (c < 2 || c + 2 >= n) throw DomainError("direct evaluation too close to the grid edge");
  const double vc = vals[c];
  const double hs = std::pow(h, -2.0 * s);
  const PanelWeights& w = panel_weights(s, n);
  const double delta = 2.0 * h;
  const double v2 = (vals[c + 1] - 2.0 * vc + vals[c - 1]) / (h * h);
  const double core = -v2 * std::pow(delta, 2.0 - 2.0 * s) / (2.0 - 2.0 * s);
  const std::size_t cr = n - 1 - c, cl = c;
  const double right_sum = one_side(w, vc, cr, [&](std::size_t m) { return vals[c + m]; });
  const double left_sum = one_side(w, vc, cl, [&](std::size_t m) { return vals[c - m]; });
  auto far = [&](const FarModel& fm, double Y, bool is_right) {
    double val = (vc - fm.limit) * std::pow(Y, -2.0 * s) / (2.0 * s);
    if (fm.power) {
      const double d = is_right ? x - fm.center : fm.center - x;
      const double J = far_power_integral(s, fm.p, d, Y);
      val += is_right ? fm.c * J : -fm.c * J;
    }
    return val;
  };
  return core + hs * (right_sum + left_sum) + far(right, static_cast<double>(cr) * h, true) +
         far(left, static_cast<double>(cl) * h, false);
}

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace detail

/// C_{1,s}, calibrated so the discrete direct operator reproduces the symbol
/// |k|^{2s} on cos(kx), k in {0.5, 1, 2} (N = 2^16 nodes on [-200, 200)).
/// Cached per s. Throws CalibrationError if the three ratios disagree by more
/// than 1e-4 relative standard deviation.
inline double normalizing_constant(const FracOrder& order) {
  static std::mutex mutex;
  static std::map<double, double> cache;
  const double s = order.s();
  {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(s);
    if (it != cache.end()) return it->second;
  }
  const std::size_t n = std::size_t{1} << 16;
  const double L = 200.0;
  const UniformGrid grid = UniformGrid::periodic(L, n);
  const std::size_t c = n / 2;  // x = 0
  const std::array<double, 3> ks{0.5, 1.0, 2.0};
  std::array<double, 3> ratio{};
  std::vector<double> vals(n);
  for (std::size_t j = 0; j < ks.size(); ++j) {
    const double k = ks[j];
    for (std::size_t i = 0; i < n; ++i) vals[i] = std::cos(k * grid.x(i));
    // Far fields are exact: int_Y^inf (1 - cos(k y)) y^{-1-2s} dy.
    auto exact_far = [&](double Y) {
      auto amp = [=](double r) { return std::pow(Y + r, -1.0 - 2.0 * s); };
      const quadrature::QuadSpec spec{1e-15, 1e-12, 4000, 64};
      const double ic = quadrature::integrate_oscillatory(amp, k, quadrature::TrigKind::cosine, spec);
      const double is = quadrature::integrate_oscillatory(amp, k, quadrature::TrigKind::sine, spec);
      return std::pow(Y, -2.0 * s) / (2.0 * s) - (std::cos(k * Y) * ic - std::sin(k * Y) * is);
    };
    detail::FarModel none{};
    none.limit = 1.0;  // makes the constant part vanish: (vc - 1) = 0 at x = 0
    const double inner = detail::pv_at_node(vals, c, grid.h, s, 0.0, none, none);
    const double Yr = static_cast<double>(n - 1 - c) * grid.h, Yl = static_cast<double>(c) * grid.h;
    const double total = inner + exact_far(Yr) + exact_far(Yl);
    ratio[j] = std::pow(k, 2.0 * s) / total;
  }
  const double mean = (ratio[0] + ratio[1] + ratio[2]) / 3.0;
  double var = 0.0;
  for (double r : ratio) var += (r - mean) * (r - mean);
  const double rel_std = std::sqrt(var / 3.0) / mean;
  if (rel_std > 1e-4) throw CalibrationError("symbol ratio not flat in k", mean, rel_std);
  std::lock_guard<std::mutex> lock(mutex);
  cache[s] = mean;
  return mean;
}

namespace detail {

inline double grid_half_width(const UniformGrid& g) { return 0.5 * static_cast<double>(g.n) * g.h; }
inline double grid_mid(const UniformGrid& g) { return g.x0 + grid_half_width(g); }

// Zero crossing of v - level by linear interpolation (first sign change).
inline std::optional<double> crossing(const Profile& v, double level) {
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const double a = v.values[i] - level, b = v.values[i + 1] - level;
    if (a == 0.0) return v.x(i);
    if ((a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0)) return v.x(i) + v.grid.h * a / (a - b);
  }
  if (v.values.back() == level) return v.x(v.size() - 1);
  return std::nullopt;
}

inline std::pair<FarModel, FarModel> far_models(const Profile& v, const FracLapConfig& cfg, double s) {
  FarModel left, right;
  const std::size_t n = v.size();
  if (cfg.tail_model == TailMode::none) {
    // Constant continuation; only valid for profiles that are flat at the edges.
    const std::size_t band = std::max<std::size_t>(4, n / 20);
    double scale = 0.0;
    for (double x : v.values) scale = std::max(scale, std::abs(x));
    const double tol = 1e-8 * std::max(scale, 1e-300) + 1e-14;
    double dev = 0.0;
    for (std::size_t i = 0; i < band; ++i) {
      dev = std::max(dev, std::abs(v.values[i] - v.values[0]));
      dev = std::max(dev, std::abs(v.values[n - 1 - i] - v.values[n - 1]));
    }
    if (dev > tol)
      throw AccuracyError("profile is not flat at the grid edges and carries no tail model", dev, tol);
    left.limit = v.values.front();
    right.limit = v.values.back();
    return {left, right};
  }
  if (!v.tail) throw DomainError("tail_model = layer requires tail metadata on the profile");
  const TailModel& tm = *v.tail;
  (void)s;
  auto edge_matched = [&](double limit, double value, double dist, double nominal) {
    if (dist <= 0.0) return nominal;
    const double c = std::abs(limit - value) * std::pow(dist, tm.exponent);
    return c > 0.0 ? c : nominal;
  };
  left.power = right.power = true;
  left.p = right.p = tm.exponent;
  left.center = right.center = tm.center;
  left.limit = v.left_limit;
  right.limit = v.right_limit;
  left.c = edge_matched(v.left_limit, v.values.front(), tm.center - v.x(0), tm.c_minus);
  right.c = edge_matched(v.right_limit, v.values.back(), v.x(n - 1) - tm.center, tm.c_plus);
  // Sign convention of the far model: right v = limit - c d^{-p}; left v = limit + c d^{-p}.
  if (v.values.back() > v.right_limit) right.c = -right.c;
  if (v.values.front() < v.left_limit) left.c = -left.c;
  return {left, right};
}

// 6-point Lagrange resampling of v at x + m h for m in [-ml, mr].
inline std::vector<double> resample(const Profile& v, double x, std::size_t ml, std::size_t mr) {
  const double h = v.grid.h;
  std::vector<double> out(ml + mr + 1);
  const std::size_t n = v.size();
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double z = x + (static_cast<double>(k) - static_cast<double>(ml)) * h;
    const double pos = (z - v.grid.x0) / h;
    auto base = static_cast<long>(std::floor(pos)) - 2;
    base = std::clamp<long>(base, 0, static_cast<long>(n) - 6);
    double acc = 0.0;
    for (int j = 0; j < 6; ++j) {
      double lj = 1.0;
      for (int m = 0; m < 6; ++m)
        if (m != j) lj *= (pos - static_cast<double>(base + m)) / static_cast<double>(j - m);
      acc += lj * v.values[static_cast<std::size_t>(base + j)];
    }
    out[k] = acc;
  }
  return out;
}

inline void check_grid(const Profile& v, const FracLapConfig& cfg) {
  v.validate();
  const double L = grid_half_width(v.grid);
  if (std::abs(L - cfg.domain_half_width) > 1e-9 * cfg.domain_half_width)
    throw DomainError("profile grid does not span [-L, L) of the configuration");
}

}  // namespace detail

/// Direct (singular-quadrature) evaluation of (-d_xx)^s v at x. x must lie in
/// the central half of the grid.
inline double apply_direct(const Profile& v, const FracLapConfig& cfg, double x) {
  cfg.validate();
  detail::check_grid(v, cfg);
  const double s = cfg.order.s();
  const double mid = detail::grid_mid(v.grid);
  const double L = detail::grid_half_width(v.grid);
  if (!(std::abs(x - mid) <= 0.5 * L * (1.0 + 1e-12)))
    throw DomainError("direct evaluation point outside the central half of the grid");
  const auto [left, right] = detail::far_models(v, cfg, s);
  const double C = normalizing_constant(cfg.order);
  const double pos = (x - v.grid.x0) / v.grid.h;
  const double rounded = std::round(pos);
  if (std::abs(pos - rounded) <= 1e-9) {
    return C * detail::pv_at_node(v.values, static_cast<std::size_t>(rounded), v.grid.h, s, x, left, right);
  }
  // Off-grid: shifted grid through x, resampled, strictly inside the data.
  const auto ml = static_cast<std::size_t>(std::floor(pos)) - 2;
  const auto mr = static_cast<std::size_t>(static_cast<double>(v.size() - 1) - std::ceil(pos)) - 2;
  std::vector<double> vals = detail::resample(v, x, ml, mr);
  return C * detail::pv_at_node(vals, ml, v.grid.h, s, x, left, right);
}

/// Direct evaluation at several points (parallel over points).
inline std::vector<double> apply_direct(const Profile& v, const FracLapConfig& cfg, const std::vector<double>& xs) {
  normalizing_constant(cfg.order);
  std::vector<double> out(xs.size());
  parallel_for(xs.size(), [&](std::size_t i) { out[i] = apply_direct(v, cfg, xs[i]); });
  return out;
}

/// Periodic |xi|^{2s} multiplier on N points with period 2L (FFTW, one workspace per object).
class SpectralLaplacian {
 public:
  SpectralLaplacian(double s, std::size_t n, double half_width) : n_(n), s_(s) {
    if (n < 4 || (n & (n - 1)) != 0) throw DomainError("spectral size must be a power of two");
    real_ = fftw_alloc_real(n);
    spec_ = fftw_alloc_complex(n / 2 + 1);
    {
      std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
      forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_, spec_, FFTW_ESTIMATE);
      backward_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec_, real_, FFTW_ESTIMATE);
    }
    symbol_.resize(n / 2 + 1);
    const double dk = std::numbers::pi / half_width;
    for (std::size_t k = 0; k <= n / 2; ++k)
      symbol_[k] = std::pow(dk * static_cast<double>(k), 2.0 * s) / static_cast<double>(n);
  }
  SpectralLaplacian(const SpectralLaplacian&) = delete;
  SpectralLaplacian& operator=(const SpectralLaplacian&) = delete;
  ~SpectralLaplacian() {
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
    fftw_free(real_);
    fftw_free(spec_);
  }

  std::size_t size() const noexcept { return n_; }
  double order() const noexcept { return s_; }
  /// Largest symbol value (pi / h)^{2s}.
  double max_symbol() const noexcept { return symbol_.back() * static_cast<double>(n_); }

  void apply(const double* in, double* out) {
    std::copy(in, in + n_, real_);
    fftw_execute(forward_);
    for (std::size_t k = 0; k <= n_ / 2; ++k) {
      spec_[k][0] *= symbol_[k];
      spec_[k][1] *= symbol_[k];
    }
    fftw_execute(backward_);
    std::copy(real_, real_ + n_, out);
  }

 private:
  std::size_t n_;
  double s_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
  std::vector<double> symbol_;
};

/// Explicit-layer reference w = mid + half [(1 - beta) v^{t_a} + beta v^{t_b}](x - center)
/// with its exact image half [(1 - beta) y (v^{t_a})'(y) / (2 s t_a) + beta y (v^{t_b})'(y) / (2 s t_b)].
/// beta is chosen so the tail constant of w equals a requested value.
class LayerReference {
 public:
  LayerReference(double s, const UniformGrid& grid, double center, double left_limit, double right_limit,
                 double t_a, double t_b = 0.0)
      : s_(s), center_(center), mid_(0.5 * (left_limit + right_limit)),
        half_(0.5 * (right_limit - left_limit)), t_a_(t_a), t_b_(t_b) {
    if (!(half_ > 0.0)) throw DomainError("layer reference needs right_limit > left_limit");
    a_ = heatlayer::sample_layer_shared(heatlayer::HeatLayerParams(s, t_a), grid, center);
    if (t_b > 0.0) b_ = heatlayer::sample_layer_shared(heatlayer::HeatLayerParams(s, t_b), grid, center);
    unit_ = heatlayer::asymptotic_constant(heatlayer::HeatLayerParams(s, 1.0)).value_limit;
  }

  /// Blend weight matching the value-tail constant c (|v -/+ 1| ~ c |x|^{-2s}).
  double beta_for(double c) const {
    if (!b_) return 0.0;
    const double t_star = c / (half_ * unit_);
    return (t_star - t_a_) / (t_b_ - t_a_);
  }

  void evaluate(double beta, std::vector<double>& w, std::vector<double>& image) const {
    const std::size_t n = a_->size();
    w.resize(n);
    image.resize(n);
    const auto& va = a_->values;
    const auto& da = *a_->derivative;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = a_->grid.x(i) - center_;
      double wv = (1.0 - beta) * va[i];
      double im = (1.0 - beta) * y * da[i] / (2.0 * s_ * t_a_);
      if (b_) {
        wv += beta * b_->values[i];
        im += beta * y * (*b_->derivative)[i] / (2.0 * s_ * t_b_);
      }
      w[i] = mid_ + half_ * wv;
      image[i] = half_ * im;
    }
  }

  double center() const noexcept { return center_; }

 private:
  double s_, center_, mid_, half_, t_a_, t_b_;
  double unit_ = 1.0;
  std::shared_ptr<const Profile> a_, b_;
};

/// Spectral image on the full grid (periodic layout). With a reference, the
/// reference is subtracted before the transform and its exact image added back.
inline void apply_spectral_full(SpectralLaplacian& op, const std::vector<double>& v, std::vector<double>& out,
                                const LayerReference* ref = nullptr, double beta = 0.0) {
  const std::size_t n = v.size();
  if (op.size() != n) throw DomainError("spectral operator size does not match the profile");
  out.resize(n);
  if (!ref) {
    op.apply(v.data(), out.data());
    return;
  }
  std::vector<double> w, image, rem(n);
  ref->evaluate(beta, w, image);
  for (std::size_t i = 0; i < n; ++i) rem[i] = v[i] - w[i];
  op.apply(rem.data(), out.data());
  for (std::size_t i = 0; i < n; ++i) out[i] += image[i];
}

namespace detail {

inline Profile central_half(const UniformGrid& g, const std::vector<double>& full) {
  const double mid = grid_mid(g);
  const double L = grid_half_width(g);
  std::size_t lo = g.n, hi = 0;
  for (std::size_t i = 0; i < g.n; ++i)
    if (std::abs(g.x(i) - mid) <= 0.5 * L * (1.0 + 1e-12)) {
      lo = std::min(lo, i);
      hi = std::max(hi, i);
    }
  Profile out;
  out.grid = UniformGrid{g.x(lo), g.h, hi - lo + 1};
  out.values.assign(full.begin() + static_cast<long>(lo), full.begin() + static_cast<long>(hi) + 1);
  out.left_limit = 0.0;
  out.right_limit = 0.0;
  return out;
}

}  // namespace detail

/// Spectral evaluation of (-d_xx)^s v, returned on the central half |x - mid| <= L/2.
/// The grid must hold N = spectral_points nodes with N h = 2L.
inline Profile apply_spectral(const Profile& v, const FracLapConfig& cfg) {
  cfg.validate();
  detail::check_grid(v, cfg);
  if (v.size() != cfg.spectral_points) throw DomainError("profile size differs from spectral_points");
  SpectralLaplacian op(cfg.order.s(), v.size(), cfg.domain_half_width);
  std::vector<double> out;
  if (cfg.tail_model == TailMode::none) {
    apply_spectral_full(op, v.values, out);
    return detail::central_half(v.grid, out);
  }
  if (!v.tail) throw DomainError("tail_model = layer requires tail metadata on the profile");
  const double level = 0.5 * (v.left_limit + v.right_limit);
  const auto center = detail::crossing(v, level);
  if (!center) throw DomainError("layer profile does not cross its mid level");
  const double c_bar = 0.5 * (v.tail->c_minus + v.tail->c_plus);
  const double half = 0.5 * (v.right_limit - v.left_limit);
  const double unit = heatlayer::asymptotic_constant(heatlayer::HeatLayerParams(cfg.order.s(), 1.0)).value_limit;
  const double t_star = c_bar / (half * unit);
  if (!(t_star > 0.0) || !std::isfinite(t_star)) throw DomainError("tail constants must be positive");
  // A crossing within rounding of the tail center reuses the cached samples of that center.
  const double ref_center = std::abs(*center - v.tail->center) <= 1e-9 * v.grid.h ? v.tail->center : *center;
  LayerReference ref(cfg.order.s(), v.grid, ref_center, v.left_limit, v.right_limit, t_star);
  apply_spectral_full(op, v.values, out, &ref, 0.0);
  return detail::central_half(v.grid, out);
}

}  // namespace fraclayer::fraclap
