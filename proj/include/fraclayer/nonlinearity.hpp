#pragma once

// Nonlinearities f with potentials G (G' = -f, G(1) = 0) for layer problems
// (-d_xx)^s v = f(v) connecting -1 to 1.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "fraclayer/errors.hpp"
#include "fraclayer/heatlayer.hpp"
#include "fraclayer/parallel.hpp"

namespace fraclayer {

/// Cubic Hermite interpolant on strictly increasing nodes; slopes from
/// five-node Lagrange differentiation.
class HermiteTable {
 public:
  HermiteTable() = default;
  HermiteTable(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 3 || y_.size() != n) throw DomainError("table needs >= 3 matched samples");
    for (std::size_t i = 1; i < n; ++i)
      if (!(x_[i] > x_[i - 1])) throw DomainError("table abscissae must be strictly increasing");
    for (double v : y_)
      if (!std::isfinite(v)) throw DomainError("table values must be finite");
    d_.resize(n);
    const std::size_t m = std::min<std::size_t>(5, n);
    for (std::size_t i = 0; i < n; ++i) {
      // Derivative at x_i of the Lagrange polynomial through m nodes around i.
      const std::size_t a = std::min(i >= m / 2 ? i - m / 2 : 0, n - m);
      double d = 0.0;
      for (std::size_t p = a; p < a + m; ++p) {
        double w = 0.0;
        for (std::size_t q = a; q < a + m; ++q) {
          if (q == p) continue;
          double prod = 1.0 / (x_[p] - x_[q]);
          for (std::size_t r = a; r < a + m; ++r)
            if (r != p && r != q) prod *= (x_[i] - x_[r]) / (x_[p] - x_[r]);
          w += prod;
        }
        d += w * y_[p];
      }
      d_[i] = d;
    }
  }

  double front() const { return x_.front(); }
  double back() const { return x_.back(); }
  bool contains(double z) const { return z >= x_.front() && z <= x_.back(); }

  double value(double z) const { return eval(z, false); }
  double derivative(double z) const { return eval(z, true); }

  /// int over [x_i, x_{i+1}] of the interpolant.
  double cell_integral(std::size_t i) const {
    const double h = x_[i + 1] - x_[i];
    return 0.5 * h * (y_[i] + y_[i + 1]) + h * h * (d_[i] - d_[i + 1]) / 12.0;
  }
  std::size_t size() const { return x_.size(); }
  const std::vector<double>& nodes() const { return x_; }

 private:
  double eval(double z, bool deriv) const {
    if (!contains(z)) throw DomainError("table evaluated outside its range");
    std::size_t i = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), z) - x_.begin());
    i = std::clamp<std::size_t>(i, 1, x_.size() - 1) - 1;
    const double h = x_[i + 1] - x_[i];
    const double u = (z - x_[i]) / h;
    if (deriv) {
      const double dh00 = 6 * u * u - 6 * u, dh10 = 3 * u * u - 4 * u + 1, dh01 = -dh00, dh11 = 3 * u * u - 2 * u;
      return (dh00 * y_[i] + dh01 * y_[i + 1]) / h + dh10 * d_[i] + dh11 * d_[i + 1];
    }
    const double h00 = (1 + 2 * u) * (1 - u) * (1 - u), h10 = u * (1 - u) * (1 - u);
    const double h01 = u * u * (3 - 2 * u), h11 = u * u * (u - 1);
    return h00 * y_[i] + h01 * y_[i + 1] + h * (h10 * d_[i] + h11 * d_[i + 1]);
  }

  std::vector<double> x_, y_, d_;
};

enum class NonlinearityKind { peierls_nabarro, allen_cahn, heat_induced, tabulated, custom };

inline std::string to_string(NonlinearityKind k) {
  switch (k) {
    case NonlinearityKind::peierls_nabarro: return "peierls_nabarro";
    case NonlinearityKind::allen_cahn: return "allen_cahn";
    case NonlinearityKind::heat_induced: return "heat_induced";
    case NonlinearityKind::tabulated: return "tabulated";
    case NonlinearityKind::custom: return "custom";
  }
  return "unknown";
}

struct Nonlinearity {
  NonlinearityKind kind = NonlinearityKind::custom;
  double s = 0.0;  // heat_induced only
  double t = 1.0;  // peierls_nabarro and heat_induced
  bool odd = false;
  std::function<double(double)> f;
  std::function<double(double)> G;       // G' = -f, G(1) = 0
  std::function<double(double)> fprime;

  double operator()(double v) const { return f(v); }

  /// max |f'| over 10^3 samples of [-1, 1].
  double lipschitz() const {
    double m = 0.0;
    for (int k = 0; k <= 1000; ++k) m = std::max(m, std::abs(fprime(-1.0 + 2.0 * k / 1000.0)));
    return m;
  }

  /// f(v) = sin(pi v) / (pi t), G = (1 + cos(pi v)) / (pi^2 t).
  static Nonlinearity peierls_nabarro(double t = 1.0) {
    if (!(t > 0.0)) throw DomainError("Peierls-Nabarro scale t must be positive");
    Nonlinearity n;
    n.kind = NonlinearityKind::peierls_nabarro;
    n.t = t;
    n.odd = true;
    const double pi = std::numbers::pi;
    n.f = [=](double v) { return std::sin(pi * v) / (pi * t); };
    n.G = [=](double v) { return (1.0 + std::cos(pi * v)) / (pi * pi * t); };
    n.fprime = [=](double v) { return std::cos(pi * v) / t; };
    return n;
  }

  /// f(v) = v - v^3, G = (1 - v^2)^2 / 4.
  static Nonlinearity allen_cahn() {
    Nonlinearity n;
    n.kind = NonlinearityKind::allen_cahn;
    n.odd = true;
    n.f = [](double v) { return v - v * v * v; };
    n.G = [](double v) { return 0.25 * (1.0 - v * v) * (1.0 - v * v); };
    n.fprime = [](double v) { return 1.0 - 3.0 * v * v; };
    return n;
  }

  static Nonlinearity heat_induced(double s, double t = 1.0);
  static Nonlinearity tabulated(std::vector<double> v, std::vector<double> fv);

  /// User-supplied f and G; G is shifted so that G(1) = 0. Without f' a
  /// second-order difference is used.
  static Nonlinearity custom(std::function<double(double)> f, std::function<double(double)> G,
                             std::function<double(double)> fprime = {}, bool odd = false) {
    if (!f || !G) throw DomainError("custom nonlinearity needs f and G");
    Nonlinearity n;
    n.kind = NonlinearityKind::custom;
    n.odd = odd;
    n.f = f;
    const double g1 = G(1.0);
    n.G = [G, g1](double v) { return G(v) - g1; };
    if (fprime) {
      n.fprime = std::move(fprime);
    } else {
      // Second order everywhere, one-sided within h of +-1 so f is sampled on [-1, 1] only.
      n.fprime = [f](double v) {
        const double h = 1e-5;
        if (v + h > 1.0) return (3.0 * f(v) - 4.0 * f(v - h) + f(v - 2.0 * h)) / (2.0 * h);
        if (v - h < -1.0) return (-3.0 * f(v) + 4.0 * f(v + h) - f(v + 2.0 * h)) / (2.0 * h);
        return (f(v + h) - f(v - h)) / (2.0 * h);
      };
    }
    return n;
  }
};

namespace detail {

// Heat-induced f and G for t = 1 as tables in v on [0, v_max], from the parametric
// form v = v(x), f = x v'(x) / (2s), x = sinh(w) on a uniform w grid. f is analytic
// in eps = 1 - v (the tail is a series in x^{-2s}), so beyond eps = 1e-4 the model
// eps + f''(1) eps^2 / 2 is accurate to O(eps^3) and replaces table entries whose
// quadrature error would be comparable to eps.
struct InducedTable {
  double s = 0.0;
  double v_max = 0.0;
  double fsecond = 0.0;
  HermiteTable f;
  std::vector<double> G_nodes;  // G at the table nodes

  double taylor_f(double eps) const { return eps + 0.5 * fsecond * eps * eps; }
  double taylor_G(double eps) const { return 0.5 * eps * eps + fsecond * eps * eps * eps / 6.0; }
};

inline std::shared_ptr<const InducedTable> induced_table(double s) {
  static std::mutex mutex;
  static std::map<double, std::shared_ptr<const InducedTable>> cache;
  {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(s);
    if (it != cache.end()) return it->second;
  }
  const heatlayer::HeatLayerParams unit(s, 1.0);
  const std::size_t K = 4000;
  const double c_val = heatlayer::asymptotic_constant(unit).value_limit;
  const double w_max = std::asinh(std::pow(c_val / 1e-4, 1.0 / (2.0 * s)));
  std::vector<double> v(K + 1), fv(K + 1);
  parallel_for(K + 1, [&](std::size_t k) {
    const double x = std::sinh(w_max * static_cast<double>(k) / static_cast<double>(K));
    v[k] = heatlayer::layer_value(unit, x);
    fv[k] = x * heatlayer::layer_derivative(unit, x) / (2.0 * s);
  });
  auto table = std::make_shared<InducedTable>();
  table->s = s;
  table->fsecond = heatlayer::nonlinearity_boundary_derivatives(unit).fsecond_at_1;
  // Drop trailing nodes where v no longer increases in double precision.
  std::size_t n = 1;
  while (n <= K && v[n] > v[n - 1]) ++n;
  v.resize(n);
  fv.resize(n);
  table->v_max = v.back();
  table->f = HermiteTable(v, fv);
  table->G_nodes.assign(n, 0.0);
  table->G_nodes[n - 1] = table->taylor_G(1.0 - v.back());
  for (std::size_t i = n - 1; i-- > 0;) table->G_nodes[i] = table->G_nodes[i + 1] + table->f.cell_integral(i);
  std::lock_guard<std::mutex> lock(mutex);
  cache[s] = table;
  return table;
}

}  // namespace detail

/// f_s^t from the explicit layer family (tabulated once per s; f^t = f^1 / t).
inline Nonlinearity Nonlinearity::heat_induced(double s, double t) {
  const FracOrder order(s);
  if (!(t > 0.0)) throw DomainError("heat-induced scale t must be positive");
  auto table = detail::induced_table(order.s());
  Nonlinearity n;
  n.kind = NonlinearityKind::heat_induced;
  n.s = s;
  n.t = t;
  n.odd = true;
  auto check = [](double v) {
    if (!(std::abs(v) <= 1.0)) throw DomainError("heat-induced nonlinearity needs |v| <= 1");
  };
  n.f = [table, t, check](double v) {
    check(v);
    const double a = std::abs(v), sg = v < 0.0 ? -1.0 : 1.0;
    const double f1 = a <= table->v_max ? table->f.value(a) : table->taylor_f(1.0 - a);
    return sg * f1 / t;
  };
  n.fprime = [table, t, check](double v) {
    check(v);
    const double a = std::abs(v);
    const double d = a <= table->v_max ? table->f.derivative(a) : -(1.0 + table->fsecond * (1.0 - a));
    return d / t;
  };
  n.G = [table, t, check](double v) {
    check(v);
    const double a = std::abs(v);
    if (a > table->v_max) return table->taylor_G(1.0 - a) / t;
    const auto& nodes = table->f.nodes();
    std::size_t i = static_cast<std::size_t>(std::upper_bound(nodes.begin(), nodes.end(), a) - nodes.begin());
    i = std::clamp<std::size_t>(i, 1, nodes.size() - 1);
    // G(a) = G(x_i) + int_a^{x_i} f, Simpson on the Hermite piece.
    const double b = nodes[i], m = 0.5 * (a + b);
    const double piece = (b - a) / 6.0 * (table->f.value(a) + 4.0 * table->f.value(m) + table->f.value(b));
    return (table->G_nodes[i] + piece) / t;
  };
  return n;
}

/// f from samples covering [-1, 1] (first node -1, last node 1); G by exact
/// integration of the Hermite interpolant from 1.
inline Nonlinearity Nonlinearity::tabulated(std::vector<double> v, std::vector<double> fv) {
  if (v.size() < 3 || v.front() != -1.0 || v.back() != 1.0)
    throw DomainError("tabulated nonlinearity must cover [-1, 1] with endpoints included");
  auto table = std::make_shared<HermiteTable>(v, fv);
  auto G_nodes = std::make_shared<std::vector<double>>(v.size(), 0.0);
  for (std::size_t i = v.size() - 1; i-- > 0;) (*G_nodes)[i] = (*G_nodes)[i + 1] + table->cell_integral(i);
  Nonlinearity n;
  n.kind = NonlinearityKind::tabulated;
  n.f = [table](double x) { return table->value(x); };
  n.fprime = [table](double x) { return table->derivative(x); };
  n.G = [table, G_nodes](double x) {
    const auto& nodes = table->nodes();
    std::size_t i = static_cast<std::size_t>(std::upper_bound(nodes.begin(), nodes.end(), x) - nodes.begin());
    i = std::clamp<std::size_t>(i, 1, nodes.size() - 1);
    const double b = nodes[i], m = 0.5 * (x + b);
    return (*G_nodes)[i] + (b - x) / 6.0 * (table->value(x) + 4.0 * table->value(m) + table->value(b));
  };
  bool odd = true;
  for (std::size_t i = 0; i < v.size() && odd; ++i)
    odd = std::abs(v[i] + v[v.size() - 1 - i]) < 1e-14 && std::abs(fv[i] + fv[v.size() - 1 - i]) < 1e-14;
  n.odd = odd;
  return n;
}

struct Admissibility {
  bool accepted = false;
  std::string reason;
};

/// Layer hypotheses on 10^3 samples: f(+-1) = 0 (G'(+-1) = 0), equal wells
/// G(-1) = G(1) and G > G(1) strictly inside (-1, 1).
inline Admissibility admissibility_check(const Nonlinearity& nl) {
  Admissibility out;
  if (std::abs(nl.f(1.0)) > 1e-8 || std::abs(nl.f(-1.0)) > 1e-8) {
    out.reason = "G'(+-1) != 0: f does not vanish at the wells";
    return out;
  }
  const double g1 = nl.G(1.0);
  if (std::abs(nl.G(-1.0) - g1) > 1e-10) {
    out.reason = "unequal well heights G(-1) != G(1)";
    return out;
  }
  for (int k = 1; k < 1000; ++k) {
    const double v = -1.0 + 2.0 * k / 1000.0;
    if (nl.G(v) <= g1 + 1e-10) {
      out.reason = "G <= G(1) at v = " + std::to_string(v) + " inside (-1, 1)";
      return out;
    }
  }
  out.accepted = true;
  return out;
}

}  // namespace fraclayer
