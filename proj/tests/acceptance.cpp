// One PASS/FAIL line per acceptance criterion; a criterion passes only if its
// check holds within its runtime budget. Exit status is nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "fraclayer/fraclayer.hpp"

using namespace fraclayer;
namespace hl = fraclayer::heatlayer;
namespace fl = fraclayer::fraclap;
namespace ex = fraclayer::extension;
namespace ls = fraclayer::layersolver;
namespace an = fraclayer::analysis;

namespace {

constexpr double pi = std::numbers::pi;

struct Outcome {
  bool ok = false;
  std::string detail;
};

struct Tally {
  int passed = 0, failed = 0;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

void run(Tally& tally, const std::string& id, const std::string& name, double budget_s,
         const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs <= budget_s;
  const bool pass = o.ok && in_time;
  (pass ? tally.passed : tally.failed)++;
  std::printf("%s %-9s %-44s %8.2f s / %g s  %s%s\n", pass ? "PASS" : "FAIL", id.c_str(), name.c_str(), secs,
              budget_s, o.detail.c_str(), in_time ? "" : " [over budget]");
  std::fflush(stdout);
}

// Solves are shared between criteria and property checks; each is timed where first used.
const ls::SolveResult& solved(const std::string& key, const Nonlinearity& nl, double s, double shift = 0.0) {
  static std::map<std::string, ls::SolveResult> cache;
  auto it = cache.find(key);
  if (it == cache.end()) {
    ls::SolveConfig cfg;
    cfg.order = FracOrder(s);
    cfg.initial_shift = shift;
    it = cache.emplace(key, ls::solve_layer_direct(nl, cfg)).first;
  }
  return it->second;
}

double sup_error(const Profile& p, double radius, const std::function<double(double)>& ref) {
  double err = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (std::abs(p.x(i)) <= radius) err = std::max(err, std::abs(p.values[i] - ref(p.x(i))));
  return err;
}

Outcome closed_form_layer() {
  const hl::HeatLayerParams hp(0.5, 1.0);
  double err = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double x = -50.0 + 100.0 * k / 999.0;
    err = std::max(err, std::abs(hl::layer_value(hp, x) - 2.0 / pi * std::atan(x)));
  }
  return {err <= 1e-8, "sup error " + fmt("%.2e", err)};
}

Outcome induced_closed_form() {
  const hl::HeatLayerParams hp(0.5, 1.0);
  double err = 0.0;
  for (int k = 0; k <= 1000; ++k) {
    const double v = -0.999 + 1.998 * k / 1000.0;
    err = std::max(err, std::abs(hl::induced_nonlinearity(hp, v) - std::sin(pi * v) / pi));
  }
  return {err <= 1e-6, "sup error " + fmt("%.2e", err)};
}

Outcome polya_limits() {
  bool ok = true;
  std::string detail;
  for (double kappa : {2.0, 4.0})
    for (double s : {0.25, 0.5, 0.75}) {
      const double err = std::abs(hl::polya_integral(kappa, s, 1e4) - hl::polya_limit(kappa, s));
      ok = ok && err <= 1e-3;
      detail += "(" + fmt("%g", kappa) + "," + fmt("%g", s) + ")=" + fmt("%.1e", err) + " ";
    }
  return {ok, detail};
}

Outcome derivative_constant() {
  bool ok = true;
  std::string detail;
  for (double s : {0.3, 0.5, 0.7}) {
    const hl::HeatLayerParams hp(s, 1.0);
    const double x = 1e3;
    const double rel =
        std::pow(x, 1.0 + 2.0 * s) * hl::layer_derivative(hp, x) / hl::asymptotic_constant(hp).derivative_limit - 1.0;
    ok = ok && std::abs(rel) <= 1e-2;
    detail += "s=" + fmt("%g", s) + ":" + fmt("%+.2e", rel) + " ";
  }
  return {ok, detail};
}

Outcome boundary_derivatives() {
  // One-sided second-order differences from v = 1, where f(1) = 0.
  const double e = 2e-3;
  bool ok = true;
  std::string detail;
  double f2_below = 0.0, f2_above = 0.0;
  for (double s : {0.3, 0.45, 0.5, 0.55, 0.7}) {
    const hl::HeatLayerParams hp(s, 1.0);
    double f[4];
    for (int k = 0; k < 4; ++k) f[k] = hl::induced_nonlinearity(hp, 1.0 - k * e);
    // f(1 - k e) as a function of the step toward the interior; d/dv = -d/d(step).
    const double fp = -(-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * e);
    const double fpp = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / (e * e);
    const auto bd = hl::nonlinearity_boundary_derivatives(hp);
    const bool fp_ok = std::abs(fp - (-1.0)) <= 1e-3;
    // At s = 1/2 the target is 0; 1% of the unit scale of f'(1) stands in for the relative bound.
    const bool fpp_ok = s == 0.5 ? std::abs(fpp) <= 1e-2 : std::abs(fpp / bd.fsecond_at_1 - 1.0) <= 1e-2;
    ok = ok && fp_ok && fpp_ok;
    if (s == 0.45) f2_below = fpp;
    if (s == 0.55) f2_above = fpp;
    detail += "s=" + fmt("%g", s) + ":f''=" + fmt("%.4f", fpp) + " ";
  }
  const bool sign_change = f2_below < 0.0 && f2_above > 0.0;
  ok = ok && sign_change;
  return {ok, detail + (sign_change ? "sign flips at 1/2" : "no sign flip")};
}

Outcome equation_identity() {
  bool ok = true;
  std::string detail;
  const double L = 200.0;
  const std::size_t n = std::size_t{1} << 16;
  for (double s : {0.3, 0.5, 0.7}) {
    const hl::HeatLayerParams hp(s, 1.0);
    const auto grid = UniformGrid::periodic(L, n);
    const Profile v = hl::sample_layer(hp, grid);
    fl::FracLapConfig cfg;
    cfg.order = FracOrder(s);
    cfg.method = fl::Method::spectral;
    cfg.domain_half_width = L;
    cfg.spectral_points = n;
    cfg.tail_model = fl::TailMode::layer;
    const Profile out = fl::apply_spectral(v, cfg);
    double err = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double x = out.x(i);
      if (std::abs(x) <= 20.0)
        err = std::max(err, std::abs(out.values[i] - x * hl::layer_derivative(hp, x) / (2.0 * s)));
    }
    // The layer tail model subtracts v_s^1 itself here, so the spectral line is
    // exact by construction; the direct quadrature is the independent check.
    cfg.method = fl::Method::direct;
    std::vector<double> xs;
    for (int k = -20; k <= 20; ++k) xs.push_back(k);
    const auto direct = fl::apply_direct(v, cfg, xs);
    double cross = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k)
      cross = std::max(cross, std::abs(direct[k] - xs[k] * hl::layer_derivative(hp, xs[k]) / (2.0 * s)));
    ok = ok && err <= 1e-4 && cross <= 1e-4;
    detail += "s=" + fmt("%g", s) + ":" + fmt("%.1e", err) + "/direct " + fmt("%.1e", cross) + " ";
  }
  return {ok, detail};
}

Outcome extension_calibration() {
  const FracOrder o(0.5);
  const auto rep = ex::calibrate_ds_report(o);
  // Second profile: a Gaussian, with the direct quadrature as the reference.
  Profile g;
  g.grid = UniformGrid::periodic(64.0, 8192);
  for (std::size_t i = 0; i < g.grid.n; ++i) g.values.push_back(std::exp(-g.grid.x(i) * g.grid.x(i)));
  g.left_limit = g.right_limit = 0.0;
  fl::FracLapConfig cfg;
  cfg.order = o;
  cfg.method = fl::Method::direct;
  cfg.domain_half_width = 64.0;
  cfg.spectral_points = 8192;
  cfg.tail_model = fl::TailMode::none;
  const std::vector<double> xs{0.25, 0.5, 0.75, 1.0};
  const auto ref = fl::apply_direct(g, cfg, xs);
  const auto u = ex::extend(g, o, ex::graded_levels(1.0), -1.5, 1.5);
  double worst = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k)
    worst = std::max(worst, std::abs(rep.value * ex::conormal_derivative(u, xs[k]) / ref[k] - 1.0));
  const bool ok = std::abs(rep.value - 1.0) <= 1e-2 && rep.rel_std <= 1e-2 && worst <= 1e-2;
  return {ok, "d_s=" + fmt("%.6f", rep.value) + " rel_std=" + fmt("%.1e", rep.rel_std) + " gaussian=" +
                  fmt("%.1e", worst)};
}

Outcome hamiltonian_equality() {
  const Profile v = hl::sample_layer(hl::HeatLayerParams(0.5, 1.0), UniformGrid::periodic(256.0, 8192));
  const auto u = ex::extend(v, FracOrder(0.5), ex::graded_levels(200.0), -3.5, 3.5);
  // At s = 1/2, t = 1 the extension potential is G(w) = (1 + cos(pi w)) / pi^2.
  auto G = [](double w) { return (1.0 + std::cos(pi * w)) / (pi * pi); };
  const double target = 2.0 / (pi * pi);
  const auto rep = ex::hamiltonian_residual(u, G, 0.0);
  const double rel = std::abs(rep.lhs - rep.rhs) / target;
  bool strict = true;
  for (double x : {0.0, 1.0}) {
    const double rhs = G(2.0 / pi * std::atan(x)) - G(1.0);
    for (double y : {0.5, 1.0, 2.0, 50.0, 200.0}) strict = strict && ex::hamiltonian_partial(u, x, y) < rhs;
  }
  return {rel <= 1e-2 && strict, "residual/(2/pi^2)=" + fmt("%.1e", rel) + (strict ? " strict" : " not strict")};
}

Outcome solver_peierls_nabarro() {
  // The default start is the arctan layer itself; the shifted start makes the flow do the work.
  const auto nl = Nonlinearity::peierls_nabarro(1.0);
  double err = 0.0, res = 0.0;
  for (const auto* r : {&solved("pn", nl, 0.5), &solved("pn-shift", nl, 0.5, 3.37)}) {
    const Profile c = ls::recenter(r->profile).first;
    err = std::max(err, sup_error(c, 50.0, [](double x) { return 2.0 / pi * std::atan(x); }));
    res = std::max({res, r->residual, r->verified_residual});
  }
  return {err <= 2e-2 && res <= 1e-4, "sup error " + fmt("%.1e", err) + " residual " + fmt("%.1e", res)};
}

Outcome solver_heat_induced() {
  const auto& r = solved("heat0.7", Nonlinearity::heat_induced(0.7, 1.0), 0.7);
  const Profile c = ls::recenter(r.profile).first;
  const hl::HeatLayerParams hp(0.7, 1.0);
  const double err = sup_error(c, 50.0, [&](double x) { return hl::layer_value(hp, x); });
  const double res = std::max(r.residual, r.verified_residual);
  return {err <= 2e-2 && res <= 1e-4, "sup error " + fmt("%.1e", err) + " residual " + fmt("%.1e", res)};
}

Outcome half_strip() {
  const auto nl = Nonlinearity::peierls_nabarro(1.0);
  std::vector<double> Rs, Es;
  bool ok = true;
  std::string detail;
  for (double R : {8.0, 16.0, 32.0, 64.0}) {
    const auto r = ls::solve_layer_halfstrip(nl, FracOrder(0.5), R);
    ok = ok && r.trace.is_nondecreasing() && r.energy.total <= r.initial_energy.total;
    Rs.push_back(R);
    Es.push_back(r.energy.total);
    detail += "E(" + fmt("%g", R) + ")=" + fmt("%.4f", r.energy.total) + " ";
  }
  const double growth = ls::energy_growth_exponent(Rs, Es);
  ok = ok && growth <= 0.30;
  return {ok, detail + "growth " + fmt("%.3f", growth)};
}

Outcome stability() {
  const FracOrder o(0.5);
  const double ds = ex::calibrate_ds(o);
  const auto nl = Nonlinearity::heat_induced(0.5, 1.0);
  const hl::HeatLayerParams hp(0.5, 1.0);
  auto d = [&](double x) { return -nl.fprime(hl::layer_value(hp, x)) / ds; };
  const double l5 = ex::stability_eigenvalue(d, o, 5.0).lambda;
  const double l10 = ex::stability_eigenvalue(d, o, 10.0).lambda;
  return {l10 > 0.0 && l10 < l5, "lambda_5=" + fmt("%.4f", l5) + " lambda_10=" + fmt("%.4f", l10)};
}

Outcome tail_asymptotics() {
  bool ok = true;
  std::string detail;
  for (double s : {0.4, 0.6}) {
    const auto nl = Nonlinearity::allen_cahn();
    const auto& r = solved("ac" + fmt("%g", s), nl, s);
    an::SandwichReport sw;
    const auto rep = an::asymptotics(r.profile, FracOrder(s), nl, &sw);
    const double rel = rep.fitted_exponent_derivative / (1.0 + 2.0 * s) - 1.0;
    const bool finite = sw.passed && std::isfinite(sw.c_upper) && std::isfinite(sw.c_lower);
    ok = ok && std::abs(rel) <= 5e-2 && finite;
    detail += "s=" + fmt("%g", s) + ":exp " + fmt("%.3f", rep.fitted_exponent_derivative) + " C=" +
              fmt("%.2f", sw.c_upper) + "/" + fmt("%.2f", sw.c_lower) + (finite ? " " : " (" + sw.reason + ") ");
  }
  return {ok, detail};
}

Outcome admissibility_gate() {
  const auto doubled = Nonlinearity::custom([](double v) { return std::sin(2.0 * pi * v) / (2.0 * pi); },
                                            [](double v) { return (1.0 + std::cos(2.0 * pi * v)) / (4.0 * pi * pi); });
  const auto rej = admissibility_check(doubled);
  const auto acc = admissibility_check(Nonlinearity::peierls_nabarro(1.0));
  return {!rej.accepted && acc.accepted, "sin(2 pi v) rejected: " + rej.reason};
}

Outcome shifted_runs_agree() {
  const auto nl = Nonlinearity::allen_cahn();
  const auto& a = solved("ac0.5", nl, 0.5);
  const auto& b = solved("ac0.5shift", nl, 0.5, 3.37);
  const Profile ca = ls::recenter(a.profile).first, cb = ls::recenter(b.profile).first;
  const double err = sup_error(cb, 40.0, [&](double x) { return ls::interpolate_profile(ca, x); });
  return {err <= 2e-2, "shift 3.37, sup difference " + fmt("%.1e", err)};
}

Outcome odd_symmetry() {
  bool ok = true;
  std::string detail;
  const auto pn = Nonlinearity::peierls_nabarro(1.0);
  const auto ac = Nonlinearity::allen_cahn();
  const double d1 = ls::verify_layer(solved("pn", pn, 0.5).profile, pn, FracOrder(0.5)).odd_defect;
  const double d2 = ls::verify_layer(solved("ac0.5", ac, 0.5).profile, ac, FracOrder(0.5)).odd_defect;
  ok = d1 <= 1e-3 && d2 <= 1e-3;
  detail = "peierls_nabarro " + fmt("%.1e", d1) + " allen_cahn " + fmt("%.1e", d2);
  return {ok, detail};
}

}  // namespace

int main() {
  Tally t;
  run(t, "[1]", "closed-form layer at s=1/2", 5, closed_form_layer);
  run(t, "[2]", "induced nonlinearity at s=1/2", 10, induced_closed_form);
  run(t, "[3]", "Polya limits at x=1e4", 10, polya_limits);
  run(t, "[4]", "asymptotic derivative constant at x=1e3", 10, derivative_constant);
  run(t, "[5]", "boundary derivatives f'(1), f''(1)", 30, boundary_derivatives);
  run(t, "[6]", "spectral equation identity, N=2^16", 60, equation_identity);
  run(t, "[7]", "extension d_s calibration", 120, extension_calibration);
  run(t, "[8]", "Hamiltonian equality at x=0", 120, hamiltonian_equality);
  run(t, "[9a]", "direct solver, Peierls-Nabarro s=1/2", 120, solver_peierls_nabarro);
  run(t, "[9b]", "direct solver, heat-induced s=0.7", 120, solver_heat_induced);
  run(t, "[10]", "half-strip minimizers R=8..64", 600, half_strip);
  run(t, "[11]", "stability eigenvalues R=5,10", 300, stability);
  run(t, "[12]", "Allen-Cahn tail exponent and sandwich", 180, tail_asymptotics);
  run(t, "[13]", "admissibility gate", 1, admissibility_gate);
  run(t, "[prop-a]", "shifted initializations agree", 240, shifted_runs_agree);
  run(t, "[prop-b]", "odd symmetry defect", 240, odd_symmetry);
  std::printf("%d passed, %d failed\n", t.passed, t.failed);
  return t.failed == 0 ? 0 : 1;
}
