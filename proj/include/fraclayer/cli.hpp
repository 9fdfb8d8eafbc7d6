#pragma once

// Batch front end: a flat key = value config selects one command; each run
// writes a data file (CSV), report.json and run.log into the output directory.

#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fraclayer/analysis.hpp"
#include "fraclayer/errors.hpp"
#include "fraclayer/extension.hpp"
#include "fraclayer/fraclap.hpp"
#include "fraclayer/heatlayer.hpp"
#include "fraclayer/layersolver.hpp"
#include "fraclayer/nonlinearity.hpp"
#include "fraclayer/parallel.hpp"

namespace fraclayer::cli {

using Json = nlohmann::ordered_json;

enum ExitCode : int {
  exit_ok = 0,
  exit_config = 1,
  exit_domain = 2,
  exit_accuracy = 3,
  exit_nonconvergence = 4,
  exit_qualitative = 5,
};

/// Malformed or inconsistent configuration; line is 0 when not tied to one.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& msg)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + msg), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

struct ConfigEntry {
  std::string value;
  int line = 0;
};

struct RunConfig {
  std::string source = "config";
  std::map<std::string, ConfigEntry> entries;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline RunConfig parse_config(std::istream& in, const std::string& source = "config") {
  RunConfig cfg;
  cfg.source = source;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string text = trim(raw.substr(0, raw.find('#')));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line, "expected 'key = value'");
    const std::string key = trim(text.substr(0, eq)), value = trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError(source, line, "missing key before '='");
    if (value.empty()) throw ConfigError(source, line, "missing value for '" + key + "'");
    if (cfg.entries.count(key))
      throw ConfigError(source, line, "duplicate key '" + key + "' (first on line " +
                                          std::to_string(cfg.entries[key].line) + ")");
    cfg.entries[key] = {value, line};
  }
  return cfg;
}

inline RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, "cannot open config file");
  return parse_config(in, path.string());
}

/// Typed access with defaults; every key read is recorded in the resolved
/// config, and keys never read are reported as unknown.
class Resolver {
 public:
  explicit Resolver(const RunConfig& cfg) : cfg_(cfg) {}

  double real(const std::string& key, double fallback) {
    const ConfigEntry* e = find(key);
    double v = fallback;
    if (e) v = parse_real(*e, key);
    resolved_[key] = v;
    return v;
  }
  long integer(const std::string& key, long fallback) {
    const ConfigEntry* e = find(key);
    long v = fallback;
    if (e) {
      const char* b = e->value.data();
      const char* end = b + e->value.size();
      const auto [p, ec] = std::from_chars(b, end, v);
      if (ec != std::errc() || p != end) fail(*e, "'" + key + "' expects an integer, got '" + e->value + "'");
    }
    resolved_[key] = v;
    return v;
  }
  std::string text(const std::string& key, const std::string& fallback, const std::set<std::string>& choices = {}) {
    const ConfigEntry* e = find(key);
    std::string v = e ? e->value : fallback;
    if (e && !choices.empty() && !choices.count(v)) {
      std::string list;
      for (const auto& c : choices) list += (list.empty() ? "" : ", ") + c;
      fail(*e, "'" + key + "' must be one of {" + list + "}, got '" + v + "'");
    }
    resolved_[key] = v;
    return v;
  }
  bool flag(const std::string& key, bool fallback) {
    const ConfigEntry* e = find(key);
    bool v = fallback;
    if (e) {
      if (e->value == "true" || e->value == "1") v = true;
      else if (e->value == "false" || e->value == "0") v = false;
      else fail(*e, "'" + key + "' expects true or false, got '" + e->value + "'");
    }
    resolved_[key] = v;
    return v;
  }
  std::vector<double> reals(const std::string& key, const std::vector<double>& fallback) {
    const ConfigEntry* e = find(key);
    std::vector<double> v = fallback;
    if (e) {
      v.clear();
      std::stringstream ss(e->value);
      std::string item;
      while (std::getline(ss, item, ',')) v.push_back(parse_real({trim(item), e->line}, key));
      if (v.empty()) fail(*e, "'" + key + "' expects a comma-separated list of numbers");
    }
    resolved_[key] = v;
    return v;
  }
  /// Validation failure tied to the line of key (or line 0 for defaults).
  [[noreturn]] void reject(const std::string& key, const std::string& msg) const {
    const auto it = cfg_.entries.find(key);
    throw ConfigError(cfg_.source, it == cfg_.entries.end() ? 0 : it->second.line, msg);
  }
  void check_unused() const {
    for (const auto& [key, e] : cfg_.entries)
      if (!used_.count(key)) throw ConfigError(cfg_.source, e.line, "unknown key '" + key + "' for this command");
  }
  const Json& resolved() const { return resolved_; }

 private:
  const ConfigEntry* find(const std::string& key) {
    used_.insert(key);
    const auto it = cfg_.entries.find(key);
    return it == cfg_.entries.end() ? nullptr : &it->second;
  }
  double parse_real(const ConfigEntry& e, const std::string& key) const {
    double v = 0.0;
    const char* b = e.value.data();
    const char* end = b + e.value.size();
    const auto [p, ec] = std::from_chars(b, end, v);
    if (ec != std::errc() || p != end || !std::isfinite(v))
      fail(e, "'" + key + "' expects a number, got '" + e.value + "'");
    return v;
  }
  [[noreturn]] void fail(const ConfigEntry& e, const std::string& msg) const {
    throw ConfigError(cfg_.source, e.line, msg);
  }

  const RunConfig& cfg_;
  std::set<std::string> used_;
  Json resolved_ = Json::object();
};

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_profile_csv(const std::filesystem::path& path, const Profile& p) {
  std::ofstream out(path);
  out << "x,v,vprime\n";
  const std::vector<double> d = p.derivative ? *p.derivative : layersolver::detail::derivative(p.values, p.grid.h);
  for (std::size_t i = 0; i < p.size(); ++i)
    out << format_real(p.x(i)) << ',' << format_real(p.values[i]) << ',' << format_real(d[i]) << '\n';
}

/// Row-major over y, then x.
inline void write_field_csv(const std::filesystem::path& path, const extension::HalfStripField& u) {
  std::ofstream out(path);
  out << "x,y,u\n";
  for (std::size_t j = 0; j < u.ny(); ++j)
    for (std::size_t i = 0; i < u.nx(); ++i)
      out << format_real(u.x_grid.x(i)) << ',' << format_real(u.y[j]) << ',' << format_real(u.at(i, j)) << '\n';
}

inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

/// Timed log; lines also go to verbose when set.
class RunLog {
 public:
  explicit RunLog(std::ostream* verbose) : verbose_(verbose), start_(std::chrono::steady_clock::now()) {}
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }
  void line(const std::string& msg) {
    char stamp[32];
    std::snprintf(stamp, sizeof stamp, "[%10.3f ms] ", elapsed_ms());
    lines_.push_back(stamp + msg);
    if (verbose_) *verbose_ << lines_.back() << '\n';
  }
  /// Runs body and records its duration under name.
  template <class F>
  auto phase(const std::string& name, F&& body) {
    const double t0 = elapsed_ms();
    line("begin " + name);
    if constexpr (std::is_void_v<decltype(body())>) {
      body();
      timings_[name] = elapsed_ms() - t0;
      line("end " + name);
    } else {
      auto r = body();
      timings_[name] = elapsed_ms() - t0;
      line("end " + name);
      return r;
    }
  }
  const std::vector<std::string>& lines() const { return lines_; }
  Json timings() const {
    Json t = Json::object();
    for (const auto& [k, v] : timings_) t[k] = v;
    t["total"] = elapsed_ms();
    return t;
  }

 private:
  std::ostream* verbose_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> lines_;
  std::map<std::string, double> timings_;
};

struct Report {
  Json results = Json::object();
  Json residuals = Json::object();
  Json flags = Json::object();
};

namespace detail {

inline Nonlinearity load_table(const std::string& path, Resolver& r) {
  std::ifstream in(path);
  if (!in) r.reject("table", "cannot open table file '" + path + "'");
  std::vector<double> v, f;
  std::string row;
  while (std::getline(in, row)) {
    row = trim(row);
    if (row.empty() || row[0] == '#' || !(std::isdigit(static_cast<unsigned char>(row[0])) || row[0] == '-' || row[0] == '+' || row[0] == '.'))
      continue;
    const auto comma = row.find(',');
    if (comma == std::string::npos) r.reject("table", "table rows must be 'v,f'");
    v.push_back(std::stod(row.substr(0, comma)));
    f.push_back(std::stod(row.substr(comma + 1)));
  }
  return Nonlinearity::tabulated(v, f);
}

inline Nonlinearity nonlinearity(Resolver& r, double s, double t) {
  const std::string kind =
      r.text("nonlinearity", "peierls_nabarro", {"peierls_nabarro", "allen_cahn", "heat_induced", "tabulated"});
  if (kind == "peierls_nabarro") return Nonlinearity::peierls_nabarro(t);
  if (kind == "allen_cahn") return Nonlinearity::allen_cahn();
  if (kind == "heat_induced") return Nonlinearity::heat_induced(s, t);
  const std::string path = r.text("table", "");
  if (path.empty()) r.reject("nonlinearity", "nonlinearity = tabulated needs 'table = <csv of v,f>'");
  return load_table(path, r);
}

inline FracOrder order_of(Resolver& r, double s) {
  if (!(s > 0.0 && s < 1.0)) r.reject("s", "s must lie in (0, 1)");
  return FracOrder(s);
}

inline double positive(Resolver& r, const std::string& key, double v) {
  if (!(v > 0.0)) r.reject(key, "'" + key + "' must be positive");
  return v;
}

inline std::size_t power_of_two(Resolver& r, const std::string& key, long n, long min) {
  if (n < min || (n & (n - 1)) != 0) r.reject(key, "'" + key + "' must be a power of two >= " + std::to_string(min));
  return static_cast<std::size_t>(n);
}

/// Explicit layer on periodic(L, N) with derivative and tail metadata.
inline Profile explicit_layer(const heatlayer::HeatLayerParams& hp, double L, std::size_t n) {
  Profile p = heatlayer::sample_layer(hp, UniformGrid::periodic(L, n));
  const double c = heatlayer::asymptotic_constant(hp).value_limit;
  p.tail = TailModel{2.0 * hp.order.s(), c, c, 0.0};
  return p;
}

}  // namespace detail

using Command = std::function<void(Resolver&, const std::filesystem::path&, RunLog&, Report&)>;

inline void cmd_heat_layer(Resolver& r, const std::filesystem::path& out, RunLog& log, Report& rep) {
  const double s = r.real("s", 0.5), t = detail::positive(r, "t", r.real("t", 1.0));
  const FracOrder order = detail::order_of(r, s);
  const double L = detail::positive(r, "L", r.real("L", 10.0));
  const long N = r.integer("N", 201);
  if (N < 3) r.reject("N", "'N' must be >= 3");
  r.check_unused();
  const heatlayer::HeatLayerParams hp(order, t);
  Profile p;
  p.grid = UniformGrid::closed(-L, L, static_cast<std::size_t>(N));
  p.values.resize(p.grid.n);
  std::vector<double> d(p.grid.n);
  log.phase("sample", [&] {
    parallel_for(p.grid.n, [&](std::size_t i) {
      p.values[i] = heatlayer::layer_value(hp, p.grid.x(i));
      d[i] = heatlayer::layer_derivative(hp, p.grid.x(i));
    });
  });
  p.derivative = d;
  write_profile_csv(out / "profile.csv", p);
  const auto bd = heatlayer::nonlinearity_boundary_derivatives(hp);
  const auto ac = heatlayer::asymptotic_constant(hp);
  rep.results["fprime_at_1"] = bd.fprime_at_1;
  rep.results["fsecond_at_1"] = bd.fsecond_at_1;
  rep.results["derivative_limit"] = ac.derivative_limit;
  rep.results["value_limit"] = ac.value_limit;
  rep.flags["monotone"] = p.is_nondecreasing();
}

inline layersolver::SolveConfig solve_config(Resolver& r, const FracOrder& order) {
  layersolver::SolveConfig c;
  c.order = order;
  c.domain_half_width = detail::positive(r, "L", r.real("L", 100.0));
  c.grid_points = detail::power_of_two(r, "N", r.integer("N", 4096), 256);
  c.step = r.real("step", 0.0);
  if (c.step < 0.0) r.reject("step", "'step' must be positive (0 selects it automatically)");
  const long iters = r.integer("max_iterations", 200000);
  if (iters < 1) r.reject("max_iterations", "'max_iterations' must be positive");
  c.max_iterations = static_cast<std::size_t>(iters);
  c.residual_tolerance = detail::positive(r, "tolerance", r.real("tolerance", 1e-5));
  c.clamp = r.flag("clamp", true);
  c.initial_shift = r.real("shift", 0.0);
  return c;
}

inline void cmd_solve(Resolver& r, const std::filesystem::path& out, RunLog& log, Report& rep) {
  const double s = r.real("s", 0.5), t = detail::positive(r, "t", r.real("t", 1.0));
  const FracOrder order = detail::order_of(r, s);
  const std::string method = r.text("method", "direct", {"direct", "halfstrip"});
  const Nonlinearity nl = detail::nonlinearity(r, s, t);
  if (method == "direct") {
    const auto cfg = solve_config(r, order);
    r.check_unused();
    const auto adm = admissibility_check(nl);
    rep.flags["admissible"] = adm.accepted;
    if (!adm.accepted) throw DomainError("nonlinearity rejected: " + adm.reason);
    const auto res = log.phase("solve_direct", [&] { return layersolver::solve_layer_direct(nl, cfg); });
    const auto ver = log.phase("verify", [&] { return layersolver::verify_layer(res.profile, nl, order); });
    write_profile_csv(out / "profile.csv", res.profile);
    rep.results["iterations"] = res.iterations;
    rep.results["shift_applied"] = res.shift_applied;
    rep.results["step"] = res.step;
    rep.results["tail_constant_minus"] = res.profile.tail->c_minus;
    rep.results["tail_constant_plus"] = res.profile.tail->c_plus;
    rep.results["odd_defect"] = number(ver.odd_defect);
    rep.residuals["residual"] = res.residual;
    rep.residuals["flow_residual"] = res.flow_residual;
    rep.residuals["verified_residual"] = res.verified_residual;
    rep.flags["monotone"] = res.monotone;
    rep.flags["left_limit_ok"] = ver.left_limit_ok;
    rep.flags["right_limit_ok"] = ver.right_limit_ok;
    if (nl.odd) rep.flags["odd"] = ver.odd_defect <= 1e-3;
    return;
  }
  const double R = r.real("R", 64.0);
  if (!(R >= 4.0)) r.reject("R", "'R' must be >= 4");
  layersolver::HalfStripConfig hc;
  hc.hx = detail::positive(r, "hx", r.real("hx", 0.125));
  hc.y_ratio = r.real("y_ratio", 0.8);
  if (!(hc.y_ratio > 0.0 && hc.y_ratio < 1.0)) r.reject("y_ratio", "'y_ratio' must lie in (0, 1)");
  hc.height = r.real("height", 0.0);
  if (hc.height < 0.0) r.reject("height", "'height' must be positive (0 selects R^{1/8})");
  r.check_unused();
  const auto adm = admissibility_check(nl);
  rep.flags["admissible"] = adm.accepted;
  if (!adm.accepted) throw DomainError("nonlinearity rejected: " + adm.reason);
  const auto res = log.phase("solve_halfstrip", [&] { return layersolver::solve_layer_halfstrip(nl, order, R, hc); });
  write_field_csv(out / "field.csv", res.field);
  write_profile_csv(out / "profile.csv", layersolver::recenter(res.trace).first);
  rep.results["iterations"] = res.iterations;
  rep.results["shift_applied"] = res.shift;
  rep.results["height"] = res.field.y.back();
  rep.results["energy"] = res.energy.total;
  rep.results["energy_dirichlet"] = res.energy.dirichlet;
  rep.results["energy_potential"] = res.energy.potential;
  rep.results["competitor_energy"] = res.initial_energy.total;
  rep.flags["monotone"] = res.trace.is_nondecreasing();
  rep.flags["energy_below_competitor"] = res.energy.total <= res.initial_energy.total;
}

struct ExtensionSetup {
  FracOrder order{0.5};
  heatlayer::HeatLayerParams hp{0.5, 1.0};
  Profile layer;
  extension::HalfStripField field;
};

inline ExtensionSetup extension_setup(Resolver& r, RunLog& log, double L_default, long N_default, double Y_default,
                                      double x_half_default, const std::function<void()>& more_keys) {
  const double s = r.real("s", 0.5), t = detail::positive(r, "t", r.real("t", 1.0));
  ExtensionSetup e;
  e.order = detail::order_of(r, s);
  e.hp = heatlayer::HeatLayerParams(e.order, t);
  const double L = detail::positive(r, "L", r.real("L", L_default));
  const std::size_t N = detail::power_of_two(r, "N", r.integer("N", N_default), 256);
  const double Y = detail::positive(r, "Y", r.real("Y", Y_default));
  const double ratio = r.real("y_ratio", 0.8);
  if (!(ratio > 0.0 && ratio < 1.0)) r.reject("y_ratio", "'y_ratio' must lie in (0, 1)");
  const double y1 = detail::positive(r, "y1_factor", r.real("y1_factor", 1e-4));
  const double x_min = r.real("x_min", -x_half_default), x_max = r.real("x_max", x_half_default);
  if (!(x_max > x_min)) r.reject("x_max", "'x_max' must exceed 'x_min'");
  if (x_min <= -L || x_max >= L) r.reject("x_min", "extension columns must lie inside (-L, L)");
  more_keys();
  r.check_unused();
  e.layer = log.phase("sample_layer", [&] { return detail::explicit_layer(e.hp, L, N); });
  e.field = log.phase("extend",
                      [&] { return extension::extend(e.layer, e.order, extension::graded_levels(Y, ratio, y1), x_min, x_max); });
  return e;
}

inline void cmd_extend(Resolver& r, const std::filesystem::path& out, RunLog& log, Report& rep) {
  std::vector<double> stations;
  const auto e = extension_setup(r, log, 64.0, 4096, 10.0, 10.0, [&] { stations = r.reals("x", {0.0, 1.0, 3.0}); });
  write_field_csv(out / "field.csv", e.field);
  const double y_top = e.field.y.back();
  const double res = log.phase("interior_residual", [&] { return extension::interior_residual(e.field, 0.05, 0.5 * y_top); });
  Json conormal = Json::array();
  for (double x : stations) {
    Json c;
    c["x"] = x;
    c["conormal_derivative"] = extension::conormal_derivative(e.field, x);
    conormal.push_back(c);
  }
  rep.results["conormal"] = conormal;
  rep.results["levels"] = e.field.y.size();
  rep.residuals["interior"] = res;
  rep.flags["interior_ok"] = res <= 1e-3;
}

inline void cmd_hamiltonian(Resolver& r, const std::filesystem::path& out, RunLog& log, Report& rep) {
  std::vector<double> stations;
  double ds_cfg = 0.0;
  const auto e = extension_setup(r, log, 256.0, 8192, 200.0, 4.0, [&] {
    stations = r.reals("x", {0.0, 1.0, 3.0});
    ds_cfg = r.real("ds", 0.0);
  });
  const double ds = ds_cfg > 0.0 ? ds_cfg : log.phase("calibrate_ds", [&] { return extension::calibrate_ds(e.order); });
  const Nonlinearity nl = log.phase("nonlinearity", [&] { return Nonlinearity::heat_induced(e.order.s(), e.hp.t); });
  const double scale = extension::extension_scale(e.order, ds);
  const auto G = [&nl, scale](double v) { return scale * nl.G(v); };
  write_field_csv(out / "field.csv", e.field);
  const double barrier = G(0.0) - G(1.0);
  Json rows = Json::array();
  double worst = 0.0;
  for (double x : stations) {
    const auto h = log.phase("hamiltonian", [&] { return extension::hamiltonian_residual(e.field, G, x); });
    Json row;
    row["x"] = x;
    row["lhs"] = h.lhs;
    row["rhs"] = h.rhs;
    row["residual"] = h.residual;
    row["tail"] = h.tail;
    rows.push_back(row);
    worst = std::max(worst, std::abs(h.residual));
  }
  rep.results["ds"] = ds;
  rep.results["barrier"] = barrier;
  rep.results["stations"] = rows;
  rep.residuals["hamiltonian_max"] = worst;
  rep.residuals["hamiltonian_relative"] = worst / barrier;
  rep.flags["within_one_percent"] = worst <= 1e-2 * barrier;
}

inline void cmd_stability(Resolver& r, const std::filesystem::path& out, RunLog& log, Report& rep) {
  const double s = r.real("s", 0.5), t = detail::positive(r, "t", r.real("t", 1.0));
  const FracOrder order = detail::order_of(r, s);
  const std::vector<double> radii = r.reals("R", {5.0, 10.0});
  for (double R : radii)
    if (!(R > 0.0)) r.reject("R", "radii must be positive");
  extension::StabilityOptions opt;
  opt.radial = static_cast<int>(r.integer("radial", 0));
  opt.angular = static_cast<int>(r.integer("angular", 96));
  if (opt.angular < 4) r.reject("angular", "'angular' must be >= 4");
  const double ds_cfg = r.real("ds", 0.0);
  r.check_unused();
  const heatlayer::HeatLayerParams hp(order, t);
  const double ds = ds_cfg > 0.0 ? ds_cfg : log.phase("calibrate_ds", [&] { return extension::calibrate_ds(order); });
  const Nonlinearity nl = log.phase("nonlinearity", [&] { return Nonlinearity::heat_induced(s, t); });
  // d = -(1 + a)^{-1} f_ext'(u) with f_ext = (1 + a) f / d_s.
  const auto d = [&](double x) { return -nl.fprime(heatlayer::layer_value(hp, x)) / ds; };
  std::ofstream csv(out / "stability.csv");
  csv << "R,x,xi\n";
  Json rows = Json::array();
  std::vector<double> lambdas;
  for (double R : radii) {
    const auto st = log.phase("stability R=" + format_real(R), [&] { return extension::stability_eigenvalue(d, order, R, opt); });
    for (std::size_t k = 0; k < st.trace_x.size(); ++k)
      csv << format_real(R) << ',' << format_real(st.trace_x[k]) << ',' << format_real(st.trace[k]) << '\n';
    Json row;
    row["R"] = R;
    row["lambda"] = st.lambda;
    row["iterations"] = st.iterations;
    rows.push_back(row);
    lambdas.push_back(st.lambda);
  }
  rep.results["ds"] = ds;
  rep.results["eigenvalues"] = rows;
  bool positive = true, decreasing = true;
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    positive = positive && lambdas[k] > 0.0;
    if (k > 0 && radii[k] > radii[k - 1]) decreasing = decreasing && lambdas[k] < lambdas[k - 1];
  }
  rep.flags["positive"] = positive;
  rep.flags["decreasing_in_R"] = decreasing;
}

inline void cmd_asymptotics(Resolver& r, const std::filesystem::path& out, RunLog& log, Report& rep) {
  const double s = r.real("s", 0.5), t = detail::positive(r, "t", r.real("t", 1.0));
  const FracOrder order = detail::order_of(r, s);
  const Nonlinearity nl = detail::nonlinearity(r, s, t);
  const auto cfg = solve_config(r, order);
  r.check_unused();
  const auto res = log.phase("solve_direct", [&] { return layersolver::solve_layer_direct(nl, cfg); });
  write_profile_csv(out / "profile.csv", res.profile);
  analysis::SandwichReport sw;
  const auto a = log.phase("asymptotics", [&] { return analysis::asymptotics(res.profile, order, nl, &sw); });
  rep.results["exponent_derivative"] = a.fitted_exponent_derivative;
  rep.results["exponent_value"] = a.fitted_exponent_value;
  rep.results["target_derivative"] = 1.0 + 2.0 * s;
  rep.results["constant_minus"] = a.constant_minus;
  rep.results["constant_plus"] = a.constant_plus;
  rep.results["fit_window"] = Json::array({a.fit_window.lo, a.fit_window.hi});
  rep.results["t_upper"] = sw.t_upper;
  rep.results["t_lower"] = sw.t_lower;
  rep.results["c_upper"] = number(a.c_upper);
  rep.results["c_lower"] = number(a.c_lower);
  if (!sw.passed) rep.results["sandwich_reason"] = sw.reason;
  rep.residuals["fit"] = a.fit_residual;
  rep.residuals["solve"] = res.residual;
  rep.flags["sandwich"] = sw.passed;
  rep.flags["exponent_within_5_percent"] = std::abs(a.fitted_exponent_derivative / (1.0 + 2.0 * s) - 1.0) <= 0.05;
}

inline void cmd_calibrate(Resolver& r, const std::filesystem::path& out, RunLog& log, Report& rep) {
  const double s = r.real("s", 0.5);
  const FracOrder order = detail::order_of(r, s);
  r.check_unused();
  const double C = log.phase("normalizing_constant", [&] { return fraclap::normalizing_constant(order); });
  const auto cal = log.phase("calibrate_ds", [&] { return extension::calibrate_ds_report(order); });
  std::ofstream csv(out / "calibration.csv");
  csv << "x,ratio\n";
  for (std::size_t k = 0; k < cal.xs.size(); ++k) csv << format_real(cal.xs[k]) << ',' << format_real(cal.ratios[k]) << '\n';
  rep.results["C_1s"] = C;
  rep.results["d_s"] = cal.value;
  rep.residuals["d_s_relative_std"] = cal.rel_std;
  rep.flags["d_s_consistent"] = cal.rel_std <= 1e-2;
}

inline const std::map<std::string, Command>& commands() {
  static const std::map<std::string, Command> table = {
      {"heat-layer", cmd_heat_layer}, {"solve", cmd_solve},           {"extend", cmd_extend},
      {"hamiltonian", cmd_hamiltonian}, {"stability", cmd_stability}, {"asymptotics", cmd_asymptotics},
      {"calibrate", cmd_calibrate},
  };
  return table;
}

inline std::pair<int, std::string> classify(const std::exception& e) {
  if (dynamic_cast<const DomainError*>(&e)) return {exit_domain, "domain"};
  if (dynamic_cast<const NonConvergenceError*>(&e)) return {exit_nonconvergence, "non-convergence"};
  if (dynamic_cast<const QualitativeFailure*>(&e)) return {exit_qualitative, "qualitative-failure"};
  if (dynamic_cast<const AccuracyError*>(&e) || dynamic_cast<const CalibrationError*>(&e)) return {exit_accuracy, "accuracy"};
  return {exit_config, "internal"};
}

/// Runs one command. Config problems return exit_config with a line-numbered
/// message on diag and write nothing; library errors still write report.json
/// and run.log with the error class in flags.
inline int run(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& diag,
               std::ostream* verbose = nullptr, const std::string& command_override = "") {
  RunLog log(verbose);
  Resolver r(cfg);
  Report rep;
  std::string command;
  try {
    command = command_override.empty() ? r.text("command", "") : command_override;
    if (!command_override.empty()) (void)r.text("command", command_override);
    if (command.empty()) throw ConfigError(cfg.source, 0, "no command given (config key 'command' or argument)");
    const auto it = commands().find(command);
    if (it == commands().end()) {
      const auto e = cfg.entries.find("command");
      throw ConfigError(cfg.source, e == cfg.entries.end() ? 0 : e->second.line, "unknown command '" + command + "'");
    }
    r.integer("seed", 0);  // recorded for provenance; no command draws random data
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir))
      throw ConfigError(cfg.source, 0, "output directory '" + out_dir.string() + "' is not writable");
    log.line("command " + command);
    int code = exit_ok;
    try {
      it->second(r, out_dir, log, rep);
      rep.flags["error"] = nullptr;
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      const auto [c, cls] = classify(e);
      code = c;
      rep.flags["error"] = cls;
      rep.results["error_message"] = e.what();
      diag << command << ": " << e.what() << '\n';
      log.line(std::string("error: ") + e.what());
    }
    log.line("exit " + std::to_string(code));
    Json report;
    report["config"] = r.resolved();
    report["config"]["command"] = command;
    report["results"] = rep.results;
    report["residuals"] = rep.residuals;
    report["flags"] = rep.flags;
    report["timing_ms"] = log.timings();
    std::ofstream(out_dir / "report.json") << report.dump(2) << '\n';
    std::ofstream lf(out_dir / "run.log");
    for (const auto& l : log.lines()) lf << l << '\n';
    return code;
  } catch (const ConfigError& e) {
    diag << e.what() << '\n';
    return exit_config;
  }
}

}  // namespace fraclayer::cli
