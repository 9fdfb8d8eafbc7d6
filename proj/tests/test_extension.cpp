#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "fraclayer/extension.hpp"

namespace ex = fraclayer::extension;
namespace fl = fraclayer::fraclap;
namespace q = fraclayer::quadrature;
using fraclayer::FracOrder;
using fraclayer::Profile;
using fraclayer::TailModel;
using fraclayer::UniformGrid;
using std::numbers::pi;

namespace {

// v = (2/pi) arctan x; its harmonic extension is (2/pi) arctan(x / (1 + y)).
Profile arctan_profile(double L, std::size_t n) {
  Profile p;
  p.grid = UniformGrid::periodic(L, n);
  for (std::size_t i = 0; i < n; ++i) p.values.push_back(2.0 / pi * std::atan(p.grid.x(i)));
  p.tail = TailModel{1.0, 2.0 / pi, 2.0 / pi, 0.0};
  p.monotone = true;
  return p;
}

double arctan_field(double x, double y) { return 2.0 / pi * std::atan(x / (1.0 + y)); }

// Extension potential of the s = 1/2 arctan layer, normalized to G(1) = 0.
double arctan_G(double v) { return (1.0 + std::cos(pi * v)) / (pi * pi); }

// Frozen d_s = 2^{2s-1} Gamma(s) / Gamma(1-s) (40-digit reference values).
struct DsCase {
  double s;
  double ds;
};
constexpr DsCase kDs[] = {{0.3, 1.7466014585250251}, {0.5, 1.0}, {0.7, 0.57254045856831173}};

}  // namespace

TEST(Extension, PoissonKernelHasUnitMassAndScales) {
  for (double s : {0.3, 0.5, 0.7}) {
    const FracOrder o(s);
    const double closed = std::tgamma(0.5 + s) / (std::sqrt(pi) * std::tgamma(s));
    EXPECT_NEAR(ex::poisson_constant(o), closed, 1e-10 * closed) << s;
    for (double y : {0.1, 1.0, 10.0}) {
      const double mass =
          2.0 * q::integrate_semi_infinite([&](double w) { return ex::poisson_kernel(o, w, y); }, {1e-13, 1e-11});
      EXPECT_NEAR(mass, 1.0, 1e-9) << s << " " << y;
      // P(x, y) = y^{-1} P(x / y, 1).
      EXPECT_NEAR(ex::poisson_kernel(o, 0.7 * y, y), ex::poisson_kernel(o, 0.7, 1.0) / y, 1e-14 / y);
    }
  }
  EXPECT_NEAR(ex::poisson_constant(FracOrder(0.5)), 1.0 / pi, 1e-14);
  EXPECT_THROW(ex::poisson_kernel(FracOrder(0.5), 1.0, 0.0), fraclayer::DomainError);
}

TEST(Extension, GradedLevelsAreGeometric) {
  const auto y = ex::graded_levels(2.0, 0.8, 1e-4);
  ASSERT_GE(y.size(), 5u);
  EXPECT_EQ(y.front(), 0.0);
  EXPECT_DOUBLE_EQ(y.back(), 2.0);
  EXPECT_NEAR(y[1], 2e-4, 1e-16);
  const double r = y[2] / y[1];
  EXPECT_LE(r, 1.0 / 0.8 + 1e-12);
  for (std::size_t j = 2; j + 1 < y.size(); ++j) EXPECT_NEAR(y[j + 1] / y[j], r, 1e-12);
  EXPECT_THROW(ex::graded_levels(1.0, 1.2), fraclayer::DomainError);
}

TEST(Extension, ArctanLayerMatchesClosedForm) {
  const Profile v = arctan_profile(64.0, 4096);
  const auto u = ex::extend(v, FracOrder(0.5), {0.01, 0.1, 0.5, 1.0, 3.0, 10.0, 50.0}, -5.0, 5.0);
  u.validate(true);
  double worst = 0.0;
  for (std::size_t j = 0; j < u.ny(); ++j)
    for (std::size_t i = 0; i < u.nx(); ++i)
      worst = std::max(worst, std::abs(u.at(i, j) - arctan_field(u.x_grid.x(i), u.y[j])));
  EXPECT_LT(worst, 1e-6);
}

TEST(Extension, ExtensionOfConstantIsConstant) {
  Profile v;
  v.grid = UniformGrid::periodic(10.0, 256);
  v.values.assign(256, 0.75);
  const auto u = ex::extend(v, FracOrder(0.3), ex::graded_levels(5.0), -2.0, 2.0);
  for (double val : u.values) EXPECT_NEAR(val, 0.75, 1e-12);
  EXPECT_NEAR(ex::conormal_derivative(u, 0.0), 0.0, 1e-8);
}

TEST(Extension, ConormalDerivativeOfArctanLayer) {
  const Profile v = arctan_profile(64.0, 8192);
  const auto u = ex::extend(v, FracOrder(0.5), ex::graded_levels(1.0), -2.5, 2.5);
  // -d_y (2/pi) arctan(x / (1 + y)) at y = 0 is (2/pi) x / (1 + x^2) = sin(pi v) / pi.
  EXPECT_NEAR(ex::conormal_derivative(u, 1.0), 1.0 / pi, 1e-6);
  EXPECT_NEAR(ex::conormal_derivative(u, 2.0), 0.8 / pi, 1e-6);
  // Off-column points go through interpolation.
  const double x = 1.0 + 0.3 * v.grid.h;
  EXPECT_NEAR(ex::conormal_derivative(u, x), 2.0 / pi * x / (1.0 + x * x), 1e-6);
  EXPECT_THROW(ex::conormal_derivative(u, 40.0), fraclayer::DomainError);
}

TEST(Extension, DsCalibrationMatchesReference) {
  for (const auto& c : kDs) {
    const auto rep = ex::calibrate_ds_report(FracOrder(c.s));
    EXPECT_NEAR(rep.value, c.ds, 2e-3 * c.ds) << c.s;
    EXPECT_LT(rep.rel_std, 1e-2);
    EXPECT_EQ(rep.ratios.size(), 4u);
  }
  EXPECT_NEAR(ex::calibrate_ds(FracOrder(0.5)), 1.0, 2e-3);
}

TEST(Extension, DsIsProfileIndependent) {
  // Gaussian reference from the direct fractional Laplacian.
  const double s = 0.3;
  Profile g;
  g.grid = UniformGrid::periodic(64.0, 8192);
  for (std::size_t i = 0; i < g.grid.n; ++i) g.values.push_back(std::exp(-g.grid.x(i) * g.grid.x(i)));
  g.left_limit = g.right_limit = 0.0;
  fl::FracLapConfig cfg;
  cfg.order = FracOrder(s);
  cfg.method = fl::Method::direct;
  cfg.domain_half_width = 64.0;
  cfg.spectral_points = 8192;
  cfg.tail_model = fl::TailMode::none;
  const std::vector<double> xs{0.25, 0.5, 0.75, 1.0};
  const auto ref = fl::apply_direct(g, cfg, xs);
  const auto rep = ex::calibrate_ds_with(g, FracOrder(s), xs, ref);
  EXPECT_NEAR(rep.value, ex::calibrate_ds(FracOrder(s)), 1e-2 * rep.value);
}

TEST(Extension, EnergyOfConstantFieldVanishes) {
  Profile v;
  v.grid = UniformGrid::periodic(8.0, 256);
  v.values.assign(256, 1.0);
  const auto u = ex::extend(v, FracOrder(0.4), ex::graded_levels(4.0), -4.0, 4.0);
  const auto e = ex::energy(u, [](double w) { return 1.0 - w * w; }, 3.0);
  EXPECT_NEAR(e.dirichlet, 0.0, 1e-14);
  EXPECT_NEAR(e.potential, 0.0, 1e-14);
  EXPECT_THROW(ex::energy(u, [](double) { return 0.0; }, 5.0), fraclayer::DomainError);
}

TEST(Extension, EnergyOfArctanLayerMatchesQuadrature) {
  const Profile v = arctan_profile(64.0, 2048);
  const auto u = ex::extend(v, FracOrder(0.5), ex::graded_levels(6.0, 0.9, 1e-3), -6.0, 6.0);
  double prev = 0.0;
  for (double R : {2.0, 4.0, 6.0}) {
    const auto e = ex::energy(u, arctan_G, R);
    // |grad u|^2 = (2/pi)^2 / (x^2 + (1+y)^2), integrated in polar coordinates.
    const double dir = 0.5 * 4.0 / (pi * pi) *
                       q::integrate(
                           [&](double r) {
                             return r * q::integrate(
                                            [&](double th) { return 1.0 / (r * r + 2.0 * r * std::sin(th) + 1.0); },
                                            0.0, pi, {1e-13, 1e-12});
                           },
                           0.0, R, {1e-12, 1e-11});
    const double pot = 4.0 / (pi * pi) * std::atan(R);
    EXPECT_NEAR(e.dirichlet, dir, 1e-2 * dir) << R;
    EXPECT_NEAR(e.potential, pot, 1e-3 * pot) << R;
    EXPECT_GT(e.total, prev);
    prev = e.total;
  }
}

TEST(Extension, HamiltonianIdentityOnArctanLayer) {
  const Profile v = arctan_profile(256.0, 8192);
  const auto u = ex::extend(v, FracOrder(0.5), ex::graded_levels(200.0), -3.5, 3.5);
  for (double x : {0.0, 1.0, 3.0}) {
    const auto rep = ex::hamiltonian_residual(u, arctan_G, x);
    const double exact = 2.0 / (pi * pi * (1.0 + x * x));
    EXPECT_NEAR(rep.rhs, exact, 1e-10) << x;
    EXPECT_NEAR(rep.lhs, exact, 1e-2 * exact) << x;
    EXPECT_GT(rep.tail_exponent, 1.0);
  }
  // Partial integrals stay strictly below G(u(x,0)) - G(1) and increase with y.
  for (double x : {0.0, 1.0}) {
    const double rhs = 2.0 / (pi * pi * (1.0 + x * x));
    double prev = -1.0;
    for (double y : {0.5, 1.0, 2.0, 50.0, 200.0}) {
      const double part = ex::hamiltonian_partial(u, x, y);
      EXPECT_LT(part, rhs) << x << " " << y;
      EXPECT_GT(part, prev) << x << " " << y;
      prev = part;
    }
  }
}

TEST(Extension, HamiltonianResidualShrinksUnderRefinement) {
  std::vector<double> coarse, fine;
  for (int level : {0, 1}) {
    const Profile v = arctan_profile(256.0, 2048u << level);
    const auto u = ex::extend(v, FracOrder(0.5), ex::graded_levels(200.0, std::pow(0.8, 1.0 / (1 << level))), -3.5, 3.5);
    for (double x : {0.0, 1.0, 3.0}) (level == 0 ? coarse : fine).push_back(ex::hamiltonian_residual(u, arctan_G, x).residual);
  }
  // Halving h and the log-spacing at least halves the residual until the tail-estimate floor.
  for (std::size_t k = 0; k < coarse.size(); ++k) EXPECT_LE(std::abs(fine[k]), std::max(0.5 * std::abs(coarse[k]), 2e-5)) << k;
}

TEST(Extension, OddProfileGivesOddField) {
  const fraclayer::heatlayer::HeatLayerParams p(FracOrder(0.3), 1.0);
  // Symmetric closed grid so the discretization itself is odd.
  const Profile v = fraclayer::heatlayer::sample_layer(p, UniformGrid::closed(-64.0, 64.0, 4097));
  const auto u = ex::extend(v, FracOrder(0.3), ex::graded_levels(5.0), -3.0, 3.0);
  ASSERT_EQ(u.nx() % 2, 1u);
  for (std::size_t j = 0; j < u.ny(); ++j)
    for (std::size_t i = 0; i < u.nx(); ++i) EXPECT_NEAR(u.at(i, j), -u.at(u.nx() - 1 - i, j), 1e-12);
  // The conormal derivative of an odd field is odd.
  EXPECT_NEAR(ex::conormal_derivative(u, 1.0), -ex::conormal_derivative(u, -1.0), 1e-10);
}

TEST(Extension, ExtensionSolvesTheWeightedEquation) {
  for (double s : {0.3, 0.5, 0.7}) {
    const fraclayer::heatlayer::HeatLayerParams p(FracOrder(s), 1.0);
    const Profile v = fraclayer::heatlayer::sample_layer(p, UniformGrid::periodic(64.0, 8192));
    const auto u = ex::extend(v, FracOrder(s), ex::graded_levels(20.0), -4.0, 4.0);
    EXPECT_LT(ex::interior_residual(u, 0.05, 10.0), 1e-3) << s;
    // Trace consistency: u(x, y_1) - v(x) = -Q(x) y_1^{2s} / (2s) up to a relative O(y_1^{2-4s}) term.
    const double w = std::pow(u.y[1], 2.0 * s) / (2.0 * s);
    for (double x : {-2.0, 0.5, 1.0, 3.0}) {
      const auto c = u.column(x);
      ASSERT_TRUE(c.has_value());
      const double q = ex::conormal_derivative(u, x);
      EXPECT_NEAR(u.at(*c, 1) - u.at(*c, 0), -q * w, 5e-2 * std::abs(q) * w) << s << " " << x;
    }
  }
}

TEST(Extension, StabilityEigenvalueShiftsWithConstantPotential) {
  const FracOrder o(0.5);
  const auto base = ex::stability_eigenvalue([](double) { return 0.0; }, o, 3.0);
  const auto shifted = ex::stability_eigenvalue([](double) { return 0.25; }, o, 3.0);
  EXPECT_GT(base.lambda, 0.0);
  EXPECT_NEAR(shifted.lambda - base.lambda, 0.25, 1e-9);
  // Cross-check against a dense generalized eigensolver.
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(base.schur, base.mass);
  EXPECT_NEAR(es.eigenvalues()(0), base.lambda, 1e-9 * (1.0 + base.lambda));
  // First eigenfunction is positive and unit in the boundary mass norm.
  Eigen::Map<const Eigen::VectorXd> xi(base.trace.data(), static_cast<Eigen::Index>(base.trace.size()));
  EXPECT_NEAR(xi.dot(base.mass * xi), 1.0, 1e-12);
  EXPECT_GE(*std::min_element(base.trace.begin(), base.trace.end()), -1e-8);
}

TEST(Extension, StabilityOfArctanLayerDecaysInR) {
  const FracOrder o(0.5);
  auto d = [](double x) { return (x * x - 1.0) / (1.0 + x * x); };
  const auto r5 = ex::stability_eigenvalue(d, o, 5.0);
  const auto r10 = ex::stability_eigenvalue(d, o, 10.0);
  EXPECT_GT(r5.lambda, r10.lambda);
  EXPECT_GT(r10.lambda, 0.0);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(r5.schur, r5.mass);
  EXPECT_NEAR(es.eigenvalues()(0), r5.lambda, 1e-9);
}
