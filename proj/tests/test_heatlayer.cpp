#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "fraclayer/heatlayer.hpp"

namespace hl = fraclayer::heatlayer;
using std::numbers::pi;

TEST(HeatKernel, HalfOrderClosedForm) {
  const hl::HeatLayerParams p(0.5, 1.0);
  EXPECT_NEAR(hl::heat_kernel(p, 0.0), 1 / pi, 1e-10);
  EXPECT_NEAR(hl::heat_kernel(p, 1.0), 1 / (2 * pi), 1e-10);
  for (double x : {0.01, 0.3, 0.99, 1.0, 2.5, 40.0, 1e3})
    EXPECT_NEAR(hl::heat_kernel(p, x), 1 / (pi * (1 + x * x)), 1e-10 * (1 + 1 / (1 + x * x))) << x;
}

TEST(HeatKernel, OriginValueFromSubstitution) {
  // 30-digit reference for Gamma(1 + 1/0.6)/pi.
  const double ref = 0.47892125242027407504;
  EXPECT_NEAR(hl::heat_kernel(hl::HeatLayerParams(0.3, 1.0), 0.0), ref, 1e-10);
  EXPECT_NEAR(fraclayer::quadrature::gamma(1 + 1 / 0.6) / pi, ref, 1e-12);
  // Brute-force Riemann sum of exp(-r^{0.6})/pi.
  const int n = 4000000;
  const double h = 4000.0 / n;
  double sum = 0;
  for (int i = 0; i < n; ++i) sum += std::exp(-std::pow((i + 0.5) * h, 0.6)) * h;
  EXPECT_NEAR(sum / pi, ref, 1e-6);
}

TEST(HeatKernel, PositiveAndEven) {
  for (double s : {0.2, 0.45, 0.8})
    for (double x : {0.1, 0.9, 1.1, 7.0, 300.0}) {
      const hl::HeatLayerParams p(s, 1.5);
      const double v = hl::heat_kernel(p, x);
      EXPECT_GT(v, 0.0);
      EXPECT_EQ(v, hl::heat_kernel(p, -x));
    }
}

TEST(HeatKernel, UnitMass) {
  for (double s : {0.5, 0.7}) {
    const hl::HeatLayerParams p(s, 1.0);
    const double X = 200.0, h = 0.05;
    const int n = static_cast<int>(2 * X / h);
    std::vector<double> f(n + 1);
    for (int i = 0; i <= n / 2; ++i) f[i] = f[n - i] = hl::heat_kernel(p, -X + i * h);
    double simpson = f[0] + f[n];
    for (int i = 1; i < n; ++i) simpson += (i % 2 ? 4.0 : 2.0) * f[i];
    simpson *= h / 3;
    const double c = hl::asymptotic_constant(p).derivative_limit / 2;  // p ~ c |x|^{-1-2s}
    const double tails = 2 * c * std::pow(X, -2 * s) / (2 * s);
    EXPECT_NEAR(2 * (simpson + tails), 2.0, 1e-6) << "s=" << s;
  }
}

TEST(LayerValue, HalfOrderArctan) {
  const hl::HeatLayerParams p(0.5, 1.0);
  EXPECT_NEAR(hl::layer_value(p, 1.0), 0.5, 1e-10);
  for (double x : {-30.0, -1.5, -0.2, 0.05, 0.7, 3.0, 500.0})
    EXPECT_NEAR(hl::layer_value(p, x), 2 / pi * std::atan(x), 1e-9) << x;
  const hl::HeatLayerParams p2(0.5, 2.0);
  EXPECT_NEAR(hl::layer_value(p2, 3.0), 2 / pi * std::atan(1.5), 1e-9);
}

TEST(LayerValue, ZeroAtOriginAndOdd) {
  for (double s : {0.15, 0.5, 0.9}) {
    const hl::HeatLayerParams p(s, 0.7);
    EXPECT_EQ(hl::layer_value(p, 0.0), 0.0);
    for (double x : {0.3, 1.0, 12.0}) EXPECT_EQ(hl::layer_value(p, -x), -hl::layer_value(p, x));
  }
}

TEST(LayerValue, FrozenHighPrecisionValues) {
  const hl::HeatLayerParams p(0.4, 1.0);
  EXPECT_NEAR(hl::layer_value(p, 2.0), 0.65874286605386103, 1e-10);
  EXPECT_NEAR(hl::layer_derivative(p, 2.0), 0.10987511216890933, 1e-10);
}

TEST(LayerValue, TimeScaling) {
  EXPECT_NEAR(hl::layer_value(hl::HeatLayerParams(0.7, 2.0), 3.0),
              hl::layer_value(hl::HeatLayerParams(0.7, 1.0), 3.0 * std::pow(2.0, -1 / 1.4)), 1e-9);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> us(0.15, 0.9), ut(0.2, 5.0), ux(-20.0, 20.0);
  for (int k = 0; k < 12; ++k) {
    const double s = us(rng), t = ut(rng), x = ux(rng);
    EXPECT_NEAR(hl::layer_value(hl::HeatLayerParams(s, t), x),
                hl::layer_value(hl::HeatLayerParams(s, 1.0), std::pow(t, -1 / (2 * s)) * x), 1e-9)
        << s << " " << t << " " << x;
  }
}

TEST(LayerValue, StrictlyIncreasingInsideUnitInterval) {
  for (double s : {0.25, 0.6}) {
    const hl::HeatLayerParams p(s, 1.0);
    double prev = -1.0;
    for (double x = -60.0; x <= 60.0; x += 0.37) {
      const double v = hl::layer_value(p, x);
      EXPECT_GT(v, prev);
      EXPECT_LT(std::abs(v), 1.0);
      prev = v;
    }
  }
}

TEST(LayerDerivative, ClosedFormAndFiniteDifference) {
  const hl::HeatLayerParams p(0.5, 1.0);
  EXPECT_NEAR(hl::layer_derivative(p, 0.0), 2 / pi, 1e-10);
  EXPECT_NEAR(hl::layer_derivative(p, 3.0), 2 / pi / 10, 1e-10);
  const hl::HeatLayerParams q(0.4, 1.0);
  const double h = 1e-4;
  const double fd = (hl::layer_value(q, 2 + h) - hl::layer_value(q, 2 - h)) / (2 * h);
  EXPECT_NEAR(fd, hl::layer_derivative(q, 2.0), 1e-6);
}

TEST(InducedNonlinearity, HalfOrderSine) {
  const hl::HeatLayerParams p(0.5, 1.0);
  EXPECT_NEAR(hl::induced_nonlinearity(p, 0.5), 1 / pi, 1e-9);
  for (double v : {-0.95, -0.3, 0.1, 0.77, 0.999})
    EXPECT_NEAR(hl::induced_nonlinearity(p, v), std::sin(pi * v) / pi, 1e-8) << v;
  const hl::HeatLayerParams p3(0.5, 3.0);
  EXPECT_NEAR(hl::induced_nonlinearity(p3, 0.25), std::sin(pi * 0.25) / (3 * pi), 1e-9);
}

TEST(InducedNonlinearity, EndpointsAndOrigin) {
  for (double s : {0.3, 0.7}) {
    const hl::HeatLayerParams p(s, 2.0);
    EXPECT_EQ(hl::induced_nonlinearity(p, 0.0), 0.0);
    EXPECT_EQ(hl::induced_nonlinearity(p, 1.0), 0.0);
    EXPECT_EQ(hl::induced_nonlinearity(p, -1.0), 0.0);
    EXPECT_EQ(hl::induced_nonlinearity(p, -0.4), -hl::induced_nonlinearity(p, 0.4));
  }
  EXPECT_THROW(hl::induced_nonlinearity(hl::HeatLayerParams(0.5, 1.0), 1.01), fraclayer::DomainError);
}

TEST(InducedNonlinearity, FrozenTabulationValue) {
  // x(0.9) and f(0.9) at s = 0.3, t = 1, from the stable-density series
  // (tests/oracles/gen_oracles.py).
  const hl::HeatLayerParams p(0.3, 1.0);
  EXPECT_NEAR(hl::layer_inverse(p, 0.9), 27.439818699486172164, 1e-7);
  EXPECT_NEAR(hl::induced_nonlinearity(p, 0.9), 0.094952828965431656, 1e-9);
}

TEST(InducedNonlinearity, RoundTripThroughProfile) {
  for (double s : {0.3, 0.65}) {
    const hl::HeatLayerParams p(s, 1.7);
    for (double x : {-9.0, 0.4, 2.0, 15.0}) {
      const double v = hl::layer_value(p, x);
      EXPECT_NEAR(hl::induced_nonlinearity(p, v), x * hl::layer_derivative(p, x) / (2 * s * p.t), 1e-6);
    }
  }
}

TEST(InducedNonlinearity, TaylorBranchIsContinuous) {
  for (double s : {0.3, 0.5, 0.8}) {
    const hl::HeatLayerParams p(s, 1.0);
    const double below = hl::induced_nonlinearity(p, 1 - 1.0001e-6);
    const double above = hl::induced_nonlinearity(p, 1 - 0.9999e-6);
    EXPECT_NEAR(below, above, 1e-9) << s;
  }
}

TEST(BoundaryDerivatives, AnalyticValues) {
  auto bd = hl::nonlinearity_boundary_derivatives(hl::HeatLayerParams(0.5, 1.0));
  EXPECT_EQ(bd.fprime_at_1, -1.0);
  EXPECT_EQ(bd.fsecond_at_1, 0.0);
  bd = hl::nonlinearity_boundary_derivatives(hl::HeatLayerParams(0.25, 1.0));
  EXPECT_NEAR(bd.fsecond_at_1, -1.0, 1e-12);
  bd = hl::nonlinearity_boundary_derivatives(hl::HeatLayerParams(0.5, 4.0));
  EXPECT_EQ(bd.fprime_at_1, -0.25);
  EXPECT_GT(hl::nonlinearity_boundary_derivatives(hl::HeatLayerParams(0.7, 1.0)).fsecond_at_1, 0.0);
}

TEST(AsymptoticConstant, ValuesAndLinearityInT) {
  auto c = hl::asymptotic_constant(hl::HeatLayerParams(0.5, 1.0));
  EXPECT_NEAR(c.derivative_limit, 2 / pi, 1e-13);
  // 1 - (2/pi) arctan x ~ (2/pi)/x.
  EXPECT_NEAR(c.value_limit, 2 / pi, 1e-13);
  c = hl::asymptotic_constant(hl::HeatLayerParams(0.5, 3.0));
  EXPECT_NEAR(c.derivative_limit, 6 / pi, 1e-13);
  EXPECT_NEAR(c.value_limit, 6 / pi, 1e-13);
}

TEST(AsymptoticConstant, LargeXDerivative) {
  // x^{1+2s} v'(x) at x = 1e3, 30-digit references.
  struct Row {
    double s, scaled;
  };
  for (Row r : {Row{0.3, 0.454920351616}, Row{0.5, 0.636619135748}, Row{0.7, 0.639851865079}}) {
    const hl::HeatLayerParams p(r.s, 1.0);
    const double scaled = std::pow(1e3, 1 + 2 * r.s) * hl::layer_derivative(p, 1e3);
    EXPECT_NEAR(scaled, r.scaled, 1e-7) << r.s;
  }
  const hl::HeatLayerParams p(0.7, 1.0);
  const double scaled = std::pow(1e3, 2.4) * hl::layer_derivative(p, 1e3);
  EXPECT_NEAR(scaled / hl::asymptotic_constant(p).derivative_limit, 1.0, 1e-2);
}

TEST(Polya, Limits) {
  EXPECT_NEAR(hl::polya_limit(2, 0.5), 1.0, 1e-13);
  EXPECT_NEAR(hl::polya_limit(4, 0.5), 0.0, 1e-13);
  EXPECT_NEAR(hl::polya_limit(2, 0.25), std::sqrt(pi / 2), 1e-12);
}

TEST(Polya, FiniteXErrorDecreasesMonotonically) {
  for (double kappa : {2.0, 4.0})
    for (double s : {0.25, 0.5, 0.75}) {
      const double lim = hl::polya_limit(kappa, s);
      double prev = INFINITY;
      for (double x : {1e2, 1e3, 1e4}) {
        const double err = std::abs(hl::polya_integral(kappa, s, x) - lim);
        EXPECT_LT(err, prev) << kappa << " " << s << " " << x;
        prev = err;
      }
    }
}

TEST(ComparisonProfile, HalfOrderSamples) {
  const hl::HeatLayerParams p(0.5, 1.0);
  const auto grid = fraclayer::UniformGrid::closed(-10, 10, 101);
  const auto prof = hl::comparison_profile(p, grid);
  EXPECT_NEAR(prof.values[50], 2 / pi, 1e-10);
  for (std::size_t i = 0; i < grid.n; ++i) {
    EXPECT_GT(prof.values[i], 0.0);
    EXPECT_NEAR(prof.values[i], prof.values[grid.n - 1 - i], 1e-12);
  }
  ASSERT_TRUE(prof.tail.has_value());
  EXPECT_DOUBLE_EQ(prof.tail->exponent, 2.0);
}

TEST(SampleLayer, MatchesPointwiseAndCaches) {
  const hl::HeatLayerParams p(0.6, 1.0);
  const auto grid = fraclayer::UniformGrid::periodic(8.0, 64);
  const auto a = hl::sample_layer_shared(p, grid);
  const auto b = hl::sample_layer_shared(p, grid);
  EXPECT_EQ(a.get(), b.get());
  for (std::size_t i = 0; i < grid.n; ++i) {
    EXPECT_NEAR(a->values[i], hl::layer_value(p, grid.x(i)), 1e-14);
    EXPECT_NEAR((*a->derivative)[i], hl::layer_derivative(p, grid.x(i)), 1e-14);
  }
  EXPECT_TRUE(a->monotone);
  const auto shifted = hl::sample_layer(p, grid, 0.3);
  EXPECT_NEAR(shifted.values[10], hl::layer_value(p, grid.x(10) - 0.3), 1e-14);
}
