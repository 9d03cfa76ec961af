#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <random>

#include "feshbach/detail/numerics.hpp"

using namespace feshbach::detail;

TEST(Tridiagonal, ResidualOfRandomDominantSystem) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::size_t n = 50;
  std::vector<double> a(n), b(n), c(n), rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = u(rng);
    c[i] = u(rng);
    b[i] = 3.0 + u(rng);
    rhs[i] = u(rng);
  }
  auto x = rhs;
  solve_tridiagonal(a, b, c, x);
  for (std::size_t i = 0; i < n; ++i) {
    double r = b[i] * x[i];
    if (i > 0) r += a[i] * x[i - 1];
    if (i + 1 < n) r += c[i] * x[i + 1];
    EXPECT_NEAR(r, rhs[i], 1e-13);
  }
}

TEST(Tridiagonal, ConstantBandsComplex) {
  using C = std::complex<double>;
  const std::size_t n = 40;
  const C off(0.1, -0.3), diag(1.0, 0.8);
  ConstantTridiagonal<C> m(n, off, diag);
  std::vector<C> rhs(n);
  for (std::size_t i = 0; i < n; ++i) rhs[i] = C(std::sin(i), std::cos(0.3 * i));
  auto x = rhs;
  m.solve(std::span<C>(x));
  for (std::size_t i = 0; i < n; ++i) {
    C r = diag * x[i];
    if (i > 0) r += off * x[i - 1];
    if (i + 1 < n) r += off * x[i + 1];
    EXPECT_NEAR(std::abs(r - rhs[i]), 0.0, 1e-13);
  }
}

TEST(Pchip, ExactOnLinesAndMonotone) {
  std::vector<double> x{0.0, 0.5, 1.5, 2.0, 4.0};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * v - 1.0);
  Pchip f(x, y);
  for (double v = 0.0; v <= 4.0; v += 0.173) {
    EXPECT_NEAR(f(v), 3.0 * v - 1.0, 1e-13);
    EXPECT_NEAR(f.derivative(v), 3.0, 1e-12);
  }
  std::vector<double> step{0.0, 0.0, 1.0, 1.0, 1.0};
  Pchip g(x, step);
  double prev = -1.0;
  for (double v = 0.0; v <= 4.0; v += 0.01) {
    const double w = g(v);
    EXPECT_GE(w, prev - 1e-15);
    EXPECT_GE(w, -1e-15);
    EXPECT_LE(w, 1.0 + 1e-15);
    prev = w;
  }
}

TEST(Quadrature, TrapezoidAndLineFit) {
  const auto x = linspace(0.0, 1.0, 101);
  std::vector<double> y;
  for (double v : x) y.push_back(2.0 * v + 1.0);
  EXPECT_NEAR(trapezoid(x, y), 2.0, 1e-14);
  const auto fit = fit_line(x, y);
  EXPECT_NEAR(fit.slope, 2.0, 1e-13);
  EXPECT_NEAR(fit.intercept, 1.0, 1e-13);
  EXPECT_NEAR(lerp_at(x, y, 0.355), 1.71, 1e-13);
  std::vector<double> v{1.0, 3.0};
  EXPECT_DOUBLE_EQ(mean(v), 2.0);
  EXPECT_DOUBLE_EQ(stddev(v), 1.0);
}
