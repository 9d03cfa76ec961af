#include <gtest/gtest.h>

#include <cmath>

#include "feshbach/bridge.hpp"
#include "feshbach/detail/numerics.hpp"
#include "feshbach/variational.hpp"

using namespace feshbach;

namespace {
const PhysicalParams P = PhysicalParams::normalized();
const double DG = P.diffusion() * P.drag;
}  // namespace

TEST(VarianceOde, ConstantStiffnessMatchesExponential) {
  const auto t = detail::linspace(0.0, 8.0, 81);
  const auto tr = variance_evolve(P, [](double) { return 0.4; }, 1.0, t);
  for (std::size_t i = 0; i < t.size(); ++i) {
    // s(t) = s_inf + (s0 - s_inf) exp(-2 kbar t / gamma), written out here.
    const double s_inf = DG / 0.4;
    EXPECT_NEAR(tr.s[i], s_inf + (1.0 - s_inf) * std::exp(-0.8 * t[i] / P.drag), 1e-10);
    EXPECT_NEAR(tr.s[i], variance_relaxation(P, 0.4, 1.0, t[i]), 1e-10);
  }
}

TEST(VarianceOde, RejectsNonPositiveStart) {
  const auto t = detail::linspace(0.0, 1.0, 3);
  EXPECT_THROW(variance_evolve(P, [](double) { return 1.0; }, 0.0, t), InvalidArgument);
}

TEST(SmoothedStep, ValuesAndDerivative) {
  const auto k = smoothed_step(0.65, 0.325, 3.0, 1.0);
  EXPECT_NEAR(k(3.0), 0.4875, 1e-15);
  EXPECT_NEAR(k(-40.0), 0.65, 1e-14);
  EXPECT_NEAR(k(60.0), 0.325, 1e-14);
  for (double t : {1.0, 2.7, 3.3, 6.0}) {
    const double h = 1e-5;
    EXPECT_NEAR(k.derivative(t), (k(t + h) - k(t - h)) / (2 * h), 1e-9);
  }
  EXPECT_THROW(smoothed_step(1.0, 2.0, 0.0, 0.0), InvalidArgument);
  EXPECT_THROW(UpDownStep(1.0, 2.0, 5.0, 4.0, 1.0), InvalidArgument);
}

TEST(Bridge, EquilibriumScheduleIsStationary) {
  // kbar = D gamma / s at rest: the controls must satisfy the steady-state
  // quartic for the ansatz width sqrt(s).
  const double s = 1.7;
  const auto t = detail::linspace(0.0, 2.0, 11);
  auto flat = [&](double) { return DG / s; };
  struct Flat {
    double k;
    double operator()(double) const { return k; }
    double derivative(double) const { return 0.0; }
  };
  const auto tr = variance_evolve(P, flat, s, t);
  const auto pr = controls_from_classical(P, sample_schedule(Flat{DG / s}, t), tr, Knob::kappa, 1.3, 1000);
  for (std::size_t i = 0; i < pr.size(); ++i)
    EXPECT_NEAR(steady_state_residual(P, pr.kappa[i], pr.g[i] * 1000, std::sqrt(s)), 0.0, 1e-12);
  const auto pg = controls_from_classical(P, sample_schedule(Flat{DG / s}, t), tr, Knob::g, 0.004, 1000);
  EXPECT_NEAR(check_stationarity(P, pg, Endpoint::first, 1000), 0.0, 1e-12);
  EXPECT_NEAR(check_stationarity(P, pg, Endpoint::last, 1000), 0.0, 1e-12);
}

TEST(Bridge, ErmakovReproducesPredictedVariance) {
  // Drive the width equation with the bridge controls: the variance must
  // follow the classical trajectory.
  for (Knob fixed : {Knob::kappa, Knob::g}) {
    const UpDownStep k(DG, DG / 2.0, 2.0, 11.5, 1.0);
    const double held = fixed == Knob::kappa ? 1.0 : 0.0053;
    const auto pr = schedule_protocol(P, k, 1.0, 20.0, 4001, fixed, held, 1000);
    auto kf = [&](double t) { return detail::lerp_at(pr.times, pr.kappa, t); };
    auto gf = [&](double t) { return detail::lerp_at(pr.times, pr.g, t); };
    // The smoothed step is already moving at t = 0, so start with the matching velocity.
    const double s0 = pr.s_pred[0];
    const double v0 = uniform_derivative(pr.times, pr.s_pred)[0] / (2.0 * std::sqrt(s0));
    const auto st = ermakov_evolve(P, {std::sqrt(s0), v0}, kf, gf, 1000, pr.times, 400);
    double dev = 0.0;
    for (std::size_t i = 0; i < pr.size(); ++i) dev = std::max(dev, std::abs(st[i].variance() / pr.s_pred[i] - 1.0));
    EXPECT_LT(dev, 2e-4) << to_string(fixed);
  }
}

TEST(Bridge, StepExcursionTakesAboutFifteenTrapTimes) {
  const UpDownStep k(DG, DG / 2.0, 2.0, 11.5, 1.0);
  const auto pr = schedule_protocol(P, k, 1.0, 24.0, 4001, Knob::kappa, 1.0, 1000);
  const double ex = excursion_time(pr.times, pr.s_pred, 1.0, 2.0, 0.02);
  EXPECT_GT(ex, 11.25);
  EXPECT_LT(ex, 18.75);
  EXPECT_NEAR(pr.s_pred.back(), 1.0, 1e-3);
  // Two-lobed g(t): up then back down to the initial coupling.
  const double g_max = *std::max_element(pr.g.begin(), pr.g.end());
  EXPECT_GT(g_max, 2.0 * pr.g.front());
  // Long after the last edge the coupling is back at the stationary value for
  // s = 1 at kappa = 1 (zero acceleration, linear in N g).
  const double a0 = ermakov_acceleration(P, 1.0, 0.0, 1.0);
  const double a1 = ermakov_acceleration(P, 1.0, 1.0, 1.0);
  const double g_eq = -a0 / (a1 - a0) / 1000.0;
  EXPECT_NEAR(pr.g.back(), g_eq, 2e-3 * g_eq);
}

TEST(Bridge, GridMismatchRejected) {
  const auto t = detail::linspace(0.0, 1.0, 5);
  const auto tr = variance_evolve(P, [](double) { return 0.5; }, 1.0, t);
  auto prof = sample_schedule(smoothed_step(0.5, 0.5, 0.0, 1.0), detail::linspace(0.0, 1.0, 6));
  EXPECT_THROW(controls_from_classical(P, prof, tr, Knob::kappa, 1.0, 10), InvalidArgument);
  auto prof2 = sample_schedule(smoothed_step(0.5, 0.5, 0.0, 1.0), t);
  EXPECT_THROW(controls_from_classical(P, prof2, tr, Knob::kappa, 1.0, 0), InvalidArgument);
}
