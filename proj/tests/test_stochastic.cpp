#include <gtest/gtest.h>

#include <cmath>

#include "feshbach/bridge.hpp"
#include "feshbach/optimal.hpp"
#include "feshbach/stochastic.hpp"
#include "feshbach/variational.hpp"

using namespace feshbach;

namespace {
const PhysicalParams P = PhysicalParams::normalized();
const double DG = P.diffusion() * P.drag;
}  // namespace

TEST(Philox, KnownAnswerVectors) {
  // Published Philox4x32-10 test vectors.
  using B = Philox4x32::Block;
  EXPECT_EQ(Philox4x32(0)({0, 0, 0, 0}), (B{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(Philox4x32(0xffffffffffffffffull)({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}),
            (B{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(Philox4x32(0x299f31d0a4093822ull)({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}),
            (B{0xd16cfe09u, 0x94fdcceb, 0x5001e420u, 0x24126ea1u}));
}

TEST(Philox, NormalsHaveUnitMoments) {
  const Philox4x32 g(42);
  double s1 = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = g.normal(static_cast<std::uint64_t>(i), 7, 1);
    s1 += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s1 / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
}

TEST(Ensemble, ConfigValidation) {
  EnsembleConfig c;
  c.n_particles = 999;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = EnsembleConfig{};
  c.dt = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Ensemble, StationaryOuIsFlat) {
  EnsembleConfig c;
  c.initial_variance = DG / 0.65;
  c.seed = 3;
  const auto t = detail::linspace(0.0, 6.0, 61);
  const auto e = simulate_ou(P, [](double) { return 0.65; }, c, t);
  const std::vector<double> ref(t.size(), c.initial_variance);
  EXPECT_GE(fraction_within(e, ref), 0.95);
  std::size_t centred = 0;
  for (std::size_t i = 0; i < t.size(); ++i) centred += std::abs(e.mean[i]) <= 3.0 * e.mean_se[i];
  EXPECT_GE(centred, static_cast<std::size_t>(0.95 * t.size()));
}

TEST(Ensemble, QuenchFollowsClosedForm) {
  EnsembleConfig c;
  c.initial_variance = 1.0;
  c.seed = 5;
  const auto t = detail::linspace(0.0, 8.0, 81);
  const auto e = simulate_ou(P, [](double) { return 0.325; }, c, t);
  std::vector<double> ref;
  for (double x : t) ref.push_back(variance_relaxation(P, 0.325, 1.0, x));
  EXPECT_EQ(fraction_within(e, ref), 1.0);
}

TEST(Ensemble, NelsonStationaryDriftMatchesOu) {
  // alpha = 0, sigma = sigma_eq: drift -(hbar / (2 m sigma^2)) x.
  EnsembleConfig c;
  c.initial_variance = 0.8;
  c.seed = 9;
  const auto t = detail::linspace(0.0, 5.0, 51);
  const std::vector<double> nt{0.0, 5.0}, ns{std::sqrt(0.8), std::sqrt(0.8)}, na{0.0, 0.0};
  const auto e = simulate_nelson(P, nt, ns, na, c, t);
  const std::vector<double> ref(t.size(), 0.8);
  EXPECT_GE(fraction_within(e, ref), 0.95);
}

TEST(Ensemble, NelsonAgreesWithOuForSynthesizedProtocol) {
  StrokeSpec sp;
  sp.weights = {8.0, 0.5};
  const auto st = synthesize_stroke(P, sp, 1000);
  const auto& pr = st.protocol;
  auto kf = [&](double x) { return detail::lerp_at(pr.times, pr.kappa, x); };
  auto gf = [&](double x) { return detail::lerp_at(pr.times, pr.g, x); };
  const auto states = ermakov_evolve(P, {1.0, 0.0}, kf, gf, 1000, pr.times);
  std::vector<double> sg, al;
  for (const auto& s : states) {
    sg.push_back(s.sigma);
    al.push_back(s.alpha(P));
  }
  const auto to = detail::linspace(0.0, pr.duration(), 101);
  EnsembleConfig c;
  c.initial_variance = 1.0;
  c.seed = 11;
  const auto ne = simulate_nelson(P, pr.times, sg, al, c, to);
  c.seed = 12;
  const auto& ot = st.timing.over_time;
  const auto ou = simulate_ou(P, [&](double x) { return detail::lerp_at(ot.grid, ot.kbar, x); }, c, to);
  EXPECT_GE(fraction_within(ne, ou), 0.95);
}

TEST(Ensemble, DeterministicAcrossThreads) {
  EnsembleConfig c;
  c.n_particles = 3000;
  c.seed = 77;
  const auto t = detail::linspace(0.0, 3.0, 31);
  auto k = [](double x) { return 0.5 + 0.1 * std::sin(x); };
  const auto a = simulate_ou(P, k, c, t, 1);
  const auto b = simulate_ou(P, k, c, t, 3);
  const auto d = simulate_ou(P, k, c, t, 1);
  EXPECT_EQ(a.variance, b.variance);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.variance, d.variance);
  c.seed = 78;
  EXPECT_NE(simulate_ou(P, k, c, t).variance, a.variance);
}

TEST(Ensemble, StandardErrorHalvesWithFourTimesTheParticles) {
  EnsembleConfig c;
  c.n_particles = 2500;
  c.initial_variance = DG / 0.65;
  const auto t = detail::linspace(0.0, 2.0, 5);
  const auto a = simulate_ou(P, [](double) { return 0.65; }, c, t);
  c.n_particles = 10000;
  const auto b = simulate_ou(P, [](double) { return 0.65; }, c, t);
  EXPECT_NEAR(b.variance_se.back() / a.variance_se.back(), 0.5, 0.05);
}
