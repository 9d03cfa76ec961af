#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "feshbach/core.hpp"

using namespace feshbach;

TEST(Units, NormalizedParametersHaveUnitScales) {
  const auto p = PhysicalParams::normalized();
  EXPECT_DOUBLE_EQ(p.diffusion(), 0.5);
  EXPECT_DOUBLE_EQ(p.drag, kDefaultDragRatio);
  const auto u = NormalizedUnits::from(p);
  EXPECT_DOUBLE_EQ(u.length, 1.0);
  EXPECT_DOUBLE_EQ(u.power, 1.0);
}

TEST(Units, Lithium7OscillatorLengthAndTime) {
  const auto p = PhysicalParams::lithium7(2000, 17.5);
  const auto u = NormalizedUnits::from(p);
  const double omega = 2.0 * std::numbers::pi * 17.5;
  EXPECT_NEAR(u.length, std::sqrt(1.054571817e-34 / (1.17e-26 * omega)), 1e-18);
  EXPECT_NEAR(u.length, 9.05e-6, 0.01e-6);
  EXPECT_NEAR(u.time, 9.095e-3, 0.001e-3);
  EXPECT_NEAR(u.power, 1.054571817e-34 * omega * omega, 1e-40);
}

TEST(Units, RoundTripEveryKind) {
  const auto u = NormalizedUnits::from(PhysicalParams::lithium7(1000));
  for (auto kind : {"length", "time", "variance", "stiffness", "coupling", "energy", "power", "frequency"}) {
    const double x = 0.731;
    EXPECT_NEAR(to_normalized(to_si(x, kind, u), kind, u), x, 1e-15) << kind;
    EXPECT_EQ(to_string(parse_quantity_kind(kind)), kind);
  }
  EXPECT_NEAR(to_si(1.0, QuantityKind::variance, u), u.length * u.length, 1e-25);
  EXPECT_NEAR(to_si(1.0, QuantityKind::coupling, u), u.energy * u.length, 1e-45);
}

TEST(Units, UnknownKindRejected) {
  const auto u = NormalizedUnits::from(PhysicalParams::normalized());
  EXPECT_THROW(to_si(1.0, "viscosity", u), InvalidArgument);
}

TEST(Units, NormalizedViewKeepsDragRatio) {
  const auto p = PhysicalParams::lithium7(500, 20.0, 2.0).as_normalized();
  EXPECT_DOUBLE_EQ(p.mass, 1.0);
  EXPECT_NEAR(p.drag, 2.0, 1e-12);
  EXPECT_EQ(p.atom_count, 500);
}

TEST(Params, InvalidRejected) {
  PhysicalParams p;
  p.drag = 0.0;
  EXPECT_THROW(p.validate(), InvalidArgument);
  EXPECT_THROW(PhysicalParams::normalized(1.0, 0), InvalidArgument);
}

TEST(GaussianState, PhaseCurvature) {
  const auto p = PhysicalParams::normalized();
  GaussianState s{2.0, 0.5};
  EXPECT_DOUBLE_EQ(s.alpha(p), 0.5 * 0.5 / 2.0);
  EXPECT_DOUBLE_EQ(s.variance(), 4.0);
}

TEST(Protocol, ValidationAndFlags) {
  Protocol pr;
  pr.times = {0.0, 1.0, 2.0};
  pr.kappa = {1.0, -0.1, 1.0};
  pr.g = {0.1, 0.2, -0.01};
  pr.s_pred = {1.0, 1.5, 2.0};
  pr.validate();
  pr.refresh_flags();
  EXPECT_TRUE(pr.flags.trap_inversion);
  EXPECT_TRUE(pr.flags.negative_coupling);
  EXPECT_DOUBLE_EQ(pr.duration(), 2.0);
  pr.times[2] = 1.0;
  EXPECT_THROW(pr.validate(), InvalidArgument);
}
