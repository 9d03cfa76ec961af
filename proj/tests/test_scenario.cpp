#include <gtest/gtest.h>

#include <sstream>

#include "feshbach/scenario.hpp"

using namespace feshbach;

namespace {
Scenario parse(const std::string& text) {
  std::istringstream in(text);
  return parse_scenario(in, "test");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}
}  // namespace

TEST(Scenario, DefaultsAndBlocks) {
  const auto sc = parse(
      "[physics]\natoms = 2000\n"
      "[cycle]\nkappa_i = 2\nmu_bc = 4\ndirection = reverse\n"
      "[sweep]\nscalings = 0.5, 1, 2\n");
  EXPECT_EQ(sc.atoms, 2000);
  EXPECT_NEAR(sc.params.drag, kDefaultDragRatio, 1e-12);
  ASSERT_TRUE(sc.cycle.has_value());
  EXPECT_EQ(sc.cycle->direction, Direction::reverse);
  EXPECT_EQ(sc.cycle->atom_count, 2000);
  ASSERT_TRUE(sc.sweep.has_value());
  EXPECT_EQ(sc.sweep->scalings, (std::vector<double>{0.5, 1.0, 2.0}));
  EXPECT_FALSE(sc.stroke.has_value());
  EXPECT_FALSE(sc.resolved.empty());
}

TEST(Scenario, SiValuesConverted) {
  const auto base = parse("[physics]\nunits = si\ntrap_hz = 17.5\n");
  const double k_unit = base.scale.stiffness;
  std::ostringstream text;
  text.precision(17);
  text << "[physics]\nunits = si\ntrap_hz = 17.5\n[equilibrium]\nkappa = " << 2.0 * k_unit << "\n";
  const auto sc = parse(text.str());
  EXPECT_NEAR(sc.equilibrium->kappa, 2.0, 1e-12);
}

TEST(Scenario, UnknownKeyNamed) {
  const auto msg = error_of("[stroke]\nmu = 0.5\nlamda = 8\n");
  EXPECT_NE(msg.find("lamda"), std::string::npos) << msg;
  EXPECT_NE(msg.find("[stroke]"), std::string::npos) << msg;
}

TEST(Scenario, UnknownSectionAndBadValues) {
  EXPECT_NE(error_of("[strok]\nmu = 1\n").find("strok"), std::string::npos);
  EXPECT_NE(error_of("[stroke]\ns_i = one\n").find("s_i"), std::string::npos);
  EXPECT_NE(error_of("[stroke]\nvary = sigma\n").find("vary"), std::string::npos);
  EXPECT_NE(error_of("[physics]\natoms = 2.5\n").find("atoms"), std::string::npos);
  EXPECT_NE(error_of("[physics]\nunits = cgs\n").find("units"), std::string::npos);
  EXPECT_NE(error_of("[solver]\ngrid_points = 100\n").find("grid_points"), std::string::npos);
  EXPECT_NE(error_of("[stroke]\nmu = 1\nmu = 2\n").find("duplicate"), std::string::npos);
}
