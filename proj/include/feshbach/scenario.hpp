#pragma once

// Scenario files: sectioned key = value text, parsed strictly. Every key a
// section does not know is an error, as is a section nobody asked for.

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "feshbach/core.hpp"
#include "feshbach/engine.hpp"
#include "feshbach/stochastic.hpp"

namespace feshbach {

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

enum class UnitMode { normalized, si };

struct EquilibriumBlock {
  double kappa = 1.0;
  double g = 0.0;
};

struct StrokeBlock {
  double s_i = 1.0, s_f = 2.0;
  double lambda = 8.0;
  std::vector<double> mu{0.1, 0.5, 1.0};
  Knob vary = Knob::g;
  double held = 1.0;  // value of the knob that is not varied
};

struct StepBlock {
  double kbar_i = 0.65, kbar_f = 0.325;
  double t_up = 2.0, t_down = 11.5, rise = 1.0, duration = 24.0;
  double s0 = 1.0;
  Knob vary = Knob::g;
  double held = 1.0;
  std::size_t samples = 4001;
};

struct SweepBlock {
  std::vector<double> scalings;
  int cycles = 4;
};

struct McBlock {
  std::string check = "all";  // stationary | quench | protocol | all
  EnsembleConfig ensemble;
  double kbar = 0.65;    // stationary / pre-quench stiffness
  double kbar_f = 0.325; // post-quench stiffness
  double duration = 8.0;
  std::size_t samples = 161;
};

struct Scenario {
  std::string source;
  UnitMode units = UnitMode::normalized;
  PhysicalParams physical;   // SI description, used for reporting
  PhysicalParams params;     // normalized, used for computing
  NormalizedUnits scale;
  long atoms = 1000;
  EngineSettings engine;
  double hold_periods = 5.0;
  std::string out_dir = "out";
  std::optional<EquilibriumBlock> equilibrium;
  std::optional<StrokeBlock> stroke;
  std::optional<StepBlock> step;
  std::optional<CycleSpec> cycle;
  std::optional<SweepBlock> sweep;
  std::optional<McBlock> mc;
  /// Resolved configuration, `section.key = value`, in normalized units.
  std::vector<std::pair<std::string, std::string>> resolved;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

class SectionReader {
 public:
  SectionReader(std::string name, const boost::property_tree::ptree* tree, Scenario& sc)
      : name_(std::move(name)), tree_(tree), sc_(sc) {}

  bool present() const { return tree_ != nullptr; }

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    if (!tree_) return std::nullopt;
    auto it = tree_->find(key);
    if (it == tree_->not_found()) return std::nullopt;
    return trim(it->second.data());
  }

  double number(const std::string& key, double fallback) {
    const double v = raw(key) ? parse(key, *raw(key)) : fallback;
    record(key, format_number(v));
    return v;
  }

  /// Physical quantity; converted from SI when the scenario is in SI mode.
  /// Fallbacks are normalized values.
  double quantity(const std::string& key, QuantityKind kind, double fallback) {
    auto r = raw(key);
    double v = fallback;
    if (r) {
      v = parse(key, *r);
      if (sc_.units == UnitMode::si) v = to_normalized(v, kind, sc_.scale);
    }
    record(key, format_number(v));
    return v;
  }

  long integer(const std::string& key, long fallback) {
    long v = fallback;
    if (auto r = raw(key)) {
      const auto* b = r->data();
      const auto* e = b + r->size();
      auto [ptr, ec] = std::from_chars(b, e, v);
      if (ec != std::errc{} || ptr != e) fail(key, "expected an integer, got '" + *r + "'");
    }
    record(key, std::to_string(v));
    return v;
  }

  std::vector<double> list(const std::string& key, std::vector<double> fallback) {
    std::vector<double> out = std::move(fallback);
    if (auto r = raw(key)) {
      out.clear();
      std::stringstream ss(*r);
      for (std::string item; std::getline(ss, item, ',');) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse(key, item));
      }
    }
    std::string txt;
    for (std::size_t i = 0; i < out.size(); ++i) txt += (i ? ", " : "") + format_number(out[i]);
    record(key, txt);
    return out;
  }

  std::string word(const std::string& key, std::string fallback, const std::vector<std::string>& allowed) {
    std::string v = raw(key).value_or(std::move(fallback));
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      std::string opts;
      for (const auto& a : allowed) opts += (opts.empty() ? "" : "|") + a;
      fail(key, "expected one of " + opts + ", got '" + v + "'");
    }
    record(key, v);
    return v;
  }

  void finish() const {
    if (!tree_) return;
    for (const auto& kv : *tree_)
      if (!used_.count(kv.first)) throw ConfigError("config: unknown key '" + kv.first + "' in [" + name_ + "]");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    throw ConfigError("config: [" + name_ + "] " + key + ": " + why);
  }

 private:
  double parse(const std::string& key, const std::string& text) const {
    double v = 0.0;
    const auto* b = text.data();
    const auto* e = b + text.size();
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || ptr != e || !std::isfinite(v)) fail(key, "expected a number, got '" + text + "'");
    return v;
  }
  void record(const std::string& key, std::string value) {
    if (tree_) sc_.resolved.emplace_back(name_ + "." + key, std::move(value));
  }

  std::string name_;
  const boost::property_tree::ptree* tree_;
  Scenario& sc_;
  std::set<std::string> used_;
};

inline Knob parse_knob(SectionReader& r, const std::string& key, const std::string& fallback) {
  return r.word(key, fallback, {"g", "kappa"}) == "g" ? Knob::g : Knob::kappa;
}

}  // namespace detail

/// Parse a scenario from a stream. `name` labels error messages.
inline Scenario parse_scenario(std::istream& in, const std::string& name = "<config>") {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config: " + name + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  static const std::set<std::string> sections{"physics", "solver", "output", "equilibrium", "stroke",
                                              "step",    "cycle",  "sweep",  "mc"};
  for (const auto& kv : tree) {
    if (kv.second.empty() && !kv.second.data().empty())
      throw ConfigError("config: key '" + kv.first + "' outside any section");
    if (!sections.count(kv.first)) throw ConfigError("config: unknown section [" + kv.first + "]");
  }
  auto section = [&](const std::string& s) -> const pt::ptree* {
    auto it = tree.find(s);
    return it == tree.not_found() ? nullptr : &it->second;
  };

  Scenario sc;
  sc.source = name;
  using detail::SectionReader;

  SectionReader phys("physics", section("physics"), sc);
  sc.units = phys.word("units", "normalized", {"normalized", "si"}) == "si" ? UnitMode::si : UnitMode::normalized;
  const double drag_ratio = phys.number("drag_ratio", kDefaultDragRatio);
  sc.atoms = phys.integer("atoms", 1000);
  const double trap_hz = phys.number("trap_hz", 17.5);
  const double mass = phys.number("mass", si::lithium7_mass);
  phys.finish();
  if (sc.atoms < 1) phys.fail("atoms", "must be >= 1");
  if (!(drag_ratio > 0.0)) phys.fail("drag_ratio", "must be > 0");
  if (!(trap_hz > 0.0)) phys.fail("trap_hz", "must be > 0");
  if (!(mass > 0.0)) phys.fail("mass", "must be > 0");
  sc.physical = PhysicalParams::lithium7(sc.atoms, trap_hz, drag_ratio);
  sc.physical.mass = mass;
  sc.physical.drag = drag_ratio * mass * sc.physical.ref_frequency;
  sc.params = sc.physical.as_normalized();
  sc.scale = NormalizedUnits::from(sc.physical);

  SectionReader sol("solver", section("solver"), sc);
  auto& e = sc.engine;
  e.mesh_size = static_cast<int>(sol.integer("mesh_size", e.mesh_size));
  e.time_samples = static_cast<std::size_t>(sol.integer("time_samples", static_cast<long>(e.time_samples)));
  e.grid_points = static_cast<int>(sol.integer("grid_points", e.grid_points));
  e.grid_factor = sol.number("grid_factor", e.grid_factor);
  e.dt = sol.quantity("dt", QuantityKind::time, e.dt);
  e.dwell = sol.quantity("dwell", QuantityKind::time, e.dwell);
  e.ground.dtau = sol.number("dtau", e.ground.dtau);
  e.ground.tolerance = sol.number("ground_tolerance", e.ground.tolerance);
  sc.hold_periods = sol.number("hold_periods", sc.hold_periods);
  sol.finish();
  if (e.mesh_size < 64) sol.fail("mesh_size", "must be >= 64");
  if (e.time_samples < 2) sol.fail("time_samples", "must be >= 2");
  if (e.grid_points < 256) sol.fail("grid_points", "must be >= 256");
  if (!(e.grid_factor > 0.0)) sol.fail("grid_factor", "must be > 0");
  if (!(e.dt > 0.0)) sol.fail("dt", "must be > 0");
  if (e.dwell < 0.0) sol.fail("dwell", "must be >= 0");
  if (!(e.ground.dtau > 0.0)) sol.fail("dtau", "must be > 0");
  if (sc.hold_periods < 0.0) sol.fail("hold_periods", "must be >= 0");

  SectionReader out("output", section("output"), sc);
  if (auto d = out.raw("dir")) sc.out_dir = *d;
  if (out.present()) sc.resolved.emplace_back("output.dir", sc.out_dir);
  out.finish();

  if (section("equilibrium")) {
    SectionReader r("equilibrium", section("equilibrium"), sc);
    EquilibriumBlock b;
    b.kappa = r.quantity("kappa", QuantityKind::stiffness, b.kappa);
    b.g = r.quantity("g", QuantityKind::coupling, b.g);
    r.finish();
    sc.equilibrium = b;
  }
  if (section("stroke")) {
    SectionReader r("stroke", section("stroke"), sc);
    StrokeBlock b;
    b.s_i = r.quantity("s_i", QuantityKind::variance, b.s_i);
    b.s_f = r.quantity("s_f", QuantityKind::variance, b.s_f);
    b.lambda = r.number("lambda", b.lambda);
    b.mu = r.list("mu", b.mu);
    b.vary = detail::parse_knob(r, "vary", "g");
    b.held = r.quantity("held", b.vary == Knob::g ? QuantityKind::stiffness : QuantityKind::coupling, b.held);
    r.finish();
    sc.stroke = b;
  }
  if (section("step")) {
    SectionReader r("step", section("step"), sc);
    StepBlock b;
    b.kbar_i = r.quantity("kbar_i", QuantityKind::stiffness, b.kbar_i);
    b.kbar_f = r.quantity("kbar_f", QuantityKind::stiffness, b.kbar_f);
    b.t_up = r.quantity("t_up", QuantityKind::time, b.t_up);
    b.t_down = r.quantity("t_down", QuantityKind::time, b.t_down);
    b.rise = r.quantity("rise", QuantityKind::time, b.rise);
    b.duration = r.quantity("duration", QuantityKind::time, b.duration);
    b.s0 = r.quantity("s0", QuantityKind::variance, b.s0);
    b.vary = detail::parse_knob(r, "vary", "g");
    b.held = r.quantity("held", b.vary == Knob::g ? QuantityKind::stiffness : QuantityKind::coupling, b.held);
    b.samples = static_cast<std::size_t>(r.integer("samples", static_cast<long>(b.samples)));
    r.finish();
    if (b.samples < 2) r.fail("samples", "must be >= 2");
    sc.step = b;
  }
  if (section("cycle") || section("sweep")) {
    SectionReader r("cycle", section("cycle"), sc);
    CycleSpec c;
    c.atom_count = sc.atoms;
    c.kappa_i = r.quantity("kappa_i", QuantityKind::stiffness, c.kappa_i);
    c.kappa_f = r.quantity("kappa_f", QuantityKind::stiffness, c.kappa_f);
    c.g_i = r.quantity("g_i", QuantityKind::coupling, c.g_i);
    c.g_f = r.quantity("g_f", QuantityKind::coupling, c.g_f);
    c.lambda = r.number("lambda", c.lambda);
    c.mu.ab = r.number("mu_ab", c.mu.ab);
    c.mu.bc = r.number("mu_bc", c.mu.bc);
    c.mu.cd = r.number("mu_cd", c.mu.cd);
    c.mu.da = r.number("mu_da", c.mu.da);
    c.repeats = static_cast<int>(r.integer("repeats", c.repeats));
    c.direction = r.word("direction", "forward", {"forward", "reverse"}) == "forward" ? Direction::forward
                                                                                      : Direction::reverse;
    r.finish();
    sc.cycle = c;
  }
  if (section("sweep")) {
    SectionReader r("sweep", section("sweep"), sc);
    SweepBlock b;
    b.scalings = r.list("scalings", {});
    b.cycles = static_cast<int>(r.integer("cycles", b.cycles));
    r.finish();
    if (b.cycles < 1) r.fail("cycles", "must be >= 1");
    for (double s : b.scalings)
      if (!(s > 0.0)) r.fail("scalings", "every scaling must be > 0");
    sc.sweep = b;
  }
  if (section("mc")) {
    SectionReader r("mc", section("mc"), sc);
    McBlock b;
    b.check = r.word("check", b.check, {"stationary", "quench", "protocol", "all"});
    b.ensemble.n_particles = r.integer("n_particles", b.ensemble.n_particles);
    b.ensemble.dt = r.quantity("dt", QuantityKind::time, b.ensemble.dt);
    b.ensemble.seed = static_cast<std::uint64_t>(r.integer("seed", static_cast<long>(b.ensemble.seed)));
    b.kbar = r.quantity("kbar", QuantityKind::stiffness, b.kbar);
    b.kbar_f = r.quantity("kbar_f", QuantityKind::stiffness, b.kbar_f);
    b.duration = r.quantity("duration", QuantityKind::time, b.duration);
    b.samples = static_cast<std::size_t>(r.integer("samples", static_cast<long>(b.samples)));
    r.finish();
    if (b.samples < 2) r.fail("samples", "must be >= 2");
    if (!(b.kbar > 0.0)) r.fail("kbar", "must be > 0");
    if (!(b.kbar_f > 0.0)) r.fail("kbar_f", "must be > 0");
    if (!(b.duration > 0.0)) r.fail("duration", "must be > 0");
    sc.mc = b;
  }
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  return parse_scenario(in, path);
}

}  // namespace feshbach
