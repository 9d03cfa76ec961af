#pragma once

// Unit system, normalization and the value types shared by every module.
//
// All numerical modules are written with explicit hbar, mass and drag so the
// formulas stay dimensionally honest; in practice they are called with the
// normalized parameter set hbar = mass = omega_0 = 1.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace feshbach {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition or configuration violation; never retried.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A solver, integrator or guard failed at run time. `module()` names the
/// subsystem that gave up.
class NumericalFailure : public Error {
 public:
  NumericalFailure(std::string module, const std::string& detail)
      : Error(module + ": " + detail), module_(std::move(module)) {}
  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

namespace si {
inline constexpr double hbar = 1.054571817e-34;       // J s
inline constexpr double lithium7_mass = 1.17e-26;     // kg
inline constexpr double quectowatt = 1e-30;           // W
}  // namespace si

/// Drag coefficient of the classical analog in units of m * omega_0. The
/// published cost weights (lambda, mu) are only meaningful together with a
/// drag value; 1.3 reproduces the published optimal-protocol durations.
inline constexpr double kDefaultDragRatio = 1.3;

inline constexpr double kSqrtPi = 1.7724538509055160273;

struct PhysicalParams {
  double mass = 1.0;           // kg (or normalized)
  double hbar = 1.0;           // J s
  double drag = kDefaultDragRatio;  // gamma, kg/s
  double ref_frequency = 1.0;  // omega_0, rad/s
  long atom_count = 1;

  /// Quantum diffusion coefficient D = hbar / 2m; always derived.
  double diffusion() const { return hbar / (2.0 * mass); }

  void validate() const {
    if (!(mass > 0.0) || !(hbar > 0.0) || !(drag > 0.0) || !(ref_frequency > 0.0))
      throw InvalidArgument("PhysicalParams: mass, hbar, drag and ref_frequency must be > 0");
    if (atom_count < 1) throw InvalidArgument("PhysicalParams: atom_count must be >= 1");
  }

  /// hbar = m = omega_0 = 1, gamma = drag_ratio.
  static PhysicalParams normalized(double drag_ratio = kDefaultDragRatio, long atoms = 1) {
    PhysicalParams p;
    p.drag = drag_ratio;
    p.atom_count = atoms;
    p.validate();
    return p;
  }

  /// 7Li in a trap with omega_0 / 2pi = trap_hz.
  static PhysicalParams lithium7(long atoms, double trap_hz = 17.5,
                                 double drag_ratio = kDefaultDragRatio) {
    PhysicalParams p;
    p.mass = si::lithium7_mass;
    p.hbar = si::hbar;
    p.ref_frequency = 2.0 * std::numbers::pi * trap_hz;
    p.drag = drag_ratio * p.mass * p.ref_frequency;
    p.atom_count = atoms;
    p.validate();
    return p;
  }

  /// The same physics expressed in normalized units.
  PhysicalParams as_normalized() const {
    return normalized(drag / (mass * ref_frequency), atom_count);
  }
};

/// Closed set of convertible quantities.
enum class QuantityKind { length, time, variance, stiffness, coupling, energy, power, frequency };

inline QuantityKind parse_quantity_kind(std::string_view name) {
  if (name == "length") return QuantityKind::length;
  if (name == "time") return QuantityKind::time;
  if (name == "variance") return QuantityKind::variance;
  if (name == "stiffness") return QuantityKind::stiffness;
  if (name == "coupling") return QuantityKind::coupling;
  if (name == "energy") return QuantityKind::energy;
  if (name == "power") return QuantityKind::power;
  if (name == "frequency") return QuantityKind::frequency;
  throw InvalidArgument("unknown quantity kind '" + std::string(name) + "'");
}

inline std::string_view to_string(QuantityKind kind) {
  switch (kind) {
    case QuantityKind::length: return "length";
    case QuantityKind::time: return "time";
    case QuantityKind::variance: return "variance";
    case QuantityKind::stiffness: return "stiffness";
    case QuantityKind::coupling: return "coupling";
    case QuantityKind::energy: return "energy";
    case QuantityKind::power: return "power";
    case QuantityKind::frequency: return "frequency";
  }
  return "unknown";
}

/// SI magnitudes of the normalized units derived from a PhysicalParams.
struct NormalizedUnits {
  double length = 1.0;     // L_ho = sqrt(hbar / (m omega_0))
  double time = 1.0;       // 1 / omega_0
  double energy = 1.0;     // hbar omega_0
  double stiffness = 1.0;  // m omega_0^2
  double coupling = 1.0;   // hbar omega_0 L_ho
  double power = 1.0;      // hbar omega_0^2

  static NormalizedUnits from(const PhysicalParams& p) {
    p.validate();
    NormalizedUnits u;
    u.length = std::sqrt(p.hbar / (p.mass * p.ref_frequency));
    u.time = 1.0 / p.ref_frequency;
    u.energy = p.hbar * p.ref_frequency;
    u.stiffness = p.mass * p.ref_frequency * p.ref_frequency;
    u.coupling = u.energy * u.length;
    u.power = u.energy / u.time;
    return u;
  }

  double unit_of(QuantityKind kind) const {
    switch (kind) {
      case QuantityKind::length: return length;
      case QuantityKind::time: return time;
      case QuantityKind::variance: return length * length;
      case QuantityKind::stiffness: return stiffness;
      case QuantityKind::coupling: return coupling;
      case QuantityKind::energy: return energy;
      case QuantityKind::power: return power;
      case QuantityKind::frequency: return 1.0 / time;
    }
    throw InvalidArgument("unknown quantity kind");
  }
};

inline double to_normalized(double value, QuantityKind kind, const NormalizedUnits& units) {
  return value / units.unit_of(kind);
}

inline double to_si(double value, QuantityKind kind, const NormalizedUnits& units) {
  return value * units.unit_of(kind);
}

inline double to_normalized(double value, std::string_view kind, const NormalizedUnits& units) {
  return to_normalized(value, parse_quantity_kind(kind), units);
}

inline double to_si(double value, std::string_view kind, const NormalizedUnits& units) {
  return to_si(value, parse_quantity_kind(kind), units);
}

inline double power_in_qw(double watts) { return watts / si::quectowatt; }

/// Variational state: Gaussian density of width sigma with quadratic phase.
struct GaussianState {
  double sigma = 1.0;
  double sigma_dot = 0.0;

  /// Phase curvature alpha = (m / 2 hbar) sigma_dot / sigma.
  double alpha(const PhysicalParams& p) const {
    return p.mass / (2.0 * p.hbar) * sigma_dot / sigma;
  }
  double variance() const { return sigma * sigma; }
};

enum class Knob { kappa, g };

inline std::string_view to_string(Knob k) { return k == Knob::kappa ? "kappa" : "g"; }

struct ProtocolFlags {
  bool negative_coupling = false;  // g(t) < 0 somewhere
  bool trap_inversion = false;     // kappa(t) <= 0 somewhere
};

/// Sampled physical controls and the predicted variance.
struct Protocol {
  std::vector<double> times;
  std::vector<double> kappa;
  std::vector<double> g;
  std::vector<double> s_pred;
  ProtocolFlags flags;

  std::size_t size() const { return times.size(); }
  double duration() const { return times.empty() ? 0.0 : times.back() - times.front(); }

  void validate() const {
    const auto n = times.size();
    if (n < 2) throw InvalidArgument("Protocol: need at least 2 samples");
    if (kappa.size() != n || g.size() != n || s_pred.size() != n)
      throw InvalidArgument("Protocol: arrays differ in length");
    for (std::size_t i = 1; i < n; ++i)
      if (!(times[i] > times[i - 1])) throw InvalidArgument("Protocol: times not strictly increasing");
    for (double s : s_pred)
      if (!(s > 0.0)) throw InvalidArgument("Protocol: predicted variance must be > 0");
  }

  void refresh_flags() {
    flags = {};
    for (double v : g) flags.negative_coupling = flags.negative_coupling || v < 0.0;
    for (double v : kappa) flags.trap_inversion = flags.trap_inversion || v <= 0.0;
  }
};

}  // namespace feshbach
