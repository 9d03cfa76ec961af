#pragma once

// Gaussian-ansatz reduction of the 1D GPE: equilibrium widths, width
// dynamics (modified Ermakov equation) and the ansatz energy.

#include <cmath>
#include <numbers>
#include <span>
#include <sstream>
#include <vector>

#include "feshbach/core.hpp"

namespace feshbach {

struct TrapConfig {
  double kappa = 1.0;
  double g = 0.0;
  long atom_count = 1;

  double interaction() const { return g * static_cast<double>(atom_count); }
  bool attractive() const { return g < 0.0; }

  void validate() const {
    if (!(kappa > 0.0)) throw InvalidArgument("TrapConfig: kappa must be > 0");
    if (atom_count < 1) throw InvalidArgument("TrapConfig: atom_count must be >= 1");
    if (!std::isfinite(g)) throw InvalidArgument("TrapConfig: g must be finite");
  }
};

/// kappa sigma^4 - hbar^2/(4m) - N g sigma / (4 sqrt(pi)); zero at equilibrium.
inline double steady_state_residual(const PhysicalParams& p, double kappa, double ng, double sigma) {
  const double s2 = sigma * sigma;
  return kappa * s2 * s2 - p.hbar * p.hbar / (4.0 * p.mass) - ng * sigma / (4.0 * kSqrtPi);
}

/// Unique positive root of the steady-state polynomial.
inline double equilibrium_width(const PhysicalParams& p, const TrapConfig& cfg) {
  if (cfg.atom_count < 1) throw InvalidArgument("TrapConfig: atom_count must be >= 1");
  const double ng = cfg.interaction();
  const double k = cfg.kappa;
  const double q = p.hbar * p.hbar / (4.0 * p.mass);
  if (!(k > 0.0)) {
    // Without confinement only an attractive interaction can balance the
    // quantum pressure.
    if (k == 0.0 && ng < 0.0) return q * 4.0 * kSqrtPi / (-ng);
    throw NumericalFailure("variational", "no positive equilibrium width for kappa <= 0");
  }
  auto f = [&](double s) { return steady_state_residual(p, k, ng, s); };
  auto df = [&](double s) { return 4.0 * k * s * s * s - ng / (4.0 * kSqrtPi); };

  const double a = std::pow(q / k, 0.25);
  const double b = std::cbrt(std::max(ng, 0.0) / (4.0 * kSqrtPi * k));
  double lo = 0.0;
  double hi = 2.0 * std::max(a, b);
  double x = std::max(a, b);
  for (int it = 0; it < 200; ++it) {
    const double fx = f(x);
    if (fx == 0.0) return x;
    if (fx < 0.0) lo = x; else hi = x;
    const double d = df(x);
    double next = d > 0.0 ? x - fx / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * x || hi - lo <= 1e-15 * hi) return next;
    x = next;
  }
  throw NumericalFailure("variational", "equilibrium width did not converge");
}

/// Width acceleration of the modified Ermakov equation.
inline double ermakov_acceleration(const PhysicalParams& p, double kappa, double ng, double sigma) {
  const double m = p.mass;
  const double s2 = sigma * sigma;
  return -kappa / m * sigma + p.hbar * p.hbar / (4.0 * m * m * s2 * sigma) +
         ng / (4.0 * kSqrtPi * m * s2);
}

/// Energy per particle of a Gaussian state with quadratic phase.
inline double ansatz_energy(const PhysicalParams& p, const GaussianState& st, const TrapConfig& cfg) {
  const double s = st.sigma;
  return 0.5 * p.mass * st.sigma_dot * st.sigma_dot + p.hbar * p.hbar / (8.0 * p.mass * s * s) +
         0.5 * cfg.kappa * s * s + cfg.interaction() / (4.0 * kSqrtPi * s);
}

/// Fixed-step RK4 integration of the width dynamics. Returns one state per
/// entry of `t_grid`; each grid interval is subdivided so that the step does
/// not exceed 1/800 of the local breathing period.
template <class KappaFn, class CouplingFn>
std::vector<GaussianState> ermakov_evolve(const PhysicalParams& p, GaussianState initial,
                                          KappaFn&& kappa_of_t, CouplingFn&& g_of_t,
                                          long atom_count, std::span<const double> t_grid,
                                          int steps_per_period = 800) {
  if (!(initial.sigma > 0.0)) throw InvalidArgument("ermakov_evolve: sigma(0) must be > 0");
  if (t_grid.empty()) return {};
  const double n_atoms = static_cast<double>(atom_count);
  std::vector<GaussianState> out;
  out.reserve(t_grid.size());
  out.push_back(initial);

  auto rhs = [&](double t, double s, double v, double& ds, double& dv) {
    ds = v;
    dv = ermakov_acceleration(p, kappa_of_t(t), n_atoms * g_of_t(t), s);
  };

  double s = initial.sigma, v = initial.sigma_dot;
  for (std::size_t i = 0; i + 1 < t_grid.size(); ++i) {
    const double t0 = t_grid[i];
    const double h = t_grid[i + 1] - t0;
    const double k0 = std::abs(kappa_of_t(t0));
    const double w2 = k0 / p.mass + p.hbar * p.hbar / (p.mass * p.mass * s * s * s * s);
    const double period = 2.0 * std::numbers::pi / std::sqrt(w2);
    const int n = std::max(1, static_cast<int>(std::ceil(std::abs(h) / (period / steps_per_period))));
    const double dt = h / n;
    for (int k = 0; k < n; ++k) {
      const double t = t0 + k * dt;
      double a1, b1, a2, b2, a3, b3, a4, b4;
      rhs(t, s, v, a1, b1);
      rhs(t + 0.5 * dt, s + 0.5 * dt * a1, v + 0.5 * dt * b1, a2, b2);
      rhs(t + 0.5 * dt, s + 0.5 * dt * a2, v + 0.5 * dt * b2, a3, b3);
      rhs(t + dt, s + dt * a3, v + dt * b3, a4, b4);
      s += dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4);
      v += dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4);
      if (!(s > 0.0) || !std::isfinite(s)) {
        std::ostringstream msg;
        msg << "width collapsed (sigma <= 0) at t = " << t + dt;
        throw NumericalFailure("variational", msg.str());
      }
    }
    out.push_back({s, v});
  }
  return out;
}

}  // namespace feshbach
