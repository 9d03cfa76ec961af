#pragma once

// Quantum-classical bridge: variance dynamics of the overdamped OU process,
// conversion of a classical stiffness schedule into the physical controls
// (kappa, g), and the smoothed-step reference schedule.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <vector>

#include "feshbach/core.hpp"
#include "feshbach/detail/numerics.hpp"
#include "feshbach/variational.hpp"

namespace feshbach {

enum class Domain { variance, time };

/// Classical stiffness kbar sampled over variance or over time. `kbar_prime`
/// is the derivative with respect to the domain variable.
struct StiffnessProfile {
  Domain domain = Domain::time;
  std::vector<double> grid;
  std::vector<double> kbar;
  std::vector<double> kbar_prime;

  std::size_t size() const { return grid.size(); }

  void validate() const {
    if (grid.size() < 2 || kbar.size() != grid.size() || kbar_prime.size() != grid.size())
      throw InvalidArgument("StiffnessProfile: inconsistent sample counts");
    const bool up = grid.back() > grid.front();
    for (std::size_t i = 1; i < grid.size(); ++i)
      if (up ? !(grid[i] > grid[i - 1]) : !(grid[i] < grid[i - 1]))
        throw InvalidArgument("StiffnessProfile: grid not strictly monotone");
    if (domain == Domain::time && !up) throw InvalidArgument("StiffnessProfile: time grid must increase");
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (!std::isfinite(kbar[i]) || !std::isfinite(kbar_prime[i]))
        throw InvalidArgument("StiffnessProfile: non-finite sample");
  }
};

struct VarianceTrajectory {
  std::vector<double> times;
  std::vector<double> s;
  std::vector<double> s_dot;

  std::size_t size() const { return times.size(); }
};

/// ds/dt = (2/gamma)(D gamma - kbar s).
inline double variance_rate(const PhysicalParams& p, double kbar, double s) {
  return 2.0 / p.drag * (p.diffusion() * p.drag - kbar * s);
}

/// RK4 solution of the variance ODE on `t_grid`. Each interval is split so
/// that the step times the local relaxation rate stays below `max_rate_step`.
template <class KbarFn>
VarianceTrajectory variance_evolve(const PhysicalParams& p, KbarFn&& kbar_of_t, double s0,
                                   std::span<const double> t_grid, double max_rate_step = 0.005,
                                   double max_step = 0.0) {
  if (!(s0 > 0.0)) throw InvalidArgument("variance_evolve: s0 must be > 0");
  VarianceTrajectory tr;
  if (t_grid.empty()) return tr;
  tr.times.assign(t_grid.begin(), t_grid.end());
  tr.s.reserve(t_grid.size());
  tr.s_dot.reserve(t_grid.size());
  double s = s0;
  auto f = [&](double t, double x) { return variance_rate(p, kbar_of_t(t), x); };
  tr.s.push_back(s);
  tr.s_dot.push_back(f(t_grid[0], s));
  for (std::size_t i = 0; i + 1 < t_grid.size(); ++i) {
    const double t0 = t_grid[i], h = t_grid[i + 1] - t0;
    const double rate = 2.0 * std::max(std::abs(kbar_of_t(t0)), std::abs(kbar_of_t(t0 + h))) / p.drag;
    double dt_cap = rate > 0.0 ? max_rate_step / rate : std::abs(h);
    if (max_step > 0.0) dt_cap = std::min(dt_cap, max_step);
    const int n = std::max(1, static_cast<int>(std::ceil(std::abs(h) / dt_cap)));
    const double dt = h / n;
    for (int k = 0; k < n; ++k) {
      const double t = t0 + k * dt;
      const double k1 = f(t, s);
      const double k2 = f(t + 0.5 * dt, s + 0.5 * dt * k1);
      const double k3 = f(t + 0.5 * dt, s + 0.5 * dt * k2);
      const double k4 = f(t + dt, s + dt * k3);
      s += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
      if (!(s > 0.0) || !std::isfinite(s)) {
        std::ostringstream msg;
        msg << "variance became non-positive at t = " << t + dt;
        throw NumericalFailure("bridge", msg.str());
      }
    }
    tr.s.push_back(s);
    tr.s_dot.push_back(f(t_grid[i + 1], s));
  }
  return tr;
}

/// Closed-form variance for constant kbar.
inline double variance_relaxation(const PhysicalParams& p, double kbar, double s0, double t) {
  const double s_inf = p.diffusion() * p.drag / kbar;
  return s_inf + (s0 - s_inf) * std::exp(-2.0 * kbar * t / p.drag);
}

/// 4th-order finite-difference derivative of samples on a uniform grid
/// (centred inside, one-sided five-point stencils at the two ends on each
/// side).
inline std::vector<double> uniform_derivative(std::span<const double> t, std::span<const double> y) {
  const std::size_t n = t.size();
  if (n < 5 || y.size() != n) throw InvalidArgument("uniform_derivative: need >= 5 matching samples");
  const double h = (t.back() - t.front()) / static_cast<double>(n - 1);
  for (std::size_t i = 1; i < n; ++i)
    if (std::abs((t[i] - t[i - 1]) - h) > 1e-9 * std::abs(h))
      throw InvalidArgument("uniform_derivative: grid is not uniform");
  std::vector<double> d(n);
  const double c = 1.0 / (12.0 * h);
  d[0] = c * (-25 * y[0] + 48 * y[1] - 36 * y[2] + 16 * y[3] - 3 * y[4]);
  d[1] = c * (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]);
  for (std::size_t i = 2; i + 2 < n; ++i) d[i] = c * (y[i - 2] - 8 * y[i - 1] + 8 * y[i + 1] - y[i + 2]);
  d[n - 2] = -c * (-3 * y[n - 1] - 10 * y[n - 2] + 18 * y[n - 3] - 6 * y[n - 4] + y[n - 5]);
  d[n - 1] = -c * (-25 * y[n - 1] + 48 * y[n - 2] - 36 * y[n - 3] + 16 * y[n - 4] - 3 * y[n - 5]);
  return d;
}

/// Time-domain profile from bare samples; the derivative is estimated.
inline StiffnessProfile profile_from_samples(std::span<const double> times, std::span<const double> kbar) {
  StiffnessProfile pr;
  pr.domain = Domain::time;
  pr.grid.assign(times.begin(), times.end());
  pr.kbar.assign(kbar.begin(), kbar.end());
  pr.kbar_prime = uniform_derivative(times, kbar);
  return pr;
}

/// Time-domain profile from a schedule with an analytic derivative.
template <class Schedule>
StiffnessProfile sample_schedule(const Schedule& fn, std::span<const double> times) {
  StiffnessProfile pr;
  pr.domain = Domain::time;
  pr.grid.assign(times.begin(), times.end());
  pr.kbar.reserve(times.size());
  pr.kbar_prime.reserve(times.size());
  for (double t : times) {
    pr.kbar.push_back(fn(t));
    pr.kbar_prime.push_back(fn.derivative(t));
  }
  return pr;
}

/// Map a variance-domain profile onto a trajectory s(t): kbar is read at
/// s(t) and its time derivative follows from the chain rule.
inline StiffnessProfile time_profile_from_variance(const PhysicalParams& p, const StiffnessProfile& over_s,
                                                   const VarianceTrajectory& traj) {
  if (over_s.domain != Domain::variance) throw InvalidArgument("expected a variance-domain profile");
  std::vector<double> x = over_s.grid, k = over_s.kbar, kp = over_s.kbar_prime;
  if (x.back() < x.front()) {
    std::reverse(x.begin(), x.end());
    std::reverse(k.begin(), k.end());
    std::reverse(kp.begin(), kp.end());
  }
  detail::Pchip kf(x, k), kpf(x, kp);
  StiffnessProfile pr;
  pr.domain = Domain::time;
  pr.grid = traj.times;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const double s = traj.s[i];
    const double kb = kf(s);
    pr.kbar.push_back(kb);
    pr.kbar_prime.push_back(kpf(s) * variance_rate(p, kb, s));
  }
  return pr;
}

/// Solve the bridge relation pointwise for the free knob:
///   kappa - N g / (4 sqrt(pi) sigma^3)
///       = hbar^2 / (2 m sigma^4) + (m/gamma) dkbar/dt - (m/gamma^2) kbar^2.
inline Protocol controls_from_classical(const PhysicalParams& p, const StiffnessProfile& profile,
                                        const VarianceTrajectory& traj, Knob fixed, double held_value,
                                        long atom_count) {
  if (profile.domain != Domain::time) throw InvalidArgument("controls_from_classical: profile must be over time");
  if (profile.size() != traj.size()) throw InvalidArgument("controls_from_classical: grids differ in length");
  if (atom_count < 1) throw InvalidArgument("controls_from_classical: atom_count must be >= 1");
  for (std::size_t i = 0; i < traj.size(); ++i)
    if (std::abs(profile.grid[i] - traj.times[i]) > 1e-12 * (1.0 + std::abs(traj.times[i])))
      throw InvalidArgument("controls_from_classical: profile and trajectory grids differ");

  const double m = p.mass, gam = p.drag, hb2 = p.hbar * p.hbar;
  const double n_atoms = static_cast<double>(atom_count);
  Protocol out;
  out.times = traj.times;
  out.s_pred = traj.s;
  out.kappa.resize(traj.size());
  out.g.resize(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const double s = traj.s[i];
    const double sigma = std::sqrt(s);
    const double kb = profile.kbar[i];
    const double rhs = hb2 / (2.0 * m * s * s) + m / gam * profile.kbar_prime[i] - m / (gam * gam) * kb * kb;
    const double mean_field = 4.0 * kSqrtPi * sigma * s / n_atoms;  // converts g to its kappa-equivalent
    if (fixed == Knob::kappa) {
      out.kappa[i] = held_value;
      out.g[i] = (held_value - rhs) * mean_field;
    } else {
      out.g[i] = held_value;
      out.kappa[i] = rhs + held_value / mean_field;
    }
  }
  out.refresh_flags();
  return out;
}

/// kbar(t) = kbar_i + (kbar_f - kbar_i)(1 + tanh((t - t_switch)/rise_time))/2.
struct SmoothedStep {
  double kbar_i = 0.0;
  double kbar_f = 0.0;
  double t_switch = 0.0;
  double rise_time = 1.0;

  SmoothedStep() = default;
  SmoothedStep(double ki, double kf, double ts, double rise)
      : kbar_i(ki), kbar_f(kf), t_switch(ts), rise_time(rise) {
    if (!(rise_time > 0.0)) throw InvalidArgument("smoothed_step: rise_time must be > 0");
  }

  double operator()(double t) const {
    return kbar_i + (kbar_f - kbar_i) * 0.5 * (1.0 + std::tanh((t - t_switch) / rise_time));
  }
  double derivative(double t) const {
    const double c = std::cosh((t - t_switch) / rise_time);
    return (kbar_f - kbar_i) * 0.5 / (rise_time * c * c);
  }
};

inline SmoothedStep smoothed_step(double kbar_i, double kbar_f, double t_switch, double rise_time) {
  return SmoothedStep(kbar_i, kbar_f, t_switch, rise_time);
}

/// Up-then-down composition: kbar_i -> kbar_f at t_up, back at t_down.
struct UpDownStep {
  SmoothedStep up;
  SmoothedStep down;

  UpDownStep(double kbar_i, double kbar_f, double t_up, double t_down, double rise_time)
      : up(kbar_i, kbar_f, t_up, rise_time), down(kbar_f, kbar_i, t_down, rise_time) {
    if (!(t_down > t_up)) throw InvalidArgument("UpDownStep: t_down must follow t_up");
  }
  double operator()(double t) const { return up(t) + down(t) - up.kbar_f; }
  double derivative(double t) const { return up.derivative(t) + down.derivative(t); }
};

/// Physical protocol for a time-domain stiffness schedule: the variance ODE
/// from s0 followed by the bridge relation, sampled on `samples` points.
template <class Schedule>
Protocol schedule_protocol(const PhysicalParams& p, const Schedule& kbar, double s0, double duration,
                           std::size_t samples, Knob fixed, double held_value, long atom_count) {
  if (!(duration > 0.0)) throw InvalidArgument("schedule_protocol: duration must be > 0");
  if (samples < 2) throw InvalidArgument("schedule_protocol: need at least 2 samples");
  const auto times = detail::linspace(0.0, duration, samples);
  const auto traj = variance_evolve(p, kbar, s0, times);
  return controls_from_classical(p, sample_schedule(kbar, times), traj, fixed, held_value, atom_count);
}

/// Time taken by an excursion s_low -> s_high -> s_low: from the moment s
/// leaves s_low by the relative tolerance until it is back within it, after
/// having come within the tolerance of s_high. NaN if the excursion is
/// incomplete.
inline double excursion_time(std::span<const double> times, std::span<const double> s, double s_low,
                             double s_high, double rel_tol = 0.01) {
  double t_leave = std::numeric_limits<double>::quiet_NaN();
  bool reached = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool near_low = std::abs(s[i] / s_low - 1.0) <= rel_tol;
    if (std::isnan(t_leave)) {
      if (!near_low) t_leave = times[i];
    } else if (!reached) {
      reached = std::abs(s[i] / s_high - 1.0) <= rel_tol;
    } else if (near_low) {
      return times[i] - t_leave;
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

enum class Endpoint { first, last };

/// Steady-state polynomial residual at a protocol endpoint.
inline double check_stationarity(const PhysicalParams& p, const Protocol& protocol, Endpoint which,
                                 long atom_count) {
  protocol.validate();
  const std::size_t i = which == Endpoint::first ? 0 : protocol.size() - 1;
  return steady_state_residual(p, protocol.kappa[i], protocol.g[i] * static_cast<double>(atom_count),
                               std::sqrt(protocol.s_pred[i]));
}

}  // namespace feshbach
