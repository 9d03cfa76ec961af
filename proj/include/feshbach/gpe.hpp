#pragma once

// 1D Gross-Pitaevskii solver.
//
// Kinetic operator: compact 4th-order (Numerov) form T = -(hbar^2/2m dx^2)
// M^-1 d2 with M = I + d2/12, which keeps every Crank-Nicolson solve
// tridiagonal. Real time uses Strang splitting (potential + mean field /
// kinetic CN / potential + mean field). Ground states come from unsplit
// imaginary-time CN with the mean field frozen per step, whose fixed point is
// the exact discrete stationary state.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>
#include <vector>

#include "feshbach/core.hpp"
#include "feshbach/detail/numerics.hpp"
#include "feshbach/variational.hpp"

namespace feshbach {

using cplx = std::complex<double>;

struct SpatialGrid {
  double x_max = 10.0;
  int n_points = 1024;

  SpatialGrid() = default;
  SpatialGrid(double xmax, int n) : x_max(xmax), n_points(n) { validate(); }

  double x_min() const { return -x_max; }
  double dx() const { return 2.0 * x_max / static_cast<double>(n_points - 1); }
  double x(int j) const { return -x_max + dx() * j; }

  std::vector<double> nodes() const {
    std::vector<double> v(static_cast<std::size_t>(n_points));
    for (int j = 0; j < n_points; ++j) v[static_cast<std::size_t>(j)] = x(j);
    return v;
  }

  void validate() const {
    if (n_points < 256) throw InvalidArgument("SpatialGrid: n_points must be >= 256");
    if (!(x_max > 0.0)) throw InvalidArgument("SpatialGrid: x_max must be > 0");
  }

  /// Box of half-width `factor` times the widest expected Gaussian width.
  static SpatialGrid for_width(double sigma_max, int n = 1024, double factor = 12.0) {
    return SpatialGrid(factor * sigma_max, n);
  }
};

struct WaveFunction {
  SpatialGrid grid;
  std::vector<cplx> values;

  double norm() const {
    double acc = 0.0;
    for (const auto& v : values) acc += std::norm(v);
    return acc * grid.dx();
  }

  /// Edge amplitude relative to the peak.
  double boundary_ratio() const {
    double peak = 0.0;
    for (const auto& v : values) peak = std::max(peak, std::abs(v));
    if (peak == 0.0) return 0.0;
    return std::max(std::abs(values.front()), std::abs(values.back())) / peak;
  }

  static WaveFunction gaussian(const SpatialGrid& grid, double sigma, double alpha = 0.0) {
    WaveFunction w;
    w.grid = grid;
    w.values.resize(static_cast<std::size_t>(grid.n_points));
    const double amp = std::pow(2.0 * std::numbers::pi * sigma * sigma, -0.25);
    for (int j = 0; j < grid.n_points; ++j) {
      const double x = grid.x(j);
      w.values[static_cast<std::size_t>(j)] =
          amp * std::exp(-x * x / (4.0 * sigma * sigma)) * std::polar(1.0, alpha * x * x);
    }
    return w;
  }
};

struct Observables {
  double norm = 0.0;
  double x2 = 0.0;       // <x^2>
  double energy = 0.0;   // per particle
  double quartic = 0.0;  // integral |psi|^4 dx
};

namespace detail {

/// Shared operators for one grid and parameter set.
class GpeOperators {
 public:
  GpeOperators(const PhysicalParams& p, const SpatialGrid& grid)
      : p_(p), grid_(grid), x2_(static_cast<std::size_t>(grid.n_points)),
        mass_matrix_(static_cast<std::size_t>(grid.n_points), 1.0 / 12.0, 10.0 / 12.0) {
    grid.validate();
    for (int j = 0; j < grid.n_points; ++j) x2_[static_cast<std::size_t>(j)] = grid.x(j) * grid.x(j);
    kin_ = p.hbar * p.hbar / (2.0 * p.mass * grid.dx() * grid.dx());
  }

  const SpatialGrid& grid() const { return grid_; }
  const std::vector<double>& x2() const { return x2_; }
  double kinetic_scale() const { return kin_; }

  /// <psi|T|psi> with the compact kinetic operator.
  template <class T>
  double kinetic(const std::vector<T>& psi) const {
    const std::size_t n = psi.size();
    scratch_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const cplx l = j > 0 ? cplx(psi[j - 1]) : cplx(0.0);
      const cplx r = j + 1 < n ? cplx(psi[j + 1]) : cplx(0.0);
      scratch_[j] = l - 2.0 * cplx(psi[j]) + r;
    }
    mass_matrix_.solve(std::span<cplx>(scratch_));
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += std::real(std::conj(cplx(psi[j])) * scratch_[j]);
    return -kin_ * acc * grid_.dx();
  }

  template <class T>
  Observables observe(const std::vector<T>& psi, double kappa, double ng) const {
    Observables o;
    double n0 = 0, m2 = 0, q = 0;
    for (std::size_t j = 0; j < psi.size(); ++j) {
      const double d = std::norm(cplx(psi[j]));
      n0 += d;
      m2 += d * x2_[j];
      q += d * d;
    }
    const double dx = grid_.dx();
    o.norm = n0 * dx;
    o.x2 = m2 * dx;
    o.quartic = q * dx;
    o.energy = kinetic(psi) + 0.5 * kappa * o.x2 + 0.5 * ng * o.quartic;
    return o;
  }

 private:
  PhysicalParams p_;
  SpatialGrid grid_;
  std::vector<double> x2_;
  double kin_ = 0.0;
  ConstantTridiagonal<double> mass_matrix_;
  mutable std::vector<cplx> scratch_;
};

}  // namespace detail

inline Observables observables(const PhysicalParams& p, const WaveFunction& psi, const TrapConfig& cfg) {
  detail::GpeOperators ops(p, psi.grid);
  return ops.observe(psi.values, cfg.kappa, cfg.interaction());
}

struct GroundStateOptions {
  double dtau = 0.01;
  double tolerance = 1e-11;  // L2 change of psi per unit imaginary time
  int max_steps = 200000;
  int min_steps = 50;
};

struct GroundState {
  WaveFunction psi;
  Observables obs;
  int steps = 0;
};

/// Imaginary-time relaxation to the GPE ground state of `cfg` on `grid`.
inline GroundState ground_state(const PhysicalParams& p, const TrapConfig& cfg, const SpatialGrid& grid,
                                const GroundStateOptions& opt = {}) {
  cfg.validate();
  grid.validate();
  detail::GpeOperators ops(p, grid);
  const std::size_t n = static_cast<std::size_t>(grid.n_points);
  const double ng = cfg.interaction();
  const double sigma0 = equilibrium_width(p, cfg);
  std::vector<double> psi(n);
  {
    auto g0 = WaveFunction::gaussian(grid, sigma0);
    for (std::size_t j = 0; j < n; ++j) psi[j] = g0.values[j].real();
  }
  const double dx = grid.dx();
  auto normalize = [&] {
    double acc = 0.0;
    for (double v : psi) acc += v * v;
    const double c = 1.0 / std::sqrt(acc * dx);
    for (double& v : psi) v *= c;
  };
  normalize();

  // Backward Euler in imaginary time: damps every mode, so stiff edge modes
  // cannot ring the way they do under Crank-Nicolson.
  const double b = opt.dtau / p.hbar;
  const double k = ops.kinetic_scale();
  const auto& x2 = ops.x2();
  std::vector<double> V(n), lo(n), di(n), up(n), rhs(n), scratch;
  std::vector<double> trace;
  for (int step = 1; step <= opt.max_steps; ++step) {
    for (std::size_t j = 0; j < n; ++j) V[j] = 0.5 * cfg.kappa * x2[j] + ng * psi[j] * psi[j];
    for (std::size_t j = 0; j < n; ++j) {
      const double vl = j > 0 ? V[j - 1] : 0.0, vr = j + 1 < n ? V[j + 1] : 0.0;
      di[j] = 10.0 / 12.0 + b * (2.0 * k + 10.0 / 12.0 * V[j]);
      lo[j] = 1.0 / 12.0 + b * (-k + vl / 12.0);
      up[j] = 1.0 / 12.0 + b * (-k + vr / 12.0);
      const double pl = j > 0 ? psi[j - 1] : 0.0, pr = j + 1 < n ? psi[j + 1] : 0.0;
      rhs[j] = 10.0 / 12.0 * psi[j] + (pl + pr) / 12.0;
    }
    detail::solve_tridiagonal<double, double>(lo, di, up, rhs, scratch);
    psi.swap(rhs);
    normalize();
    double change = 0.0;
    for (std::size_t j = 0; j < n; ++j) change += (psi[j] - rhs[j]) * (psi[j] - rhs[j]);
    change = std::sqrt(change * dx) / opt.dtau;
    const double e = ops.observe(psi, cfg.kappa, ng).energy;
    trace.push_back(e);
    if (trace.size() > 8) trace.erase(trace.begin());
    if (!std::isfinite(e)) break;
    if (step >= opt.min_steps && change < opt.tolerance) {
      GroundState gs;
      gs.psi.grid = grid;
      gs.psi.values.assign(psi.begin(), psi.end());
      gs.obs = ops.observe(gs.psi.values, cfg.kappa, ng);
      gs.steps = step;
      return gs;
    }
  }
  std::ostringstream msg;
  msg << "ground state did not converge in " << opt.max_steps << " steps; last energies:";
  for (double e : trace) msg << ' ' << e;
  throw NumericalFailure("gpe", msg.str());
}

struct PropagateOptions {
  double dt = 0.001;
  double hold_after = 0.0;       // extra time at frozen final controls
  int snapshot_every = 0;        // 0 disables wave-function snapshots
  double norm_tolerance = 1e-8;
  double boundary_tolerance = 1e-8;
};

struct Snapshot {
  double time = 0.0;
  std::vector<cplx> values;
};

/// Observables recorded after every step, together with the controls used.
struct Trajectory {
  std::vector<double> times, kappa, g, x2, energy, quartic, norm;
  std::vector<Snapshot> snapshots;
  WaveFunction final_state;
  double protocol_end = 0.0;        // time at which the hold starts
  double max_step_norm_change = 0.0;
  double max_boundary_ratio = 0.0;

  std::size_t size() const { return times.size(); }

  void append(const Trajectory& other) {
    auto cat = [](std::vector<double>& a, const std::vector<double>& b, std::size_t from) {
      a.insert(a.end(), b.begin() + static_cast<std::ptrdiff_t>(from), b.end());
    };
    const std::size_t from = times.empty() ? 0 : 1;
    cat(times, other.times, from);
    cat(kappa, other.kappa, from);
    cat(g, other.g, from);
    cat(x2, other.x2, from);
    cat(energy, other.energy, from);
    cat(quartic, other.quartic, from);
    cat(norm, other.norm, from);
    snapshots.insert(snapshots.end(), other.snapshots.begin(), other.snapshots.end());
    final_state = other.final_state;
    protocol_end = other.protocol_end;
    max_step_norm_change = std::max(max_step_norm_change, other.max_step_norm_change);
    max_boundary_ratio = std::max(max_boundary_ratio, other.max_boundary_ratio);
  }
};

namespace detail {

class SplitStepper {
 public:
  SplitStepper(const PhysicalParams& p, const SpatialGrid& grid) : p_(p), ops_(p, grid) {}

  const GpeOperators& ops() const { return ops_; }

  void set_dt(double dt) {
    if (dt == dt_) return;
    dt_ = dt;
    const std::size_t n = static_cast<std::size_t>(ops_.grid().n_points);
    const cplx beta(0.0, dt * p_.hbar / (4.0 * p_.mass * ops_.grid().dx() * ops_.grid().dx()));
    lhs_ = ConstantTridiagonal<cplx>(n, cplx(1.0 / 12.0) - beta, cplx(10.0 / 12.0) + 2.0 * beta);
    rhs_diag_ = cplx(10.0 / 12.0) - 2.0 * beta;
    rhs_off_ = cplx(1.0 / 12.0) + beta;
  }

  void kick(std::vector<cplx>& psi, double kappa, double ng, double h) const {
    const auto& x2 = ops_.x2();
    const double c = -h / p_.hbar;
    for (std::size_t j = 0; j < psi.size(); ++j) {
      const double v = 0.5 * kappa * x2[j] + ng * std::norm(psi[j]);
      psi[j] *= std::polar(1.0, c * v);
    }
  }

  void drift(std::vector<cplx>& psi) {
    const std::size_t n = psi.size();
    tmp_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const cplx l = j > 0 ? psi[j - 1] : cplx(0.0);
      const cplx r = j + 1 < n ? psi[j + 1] : cplx(0.0);
      tmp_[j] = rhs_diag_ * psi[j] + rhs_off_ * (l + r);
    }
    lhs_.solve(std::span<cplx>(tmp_));
    psi.swap(tmp_);
  }

  /// One Strang step from controls (k0, ng0) at t_n to (k1, ng1) at t_n+1.
  void step(std::vector<cplx>& psi, double k0, double ng0, double k1, double ng1) {
    kick(psi, k0, ng0, 0.5 * dt_);
    drift(psi);
    kick(psi, k1, ng1, 0.5 * dt_);
  }

 private:
  PhysicalParams p_;
  GpeOperators ops_;
  double dt_ = -1.0;
  ConstantTridiagonal<cplx> lhs_;
  cplx rhs_diag_, rhs_off_;
  std::vector<cplx> tmp_;
};

}  // namespace detail

/// Linear interpolation of the protocol controls.
inline void controls_at(const Protocol& pr, double t, double& kappa, double& g) {
  kappa = detail::lerp_at(pr.times, pr.kappa, t);
  g = detail::lerp_at(pr.times, pr.g, t);
}

/// Real-time evolution of psi0 through `protocol` (times are taken relative
/// to its first sample), optionally followed by a hold at the final controls.
/// The step is shrunk so that an integer number of steps spans the protocol.
inline Trajectory propagate(const PhysicalParams& p, const WaveFunction& psi0, const Protocol& protocol,
                            long atom_count, const PropagateOptions& opt = {}, double t_offset = 0.0) {
  protocol.validate();
  if (!(opt.dt > 0.0)) throw InvalidArgument("propagate: dt must be > 0");
  if (opt.hold_after < 0.0) throw InvalidArgument("propagate: hold_after must be >= 0");
  const double n_atoms = static_cast<double>(atom_count);
  detail::SplitStepper stepper(p, psi0.grid);
  std::vector<cplx> psi = psi0.values;

  Trajectory tr;
  auto record = [&](double t, double k, double g) {
    const auto o = stepper.ops().observe(psi, k, n_atoms * g);
    tr.times.push_back(t + t_offset);
    tr.kappa.push_back(k);
    tr.g.push_back(g);
    tr.x2.push_back(o.x2);
    tr.energy.push_back(o.energy);
    tr.quartic.push_back(o.quartic);
    tr.norm.push_back(o.norm);
    return o;
  };
  auto guard = [&](double t, double prev_norm, double now_norm) {
    tr.max_step_norm_change = std::max(tr.max_step_norm_change, std::abs(now_norm - prev_norm));
    if (std::abs(now_norm - 1.0) > opt.norm_tolerance) {
      std::ostringstream msg;
      msg << "norm drifted to " << now_norm << " at t = " << t + t_offset;
      throw NumericalFailure("gpe", msg.str());
    }
    double peak = 0.0;
    for (const auto& v : psi) peak = std::max(peak, std::norm(v));
    const double edge = std::sqrt(std::max(std::norm(psi.front()), std::norm(psi.back())) / peak);
    tr.max_boundary_ratio = std::max(tr.max_boundary_ratio, edge);
    if (edge > opt.boundary_tolerance) {
      std::ostringstream msg;
      msg << "wave function reached the grid edge (relative amplitude " << edge << ") at t = " << t + t_offset
          << "; enlarge x_max";
      throw NumericalFailure("gpe", msg.str());
    }
  };

  const double t0 = protocol.times.front();
  const double span = protocol.duration();
  double k_prev, g_prev;
  controls_at(protocol, t0, k_prev, g_prev);
  double prev_norm = record(0.0, k_prev, g_prev).norm;
  std::size_t step_index = 0;

  auto run = [&](double t_start, double length, bool frozen) {
    if (length <= 0.0) return;
    const int steps = std::max(1, static_cast<int>(std::ceil(length / opt.dt - 1e-9)));
    const double h = length / steps;
    stepper.set_dt(h);
    for (int i = 1; i <= steps; ++i) {
      const double t = t_start + h * i;
      double k1 = k_prev, g1 = g_prev;
      if (!frozen) controls_at(protocol, t0 + std::min(t, span), k1, g1);
      stepper.step(psi, k_prev, n_atoms * g_prev, k1, n_atoms * g1);
      k_prev = k1;
      g_prev = g1;
      const double nn = record(t, k1, g1).norm;
      guard(t, prev_norm, nn);
      prev_norm = nn;
      ++step_index;
      if (opt.snapshot_every > 0 && step_index % static_cast<std::size_t>(opt.snapshot_every) == 0)
        tr.snapshots.push_back({t + t_offset, psi});
    }
  };
  run(0.0, span, false);
  tr.protocol_end = span + t_offset;
  run(span, opt.hold_after, true);
  tr.final_state.grid = psi0.grid;
  tr.final_state.values = std::move(psi);
  return tr;
}

/// Work done on the condensate per particle, by trapezoid quadrature over
/// the recorded control increments:
///   W = integral [ dkappa/dt <x^2>/2 + dg/dt (N/2) integral |psi|^4 ] dt.
inline double work_integral(const Trajectory& tr, long atom_count, std::size_t begin = 0,
                            std::size_t end = static_cast<std::size_t>(-1)) {
  end = std::min(end, tr.size() - 1);
  const double half_n = 0.5 * static_cast<double>(atom_count);
  double w = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    w += (tr.kappa[i + 1] - tr.kappa[i]) * 0.25 * (tr.x2[i] + tr.x2[i + 1]);
    w += (tr.g[i + 1] - tr.g[i]) * half_n * 0.5 * (tr.quartic[i] + tr.quartic[i + 1]);
  }
  return w;
}

}  // namespace feshbach
