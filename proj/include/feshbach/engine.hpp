#pragma once

// Feshbach engine: four optimal strokes alternating kappa and g between two
// values, run back to back through the GPE with work, efficiency, power and
// stability bookkeeping.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "feshbach/core.hpp"
#include "feshbach/gpe.hpp"
#include "feshbach/optimal.hpp"
#include "feshbach/variational.hpp"

namespace feshbach {

enum class Direction { forward, reverse };

inline std::string_view to_string(Direction d) { return d == Direction::forward ? "forward" : "reverse"; }

/// Cost weight mu of each stroke, named after the forward stroke; the
/// reverse cycle reuses the weight of the stroke it retraces.
struct StrokeWeights {
  double ab = 1.0, bc = 1.0, cd = 1.0, da = 1.0;

  StrokeWeights scaled(double f) const { return {ab * f, bc * f, cd * f, da * f}; }
};

struct CycleSpec {
  double kappa_i = 2.0, kappa_f = 8.0;
  double g_i = 0.031, g_f = 0.0775;
  long atom_count = 2000;
  double lambda = 0.01;
  StrokeWeights mu{1.0, 4.0, 0.5, 0.5};
  int repeats = 4;
  Direction direction = Direction::forward;

  void validate() const {
    if (!(kappa_i > 0) || !(kappa_f > 0) || !(g_i > 0) || !(g_f > 0))
      throw InvalidArgument("CycleSpec: all controls must be > 0");
    if (atom_count < 1) throw InvalidArgument("CycleSpec: atom_count must be >= 1");
    if (repeats < 1) throw InvalidArgument("CycleSpec: repeats must be >= 1");
    CostWeights{lambda, mu.ab}.validate();
    CostWeights{lambda, mu.bc}.validate();
    CostWeights{lambda, mu.cd}.validate();
    CostWeights{lambda, mu.da}.validate();
  }
};

struct StabilityThresholds {
  double wirr_ratio = 0.02;    // max |W_irr| / |Delta_BC|
  double variance_drift = 0.005;
};

struct EngineSettings {
  int mesh_size = 2049;
  std::size_t time_samples = 2001;
  int grid_points = 1024;
  double grid_factor = 12.0;   // x_max in units of the widest corner width
  double dt = 0.001;
  double dwell = 0.0;          // frozen-control pause after each stroke
  GroundStateOptions ground;
  StabilityThresholds stability;
};

struct Corner {
  char label = 'A';
  TrapConfig trap;
  double s_eq = 0.0;       // ansatz equilibrium variance
  double gpe_x2 = 0.0;     // GPE ground-state <x^2>
  double gpe_energy = 0.0; // GPE ground-state energy per particle
};

struct CycleStroke {
  std::string label;   // e.g. "AB"
  int from = 0, to = 0;  // corner indices
  Knob varied = Knob::kappa;
  std::optional<Stroke> stroke;  // empty for a degenerate (identity) stroke
  double duration() const { return stroke ? stroke->duration : 0.0; }
};

struct Cycle {
  CycleSpec spec;
  std::array<Corner, 4> corners;
  std::vector<CycleStroke> strokes;
  SpatialGrid grid;
  WaveFunction initial;  // GPE ground state of corner A
  double tau = 0.0;      // cycle duration including dwells
};

inline double corner_gap(const Cycle& c, int from, int to) {
  return c.corners[static_cast<std::size_t>(to)].gpe_energy - c.corners[static_cast<std::size_t>(from)].gpe_energy;
}

/// Synthesise the four strokes and the GPE corner states.
inline Cycle build_cycle(const PhysicalParams& p, const CycleSpec& spec, const EngineSettings& set = {}) {
  spec.validate();
  Cycle cy;
  cy.spec = spec;
  const double ks[4] = {spec.kappa_i, spec.kappa_f, spec.kappa_f, spec.kappa_i};
  const double gs[4] = {spec.g_i, spec.g_i, spec.g_f, spec.g_f};
  double sigma_max = 0.0;
  for (int i = 0; i < 4; ++i) {
    Corner& c = cy.corners[static_cast<std::size_t>(i)];
    c.label = static_cast<char>('A' + i);
    c.trap = TrapConfig{ks[i], gs[i], spec.atom_count};
    try {
      const double w = equilibrium_width(p, c.trap);
      c.s_eq = w * w;
      sigma_max = std::max(sigma_max, w);
    } catch (const Error& e) {
      throw NumericalFailure("engine", std::string("corner ") + c.label + ": " + e.what());
    }
  }
  cy.grid = SpatialGrid::for_width(sigma_max, set.grid_points, set.grid_factor);
  for (auto& c : cy.corners) {
    try {
      auto gs_ = ground_state(p, c.trap, cy.grid, set.ground);
      c.gpe_x2 = gs_.obs.x2;
      c.gpe_energy = gs_.obs.energy;
      if (c.label == 'A') cy.initial = std::move(gs_.psi);
    } catch (const Error& e) {
      throw NumericalFailure("engine", std::string("corner ") + c.label + ": " + e.what());
    }
  }

  struct Leg {
    int from, to;
    double mu;
    Knob varied;
  };
  const auto& m = spec.mu;
  std::vector<Leg> legs;
  if (spec.direction == Direction::forward)
    legs = {{0, 1, m.ab, Knob::kappa}, {1, 2, m.bc, Knob::g}, {2, 3, m.cd, Knob::kappa}, {3, 0, m.da, Knob::g}};
  else
    legs = {{0, 3, m.da, Knob::g}, {3, 2, m.cd, Knob::kappa}, {2, 1, m.bc, Knob::g}, {1, 0, m.ab, Knob::kappa}};

  for (const auto& leg : legs) {
    const Corner& a = cy.corners[static_cast<std::size_t>(leg.from)];
    const Corner& b = cy.corners[static_cast<std::size_t>(leg.to)];
    CycleStroke cs;
    cs.label = std::string{a.label, b.label};
    cs.from = leg.from;
    cs.to = leg.to;
    cs.varied = leg.varied;
    if (a.s_eq != b.s_eq) {
      StrokeSpec sp;
      sp.s_i = a.s_eq;
      sp.s_f = b.s_eq;
      sp.weights = {spec.lambda, leg.mu};
      sp.fixed_knob = cs.varied == Knob::kappa ? Knob::g : Knob::kappa;
      sp.held_value = cs.varied == Knob::kappa ? a.trap.g : a.trap.kappa;
      sp.mesh_size = set.mesh_size;
      try {
        cs.stroke = synthesize_stroke(p, sp, spec.atom_count, set.time_samples);
      } catch (const Error& e) {
        throw NumericalFailure("engine", "stroke " + cs.label + ": " + e.what());
      }
    }
    cy.tau += cs.duration() + set.dwell;
    cy.strokes.push_back(std::move(cs));
  }
  return cy;
}

struct EfficiencyPower {
  double eta = std::numeric_limits<double>::quiet_NaN();
  double power = 0.0;
  bool eta_defined = false;
};

/// eta = -(W_AB + W_CD) / W_BC, P = -(W_AB + W_CD) / tau.
inline EfficiencyPower efficiency_and_power(double w_ab, double w_bc, double w_cd, double tau) {
  EfficiencyPower r;
  if (!(tau > 0.0)) throw InvalidArgument("efficiency_and_power: tau must be > 0");
  r.power = -(w_ab + w_cd) / tau;
  if (w_bc != 0.0) {
    r.eta = -(w_ab + w_cd) / w_bc;
    r.eta_defined = true;
  }
  return r;
}

struct StrokeReport {
  std::string label;
  double work = 0.0;
  double delta = 0.0;  // GPE steady-state energy gap
  double w_irr = 0.0;
  double duration = 0.0;
};

struct CycleReport {
  int index = 0;  // 1-based
  std::vector<StrokeReport> strokes;
  double tau = 0.0;
  double eta = std::numeric_limits<double>::quiet_NaN();
  bool eta_defined = false;
  double power = 0.0;        // normalized, per particle
  double power_watts = 0.0;  // whole condensate, SI
  double power_qw = 0.0;
  double eta_ideal = std::numeric_limits<double>::quiet_NaN();
  double power_ideal = 0.0;
  double endpoint_variance = 0.0;    // <x^2> at the end of the cycle
  double cycle_mean_variance = 0.0;  // time average of <x^2> over the cycle
  double variance_drift = 0.0;       // relative change of the cycle mean vs previous cycle
  double snapshot_drift = 0.0;       // relative change of the endpoint snapshot
  double rms_variance_error = 0.0;   // GPE vs predicted s(t)
  double max_variance_error = 0.0;
  double energy_closure = 0.0;       // |sum W - Delta E| / |E_start|
  double max_wirr_ratio = 0.0;
  bool stable = false;
};

struct CycleRun {
  Trajectory trajectory;
  std::vector<double> theory_s;  // predicted variance at each trajectory time
  std::vector<CycleReport> reports;
  double hold_mean = 0.0;
  double hold_relative_std = 0.0;
  double hold_duration = 0.0;
};

/// Continuous GPE run over `repeats` cycles starting from the corner-A
/// ground state, followed by `hold_after` at frozen corner-A controls.
inline CycleRun run_cycles(const PhysicalParams& p, const Cycle& cy, int repeats, double hold_after,
                           const EngineSettings& set = {}) {
  if (repeats < 1) throw InvalidArgument("run_cycles: repeats must be >= 1");
  const long N = cy.spec.atom_count;
  const NormalizedUnits units = NormalizedUnits::from(p);
  CycleRun run;
  WaveFunction psi = cy.initial;
  double t = 0.0;
  double prev_mean = 0.0, prev_snapshot = cy.corners[0].gpe_x2;

  // Index of the g-stroke at kappa_f and of the two kappa strokes.
  int g_hot = -1;
  std::vector<int> kappa_legs;
  for (std::size_t i = 0; i < cy.strokes.size(); ++i) {
    const auto& s = cy.strokes[i];
    if (s.varied == Knob::kappa) kappa_legs.push_back(static_cast<int>(i));
    else if (s.from == 1 || s.from == 2) g_hot = static_cast<int>(i);  // B and C sit at kappa_f
  }
  const double delta_hot = std::abs(corner_gap(cy, cy.strokes[static_cast<std::size_t>(g_hot)].from,
                                               cy.strokes[static_cast<std::size_t>(g_hot)].to));

  PropagateOptions popt;
  popt.dt = set.dt;
  popt.hold_after = set.dwell;

  {
    // Seed the record with the initial state so every cycle starts from a
    // shared sample, even when all strokes are degenerate.
    const Corner& a = cy.corners[0];
    const Observables o = observables(p, psi, a.trap);
    auto& tr = run.trajectory;
    tr.times = {0.0};
    tr.kappa = {a.trap.kappa};
    tr.g = {a.trap.g};
    tr.x2 = {o.x2};
    tr.energy = {o.energy};
    tr.quartic = {o.quartic};
    tr.norm = {o.norm};
    tr.final_state = psi;
    run.theory_s = {a.s_eq};
  }

  for (int c = 1; c <= repeats; ++c) {
    CycleReport rep;
    rep.index = c;
    const std::size_t cycle_begin = run.trajectory.size() - 1;
    const double e_start = run.trajectory.energy.back();
    for (std::size_t k = 0; k < cy.strokes.size(); ++k) {
      const auto& leg = cy.strokes[k];
      StrokeReport sr;
      sr.label = leg.label;
      sr.delta = corner_gap(cy, leg.from, leg.to);
      sr.duration = leg.duration();
      if (leg.stroke) {
        const Protocol& pr = leg.stroke->protocol;
        Trajectory seg;
        try {
          seg = propagate(p, psi, pr, N, popt, t);
        } catch (const NumericalFailure& e) {
          throw NumericalFailure("engine", "cycle " + std::to_string(c) + " stroke " + leg.label + ": " + e.what());
        }
        sr.work = work_integral(seg, N);
        for (std::size_t i = 1; i < seg.size(); ++i) {
          const double local = std::min(seg.times[i] - t, pr.duration());
          run.theory_s.push_back(detail::lerp_at(pr.times, pr.s_pred, pr.times.front() + local));
        }
        run.trajectory.append(seg);
        psi = seg.final_state;
        t += pr.duration() + set.dwell;
      }
      sr.w_irr = sr.work - sr.delta;
      rep.strokes.push_back(sr);
    }
    const auto& tr = run.trajectory;
    const std::size_t cycle_end = tr.size() - 1;
    rep.tau = cy.tau;
    const double w_k = rep.strokes[static_cast<std::size_t>(kappa_legs[0])].work +
                       rep.strokes[static_cast<std::size_t>(kappa_legs[1])].work;
    const double w_g = rep.strokes[static_cast<std::size_t>(g_hot)].work;
    const double d_k = rep.strokes[static_cast<std::size_t>(kappa_legs[0])].delta +
                       rep.strokes[static_cast<std::size_t>(kappa_legs[1])].delta;
    const double d_g = rep.strokes[static_cast<std::size_t>(g_hot)].delta;
    if (rep.tau > 0.0) {
      const auto ep = efficiency_and_power(w_k, w_g, 0.0, rep.tau);
      rep.eta = ep.eta;
      rep.eta_defined = ep.eta_defined;
      rep.power = ep.power;
      const auto ideal = efficiency_and_power(d_k, d_g, 0.0, rep.tau);
      rep.eta_ideal = ideal.eta;
      rep.power_ideal = ideal.power;
    }
    rep.power_watts = rep.power * static_cast<double>(N) * units.power;
    rep.power_qw = power_in_qw(rep.power_watts);

    rep.endpoint_variance = tr.x2[cycle_end];
    double area = 0.0, sq = 0.0, mx = 0.0;
    std::size_t count = 0;
    for (std::size_t i = cycle_begin; i < cycle_end; ++i) area += 0.5 * (tr.x2[i] + tr.x2[i + 1]) * (tr.times[i + 1] - tr.times[i]);
    for (std::size_t i = cycle_begin + 1; i <= cycle_end; ++i) {
      const double e = tr.x2[i] / run.theory_s[i] - 1.0;
      sq += e * e;
      mx = std::max(mx, std::abs(e));
      ++count;
    }
    const double span = tr.times[cycle_end] - tr.times[cycle_begin];
    rep.cycle_mean_variance = span > 0.0 ? area / span : tr.x2[cycle_end];
    rep.rms_variance_error = count ? std::sqrt(sq / static_cast<double>(count)) : 0.0;
    rep.max_variance_error = mx;
    rep.variance_drift = c == 1 ? 0.0 : std::abs(rep.cycle_mean_variance - prev_mean) / prev_mean;
    rep.snapshot_drift = std::abs(rep.endpoint_variance - prev_snapshot) / prev_snapshot;
    prev_mean = rep.cycle_mean_variance;
    prev_snapshot = rep.endpoint_variance;

    double sum_w = 0.0;
    for (const auto& s : rep.strokes) {
      sum_w += s.work;
      if (delta_hot > 0.0) rep.max_wirr_ratio = std::max(rep.max_wirr_ratio, std::abs(s.w_irr) / delta_hot);
    }
    rep.energy_closure = std::abs(sum_w - (tr.energy[cycle_end] - e_start)) / std::abs(e_start);
    rep.stable = rep.max_wirr_ratio < set.stability.wirr_ratio && rep.variance_drift < set.stability.variance_drift;
    run.reports.push_back(std::move(rep));
  }

  if (hold_after > 0.0) {
    const auto& a = cy.corners[0].trap;
    Protocol hold;
    hold.times = {0.0, hold_after};
    hold.kappa = {a.kappa, a.kappa};
    hold.g = {a.g, a.g};
    hold.s_pred = {cy.corners[0].s_eq, cy.corners[0].s_eq};
    const std::size_t start = run.trajectory.size();
    auto seg = propagate(p, psi, hold, N, PropagateOptions{set.dt, 0.0, 0, 1e-8, 1e-8}, t);
    for (std::size_t i = 1; i < seg.size(); ++i) run.theory_s.push_back(cy.corners[0].s_eq);
    run.trajectory.append(seg);
    std::vector<double> xs(run.trajectory.x2.begin() + static_cast<std::ptrdiff_t>(start), run.trajectory.x2.end());
    run.hold_mean = detail::mean(xs);
    run.hold_relative_std = detail::stddev(xs) / run.hold_mean;
    run.hold_duration = hold_after;
  }
  return run;
}

struct SweepRow {
  double scaling = 1.0;
  double tau = 0.0;
  double power = 0.0;      // mean over cycles, normalized per particle
  double power_qw = 0.0;   // whole condensate
  double eta = std::numeric_limits<double>::quiet_NaN();
  double power_ideal = 0.0;
  double eta_ideal = std::numeric_limits<double>::quiet_NaN();
  double max_wirr_ratio = 0.0;
  double max_drift = 0.0;
  bool stable = false;
  bool ok = false;
  std::string error;
};

/// One row per mu scaling, each the mean over `cycles` cycles. Rows run on
/// up to `threads` workers; failures are recorded and the sweep continues.
inline std::vector<SweepRow> power_sweep(const PhysicalParams& p, const CycleSpec& spec,
                                         const std::vector<double>& scalings, const EngineSettings& set = {},
                                         int cycles = 4, unsigned threads = 1) {
  std::vector<SweepRow> rows(scalings.size());
  auto work = [&](std::size_t i) {
    SweepRow& row = rows[i];
    row.scaling = scalings[i];
    try {
      CycleSpec s = spec;
      s.mu = spec.mu.scaled(scalings[i]);
      s.repeats = cycles;
      const Cycle cy = build_cycle(p, s, set);
      const CycleRun run = run_cycles(p, cy, cycles, 0.0, set);
      row.tau = cy.tau;
      row.stable = true;
      double eta = 0.0;
      for (const auto& r : run.reports) {
        row.power += r.power / cycles;
        row.power_qw += r.power_qw / cycles;
        eta += r.eta / cycles;
        row.max_wirr_ratio = std::max(row.max_wirr_ratio, r.max_wirr_ratio);
        row.max_drift = std::max(row.max_drift, r.variance_drift);
        row.stable = row.stable && r.stable;
      }
      row.eta = eta;
      row.power_ideal = run.reports.front().power_ideal;
      row.eta_ideal = run.reports.front().eta_ideal;
      row.ok = true;
    } catch (const Error& e) {
      row.error = e.what();
    }
  };
  threads = std::max(1u, threads);
  if (threads == 1 || rows.size() < 2) {
    for (std::size_t i = 0; i < rows.size(); ++i) work(i);
    return rows;
  }
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  for (unsigned w = 0; w < std::min<std::size_t>(threads, rows.size()); ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < rows.size();) work(i);
    });
  for (auto& th : pool) th.join();
  return rows;
}

/// Cycle duration at which irreversible work switches on: midpoint between
/// the shortest row still below `wirr_threshold` (scanning down from the
/// slowest cycle) and the next faster row. NaN if no transition is seen.
inline double transition_tau(std::vector<SweepRow> rows, double wirr_threshold = 0.02) {
  std::erase_if(rows, [](const SweepRow& r) { return !r.ok; });
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) { return a.tau > b.tau; });
  for (std::size_t i = 0; i + 1 < rows.size(); ++i)
    if (rows[i].max_wirr_ratio < wirr_threshold && rows[i + 1].max_wirr_ratio >= wirr_threshold)
      return 0.5 * (rows[i].tau + rows[i + 1].tau);
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace feshbach
