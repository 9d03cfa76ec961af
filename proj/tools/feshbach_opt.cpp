// feshbach-opt: command-line driver for protocol synthesis, GPE validation,
// engine cycles, power sweeps and Monte-Carlo checks.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "feshbach/bridge.hpp"
#include "feshbach/engine.hpp"
#include "feshbach/gpe.hpp"
#include "feshbach/io.hpp"
#include "feshbach/optimal.hpp"
#include "feshbach/scenario.hpp"
#include "feshbach/stochastic.hpp"
#include "feshbach/variational.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace feshbach;

namespace {

struct RunContext {
  std::string command;
  Scenario sc;
  fs::path out;
  unsigned threads = 1;
  std::optional<std::uint64_t> seed;

  Provenance provenance() const {
    Provenance p{{"tool", "feshbach-opt " + command}, {"config", sc.source}};
    p.insert(p.end(), sc.resolved.begin(), sc.resolved.end());
    if (seed) p.emplace_back("seed", std::to_string(*seed));
    return p;
  }

  json config_json() const {
    json c = json::object();
    for (const auto& [k, v] : provenance()) c[k] = v;
    return c;
  }

  void write_json(const std::string& name, json body) const {
    body["config"] = config_json();
    std::ofstream f(out / name);
    if (!f) throw Error("cannot write '" + (out / name).string() + "'");
    f << body.dump(2) << '\n';
  }

  std::string path(const std::string& name) const { return (out / name).string(); }
};

std::string short_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

template <class T>
const T& require(const std::optional<T>& block, const char* section, const std::string& cmd) {
  if (!block) throw ConfigError("config: '" + cmd + "' needs a [" + section + "] section");
  return *block;
}

StrokeSpec stroke_spec(const StrokeBlock& b, double mu, const EngineSettings& e) {
  StrokeSpec sp;
  sp.s_i = b.s_i;
  sp.s_f = b.s_f;
  sp.weights = {b.lambda, mu};
  sp.fixed_knob = b.vary == Knob::g ? Knob::kappa : Knob::g;
  sp.held_value = b.held;
  sp.mesh_size = e.mesh_size;
  return sp;
}

json flags_json(const Protocol& pr) {
  return {{"negative_coupling", pr.flags.negative_coupling}, {"trap_inversion", pr.flags.trap_inversion}};
}

double trap_period(double kappa, const PhysicalParams& p) { return 2.0 * std::numbers::pi / std::sqrt(kappa / p.mass); }

// ---------------------------------------------------------------------------

int cmd_equilibrium(const RunContext& ctx) {
  const auto& sc = ctx.sc;
  const auto& b = require(sc.equilibrium, "equilibrium", ctx.command);
  const TrapConfig cfg{b.kappa, b.g, sc.atoms};
  cfg.validate();
  const double sigma = equilibrium_width(sc.params, cfg);
  const auto grid = SpatialGrid::for_width(sigma, sc.engine.grid_points, sc.engine.grid_factor);
  const auto gs = ground_state(sc.params, cfg, grid, sc.engine.ground);
  const double gap = gs.obs.x2 / (sigma * sigma) - 1.0;
  json j = {{"kappa", b.kappa},
            {"g", b.g},
            {"atoms", sc.atoms},
            {"ansatz", {{"sigma", sigma}, {"s", sigma * sigma}, {"energy", ansatz_energy(sc.params, {sigma, 0.0}, cfg)}}},
            {"gpe", {{"sigma", std::sqrt(gs.obs.x2)}, {"s", gs.obs.x2}, {"energy", gs.obs.energy}, {"steps", gs.steps}}},
            {"relative_variance_gap", gap},
            {"si", {{"sigma_m", to_si(sigma, QuantityKind::length, sc.scale)},
                    {"gpe_sigma_m", to_si(std::sqrt(gs.obs.x2), QuantityKind::length, sc.scale)}}}};
  ctx.write_json("equilibrium.json", j);
  std::cout << "sigma_eq (ansatz) = " << sigma << "  s_eq = " << sigma * sigma << "\n"
            << "sigma (GPE)       = " << std::sqrt(gs.obs.x2) << "  <x^2> = " << gs.obs.x2 << "\n"
            << "energy ansatz/GPE = " << j["ansatz"]["energy"].get<double>() << " / " << gs.obs.energy << "\n"
            << "relative variance gap = " << gap << "\n";
  return 0;
}

int cmd_synthesize(const RunContext& ctx) {
  const auto& sc = ctx.sc;
  const auto& b = require(sc.stroke, "stroke", ctx.command);
  if (b.mu.empty()) throw ConfigError("config: [stroke] mu: need at least one value");
  json rows = json::array();
  for (double mu : b.mu) {
    const auto sp = stroke_spec(b, mu, sc.engine);
    sp.validate();
    const auto st = synthesize_stroke(sc.params, sp, sc.atoms, sc.engine.time_samples);
    const std::string file = "protocol_mu" + short_number(mu) + ".csv";
    auto prov = ctx.provenance();
    prov.emplace_back("stroke.mu_selected", short_number(mu));
    write_protocol_csv(ctx.path(file), st.protocol, prov);
    rows.push_back({{"mu", mu},
                    {"duration", st.duration},
                    {"duration_s", to_si(st.duration, QuantityKind::time, sc.scale)},
                    {"el_residual", st.solution.residual},
                    {"newton_iterations", st.solution.newton_iterations},
                    {"continuation_stages", st.solution.continuation_stages},
                    {"stationarity_first", st.stationarity_first},
                    {"stationarity_last", st.stationarity_last},
                    {"flags", flags_json(st.protocol)},
                    {"file", file}});
    std::cout << "mu = " << mu << "  duration = " << st.duration << "  residual = " << st.solution.residual
              << "  -> " << file << "\n";
  }
  ctx.write_json("synthesize.json", {{"strokes", rows}});
  return 0;
}

int cmd_validate(const RunContext& ctx, const std::string& protocol_file) {
  const auto& sc = ctx.sc;
  Protocol pr;
  std::string origin;
  std::optional<double> excursion_target;
  if (!protocol_file.empty()) {
    pr = read_protocol_csv(protocol_file);
    origin = protocol_file;
  } else if (sc.step) {
    const auto& b = *sc.step;
    const UpDownStep k(b.kbar_i, b.kbar_f, b.t_up, b.t_down, b.rise);
    pr = schedule_protocol(sc.params, k, b.s0, b.duration, b.samples, b.vary == Knob::g ? Knob::kappa : Knob::g,
                           b.held, sc.atoms);
    origin = "step";
    excursion_target = sc.params.diffusion() * sc.params.drag / b.kbar_f;
  } else if (sc.stroke && !sc.stroke->mu.empty()) {
    const auto sp = stroke_spec(*sc.stroke, sc.stroke->mu.front(), sc.engine);
    pr = synthesize_stroke(sc.params, sp, sc.atoms, sc.engine.time_samples).protocol;
    origin = "stroke mu=" + short_number(sc.stroke->mu.front());
  } else {
    throw ConfigError("config: 'validate' needs --protocol, a [step] or a [stroke] section");
  }

  const TrapConfig start{pr.kappa.front(), pr.g.front(), sc.atoms};
  const double s_max = *std::max_element(pr.s_pred.begin(), pr.s_pred.end());
  const auto grid = SpatialGrid::for_width(std::sqrt(s_max), sc.engine.grid_points, sc.engine.grid_factor);
  const auto gs = ground_state(sc.params, start, grid, sc.engine.ground);
  const double hold = pr.kappa.back() > 0.0 ? sc.hold_periods * trap_period(pr.kappa.back(), sc.params) : 0.0;

  PropagateOptions opt;
  opt.dt = sc.engine.dt;
  opt.hold_after = hold;
  const auto tr = propagate(sc.params, gs.psi, pr, sc.atoms, opt);

  // Self-convergence: same run at half the step.
  PropagateOptions fine = opt;
  fine.dt = 0.5 * opt.dt;
  const auto tr2 = propagate(sc.params, gs.psi, pr, sc.atoms, fine);
  double conv = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double ref = detail::lerp_at(tr2.times, tr2.x2, tr.times[i]);
    conv = std::max(conv, std::abs(tr.x2[i] / ref - 1.0));
  }
  constexpr double kConvergenceTolerance = 1e-4;
  const bool converged = conv <= kConvergenceTolerance;
  if (!converged)
    std::cerr << "warning: time step not converged: <x^2> changes by " << conv << " (relative) when dt is halved\n";

  CsvWriter w(ctx.path("observables.csv"), ctx.provenance(),
              {"t [1/w0]", "kappa [m w0^2]", "g [hbar w0 L_ho]", "x2_gpe [L_ho^2]", "s_pred [L_ho^2]", "rel_dev",
               "energy [hbar w0]", "norm"});
  double max_dev = 0.0;
  std::vector<double> plateau, t_all, s_all;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double t = tr.times[i];
    const double s = detail::lerp_at(pr.times, pr.s_pred, std::min(t, pr.times.back()));
    const double dev = tr.x2[i] / s - 1.0;
    if (t <= tr.protocol_end + 1e-12) {
      max_dev = std::max(max_dev, std::abs(dev));
      t_all.push_back(t);
      s_all.push_back(tr.x2[i]);
    } else {
      plateau.push_back(tr.x2[i]);
    }
    w.row({t, tr.kappa[i], tr.g[i], tr.x2[i], s, dev, tr.energy[i], tr.norm[i]});
  }
  std::size_t end_idx = 0;
  while (end_idx + 1 < tr.size() && tr.times[end_idx + 1] <= tr.protocol_end + 1e-12) ++end_idx;
  const double work = work_integral(tr, sc.atoms, 0, end_idx);
  const double d_energy = tr.energy[end_idx] - tr.energy[0];

  json j = {{"protocol", origin},
            {"duration", pr.duration()},
            {"hold", hold},
            {"dt", opt.dt},
            {"max_relative_deviation", max_dev},
            {"plateau_relative_std", plateau.empty() ? 0.0 : detail::stddev(plateau) / detail::mean(plateau)},
            {"max_step_norm_change", tr.max_step_norm_change},
            {"max_boundary_ratio", tr.max_boundary_ratio},
            {"work", work},
            {"energy_change", d_energy},
            {"work_closure", d_energy != 0.0 ? std::abs(work - d_energy) / std::abs(d_energy) : std::abs(work)},
            {"dt_convergence", conv},
            {"converged", converged},
            {"flags", flags_json(pr)}};
  if (excursion_target) {
    const double ex = excursion_time(pr.times, pr.s_pred, pr.s_pred.front(), *excursion_target, 0.02);
    j["excursion_time_theory"] = std::isnan(ex) ? json(nullptr) : json(ex);
    const double ex_gpe = excursion_time(t_all, s_all, tr.x2.front(), *excursion_target, 0.02);
    j["excursion_time_gpe"] = std::isnan(ex_gpe) ? json(nullptr) : json(ex_gpe);
  }
  ctx.write_json("validate.json", j);
  std::cout << "max relative deviation = " << max_dev << "  plateau std = " << j["plateau_relative_std"].get<double>()
            << "  dt convergence = " << conv << "\n";
  return 0;
}

json report_json(const CycleReport& r) {
  json strokes = json::array();
  for (const auto& s : r.strokes)
    strokes.push_back({{"label", s.label}, {"work", s.work}, {"delta", s.delta}, {"w_irr", s.w_irr}, {"duration", s.duration}});
  return {{"cycle", r.index},
          {"strokes", strokes},
          {"tau", r.tau},
          {"eta", r.eta_defined ? json(r.eta) : json(nullptr)},
          {"eta_ideal", std::isnan(r.eta_ideal) ? json(nullptr) : json(r.eta_ideal)},
          {"power", r.power},
          {"power_ideal", r.power_ideal},
          {"power_W", r.power_watts},
          {"power_qW", r.power_qw},
          {"endpoint_variance", r.endpoint_variance},
          {"cycle_mean_variance", r.cycle_mean_variance},
          {"variance_drift", r.variance_drift},
          {"snapshot_drift", r.snapshot_drift},
          {"rms_variance_error", r.rms_variance_error},
          {"max_variance_error", r.max_variance_error},
          {"energy_closure", r.energy_closure},
          {"max_wirr_ratio", r.max_wirr_ratio},
          {"stable", r.stable}};
}

int cmd_cycle(const RunContext& ctx) {
  const auto& sc = ctx.sc;
  const auto& spec = require(sc.cycle, "cycle", ctx.command);
  const Cycle cy = build_cycle(sc.params, spec, sc.engine);
  const double hold = sc.hold_periods * trap_period(spec.kappa_i, sc.params);
  const CycleRun run = run_cycles(sc.params, cy, spec.repeats, hold, sc.engine);

  json corners = json::array();
  for (const auto& c : cy.corners)
    corners.push_back({{"label", std::string(1, c.label)}, {"kappa", c.trap.kappa}, {"g", c.trap.g},
                       {"s_ansatz", c.s_eq}, {"x2_gpe", c.gpe_x2}, {"energy_gpe", c.gpe_energy}});
  json strokes = json::array();
  for (const auto& s : cy.strokes)
    strokes.push_back({{"label", s.label}, {"varied", std::string(to_string(s.varied))}, {"duration", s.duration()},
                       {"flags", s.stroke ? flags_json(s.stroke->protocol) : json(nullptr)}});
  json reports = json::array();
  for (const auto& r : run.reports) reports.push_back(report_json(r));
  ctx.write_json("cycle.json", {{"direction", std::string(to_string(spec.direction))},
                                {"tau", cy.tau},
                                {"tau_s", to_si(cy.tau, QuantityKind::time, sc.scale)},
                                {"corners", corners},
                                {"strokes", strokes},
                                {"reports", reports},
                                {"hold", {{"duration", run.hold_duration},
                                          {"mean_variance", run.hold_mean},
                                          {"relative_std", run.hold_relative_std}}}});

  CsvWriter w(ctx.path("trajectory.csv"), ctx.provenance(),
              {"t [1/w0]", "kappa [m w0^2]", "g [hbar w0 L_ho]", "x2_gpe [L_ho^2]", "s_pred [L_ho^2]", "energy [hbar w0]"});
  const auto& tr = run.trajectory;
  for (std::size_t i = 0; i < tr.size(); ++i)
    w.row({tr.times[i], tr.kappa[i], tr.g[i], tr.x2[i], run.theory_s[i], tr.energy[i]});

  for (const auto& r : run.reports)
    std::cout << "cycle " << r.index << ": eta = " << r.eta << "  P = " << r.power << " (" << r.power_qw
              << " qW)  drift = " << r.variance_drift << "  rms = " << r.rms_variance_error
              << (r.stable ? "  stable" : "  UNSTABLE") << "\n";
  std::cout << "hold plateau relative std = " << run.hold_relative_std << "\n";
  return 0;
}

int cmd_sweep(const RunContext& ctx) {
  const auto& sc = ctx.sc;
  const auto& sw = require(sc.sweep, "sweep", ctx.command);
  const auto& spec = *sc.cycle;
  const auto rows = power_sweep(sc.params, spec, sw.scalings, sc.engine, sw.cycles, ctx.threads);

  CsvWriter w(ctx.path("sweep.csv"), ctx.provenance(),
              {"scaling", "tau [1/w0]", "power [hbar w0^2]", "power [qW]", "eta", "power_ideal [hbar w0^2]",
               "eta_ideal", "max_wirr_ratio", "max_drift", "stable", "ok"});
  json jr = json::array();
  for (const auto& r : rows) {
    w.row({r.scaling, r.tau, r.power, r.power_qw, r.eta, r.power_ideal, r.eta_ideal, r.max_wirr_ratio, r.max_drift,
           r.stable ? 1.0 : 0.0, r.ok ? 1.0 : 0.0});
    json row = {{"scaling", r.scaling},         {"tau", r.tau},
                {"power", r.power},             {"power_qW", r.power_qw},
                {"eta", r.eta},                 {"power_ideal", r.power_ideal},
                {"eta_ideal", r.eta_ideal},     {"max_wirr_ratio", r.max_wirr_ratio},
                {"max_drift", r.max_drift},     {"stable", r.stable},
                {"ok", r.ok}};
    if (!r.ok) row["error"] = r.error;
    jr.push_back(row);
    std::cout << "scaling " << r.scaling << ": tau = " << r.tau << "  P = " << r.power << "  eta = " << r.eta
              << (r.ok ? (r.stable ? "  stable" : "  unstable") : "  failed: " + r.error) << "\n";
  }
  const double t_star = transition_tau(rows);
  ctx.write_json("sweep.json", {{"rows", jr},
                                {"transition_tau", std::isnan(t_star) ? json(nullptr) : json(t_star)},
                                {"longest_trap_period", trap_period(std::min(spec.kappa_i, spec.kappa_f), sc.params)}});
  return 0;
}

json series_json(const EnsembleSeries& s, double frac) {
  return {{"n_particles", s.n_particles}, {"fraction_within_3se", frac}, {"pass", frac >= 0.95}};
}

void write_series(const RunContext& ctx, const std::string& name, const EnsembleSeries& s,
                  const std::vector<double>& ref) {
  CsvWriter w(ctx.path(name), ctx.provenance(),
              {"t [1/w0]", "mean [L_ho]", "variance [L_ho^2]", "variance_se [L_ho^2]", "reference [L_ho^2]"});
  for (std::size_t i = 0; i < s.times.size(); ++i) w.row({s.times[i], s.mean[i], s.variance[i], s.variance_se[i], ref[i]});
}

int cmd_mc(const RunContext& ctx) {
  const auto& sc = ctx.sc;
  McBlock b = require(sc.mc, "mc", ctx.command);
  if (ctx.seed) b.ensemble.seed = *ctx.seed;
  const auto& p = sc.params;
  const double dg = p.diffusion() * p.drag;
  const auto t = detail::linspace(0.0, b.duration, b.samples);
  json j = json::object();
  const bool all = b.check == "all";

  if (all || b.check == "stationary") {
    EnsembleConfig cfg = b.ensemble;
    cfg.initial_variance = dg / b.kbar;
    const auto ou = simulate_ou(p, [&](double) { return b.kbar; }, cfg, t, ctx.threads);
    const std::vector<double> ref(t.size(), cfg.initial_variance);
    const double sg = std::sqrt(cfg.initial_variance);
    const std::vector<double> nt{0.0, b.duration}, ns{sg, sg}, na{0.0, 0.0};
    cfg.seed = b.ensemble.seed + 1;
    const auto ne = simulate_nelson(p, nt, ns, na, cfg, t, ctx.threads);
    write_series(ctx, "mc_stationary.csv", ou, ref);
    j["stationary"] = {{"ou", series_json(ou, fraction_within(ou, ref))},
                       {"nelson", series_json(ne, fraction_within(ne, ref))}};
  }
  if (all || b.check == "quench") {
    EnsembleConfig cfg = b.ensemble;
    cfg.initial_variance = dg / b.kbar;
    const auto ou = simulate_ou(p, [&](double) { return b.kbar_f; }, cfg, t, ctx.threads);
    std::vector<double> ref;
    for (double x : t) ref.push_back(variance_relaxation(p, b.kbar_f, cfg.initial_variance, x));
    write_series(ctx, "mc_quench.csv", ou, ref);
    j["quench"] = series_json(ou, fraction_within(ou, ref));
  }
  if (all || b.check == "protocol") {
    const auto& sb = require(sc.stroke, "stroke", "mc check=protocol");
    if (sb.mu.empty()) throw ConfigError("config: [stroke] mu: need at least one value");
    const auto st = synthesize_stroke(p, stroke_spec(sb, sb.mu.front(), sc.engine), sc.atoms, sc.engine.time_samples);
    const auto& pr = st.protocol;
    auto kf = [&](double x) { return detail::lerp_at(pr.times, pr.kappa, x); };
    auto gf = [&](double x) { return detail::lerp_at(pr.times, pr.g, x); };
    const auto states = ermakov_evolve(p, GaussianState{std::sqrt(pr.s_pred.front()), 0.0}, kf, gf, sc.atoms, pr.times);
    std::vector<double> sg, al;
    for (const auto& s : states) {
      sg.push_back(s.sigma);
      al.push_back(s.alpha(p));
    }
    const auto to = detail::linspace(0.0, pr.duration(), b.samples);
    EnsembleConfig cfg = b.ensemble;
    cfg.initial_variance = pr.s_pred.front();
    const auto ne = simulate_nelson(p, pr.times, sg, al, cfg, to, ctx.threads);
    cfg.seed = b.ensemble.seed + 1;
    const auto& ot = st.timing.over_time;
    const auto ou = simulate_ou(p, [&](double x) { return detail::lerp_at(ot.grid, ot.kbar, x); }, cfg, to, ctx.threads);
    std::vector<double> ref;
    for (double x : to) ref.push_back(detail::lerp_at(pr.times, pr.s_pred, x));
    write_series(ctx, "mc_protocol_nelson.csv", ne, ref);
    write_series(ctx, "mc_protocol_ou.csv", ou, ref);
    const double f = fraction_within(ne, ou);
    j["protocol"] = {{"mu", sb.mu.front()},
                     {"nelson_vs_ou", {{"fraction_within_3se", f}, {"pass", f >= 0.95}}},
                     {"ou_vs_theory", series_json(ou, fraction_within(ou, ref))},
                     {"nelson_vs_theory", series_json(ne, fraction_within(ne, ref))}};
  }
  j["seed"] = b.ensemble.seed;
  ctx.write_json("mc.json", j);
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal Feshbach-engine protocol synthesis and GPE validation"};
  app.require_subcommand(1);
  std::string config, out_dir, protocol_file;
  unsigned threads = 1;
  std::uint64_t seed = 0;
  const char* names[] = {"equilibrium", "synthesize", "validate", "cycle", "sweep", "mc"};
  const char* help[] = {"equilibrium width and energy (ansatz and GPE)",
                        "optimal stroke protocols",
                        "GPE run of a protocol against the predicted variance",
                        "engine cycles with work, efficiency and power",
                        "power and efficiency versus cycle duration",
                        "Monte-Carlo checks of the OU and Nelson processes"};
  std::vector<CLI::App*> subs;
  std::vector<CLI::Option*> seed_opts;
  for (int i = 0; i < 6; ++i) {
    auto* s = app.add_subcommand(names[i], help[i]);
    s->add_option("--config", config, "scenario file")->required()->check(CLI::ExistingFile);
    s->add_option("--out", out_dir, "output directory (overrides [output] dir)");
    seed_opts.push_back(s->add_option("--seed", seed, "random seed (mc)"));
    s->add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 1024u));
    if (std::string(names[i]) == "validate") s->add_option("--protocol", protocol_file, "protocol CSV to validate");
    subs.push_back(s);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunContext ctx;
    ctx.threads = threads;
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) {
        ctx.command = names[i];
        if (seed_opts[i]->count()) ctx.seed = seed;
      }
    ctx.sc = load_scenario(config);
    ctx.out = out_dir.empty() ? fs::path(ctx.sc.out_dir) : fs::path(out_dir);
    fs::create_directories(ctx.out);

    if (ctx.command == "equilibrium") return cmd_equilibrium(ctx);
    if (ctx.command == "synthesize") return cmd_synthesize(ctx);
    if (ctx.command == "validate") return cmd_validate(ctx, protocol_file);
    if (ctx.command == "cycle") return cmd_cycle(ctx);
    if (ctx.command == "sweep") return cmd_sweep(ctx);
    return cmd_mc(ctx);
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
