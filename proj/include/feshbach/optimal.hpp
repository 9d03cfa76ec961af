#pragma once

// Optimal stroke synthesis. The classical stiffness kbar(s) minimising
//   duration + lambda * phase cost + mu * |dkbar/ds|^2
// solves a two-point boundary-value problem whose data sit on the
// equilibrium curve kbar = D gamma / s, where the forcing term is singular.
//
// Unknowns are v = log|u| with u = D gamma - s kbar, which pins the transit
// sign. The boundary layers behave like |s - s_end|^(2/3); a cubically graded
// mesh makes the layers resolvable and grid sequencing from 65 nodes gives
// Newton a good start on the fine mesh.

#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "feshbach/bridge.hpp"
#include "feshbach/core.hpp"
#include "feshbach/detail/numerics.hpp"

namespace feshbach {

struct CostWeights {
  double lambda = 0.0;
  double mu = 1.0;

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("CostWeights: lambda must be >= 0");
    if (!(mu > 0.0) || !std::isfinite(mu)) throw InvalidArgument("CostWeights: mu must be > 0");
  }
};

struct StrokeSpec {
  double s_i = 1.0;
  double s_f = 2.0;
  CostWeights weights;
  Knob fixed_knob = Knob::kappa;
  double held_value = 1.0;
  int mesh_size = 2049;

  void validate() const {
    if (!(s_i > 0.0) || !(s_f > 0.0)) throw InvalidArgument("StrokeSpec: endpoint variances must be > 0");
    if (s_i == s_f) throw InvalidArgument("StrokeSpec: s_i and s_f must differ");
    if (mesh_size < 64) throw InvalidArgument("StrokeSpec: mesh_size must be >= 64");
    weights.validate();
  }
};

/// Phase cost density (m^2 / (8 gamma hbar^2)) (D gamma - s kbar) / s^2.
inline double phase_cost(const PhysicalParams& p, double s, double kbar) {
  if (!(s > 0.0)) throw InvalidArgument("phase_cost: s must be > 0");
  return p.mass * p.mass / (8.0 * p.drag * p.hbar * p.hbar) * (p.diffusion() * p.drag - s * kbar) / (s * s);
}

/// Nodes clustered towards both ends as (distance in index space)^power.
inline std::vector<double> graded_mesh(double a, double b, std::size_t n, double power = 3.0) {
  std::vector<double> s(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double xi = static_cast<double>(j) / static_cast<double>(n - 1);
    const double w = xi < 0.5 ? 0.5 * std::pow(2.0 * xi, power) : 1.0 - 0.5 * std::pow(2.0 * (1.0 - xi), power);
    s[j] = a + (b - a) * w;
  }
  s.front() = a;
  s.back() = b;
  return s;
}

struct ElOptions {
  int coarse_mesh = 65;
  int max_iterations = 50;  // per continuation stage
  double tolerance = 1e-11;
  double accept = 1e-8;     // a stalled line search is accepted below this
  double mesh_power = 3.0;
};

struct ElSolution {
  StiffnessProfile profile;    // over variance
  double residual = 0.0;       // max-norm of the scaled discrete residual
  int newton_iterations = 0;   // total over all stages and levels
  int continuation_stages = 0; // 0 when plain Newton sufficed
  int levels = 0;
};

namespace detail {

struct ElProblem {
  const PhysicalParams& p;
  std::vector<double> s;  // mesh including endpoints
  double lambda;
  double mu_eff;          // mu oriented along the transit
  double dir;             // sign(s_f - s_i)
  std::vector<double> a, b, c;  // kbar'' stencil at interior nodes

  ElProblem(const PhysicalParams& pp, std::vector<double> mesh, double lam, double mu, double d)
      : p(pp), s(std::move(mesh)), lambda(lam), mu_eff(d * mu), dir(d) {
    const std::size_t m = s.size() - 2;
    a.resize(m), b.resize(m), c.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      const double hl = s[j + 1] - s[j], hr = s[j + 2] - s[j + 1];
      a[j] = 2.0 / (hl * (hl + hr));
      c[j] = 2.0 / (hr * (hl + hr));
      b[j] = -a[j] - c[j];
    }
  }

  double dg() const { return p.diffusion() * p.drag; }
  double cost_scale() const { return p.mass * p.mass / (8.0 * p.drag * p.hbar * p.hbar); }

  double kbar_at(const std::vector<double>& v, std::size_t node) const {
    if (node == 0) return dg() / s.front();
    if (node == s.size() - 1) return dg() / s.back();
    return (dg() - dir * std::exp(v[node - 1])) / s[node];
  }

  // Residual of 2 mu kbar'' = gamma s/u^2 - lambda c/s, multiplied by u^2/(gamma s).
  void residual(const std::vector<double>& v, std::vector<double>& r, std::vector<double>* kpp = nullptr) const {
    const std::size_t m = v.size();
    r.resize(m);
    if (kpp) kpp->resize(m);
    const double gam = p.drag, lc = lambda * cost_scale();
    for (std::size_t j = 0; j < m; ++j) {
      const double sj = s[j + 1];
      const double u = dir * std::exp(v[j]);
      const double k2 = a[j] * kbar_at(v, j) + b[j] * kbar_at(v, j + 1) + c[j] * kbar_at(v, j + 2);
      if (kpp) (*kpp)[j] = k2;
      r[j] = (2.0 * mu_eff * k2 * u * u - gam * sj + lc * u * u / sj) / (gam * sj);
    }
  }

  static double max_abs(const std::vector<double>& r) {
    double m = 0.0;
    for (double x : r) {
      if (!std::isfinite(x)) return INFINITY;
      m = std::max(m, std::abs(x));
    }
    return m;
  }

  struct Outcome {
    bool converged = false;
    double residual = INFINITY;
    int iterations = 0;
  };

  Outcome newton(std::vector<double>& v, const ElOptions& opt) const {
    const std::size_t m = v.size();
    const double gam = p.drag, lc = lambda * cost_scale();
    std::vector<double> r, kpp, rn, vn(m), lo(m), di(m), up(m), dv(m);
    Outcome out;
    for (int it = 0; it < opt.max_iterations; ++it) {
      residual(v, r, &kpp);
      const double nr = max_abs(r);
      out.residual = nr;
      out.iterations = it;
      if (nr < opt.tolerance) {
        out.converged = true;
        return out;
      }
      for (std::size_t j = 0; j < m; ++j) {
        const double sj = s[j + 1];
        const double u = dir * std::exp(v[j]);
        const double u2 = u * u;
        const double scale = 1.0 / (gam * sj);
        // d kbar_k / d v_k = -u_k / s_k
        di[j] = scale * (2.0 * mu_eff * b[j] * u2 * (-u / sj) + (2.0 * mu_eff * kpp[j] + lc / sj) * 2.0 * u2);
        lo[j] = j > 0 ? scale * 2.0 * mu_eff * a[j] * u2 * (-dir * std::exp(v[j - 1]) / s[j]) : 0.0;
        up[j] = j + 1 < m ? scale * 2.0 * mu_eff * c[j] * u2 * (-dir * std::exp(v[j + 1]) / s[j + 2]) : 0.0;
        dv[j] = -r[j];
      }
      detail::solve_tridiagonal(lo, di, up, dv);
      double t = 1.0;
      bool accepted = false;
      while (t > 1e-10) {
        for (std::size_t j = 0; j < m; ++j) vn[j] = v[j] + t * dv[j];
        residual(vn, rn);
        if (max_abs(rn) < (1.0 - 1e-4 * t) * nr) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        out.converged = nr < opt.accept;
        return out;
      }
      v.swap(vn);
    }
    residual(v, r);
    out.residual = max_abs(r);
    out.iterations = opt.max_iterations;
    out.converged = out.residual < opt.accept;
    return out;
  }
};

// Dominant-balance guess: |u| ~ (gamma s^2 ds^2 / 2 mu)^(1/3) with a
// (bubble)^(2/3) shape that matches the endpoint layers.
inline std::vector<double> el_initial_guess(const PhysicalParams& p, const std::vector<double>& s, double mu) {
  const double si = s.front(), sf = s.back();
  const double ds = std::abs(sf - si), sm = 0.5 * (si + sf);
  const double amp = std::cbrt(p.drag * sm * sm * ds * ds / (2.0 * mu));
  std::vector<double> v(s.size() - 2);
  for (std::size_t j = 0; j < v.size(); ++j) {
    const double x = s[j + 1];
    const double bubble = 4.0 * (x - si) * (sf - x) / (ds * ds);
    v[j] = std::log(amp * std::pow(bubble, 2.0 / 3.0));
  }
  return v;
}

// Carry log|u| from one graded mesh to another by linear interpolation in
// the uniform index coordinate (|u| vanishes at both ends).
inline std::vector<double> el_prolong(const std::vector<double>& v, std::size_t n_old, std::size_t n_new) {
  std::vector<double> xo(n_old), uo(n_old, 0.0);
  for (std::size_t j = 0; j < n_old; ++j) xo[j] = static_cast<double>(j) / static_cast<double>(n_old - 1);
  for (std::size_t j = 1; j + 1 < n_old; ++j) uo[j] = std::exp(v[j - 1]);
  std::vector<double> out(n_new - 2);
  for (std::size_t j = 1; j + 1 < n_new; ++j) {
    const double x = static_cast<double>(j) / static_cast<double>(n_new - 1);
    out[j - 1] = std::log(lerp_at(xo, uo, x));
  }
  return out;
}

}  // namespace detail

/// Solve the Euler-Lagrange boundary-value problem for kbar(s). For a
/// compression the gradient penalty is charged per |ds|, which flips the
/// sign of mu in the oriented equation.
inline ElSolution solve_euler_lagrange(const PhysicalParams& p, const StrokeSpec& spec, const ElOptions& opt = {}) {
  p.validate();
  spec.validate();
  const double dir = spec.s_f > spec.s_i ? 1.0 : -1.0;
  const double lam = spec.weights.lambda, mu = spec.weights.mu;
  const std::size_t n_final = static_cast<std::size_t>(spec.mesh_size);
  std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(opt.coarse_mesh), n_final);

  ElSolution sol;
  auto fail = [&](const std::string& stage, double res) {
    std::ostringstream msg;
    msg << "Newton did not converge (" << stage << ", " << n << " nodes), last residual " << res;
    throw NumericalFailure("optimal", msg.str());
  };

  std::vector<double> v;
  {
    detail::ElProblem prob(p, graded_mesh(spec.s_i, spec.s_f, n, opt.mesh_power), lam, mu, dir);
    v = detail::el_initial_guess(p, prob.s, mu);
    auto res = prob.newton(v, opt);
    sol.newton_iterations += res.iterations;
    if (!res.converged) {
      std::vector<double> mus{10.0 * mu};
      while (mus.back() / 2.0 > mu) mus.push_back(mus.back() / 2.0);
      mus.push_back(mu);
      v = detail::el_initial_guess(p, prob.s, mus.front());
      for (double mm : mus) {
        detail::ElProblem stage(p, prob.s, lam, mm, dir);
        res = stage.newton(v, opt);
        sol.newton_iterations += res.iterations;
        ++sol.continuation_stages;
        if (!res.converged) fail("continuation", res.residual);
      }
    }
    sol.residual = res.residual;
    sol.levels = 1;
  }
  while (n < n_final) {
    const std::size_t next = std::min(2 * n - 1, n_final);
    v = detail::el_prolong(v, n, next);
    n = next;
    detail::ElProblem prob(p, graded_mesh(spec.s_i, spec.s_f, n, opt.mesh_power), lam, mu, dir);
    auto res = prob.newton(v, opt);
    sol.newton_iterations += res.iterations;
    ++sol.levels;
    if (!res.converged) fail("refinement", res.residual);
    sol.residual = res.residual;
  }

  detail::ElProblem prob(p, graded_mesh(spec.s_i, spec.s_f, n, opt.mesh_power), lam, mu, dir);
  StiffnessProfile& pr = sol.profile;
  pr.domain = Domain::variance;
  pr.grid = prob.s;
  pr.kbar.resize(n);
  for (std::size_t j = 0; j < n; ++j) pr.kbar[j] = prob.kbar_at(v, j);
  // dkbar/ds = -u'/s - kbar/s with u' from the three-point non-uniform
  // formula; one-sided at the ends.
  std::vector<double> u(n);
  for (std::size_t j = 0; j < n; ++j) u[j] = prob.dg() - prob.s[j] * pr.kbar[j];
  pr.kbar_prime.resize(n);
  const auto& s = prob.s;
  for (std::size_t j = 0; j < n; ++j) {
    double du;
    if (j == 0) du = (u[1] - u[0]) / (s[1] - s[0]);
    else if (j == n - 1) du = (u[n - 1] - u[n - 2]) / (s[n - 1] - s[n - 2]);
    else {
      const double hl = s[j] - s[j - 1], hr = s[j + 1] - s[j];
      du = (-hr / (hl * (hl + hr))) * u[j - 1] + ((hr - hl) / (hl * hr)) * u[j] + (hl / (hr * (hl + hr))) * u[j + 1];
    }
    pr.kbar_prime[j] = -du / s[j] - pr.kbar[j] / s[j];
  }
  return sol;
}

/// Max-norm of the scaled discrete residual of a variance-domain profile.
inline double el_residual(const PhysicalParams& p, const StiffnessProfile& profile, const CostWeights& w) {
  const double dir = profile.grid.back() > profile.grid.front() ? 1.0 : -1.0;
  detail::ElProblem prob(p, profile.grid, w.lambda, w.mu, dir);
  std::vector<double> v(profile.size() - 2);
  for (std::size_t j = 0; j < v.size(); ++j) {
    const double u = prob.dg() - profile.grid[j + 1] * profile.kbar[j + 1];
    v[j] = std::log(std::abs(u));
  }
  std::vector<double> r;
  prob.residual(v, r);
  return detail::ElProblem::max_abs(r);
}

namespace detail {

// Elapsed time at every node of a variance-domain profile:
// dt = (gamma/2) ds / (D gamma - kbar s), with power-law fits on the three
// nodes nearest each singular endpoint.
inline std::vector<double> node_times(const PhysicalParams& p, const StiffnessProfile& profile) {
  const auto& s = profile.grid;
  const std::size_t n = s.size();
  if (n < 7) throw InvalidArgument("duration: profile needs at least 7 nodes");
  const double dir = s.back() > s.front() ? 1.0 : -1.0;
  const double dg = p.diffusion() * p.drag;
  std::vector<double> f(n, 0.0);
  for (std::size_t j = 1; j + 1 < n; ++j) {
    const double u = dg - s[j] * profile.kbar[j];
    if (u == 0.0 || !std::isfinite(u)) {
      std::ostringstream msg;
      msg << "non-integrable duration: ds/dt vanishes at interior s = " << s[j];
      throw NumericalFailure("optimal", msg.str());
    }
    if (dir * u < 0.0) {
      std::ostringstream msg;
      msg << "interior sign violation at s = " << s[j] << " (variance would move against the transit)";
      throw NumericalFailure("optimal", msg.str());
    }
    f[j] = p.drag / (2.0 * u);
  }
  auto end_piece = [&](std::size_t e, std::size_t k1, std::size_t k2, std::size_t k3) {
    const double x[3] = {std::log(std::abs(s[k1] - s[e])), std::log(std::abs(s[k2] - s[e])),
                         std::log(std::abs(s[k3] - s[e]))};
    const double y[3] = {std::log(std::abs(f[k1])), std::log(std::abs(f[k2])), std::log(std::abs(f[k3]))};
    const double expo = fit_line(x, y).slope;
    if (!(expo > -1.0)) {
      std::ostringstream msg;
      msg << "non-integrable endpoint at s = " << s[e] << " (fitted exponent " << expo << ")";
      throw NumericalFailure("optimal", msg.str());
    }
    const double x1 = std::abs(s[k1] - s[e]);
    const double coeff = std::abs(f[k1]) / std::pow(x1, expo);
    return coeff * std::pow(x1, expo + 1.0) / (expo + 1.0);
  };
  std::vector<double> t(n, 0.0);
  t[1] = end_piece(0, 1, 2, 3);
  for (std::size_t j = 1; j + 2 < n; ++j) t[j + 1] = t[j] + 0.5 * (f[j] + f[j + 1]) * (s[j + 1] - s[j]);
  t[n - 1] = t[n - 2] + end_piece(n - 1, n - 2, n - 3, n - 4);
  return t;
}

}  // namespace detail

/// Stroke duration (gamma/2) * integral ds / (D gamma - kbar s).
inline double duration(const PhysicalParams& p, const StiffnessProfile& profile) {
  if (profile.domain != Domain::variance) throw InvalidArgument("duration: expected a variance-domain profile");
  return detail::node_times(p, profile).back();
}

struct Reparameterized {
  VarianceTrajectory trajectory;  // uniform time grid
  StiffnessProfile over_time;
  std::vector<double> node_times; // t(s) on the variance mesh
};

/// Convert kbar(s) into kbar(t) and s(t) on a uniform grid of `samples`
/// points spanning [0, duration].
inline Reparameterized reparameterize(const PhysicalParams& p, const StiffnessProfile& profile,
                                      std::size_t samples = 2001) {
  if (profile.domain != Domain::variance) throw InvalidArgument("reparameterize: expected a variance-domain profile");
  if (samples < 5) throw InvalidArgument("reparameterize: need at least 5 time samples");
  Reparameterized out;
  out.node_times = detail::node_times(p, profile);
  const auto& tn = out.node_times;
  const std::size_t n = tn.size();
  std::vector<double> kdot(n, 0.0);
  for (std::size_t j = 1; j + 1 < n; ++j)
    kdot[j] = profile.kbar_prime[j] * variance_rate(p, profile.kbar[j], profile.grid[j]);
  detail::Pchip s_of_t(tn, profile.grid), k_of_t(tn, profile.kbar), kd_of_t(tn, kdot);

  const double total = tn.back();
  std::vector<double> t = detail::linspace(0.0, total, samples);
  auto& tr = out.trajectory;
  tr.times = t;
  out.over_time.domain = Domain::time;
  out.over_time.grid = t;
  for (std::size_t i = 0; i < samples; ++i) {
    double s = s_of_t(t[i]);
    double k = k_of_t(t[i]);
    double kd = kd_of_t(t[i]);
    if (i == 0 || i + 1 == samples) {
      s = i == 0 ? profile.grid.front() : profile.grid.back();
      k = i == 0 ? profile.kbar.front() : profile.kbar.back();
      kd = 0.0;
    }
    tr.s.push_back(s);
    tr.s_dot.push_back(variance_rate(p, k, s));
    out.over_time.kbar.push_back(k);
    out.over_time.kbar_prime.push_back(kd);
  }
  return out;
}

struct Stroke {
  StrokeSpec spec;
  ElSolution solution;
  Reparameterized timing;
  Protocol protocol;
  double duration = 0.0;
  double stationarity_first = 0.0;  // relative steady-state residual at t = 0
  double stationarity_last = 0.0;
};

/// Full pipeline: Euler-Lagrange solve, time reparameterisation, bridge.
inline Stroke synthesize_stroke(const PhysicalParams& p, const StrokeSpec& spec, long atom_count,
                                std::size_t samples = 2001, const ElOptions& opt = {}) {
  Stroke st;
  st.spec = spec;
  st.solution = solve_euler_lagrange(p, spec, opt);
  st.timing = reparameterize(p, st.solution.profile, samples);
  st.duration = st.timing.node_times.back();
  st.protocol = controls_from_classical(p, st.timing.over_time, st.timing.trajectory, spec.fixed_knob,
                                        spec.held_value, atom_count);
  const double q = p.hbar * p.hbar / (4.0 * p.mass);
  st.stationarity_first = check_stationarity(p, st.protocol, Endpoint::first, atom_count) / q;
  st.stationarity_last = check_stationarity(p, st.protocol, Endpoint::last, atom_count) / q;
  return st;
}

}  // namespace feshbach
