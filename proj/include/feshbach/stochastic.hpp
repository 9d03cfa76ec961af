#pragma once

// Monte-Carlo ensembles of the overdamped OU process and of the Nelson
// process built from a Gaussian wave function. Counter-based random streams
// keep every particle path independent of ensemble size and thread count.

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <thread>
#include <vector>

#include "feshbach/core.hpp"
#include "feshbach/detail/numerics.hpp"

namespace feshbach {

/// Philox4x32-10 block cipher used as a counter-based generator.
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox4x32(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  Block operator()(Block ctr) const {
    std::array<std::uint32_t, 2> k = key_;
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        k[0] += 0x9E3779B9u;
        k[1] += 0xBB67AE85u;
      }
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

  /// Standard normal for (particle, step, stream) via Box-Muller.
  double normal(std::uint64_t particle, std::uint64_t step, std::uint32_t stream) const {
    const Block b = (*this)({static_cast<std::uint32_t>(particle), static_cast<std::uint32_t>(step),
                             static_cast<std::uint32_t>(step >> 32), stream ^ static_cast<std::uint32_t>(particle >> 32)});
    const double u1 = unit(b[0], b[1]);
    const double u2 = unit(b[2], b[3]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static double unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;  // open interval (0, 1)
  }
  std::array<std::uint32_t, 2> key_;
};

struct EnsembleConfig {
  long n_particles = 10000;
  double dt = 2.0 * std::numbers::pi / 500.0;
  std::uint64_t seed = 1;
  double initial_variance = 0.5;

  void validate() const {
    if (n_particles < 1000) throw InvalidArgument("EnsembleConfig: n_particles must be >= 1000");
    if (!(dt > 0.0)) throw InvalidArgument("EnsembleConfig: dt must be > 0");
    if (!(initial_variance > 0.0)) throw InvalidArgument("EnsembleConfig: initial_variance must be > 0");
  }
};

/// Sample statistics at each output time.
struct EnsembleSeries {
  std::vector<double> times;
  std::vector<double> mean;
  std::vector<double> mean_se;
  std::vector<double> variance;     // unbiased sample variance
  std::vector<double> variance_se;  // sqrt(2) variance / sqrt(n)
  long n_particles = 0;
};

namespace detail {

inline constexpr std::uint32_t kInitStream = 0x494E4954u;
inline constexpr std::uint32_t kStepStream = 0x53544550u;
inline constexpr long kParticleBlock = 512;

/// Euler-Maruyama for dx = -a(t) x dt + sqrt(2 D dt) xi on `t_out`.
template <class RateFn>
EnsembleSeries simulate_linear(RateFn&& rate, double diffusion, const EnsembleConfig& cfg,
                               std::span<const double> t_out, unsigned threads) {
  cfg.validate();
  EnsembleSeries out;
  out.n_particles = cfg.n_particles;
  if (t_out.empty()) return out;
  out.times.assign(t_out.begin(), t_out.end());
  const std::size_t m = t_out.size();

  // Shared step table: decay factor and noise amplitude per global step,
  // plus the index of the first step after each output time.
  std::vector<double> decay, amp;
  std::vector<std::size_t> mark{0};
  for (std::size_t k = 0; k + 1 < m; ++k) {
    const double h = t_out[k + 1] - t_out[k];
    if (!(h > 0.0)) throw InvalidArgument("simulate: output times must be increasing");
    const int n = std::max(1, static_cast<int>(std::ceil(h / cfg.dt - 1e-9)));
    const double d = h / n;
    for (int j = 0; j < n; ++j) {
      decay.push_back(1.0 - rate(t_out[k] + j * d) * d);
      amp.push_back(std::sqrt(2.0 * diffusion * d));
    }
    mark.push_back(decay.size());
  }

  const Philox4x32 rng(cfg.seed);
  const long n_blocks = (cfg.n_particles + kParticleBlock - 1) / kParticleBlock;
  std::vector<std::vector<double>> s1(static_cast<std::size_t>(n_blocks)), s2(static_cast<std::size_t>(n_blocks));
  const double x_scale = std::sqrt(cfg.initial_variance);

  auto run_block = [&](long b) {
    auto& a1 = s1[static_cast<std::size_t>(b)];
    auto& a2 = s2[static_cast<std::size_t>(b)];
    a1.assign(m, 0.0);
    a2.assign(m, 0.0);
    const long first = b * kParticleBlock;
    const long last = std::min(cfg.n_particles, first + kParticleBlock);
    for (long i = first; i < last; ++i) {
      const auto id = static_cast<std::uint64_t>(i);
      double x = x_scale * rng.normal(id, 0, kInitStream);
      a1[0] += x;
      a2[0] += x * x;
      for (std::size_t k = 1; k < m; ++k) {
        for (std::size_t s = mark[k - 1]; s < mark[k]; ++s) x = decay[s] * x + amp[s] * rng.normal(id, s, kStepStream);
        a1[k] += x;
        a2[k] += x * x;
      }
    }
  };

  threads = std::max(1u, threads);
  if (threads == 1 || n_blocks == 1) {
    for (long b = 0; b < n_blocks; ++b) run_block(b);
  } else {
    std::atomic<long> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < std::min<unsigned>(threads, static_cast<unsigned>(n_blocks)); ++w)
      pool.emplace_back([&] {
        for (long b; (b = next++) < n_blocks;) run_block(b);
      });
    for (auto& th : pool) th.join();
  }

  const double n = static_cast<double>(cfg.n_particles);
  out.mean.resize(m);
  out.mean_se.resize(m);
  out.variance.resize(m);
  out.variance_se.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    double sum = 0.0, sq = 0.0;
    for (long b = 0; b < n_blocks; ++b) {
      sum += s1[static_cast<std::size_t>(b)][k];
      sq += s2[static_cast<std::size_t>(b)][k];
    }
    const double mu = sum / n;
    const double var = (sq - n * mu * mu) / (n - 1.0);
    out.mean[k] = mu;
    out.variance[k] = var;
    out.mean_se[k] = std::sqrt(var / n);
    out.variance_se[k] = std::sqrt(2.0) * var / std::sqrt(n);
  }
  return out;
}

}  // namespace detail

/// Ensemble of dx = -(kbar/gamma) x dt + dW with <dW^2> = 2 D dt.
template <class KbarFn>
EnsembleSeries simulate_ou(const PhysicalParams& p, KbarFn&& kbar_of_t, const EnsembleConfig& cfg,
                           std::span<const double> t_out, unsigned threads = 1) {
  return detail::simulate_linear([&](double t) { return kbar_of_t(t) / p.drag; }, p.diffusion(), cfg, t_out,
                                 threads);
}

/// Ensemble driven by the Nelson drift (hbar/m)(2 alpha - 1/(2 sigma^2)) x of
/// a Gaussian wave function whose sigma(t), alpha(t) are sampled on `times`.
inline EnsembleSeries simulate_nelson(const PhysicalParams& p, std::span<const double> times,
                                      std::span<const double> sigma, std::span<const double> alpha,
                                      const EnsembleConfig& cfg, std::span<const double> t_out,
                                      unsigned threads = 1) {
  if (times.size() != sigma.size() || times.size() != alpha.size() || times.size() < 2)
    throw InvalidArgument("simulate_nelson: sigma and alpha must be sampled on the same >= 2 times");
  auto rate = [&](double t) {
    const double sg = detail::lerp_at(times, sigma, t);
    const double al = detail::lerp_at(times, alpha, t);
    return -(p.hbar / p.mass) * (2.0 * al - 1.0 / (2.0 * sg * sg));
  };
  return detail::simulate_linear(rate, p.diffusion(), cfg, t_out, threads);
}

/// Fraction of times at which |a - b| <= k * se(a).
inline double fraction_within(const EnsembleSeries& a, std::span<const double> reference, double k = 3.0) {
  if (reference.size() != a.variance.size()) throw InvalidArgument("fraction_within: size mismatch");
  if (reference.empty()) return 1.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < reference.size(); ++i)
    if (std::abs(a.variance[i] - reference[i]) <= k * a.variance_se[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(reference.size());
}

/// Fraction of times at which two independent ensembles agree within k
/// combined standard errors.
inline double fraction_within(const EnsembleSeries& a, const EnsembleSeries& b, double k = 3.0) {
  if (a.variance.size() != b.variance.size()) throw InvalidArgument("fraction_within: size mismatch");
  if (a.variance.empty()) return 1.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < a.variance.size(); ++i) {
    const double se = std::hypot(a.variance_se[i], b.variance_se[i]);
    if (std::abs(a.variance[i] - b.variance[i]) <= k * se) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(a.variance.size());
}

}  // namespace feshbach
