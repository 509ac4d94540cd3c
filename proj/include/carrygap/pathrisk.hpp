#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "carrygap/parallel.hpp"
#include "carrygap/rng.hpp"

namespace carrygap {

inline constexpr double kTwoOverPi = 0.63661977236758134308;  // 2/pi

// Time-averaged expected support of a driftless arithmetic Brownian motion,
// priced in basis points of notional and scaled by the funding rate:
//   1e4 * (rate_pct/100) * (2/3) * (vol_pct/100) * sqrt(2*tau/pi).
// The factor ordering is fixed so that doubling tau by a power of four scales
// the result by exactly a power of two.
inline double gbm_term(double rate_pct, double vol_pct, double tau) {
  if (!(tau >= 0.0)) throw std::runtime_error("gbm_term: tau must be non-negative");
  return 1e4 * (rate_pct / 100.0) * (2.0 / 3.0) * (vol_pct / 100.0) *
         std::sqrt(kTwoOverPi * tau);
}

// E[ max_{s<=t} (-X_s)^+ ] = sigma * sqrt(2t/pi) for X a driftless Brownian
// motion with volatility sigma.
inline double expected_support(double sigma, double t) {
  if (!(t >= 0.0)) throw std::runtime_error("expected_support: t must be non-negative");
  return sigma * std::sqrt(kTwoOverPi * t);
}

// (1/T) * integral_0^T E[L_t] dt = (2/3) * sigma * sqrt(2T/pi).
inline double avg_commitment(double sigma, double horizon) {
  if (!(horizon > 0.0)) throw std::runtime_error("avg_commitment: horizon must be positive");
  return (2.0 / 3.0) * sigma * std::sqrt(kTwoOverPi * horizon);
}

// ---------------------------------------------------------------------------
// Monte Carlo check of the two closed forms above
// ---------------------------------------------------------------------------

struct McConfig {
  double sigma = 0.2;
  double horizon = 1.0;
  long n_paths = 200000;
  long n_steps = 2000;
  std::uint64_t seed = 7;
};

struct McResult {
  double mean_support_at_horizon;  // estimate of E[L_T]
  double se_support_at_horizon;
  double mean_time_avg_support;  // estimate of (1/N) sum_k L_{t_k}
  double se_time_avg_support;
  double closed_form_support;   // sigma*sqrt(2T/pi)
  double closed_form_time_avg;  // (2/3)*sigma*sqrt(2T/pi)
  long n_paths;
  long n_steps;
};

namespace detail {

// Paths are simulated in fixed-size blocks; block b draws from its own
// substream derived from (seed, b). Workers split whole blocks and the
// per-block partial sums are reduced in block order, so the estimate is
// bit-identical for any worker count.
inline constexpr long kMcBlock = 8192;

struct BlockSums {
  long double sum_lt = 0.0L, sumsq_lt = 0.0L;
  long double sum_avg = 0.0L, sumsq_avg = 0.0L;
};

inline void mc_block(const McConfig& cfg, long first_path, long n_paths_in_block,
                     std::uint64_t block_id, BlockSums& out) {
  (void)first_path;
  Rng rng(derive_stream(cfg.seed, block_id));
  const double dt = cfg.horizon / double(cfg.n_steps);
  const double step_sd = cfg.sigma * std::sqrt(dt);
  for (long p = 0; p < n_paths_in_block; ++p) {
    double x = 0.0;
    double run_min = 0.0;
    long double sum_l = 0.0L;
    for (long k = 0; k < cfg.n_steps; ++k) {
      x += step_sd * rng.normal();
      if (x < run_min) run_min = x;
      sum_l += -run_min;  // L_t = max over monitored s<=t of (-X_s)^+, and L>=0
    }
    const double lt = -run_min;
    const double avg = double(sum_l / (long double)(cfg.n_steps));
    out.sum_lt += lt;
    out.sumsq_lt += (long double)(lt)*lt;
    out.sum_avg += avg;
    out.sumsq_avg += (long double)(avg)*avg;
  }
}

}  // namespace detail

inline McResult mc_support(const McConfig& cfg, int workers = 1) {
  if (!(cfg.sigma >= 0.0)) throw std::runtime_error("mc_support: sigma must be non-negative");
  if (!(cfg.horizon > 0.0)) throw std::runtime_error("mc_support: horizon must be positive");
  if (cfg.n_paths < 1 || cfg.n_steps < 1)
    throw std::runtime_error("mc_support: need at least one path and one step");

  const long n_blocks = (cfg.n_paths + detail::kMcBlock - 1) / detail::kMcBlock;
  std::vector<detail::BlockSums> sums(static_cast<size_t>(n_blocks));
  parallel_for(size_t(n_blocks), workers, [&](size_t b) {
    const long first = long(b) * detail::kMcBlock;
    const long count = std::min(detail::kMcBlock, cfg.n_paths - first);
    detail::mc_block(cfg, first, count, std::uint64_t(b), sums[b]);
  });

  detail::BlockSums tot;
  for (const auto& s : sums) {
    tot.sum_lt += s.sum_lt;
    tot.sumsq_lt += s.sumsq_lt;
    tot.sum_avg += s.sum_avg;
    tot.sumsq_avg += s.sumsq_avg;
  }
  const long double n = (long double)(cfg.n_paths);
  auto finish = [&](long double sum, long double sumsq, double& mean, double& se) {
    mean = double(sum / n);
    const long double var = n > 1 ? (sumsq - sum * sum / n) / (n - 1) : 0.0L;
    se = double(std::sqrt(double(var / n)));
  };
  McResult r{};
  finish(tot.sum_lt, tot.sumsq_lt, r.mean_support_at_horizon, r.se_support_at_horizon);
  finish(tot.sum_avg, tot.sumsq_avg, r.mean_time_avg_support, r.se_time_avg_support);
  r.closed_form_support = expected_support(cfg.sigma, cfg.horizon);
  r.closed_form_time_avg = avg_commitment(cfg.sigma, cfg.horizon);
  r.n_paths = cfg.n_paths;
  r.n_steps = cfg.n_steps;
  return r;
}

// Single-path trace on a caller-supplied increment sequence; used by tests to
// check pathwise properties (monotone support, grid-refinement behaviour).
inline void support_trace(const std::vector<double>& increments, std::vector<double>& x_out,
                          std::vector<double>& l_out) {
  x_out.clear();
  l_out.clear();
  double x = 0.0, run_min = 0.0;
  for (double dx : increments) {
    x += dx;
    if (x < run_min) run_min = x;
    x_out.push_back(x);
    l_out.push_back(-run_min);
  }
}

}  // namespace carrygap
