#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "carrygap/types.hpp"

namespace carrygap {

// Annualized log gap between the benchmark discount factor and the
// option-implied one, in basis points:
//   cg = ln(df_benchmark / b_implied) / tau,  cg_bp = 1e4 * cg.
// Positive when the options embed more carry than the benchmark curve.
// Computed as a difference of logs so swapping the arguments flips the sign
// exactly and rescaling tau by powers of two rescales the result exactly.
struct CarryGap {
  double cg;
  double cg_bp;
};

inline CarryGap carry_gap(double df_benchmark, double b_implied, double tau) {
  if (!(tau > 0.0)) throw std::runtime_error("carry_gap: tau must be positive");
  if (!(df_benchmark > 0.0) || !(b_implied > 0.0))
    throw std::runtime_error("carry_gap: discount factors must be positive");
  const double cg = (std::log(df_benchmark) - std::log(b_implied)) / tau;
  return {cg, 1e4 * cg};
}

// Maturity bucket edges in months, left-closed: [1,2),[2,3),[3,5),[5,7),
// [7,10),[10,14),[14,21),[21,inf). Months are tau * 12.
inline MaturityBin assign_bin(double tau) {
  if (!(tau > 0.0)) throw std::runtime_error("assign_bin: tau must be positive");
  const double months = tau * 12.0;
  if (months < 1.0) return MaturityBin::SUB_1M;
  if (months < 2.0) return MaturityBin::M1_2;
  if (months < 3.0) return MaturityBin::M2_3;
  if (months < 5.0) return MaturityBin::M3_5;
  if (months < 7.0) return MaturityBin::M5_7;
  if (months < 10.0) return MaturityBin::M7_10;
  if (months < 14.0) return MaturityBin::M10_14;
  if (months < 21.0) return MaturityBin::M14_21;
  return MaturityBin::M21_PLUS;
}

// One carry-gap observation: a fitted cell joined with its benchmark df.
struct CarryGapObs {
  Market market;
  Date date;
  Date expiry;
  double tau;
  MaturityBin bin;
  double cg;      // natural units
  double cg_bp;   // 1e4 * cg, exactly
  double ba_med_over_tau;  // ATM spread stat (bp) scaled by 1/tau
};

// Midpoint-rule median (mean of the two central order statistics when n is
// even). Input is copied; throws on empty.
inline double median(std::vector<double> v) {
  if (v.empty()) throw std::runtime_error("median: empty input");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct DailyMedian {
  Market market;
  Date date;
  double median_cg_bp;
  long n_cells;
};

// Per-(market, date) median of cg_bp across that day's expiries.
inline std::vector<DailyMedian> aggregate_daily(const std::vector<CarryGapObs>& obs) {
  std::map<std::pair<Market, Date>, std::vector<double>> groups;
  for (const auto& o : obs) groups[{o.market, o.date}].push_back(o.cg_bp);
  std::vector<DailyMedian> out;
  out.reserve(groups.size());
  for (auto& [key, vals] : groups)
    out.push_back({key.first, key.second, median(vals), long(vals.size())});
  return out;  // map iteration order: (market, date) ascending
}

struct HistogramBin {
  double lo;
  double hi;
  long count;
};

struct DistStats {
  double mean;
  double median;
  double pct_positive;  // share of strictly positive values, in percent
  long n;
  double bin_width;
  std::vector<HistogramBin> histogram;
};

// Descriptive statistics plus a fixed-width histogram whose edges are integer
// multiples of the bin width, so bin boundaries do not depend on the sample.
inline DistStats distribution_stats(const std::vector<double>& values, double bin_width = 2.0) {
  if (values.empty()) throw std::runtime_error("distribution_stats: empty input");
  if (!(bin_width > 0.0)) throw std::runtime_error("distribution_stats: bin width must be positive");
  DistStats s{};
  s.n = long(values.size());
  s.bin_width = bin_width;
  long double acc = 0.0L;
  long n_pos = 0;
  for (double v : values) {
    acc += v;
    if (v > 0.0) ++n_pos;
  }
  s.mean = double(acc / (long double)(values.size()));
  s.median = median(values);
  s.pct_positive = 100.0 * double(n_pos) / double(values.size());

  const double lo_val = *std::min_element(values.begin(), values.end());
  const double hi_val = *std::max_element(values.begin(), values.end());
  const long k_lo = long(std::floor(lo_val / bin_width));
  const long k_hi = long(std::floor(hi_val / bin_width));
  s.histogram.resize(size_t(k_hi - k_lo + 1));
  for (size_t i = 0; i < s.histogram.size(); ++i) {
    s.histogram[i].lo = double(k_lo + long(i)) * bin_width;
    s.histogram[i].hi = double(k_lo + long(i) + 1) * bin_width;
    s.histogram[i].count = 0;
  }
  for (double v : values) {
    long k = long(std::floor(v / bin_width)) - k_lo;
    k = std::clamp(k, 0L, long(s.histogram.size()) - 1);  // hi_val lands in the top bin
    ++s.histogram[size_t(k)].count;
  }
  return s;
}

}  // namespace carrygap
