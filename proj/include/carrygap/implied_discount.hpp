#pragma once

#include <algorithm>
#include <cmath>
#include <variant>
#include <vector>

#include "carrygap/carrygap.hpp"
#include "carrygap/ingest.hpp"
#include "carrygap/parallel.hpp"
#include "carrygap/types.hpp"

namespace carrygap {

// Cross-section fit setup. The synthetic forward C - P is linear in strike
// with slope -B and intercept B*F, so one weighted least-squares line per
// (date, expiry) cell identifies both the implied discount factor and the
// implied forward.
struct FitConfig {
  int min_strikes = 8;
  double atm_band = 0.025;              // |K/F - 1| window for the spread stat
  bool inverse_spread_weighting = false;  // w = 1/(call_spread + put_spread)
  double max_b = 1.2;                   // sanity flag threshold on b_hat
  double f_range_frac = 0.20;           // f_hat drift from the strike-range midpoint
};

// quality flags on a successful fit
inline constexpr unsigned kFlagHighB = 1u;        // b_hat > max_b
inline constexpr unsigned kFlagForwardOff = 2u;   // f_hat far from strike range
inline constexpr unsigned kFlagAtmFallback = 4u;  // no strikes inside the ATM band

struct CellFit {
  CellKey key;
  double tau;
  double b_hat;
  double f_hat;
  double r2;
  long n_strikes;
  double ba_med_bp;  // median ATM half-spread as bp of the discounted forward
  unsigned flags;
};

enum class RejectReason : std::uint8_t {
  TOO_FEW_STRIKES,
  NON_NEGATIVE_SLOPE,    // implied discount factor would be <= 0
  SINGULAR_DESIGN,       // no strike dispersion
  NON_POSITIVE_FORWARD,  // intercept/slope inverted to f_hat <= 0
};

inline std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::TOO_FEW_STRIKES: return "too_few_strikes";
    case RejectReason::NON_NEGATIVE_SLOPE: return "non_negative_slope";
    case RejectReason::SINGULAR_DESIGN: return "singular_design";
    default: return "non_positive_forward";
  }
}

struct CellReject {
  CellKey key;
  double tau;
  RejectReason reason;
  long n_strikes;
};

using FitOutcome = std::variant<CellFit, CellReject>;

inline FitOutcome fit_cell(const CellGroup& cell, const FitConfig& cfg) {
  const auto& pairs = cell.pairs;
  const long n = long(pairs.size());
  if (n < cfg.min_strikes || n < 2)
    return CellReject{cell.key, cell.tau, RejectReason::TOO_FEW_STRIKES, n};

  auto weight = [&](const QuotePair& p) {
    if (!cfg.inverse_spread_weighting) return 1.0;
    return 1.0 / std::max(p.call_spread + p.put_spread, 1e-8);
  };

  long double sw = 0.0L, swk = 0.0L, swg = 0.0L;
  for (const auto& p : pairs) {
    const long double w = weight(p);
    sw += w;
    swk += w * p.strike;
    swg += w * p.synth_forward();
  }
  const long double kbar = swk / sw, gbar = swg / sw;

  long double sxx = 0.0L, sxy = 0.0L, sst = 0.0L;
  for (const auto& p : pairs) {
    const long double w = weight(p);
    const long double dk = p.strike - kbar;
    const long double dg = p.synth_forward() - gbar;
    sxx += w * dk * dk;
    sxy += w * dk * dg;
    sst += w * dg * dg;
  }
  if (!(sxx > 0.0L))
    return CellReject{cell.key, cell.tau, RejectReason::SINGULAR_DESIGN, n};

  const double slope = double(sxy / sxx);
  if (!(slope < 0.0))
    return CellReject{cell.key, cell.tau, RejectReason::NON_NEGATIVE_SLOPE, n};

  CellFit fit;
  fit.key = cell.key;
  fit.tau = cell.tau;
  fit.n_strikes = n;
  fit.b_hat = -slope;
  const double intercept = double(gbar - (long double)(slope)*kbar);
  fit.f_hat = intercept / fit.b_hat;
  if (!(fit.f_hat > 0.0))
    return CellReject{cell.key, cell.tau, RejectReason::NON_POSITIVE_FORWARD, n};

  long double sse = 0.0L;
  for (const auto& p : pairs) {
    const long double e = p.synth_forward() - (intercept + slope * p.strike);
    sse += weight(p) * e * e;
  }
  fit.r2 = sst > 0.0L ? std::clamp(double(1.0L - sse / sst), 0.0, 1.0) : 1.0;

  fit.flags = 0;
  if (fit.b_hat > cfg.max_b) fit.flags |= kFlagHighB;
  double k_lo = pairs.front().strike, k_hi = k_lo;
  for (const auto& p : pairs) {
    k_lo = std::min(k_lo, p.strike);
    k_hi = std::max(k_hi, p.strike);
  }
  const double mid_range = 0.5 * (k_lo + k_hi);
  if (std::abs(fit.f_hat - mid_range) > cfg.f_range_frac * mid_range)
    fit.flags |= kFlagForwardOff;

  // median (call+put)/2 spread near the money, expressed in bp of the
  // discounted forward b*f (the level the synthetic forward trades around)
  std::vector<double> atm_spreads;
  for (const auto& p : pairs)
    if (fit.f_hat > 0.0 && std::abs(p.strike - fit.f_hat) <= cfg.atm_band * fit.f_hat)
      atm_spreads.push_back(0.5 * (p.call_spread + p.put_spread));
  if (atm_spreads.empty()) {
    fit.flags |= kFlagAtmFallback;
    const QuotePair* nearest = &pairs.front();
    for (const auto& p : pairs)
      if (std::abs(p.strike - fit.f_hat) < std::abs(nearest->strike - fit.f_hat))
        nearest = &p;
    atm_spreads.push_back(0.5 * (nearest->call_spread + nearest->put_spread));
  }
  fit.ba_med_bp = 1e4 * median(std::move(atm_spreads)) / (fit.f_hat * fit.b_hat);
  return fit;
}

struct ExtractResult {
  std::vector<CellFit> fits;        // sorted by (market, date, tau)
  std::vector<CellReject> rejects;  // same order
};

// Fit every cell; embarrassingly parallel, results merged in input order so
// the output is identical for any worker count.
inline ExtractResult extract_panel(const std::vector<CellGroup>& cells, const FitConfig& cfg,
                                   int workers = 1) {
  std::vector<FitOutcome> outcomes(cells.size(),
                                   CellReject{CellKey{}, 0.0, RejectReason::TOO_FEW_STRIKES, 0});
  parallel_for(cells.size(), workers, [&](size_t i) { outcomes[i] = fit_cell(cells[i], cfg); });

  ExtractResult out;
  for (auto& o : outcomes) {
    if (std::holds_alternative<CellFit>(o))
      out.fits.push_back(std::get<CellFit>(o));
    else
      out.rejects.push_back(std::get<CellReject>(o));
  }
  auto by_key = [](const auto& a, const auto& b) {
    return std::tie(a.key.market, a.key.date, a.tau, a.key.expiry) <
           std::tie(b.key.market, b.key.date, b.tau, b.key.expiry);
  };
  std::sort(out.fits.begin(), out.fits.end(), by_key);
  std::sort(out.rejects.begin(), out.rejects.end(), by_key);
  return out;
}

}  // namespace carrygap
