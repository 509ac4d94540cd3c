#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "carrygap/types.hpp"

namespace carrygap {

// Fixed-leg accrual convention. UNIT sets the accrual fraction equal to the
// period length in years (so a 1y period accrues exactly 1.0, which keeps the
// worked examples closed-form); ACT360 rescales by 365.25/360.
enum class Accrual : std::uint8_t { UNIT, ACT360 };

inline Accrual parse_accrual(std::string_view s) {
  if (s == "unit") return Accrual::UNIT;
  if (s == "act360") return Accrual::ACT360;
  throw std::runtime_error("unknown accrual convention: '" + std::string(s) + "'");
}

inline double accrual_fraction(double t0, double t1, Accrual a) {
  const double len = t1 - t0;
  return a == Accrual::UNIT ? len : len * (365.25 / 360.0);
}

// One benchmark discount curve for one date. Pillars are (tau, ln df), tau
// ascending and positive; between pillars the discount factor is interpolated
// log-linearly in tau, anchored at df(0) = 1. Beyond the last pillar the zero
// rate is held flat (callers can observe that through the extrapolated flag).
struct RateCurve {
  CurveKind kind = CurveKind::OIS;
  Date date;
  std::vector<double> tau;
  std::vector<double> lndf;
  std::vector<double> quoted;  // input tenors; basis for the anomaly screen

  static RateCurve from_pillars(CurveKind kind, Date date, std::vector<double> tau_in,
                                std::vector<double> df_in, std::vector<double> quoted_in = {}) {
    if (tau_in.size() != df_in.size() || tau_in.empty())
      throw std::runtime_error("curve pillars: need equal-length non-empty tau/df");
    RateCurve c;
    c.kind = kind;
    c.date = date;
    c.tau = std::move(tau_in);
    c.lndf.resize(c.tau.size());
    for (size_t i = 0; i < c.tau.size(); ++i) {
      if (c.tau[i] <= 0.0) throw std::runtime_error("curve pillars: tau must be positive");
      if (i > 0 && c.tau[i] <= c.tau[i - 1])
        throw std::runtime_error("curve pillars: tau must be strictly increasing");
      if (!(df_in[i] > 0.0))
        throw std::runtime_error("curve pillars: non-positive discount factor at tau=" +
                                 fmt_tau(c.tau[i]));
      c.lndf[i] = std::log(df_in[i]);
    }
    c.quoted = quoted_in.empty() ? c.tau : std::move(quoted_in);
    return c;
  }

  double discount_at(double t, bool* extrapolated = nullptr) const {
    if (extrapolated) *extrapolated = false;
    if (t < 0.0) throw std::runtime_error("discount_at: negative tau");
    if (t == 0.0) return 1.0;
    // exact at pillars, so values survive a write/read round trip unchanged
    const auto it = std::lower_bound(tau.begin(), tau.end(), t);
    if (it != tau.end() && *it == t) return std::exp(lndf[size_t(it - tau.begin())]);
    if (it == tau.end()) {
      if (extrapolated) *extrapolated = true;
      const size_t n = tau.size() - 1;
      const double z_last = -lndf[n] / tau[n];
      return std::exp(lndf[n] - z_last * (t - tau[n]));
    }
    const size_t hi = size_t(it - tau.begin());
    const double t0 = hi == 0 ? 0.0 : tau[hi - 1];
    const double l0 = hi == 0 ? 0.0 : lndf[hi - 1];
    const double w = (t - t0) / (tau[hi] - t0);
    return std::exp(l0 + w * (lndf[hi] - l0));
  }

  double zero_at(double t) const {
    if (t <= 0.0) throw std::runtime_error("zero_at: tau must be positive");
    return -std::log(discount_at(t)) / t;
  }

  double max_tau() const { return tau.back(); }

 private:
  static std::string fmt_tau(double t) { return std::to_string(t); }
};

namespace detail {

inline void check_pillar_inputs(const std::vector<std::pair<double, double>>& pillars,
                                const char* what) {
  if (pillars.empty()) throw std::runtime_error(std::string(what) + ": no pillars");
  for (size_t i = 0; i < pillars.size(); ++i) {
    if (!(pillars[i].first > 0.0))
      throw std::runtime_error(std::string(what) + ": non-positive tenor");
    if (i > 0 && pillars[i].first <= pillars[i - 1].first)
      throw std::runtime_error(std::string(what) + ": tenors must be strictly increasing");
  }
}

}  // namespace detail

// Bootstrap an OIS discount curve from par quotes (tenor_years, rate_pct),
// sorted by tenor. Tenors up to one year are single-period deposits:
//   df = 1 / (1 + r * alpha).
// Longer tenors are annual-pay par swaps; payment dates are laid out yearly
// backwards from maturity and the par condition
//   1 = df(T) + r * sum_i alpha_i * df(t_i)
// is solved pillar by pillar. When all earlier payment dates sit on the known
// part of the curve this is a one-line rearrangement; when quoted pillars are
// more than a year apart the intermediate dfs are log-linear in the unknown
// and the condition is solved by bisection (monotone in ln df, so the root is
// unique and the iteration is deterministic).
inline RateCurve bootstrap_ois(Date date, const std::vector<std::pair<double, double>>& pillars,
                               Accrual accr = Accrual::UNIT) {
  detail::check_pillar_inputs(pillars, "bootstrap_ois");
  if (pillars.front().first > 1.0 + 1e-12)
    throw std::runtime_error("bootstrap_ois: need at least one tenor <= 1y");

  std::vector<double> tau, lndf;
  auto lndf_known = [&](double t) {
    // log-linear on what has been built so far, anchored at (0, 0)
    const auto it = std::lower_bound(tau.begin(), tau.end(), t);
    if (it != tau.end() && *it == t) return lndf[size_t(it - tau.begin())];
    if (it == tau.end()) throw std::runtime_error("bootstrap_ois: internal lookup past curve end");
    const size_t hi = size_t(it - tau.begin());
    const double t0 = hi == 0 ? 0.0 : tau[hi - 1];
    const double l0 = hi == 0 ? 0.0 : lndf[hi - 1];
    return l0 + (t - t0) / (tau[hi] - t0) * (lndf[hi] - l0);
  };

  for (const auto& [tenor, rate_pct] : pillars) {
    const double r = rate_pct / 100.0;
    if (tenor <= 1.0 + 1e-12) {
      const double a = accrual_fraction(0.0, tenor, accr);
      const double denom = 1.0 + r * a;
      if (!(denom > 0.0))
        throw std::runtime_error("bootstrap_ois: non-positive df at tenor " +
                                 std::to_string(tenor));
      tau.push_back(tenor);
      lndf.push_back(std::log(1.0 / denom));
      continue;
    }

    // annual payment grid counted back from maturity; first period may be a stub
    const int m = int(std::ceil(tenor - 1e-9));
    std::vector<double> pay(m);
    for (int i = 0; i < m; ++i) pay[size_t(i)] = tenor - double(m - 1 - i);
    std::vector<double> alpha(pay.size());
    for (size_t i = 0; i < pay.size(); ++i)
      alpha[i] = accrual_fraction(i == 0 ? 0.0 : pay[i - 1], pay[i], accr);

    const double t_last = tau.back();
    const double l_last = lndf.back();
    bool needs_solver = false;
    for (size_t i = 0; i + 1 < pay.size(); ++i)
      if (pay[i] > t_last + 1e-12) needs_solver = true;

    double ln_new;
    if (!needs_solver) {
      double annuity = 0.0;
      for (size_t i = 0; i + 1 < pay.size(); ++i)
        annuity += alpha[i] * std::exp(lndf_known(pay[i]));
      const double df = (1.0 - r * annuity) / (1.0 + r * alpha.back());
      if (!(df > 0.0))
        throw std::runtime_error("bootstrap_ois: non-positive df at tenor " +
                                 std::to_string(tenor));
      ln_new = std::log(df);
    } else {
      auto par_gap = [&](double u) {
        // u = candidate ln df at `tenor`; intermediate dates past the last
        // known pillar interpolate between (t_last, l_last) and (tenor, u)
        double pv_fixed = 0.0;
        for (size_t i = 0; i < pay.size(); ++i) {
          double l;
          if (pay[i] <= t_last + 1e-12)
            l = lndf_known(std::min(pay[i], t_last));
          else
            l = l_last + (pay[i] - t_last) / (tenor - t_last) * (u - l_last);
          pv_fixed += alpha[i] * std::exp(l);
        }
        return r * pv_fixed + std::exp(u) - 1.0;
      };
      const double gap = tenor - t_last;
      double lo = l_last - 1.0 * gap;  // forward zero bounded by 100%
      double hi = l_last + 0.5 * gap;  // and by -50%
      if (!(par_gap(lo) < 0.0) || !(par_gap(hi) > 0.0))
        throw std::runtime_error("bootstrap_ois: cannot bracket df at tenor " +
                                 std::to_string(tenor));
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (par_gap(mid) < 0.0 ? lo : hi) = mid;
      }
      ln_new = 0.5 * (lo + hi);
    }
    tau.push_back(tenor);
    lndf.push_back(ln_new);
  }

  RateCurve c;
  c.kind = CurveKind::OIS;
  c.date = date;
  c.quoted = c.tau = std::move(tau);
  c.lndf = std::move(lndf);
  return c;
}

// Constant-maturity Treasury curve: yields (tenor_years, yield_pct) are
// linearly interpolated in tenor (flat beyond the ends) and mapped to
// continuous-compounding discount factors df = exp(-y/100 * tau). The pillar
// grid is densified to monthly steps so the interpolation stays linear in the
// yield rather than in ln df between widely spaced quotes.
inline RateCurve build_dgs_curve(Date date,
                                 const std::vector<std::pair<double, double>>& pillars) {
  detail::check_pillar_inputs(pillars, "build_dgs_curve");
  auto yield_at = [&](double t) {
    if (t <= pillars.front().first) return pillars.front().second;
    if (t >= pillars.back().first) return pillars.back().second;
    size_t hi = 1;
    while (pillars[hi].first < t) ++hi;
    const auto& [t0, y0] = pillars[hi - 1];
    const auto& [t1, y1] = pillars[hi];
    return y0 + (t - t0) / (t1 - t0) * (y1 - y0);
  };

  const double t_max = pillars.back().first;
  std::vector<double> tau;
  for (int k = 1; double(k) / 12.0 < t_max - 1e-12; ++k) tau.push_back(double(k) / 12.0);
  for (const auto& [t, y] : pillars) tau.push_back(t);
  std::sort(tau.begin(), tau.end());
  tau.erase(std::unique(tau.begin(), tau.end(),
                        [](double a, double b) { return std::abs(a - b) < 1e-12; }),
            tau.end());

  std::vector<double> quoted;
  for (const auto& [t, y] : pillars) quoted.push_back(t);

  RateCurve c;
  c.kind = CurveKind::DGS;
  c.date = date;
  c.quoted = std::move(quoted);
  c.lndf.reserve(tau.size());
  for (double t : tau) c.lndf.push_back(-(yield_at(t) / 100.0) * t);
  c.tau = std::move(tau);
  return c;
}

// With nonnegative par rates dfs should not increase in tau; violations are a
// data-quality warning, not an error.
inline bool dfs_nonincreasing(const RateCurve& c) {
  for (size_t i = 1; i < c.lndf.size(); ++i)
    if (c.lndf[i] > c.lndf[i - 1]) return false;
  return true;
}

// Largest zero-rate move between adjacent quoted tenors; the curve stage drops
// dates where this exceeds the configured jump cap (default 200bp).
inline double max_adjacent_zero_jump(const RateCurve& c) {
  double worst = 0.0;
  for (size_t i = 1; i < c.quoted.size(); ++i)
    worst = std::max(worst, std::abs(c.zero_at(c.quoted[i]) - c.zero_at(c.quoted[i - 1])));
  return worst;
}

}  // namespace carrygap
