#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "carrygap/csv.hpp"
#include "carrygap/dates.hpp"
#include "carrygap/types.hpp"

namespace carrygap {

// ---------------------------------------------------------------------------
// quote tape
// ---------------------------------------------------------------------------

inline constexpr std::string_view kQuoteHeader = "date,time,expiry,right,strike,bid,ask";

struct LoadResult {
  std::vector<OptionQuote> quotes;  // rows at the snapshot time, file order
  long n_rows = 0;                  // data rows seen
  long n_other_time = 0;            // rows at a different snapshot, ignored
  long skipped_bad_field = 0;       // unparseable or negative fields
  long skipped_crossed = 0;         // ask < bid
  long skipped_expired = 0;         // expiry on or before the quote date
  long skipped() const { return skipped_bad_field + skipped_crossed + skipped_expired; }
};

// Stream a quote CSV, keeping only the configured snapshot. Structural
// problems (missing file, wrong header, wrong column count) throw; bad rows
// are counted and skipped so one vendor glitch cannot take down a whole run.
inline LoadResult load_quotes(const std::string& path, Market market, int snapshot_minute) {
  CsvReader reader(path, kQuoteHeader);
  LoadResult out;
  std::vector<std::string_view> f;
  while (reader.next(f)) {
    ++out.n_rows;
    int minute;
    try {
      minute = parse_minute(f[1]);
    } catch (const std::exception&) {
      ++out.skipped_bad_field;
      continue;
    }
    if (minute != snapshot_minute) {
      ++out.n_other_time;
      continue;
    }
    OptionQuote q;
    q.market = market;
    try {
      q.date = parse_date(f[0]);
      q.expiry = parse_date(f[2]);
    } catch (const std::exception&) {
      ++out.skipped_bad_field;
      continue;
    }
    if (f[3] == "C")
      q.right = OptionRight::CALL;
    else if (f[3] == "P")
      q.right = OptionRight::PUT;
    else {
      ++out.skipped_bad_field;
      continue;
    }
    double strike, bid, ask;
    if (!try_parse_double(f[4], strike) || !try_parse_double(f[5], bid) ||
        !try_parse_double(f[6], ask) || !(strike > 0.0) || bid < 0.0 || ask < 0.0) {
      ++out.skipped_bad_field;
      continue;
    }
    if (ask < bid) {
      ++out.skipped_crossed;
      continue;
    }
    if (q.expiry <= q.date) {
      ++out.skipped_expired;
      continue;
    }
    q.strike = strike;
    q.bid = bid;
    q.ask = ask;
    out.quotes.push_back(q);
  }
  return out;
}

// ---------------------------------------------------------------------------
// pairing
// ---------------------------------------------------------------------------

struct PairResult {
  std::vector<QuotePair> pairs;  // sorted by (date, expiry, strike)
  long n_unmatched = 0;          // strikes quoted on one side only
  long n_duplicates = 0;         // repeated (date, expiry, strike, right) rows
};

// Match calls and puts at identical (date, expiry, strike). Duplicate quotes
// for the same leg keep the tighter spread (first seen wins ties) and bump a
// warning counter. Running the output back through this function reproduces
// it, which pins down that pairing is a pure regrouping.
inline PairResult pair_quotes(const std::vector<OptionQuote>& quotes) {
  struct Legs {
    std::optional<OptionQuote> call, put;
  };
  std::map<std::tuple<Date, Date, double>, Legs> table;
  PairResult out;
  for (const auto& q : quotes) {
    auto& legs = table[{q.date, q.expiry, q.strike}];
    auto& slot = q.right == OptionRight::CALL ? legs.call : legs.put;
    if (!slot) {
      slot = q;
    } else {
      ++out.n_duplicates;
      if (q.spread() < slot->spread()) slot = q;
    }
  }
  for (const auto& [key, legs] : table) {
    if (!legs.call || !legs.put) {
      ++out.n_unmatched;
      continue;
    }
    QuotePair p;
    p.market = legs.call->market;
    p.date = std::get<0>(key);
    p.expiry = std::get<1>(key);
    p.strike = std::get<2>(key);
    p.call_mid = legs.call->mid();
    p.put_mid = legs.put->mid();
    p.call_spread = legs.call->spread();
    p.put_spread = legs.put->spread();
    out.pairs.push_back(p);
  }
  return out;  // map order == (date, expiry, strike) ascending
}

// Flatten pairs back to per-leg quotes (bid/ask reconstructed from mid and
// spread). Used by the synthetic generator and the pairing round-trip test.
inline std::vector<OptionQuote> to_quotes(const std::vector<QuotePair>& pairs) {
  std::vector<OptionQuote> out;
  out.reserve(pairs.size() * 2);
  for (const auto& p : pairs) {
    OptionQuote c{p.market, p.date, p.expiry, OptionRight::CALL, p.strike,
                  p.call_mid - 0.5 * p.call_spread, p.call_mid + 0.5 * p.call_spread};
    OptionQuote q{p.market, p.date, p.expiry, OptionRight::PUT, p.strike,
                  p.put_mid - 0.5 * p.put_spread, p.put_mid + 0.5 * p.put_spread};
    out.push_back(c);
    out.push_back(q);
  }
  return out;
}

// ---------------------------------------------------------------------------
// liquidity filters
// ---------------------------------------------------------------------------

struct FilterConfig {
  double min_mid = 0.05;         // both legs must have mid >= this
  double max_rel_spread = 0.25;  // both legs: (ask-bid)/mid <= this
  int min_strikes = 8;           // surviving pairs per (date, expiry) cell
};

struct CellGroup {
  CellKey key;
  double tau = 0.0;  // ACT/365.25 from quote date to expiry
  std::vector<QuotePair> pairs;
};

struct FilterResult {
  std::vector<CellGroup> cells;  // sorted by (market, date, expiry)
  long dropped_min_mid = 0;
  long dropped_rel_spread = 0;
  long dropped_small_cell = 0;  // pairs discarded because their cell got too thin
  long n_cells_dropped = 0;
};

// Tightening any threshold can only shrink the surviving set: each rule is a
// pointwise predicate joined by AND, then a monotone group-size cutoff.
inline FilterResult apply_filters(const std::vector<QuotePair>& pairs, const FilterConfig& cfg) {
  FilterResult out;
  std::map<CellKey, std::vector<QuotePair>> cells;
  for (const auto& p : pairs) {
    if (p.call_mid < cfg.min_mid || p.put_mid < cfg.min_mid) {
      ++out.dropped_min_mid;
      continue;
    }
    if (p.call_spread > cfg.max_rel_spread * p.call_mid ||
        p.put_spread > cfg.max_rel_spread * p.put_mid) {
      ++out.dropped_rel_spread;
      continue;
    }
    cells[{p.market, p.date, p.expiry}].push_back(p);
  }
  for (auto& [key, group] : cells) {
    if (long(group.size()) < cfg.min_strikes) {
      ++out.n_cells_dropped;
      out.dropped_small_cell += long(group.size());
      continue;
    }
    CellGroup g;
    g.key = key;
    g.tau = year_fraction(key.date, key.expiry);
    if (!(g.tau > 0.0)) throw std::runtime_error("apply_filters: non-positive tau in cell");
    g.pairs = std::move(group);
    out.cells.push_back(std::move(g));
  }
  return out;
}

// ---------------------------------------------------------------------------
// macro series
// ---------------------------------------------------------------------------

inline constexpr std::string_view kSeriesHeader = "date,value";
inline constexpr std::string_view kCurveHeader = "date,tenor_years,rate_pct";

struct SeriesLoad {
  std::map<Date, double> values;
  long n_duplicates = 0;  // same date seen twice; last occurrence wins
};

inline SeriesLoad load_series(const std::string& path) {
  CsvReader reader(path, kSeriesHeader);
  SeriesLoad out;
  std::vector<std::string_view> f;
  while (reader.next(f)) {
    const Date d = parse_date(f[0]);
    const double v = parse_double(f[1], "value");
    auto [it, inserted] = out.values.insert_or_assign(d, v);
    (void)it;
    if (!inserted) ++out.n_duplicates;
  }
  return out;
}

struct CurveQuotesLoad {
  // per date: (tenor_years, rate_pct), sorted by tenor
  std::map<Date, std::vector<std::pair<double, double>>> pillars;
  long n_duplicates = 0;  // same (date, tenor) seen twice; last wins
};

inline CurveQuotesLoad load_curve_quotes(const std::string& path) {
  CsvReader reader(path, kCurveHeader);
  CurveQuotesLoad out;
  std::map<std::pair<Date, double>, double> cells;
  std::vector<std::string_view> f;
  while (reader.next(f)) {
    const Date d = parse_date(f[0]);
    const double tenor = parse_double(f[1], "tenor_years");
    const double rate = parse_double(f[2], "rate_pct");
    auto [it, inserted] = cells.insert_or_assign(std::make_pair(d, tenor), rate);
    (void)it;
    if (!inserted) ++out.n_duplicates;
  }
  for (const auto& [key, rate] : cells) out.pillars[key.first].emplace_back(key.second, rate);
  return out;
}

// Linear interpolation in tenor with flat ends; exact at quoted tenors.
inline double rate_at_tenor(const std::vector<std::pair<double, double>>& pillars, double tenor) {
  if (pillars.empty()) throw std::runtime_error("rate_at_tenor: no pillars");
  if (tenor <= pillars.front().first) return pillars.front().second;
  if (tenor >= pillars.back().first) return pillars.back().second;
  size_t hi = 1;
  while (pillars[hi].first < tenor) ++hi;
  const auto& [t0, r0] = pillars[hi - 1];
  const auto& [t1, r1] = pillars[hi];
  return r0 + (tenor - t0) / (t1 - t0) * (r1 - r0);
}

struct MacroPaths {
  std::string ois;  // empty = not supplied
  std::string dgs;
  std::string vix;
  std::string rvx;
  std::string nfci;
};

struct MacroSeries {
  std::map<Date, std::vector<std::pair<double, double>>> ois;
  std::map<Date, std::vector<std::pair<double, double>>> dgs;
  std::map<Date, double> vix;
  std::map<Date, double> rvx;
  std::vector<std::pair<Date, double>> nfci;  // release-dated, ascending
  long n_duplicate_warnings = 0;

  // Weekly series carried forward from the most recent release on or before
  // `d`; empty before the first release. No look-ahead.
  std::optional<double> nfci_at(Date d) const {
    auto it = std::upper_bound(nfci.begin(), nfci.end(), d,
                               [](Date lhs, const auto& rhs) { return lhs < rhs.first; });
    if (it == nfci.begin()) return std::nullopt;
    return std::prev(it)->second;
  }

  std::optional<double> vol_at(Market m, Date d) const {
    const auto& s = m == Market::SPX ? vix : rvx;
    auto it = s.find(d);
    if (it == s.end()) return std::nullopt;
    return it->second;
  }
};

inline MacroSeries align_macro(const MacroPaths& paths) {
  MacroSeries m;
  if (!paths.ois.empty()) {
    auto l = load_curve_quotes(paths.ois);
    m.ois = std::move(l.pillars);
    m.n_duplicate_warnings += l.n_duplicates;
  }
  if (!paths.dgs.empty()) {
    auto l = load_curve_quotes(paths.dgs);
    m.dgs = std::move(l.pillars);
    m.n_duplicate_warnings += l.n_duplicates;
  }
  if (!paths.vix.empty()) {
    auto l = load_series(paths.vix);
    m.vix = std::move(l.values);
    m.n_duplicate_warnings += l.n_duplicates;
  }
  if (!paths.rvx.empty()) {
    auto l = load_series(paths.rvx);
    m.rvx = std::move(l.values);
    m.n_duplicate_warnings += l.n_duplicates;
  }
  if (!paths.nfci.empty()) {
    auto l = load_series(paths.nfci);
    m.nfci.assign(l.values.begin(), l.values.end());
    m.n_duplicate_warnings += l.n_duplicates;
  }
  return m;
}

}  // namespace carrygap
