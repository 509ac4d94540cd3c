#pragma once

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "carrygap/carrygap.hpp"
#include "carrygap/csv.hpp"
#include "carrygap/curves.hpp"
#include "carrygap/econometrics.hpp"
#include "carrygap/implied_discount.hpp"
#include "carrygap/ingest.hpp"
#include "carrygap/parallel.hpp"
#include "carrygap/pathrisk.hpp"
#include "carrygap/types.hpp"

namespace carrygap {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
  std::string quotes_spx;  // empty = market not supplied
  std::string quotes_rut;
  std::string ois;
  std::string dgs;
  std::string vix;
  std::string rvx;
  std::string nfci;
  CurveKind benchmark = CurveKind::OIS;
  std::vector<SpecKind> specs = {SpecKind::POOLED, SpecKind::SPX, SpecKind::RUT};
  int snapshot_minute = 15 * 60 + 45;
  FilterConfig filters;
  FitConfig fit;
  Accrual accrual = Accrual::UNIT;
  double max_zero_jump_bp = 200.0;
  double hist_bin_bp = 2.0;
  bool loyo = true;
  long loyo_min_test_rows = 30;
  bool mc_check = false;
  double mc_sigma = 0.2;
  double mc_horizon = 1.0;
  long mc_paths = 200000;
  long mc_steps = 2000;
  double mc_tolerance = 0.02;
  std::uint64_t seed = 42;
  int workers = 1;
  std::string out_dir = "out";
};

inline bool parse_bool(std::string_view v, const char* key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::runtime_error(std::string("config: bad boolean for ") + key + ": '" +
                           std::string(v) + "'");
}

inline std::vector<SpecKind> parse_spec_list(std::string_view v) {
  if (v == "all") return {SpecKind::POOLED, SpecKind::SPX, SpecKind::RUT};
  std::vector<SpecKind> out;
  size_t start = 0;
  while (start <= v.size()) {
    const size_t pos = v.find(',', start);
    const std::string_view tok =
        pos == std::string_view::npos ? v.substr(start) : v.substr(start, pos - start);
    if (!tok.empty()) out.push_back(parse_spec_kind(tok));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (out.empty()) throw std::runtime_error("config: empty spec list");
  return out;
}

// Plain key = value file; '#' starts a comment; unknown keys are fatal so a
// typo cannot silently fall back to a default.
inline RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  RunConfig cfg;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const size_t a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      const size_t b = s.find_last_not_of(" \t");
      return s.substr(a, b - a + 1);
    };
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string val = trim(stripped.substr(eq + 1));

    if (key == "quotes_spx") cfg.quotes_spx = val;
    else if (key == "quotes_rut") cfg.quotes_rut = val;
    else if (key == "ois") cfg.ois = val;
    else if (key == "dgs") cfg.dgs = val;
    else if (key == "vix") cfg.vix = val;
    else if (key == "rvx") cfg.rvx = val;
    else if (key == "nfci") cfg.nfci = val;
    else if (key == "benchmark") cfg.benchmark = parse_curve_kind(val);
    else if (key == "specs") cfg.specs = parse_spec_list(val);
    else if (key == "snapshot_time") cfg.snapshot_minute = parse_minute(val);
    else if (key == "min_mid") cfg.filters.min_mid = parse_double(val, "min_mid");
    else if (key == "max_rel_spread") cfg.filters.max_rel_spread = parse_double(val, key.c_str());
    else if (key == "min_strikes") cfg.filters.min_strikes = int(parse_long(val, key.c_str()));
    else if (key == "atm_band") cfg.fit.atm_band = parse_double(val, key.c_str());
    else if (key == "inverse_spread_weighting") cfg.fit.inverse_spread_weighting = parse_bool(val, key.c_str());
    else if (key == "accrual") cfg.accrual = parse_accrual(val);
    else if (key == "max_zero_jump_bp") cfg.max_zero_jump_bp = parse_double(val, key.c_str());
    else if (key == "hist_bin_bp") cfg.hist_bin_bp = parse_double(val, key.c_str());
    else if (key == "loyo") cfg.loyo = parse_bool(val, key.c_str());
    else if (key == "loyo_min_test_rows") cfg.loyo_min_test_rows = parse_long(val, key.c_str());
    else if (key == "mc_check") cfg.mc_check = parse_bool(val, key.c_str());
    else if (key == "mc_sigma") cfg.mc_sigma = parse_double(val, key.c_str());
    else if (key == "mc_horizon") cfg.mc_horizon = parse_double(val, key.c_str());
    else if (key == "mc_paths") cfg.mc_paths = parse_long(val, key.c_str());
    else if (key == "mc_steps") cfg.mc_steps = parse_long(val, key.c_str());
    else if (key == "mc_tolerance") cfg.mc_tolerance = parse_double(val, key.c_str());
    else if (key == "seed") cfg.seed = std::uint64_t(parse_long(val, key.c_str()));
    else if (key == "workers") cfg.workers = int(parse_long(val, key.c_str()));
    else if (key == "out") cfg.out_dir = val;
    else
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown key '" + key +
                               "'");
  }
  cfg.fit.min_strikes = cfg.filters.min_strikes;
  return cfg;
}

inline void write_config_file(const std::string& path, const RunConfig& cfg) {
  OutputFile out(path);
  auto kv = [&](const std::string& k, const std::string& v) {
    if (!v.empty()) out.write_line(k + " = " + v);
  };
  kv("quotes_spx", cfg.quotes_spx);
  kv("quotes_rut", cfg.quotes_rut);
  kv("ois", cfg.ois);
  kv("dgs", cfg.dgs);
  kv("vix", cfg.vix);
  kv("rvx", cfg.rvx);
  kv("nfci", cfg.nfci);
  kv("benchmark", std::string(to_string(cfg.benchmark)));
  {
    std::string s;
    for (size_t i = 0; i < cfg.specs.size(); ++i)
      s += std::string(i ? "," : "") + std::string(to_string(cfg.specs[i]));
    kv("specs", s);
  }
  kv("snapshot_time", format_minute(cfg.snapshot_minute));
  kv("min_mid", fmt_double(cfg.filters.min_mid));
  kv("max_rel_spread", fmt_double(cfg.filters.max_rel_spread));
  kv("min_strikes", std::to_string(cfg.filters.min_strikes));
  kv("atm_band", fmt_double(cfg.fit.atm_band));
  kv("inverse_spread_weighting", cfg.fit.inverse_spread_weighting ? "true" : "false");
  kv("accrual", cfg.accrual == Accrual::UNIT ? "unit" : "act360");
  kv("max_zero_jump_bp", fmt_double(cfg.max_zero_jump_bp));
  kv("hist_bin_bp", fmt_double(cfg.hist_bin_bp));
  kv("loyo", cfg.loyo ? "true" : "false");
  kv("loyo_min_test_rows", std::to_string(cfg.loyo_min_test_rows));
  kv("mc_check", cfg.mc_check ? "true" : "false");
  kv("mc_sigma", fmt_double(cfg.mc_sigma));
  kv("mc_horizon", fmt_double(cfg.mc_horizon));
  kv("mc_paths", std::to_string(cfg.mc_paths));
  kv("mc_steps", std::to_string(cfg.mc_steps));
  kv("mc_tolerance", fmt_double(cfg.mc_tolerance));
  kv("seed", std::to_string(cfg.seed));
  out.commit();
}

// Pre-flight validation: every problem is collected and reported at once,
// before any stage runs.
inline void validate_config(const RunConfig& cfg) {
  std::vector<std::string> problems;
  auto need_file = [&](const std::string& p, const char* what) {
    if (p.empty()) return;
    if (!std::filesystem::exists(p))
      problems.push_back(std::string(what) + " file not found: " + p);
  };
  if (cfg.quotes_spx.empty() && cfg.quotes_rut.empty())
    problems.push_back("no quote inputs (need quotes_spx and/or quotes_rut)");
  if (cfg.benchmark == CurveKind::OIS && cfg.ois.empty())
    problems.push_back("benchmark is ois but no ois file configured");
  if (cfg.benchmark == CurveKind::DGS && cfg.dgs.empty())
    problems.push_back("benchmark is dgs but no dgs file configured");
  if (!cfg.quotes_spx.empty() && cfg.vix.empty())
    problems.push_back("SPX quotes configured but no vix file");
  if (!cfg.quotes_rut.empty() && cfg.rvx.empty())
    problems.push_back("RUT quotes configured but no rvx file");
  if (cfg.nfci.empty()) problems.push_back("no nfci file configured");
  for (SpecKind s : cfg.specs) {
    if (s == SpecKind::POOLED && (cfg.quotes_spx.empty() || cfg.quotes_rut.empty()))
      problems.push_back("spec 'pooled' needs both quote files (spx_dummy is degenerate otherwise)");
    if (s == SpecKind::SPX && cfg.quotes_spx.empty())
      problems.push_back("spec 'spx' needs quotes_spx");
    if (s == SpecKind::RUT && cfg.quotes_rut.empty())
      problems.push_back("spec 'rut' needs quotes_rut");
  }
  need_file(cfg.quotes_spx, "quotes_spx");
  need_file(cfg.quotes_rut, "quotes_rut");
  need_file(cfg.ois, "ois");
  need_file(cfg.dgs, "dgs");
  need_file(cfg.vix, "vix");
  need_file(cfg.rvx, "rvx");
  need_file(cfg.nfci, "nfci");
  if (cfg.workers < 1) problems.push_back("workers must be >= 1");
  if (cfg.filters.min_strikes < 2) problems.push_back("min_strikes must be >= 2");
  if (!(cfg.filters.max_rel_spread > 0.0)) problems.push_back("max_rel_spread must be > 0");
  if (cfg.filters.min_mid < 0.0) problems.push_back("min_mid must be >= 0");
  if (!(cfg.hist_bin_bp > 0.0)) problems.push_back("hist_bin_bp must be > 0");
  if (!(cfg.fit.atm_band > 0.0)) problems.push_back("atm_band must be > 0");
  if (cfg.mc_check) {
    if (cfg.mc_paths < 1 || cfg.mc_steps < 1) problems.push_back("mc paths/steps must be >= 1");
    if (!(cfg.mc_sigma >= 0.0)) problems.push_back("mc_sigma must be >= 0");
    if (!(cfg.mc_horizon > 0.0)) problems.push_back("mc_horizon must be > 0");
    if (!(cfg.mc_tolerance > 0.0)) problems.push_back("mc_tolerance must be > 0");
  }
  if (cfg.out_dir.empty()) problems.push_back("output directory not set");
  if (!problems.empty()) {
    std::string msg = "config validation failed:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw std::runtime_error(msg);
  }
}

// ---------------------------------------------------------------------------
// artifact paths
// ---------------------------------------------------------------------------

struct OutPaths {
  std::string dir;
  std::string at(const char* name) const { return dir + "/" + name; }
  std::string cells() const { return at("cells.csv"); }
  std::string cell_rejects() const { return at("cell_rejects.csv"); }
  std::string extract_audit() const { return at("extract_audit.json"); }
  std::string curves() const { return at("curves.csv"); }
  std::string curves_audit() const { return at("curves_audit.json"); }
  std::string carrygap_panel() const { return at("carrygap_panel.csv"); }
  std::string daily_median() const { return at("daily_median.csv"); }
  std::string dist_stats() const { return at("dist_stats.json"); }
  std::string hist() const { return at("hist.csv"); }
  std::string panel() const { return at("panel.csv"); }
  std::string panel_audit() const { return at("panel_audit.json"); }
  std::string fit(SpecKind s, CurveKind b) const {
    return dir + "/fit_" + std::string(to_string(s)) + "_" + std::string(to_string(b)) + ".json";
  }
  std::string loyo(SpecKind s, CurveKind b) const {
    return dir + "/loyo_" + std::string(to_string(s)) + "_" + std::string(to_string(b)) + ".csv";
  }
  std::string loyo_summary(SpecKind s, CurveKind b) const {
    return dir + "/loyo_summary_" + std::string(to_string(s)) + "_" + std::string(to_string(b)) +
           ".json";
  }
  std::string sign_table() const { return at("sign_table.csv"); }
  std::string pathrisk_check() const { return at("pathrisk_check.json"); }
  std::string manifest() const { return at("run_manifest.json"); }
};

inline void write_json(const std::string& path, const ojson& j) {
  OutputFile out(path);
  out.stream() << j.dump(2) << '\n';
  out.commit();
}

// ---------------------------------------------------------------------------
// stage: extract (ingest + per-cell fits)
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCellsHeader =
    "market,date,expiry,tau,b_hat,f_hat,r2,n_strikes,ba_med_bp";

struct ExtractStageResult {
  long n_fits = 0;
  long n_rejects = 0;
};

inline ExtractStageResult stage_extract(const RunConfig& cfg) {
  const OutPaths paths{cfg.out_dir};
  ojson audit;
  std::vector<CellGroup> cells;
  PairResult pair_totals;
  FilterResult filter_totals;

  for (Market m : {Market::SPX, Market::RUT}) {
    const std::string& path = m == Market::SPX ? cfg.quotes_spx : cfg.quotes_rut;
    if (path.empty()) continue;
    const LoadResult load = load_quotes(path, m, cfg.snapshot_minute);
    ojson a;
    a["path"] = path;
    a["rows"] = load.n_rows;
    a["rows_at_snapshot"] = long(load.quotes.size());
    a["rows_other_time"] = load.n_other_time;
    a["skipped_bad_field"] = load.skipped_bad_field;
    a["skipped_crossed"] = load.skipped_crossed;
    a["skipped_expired"] = load.skipped_expired;
    audit["load"][std::string(to_string(m))] = a;

    // pair and filter one date at a time (the pairing contract is per-date)
    std::map<Date, std::vector<OptionQuote>> by_date;
    for (const auto& q : load.quotes) by_date[q.date].push_back(q);
    for (auto& [date, quotes] : by_date) {
      PairResult pr = pair_quotes(quotes);
      pair_totals.n_unmatched += pr.n_unmatched;
      pair_totals.n_duplicates += pr.n_duplicates;
      FilterResult fr = apply_filters(pr.pairs, cfg.filters);
      filter_totals.dropped_min_mid += fr.dropped_min_mid;
      filter_totals.dropped_rel_spread += fr.dropped_rel_spread;
      filter_totals.dropped_small_cell += fr.dropped_small_cell;
      filter_totals.n_cells_dropped += fr.n_cells_dropped;
      for (auto& c : fr.cells) cells.push_back(std::move(c));
    }
  }

  const ExtractResult res = extract_panel(cells, cfg.fit, cfg.workers);

  OutputFile cells_out(paths.cells());
  cells_out.write_line(std::string(kCellsHeader));
  long flag_high_b = 0, flag_forward_off = 0, flag_atm_fallback = 0;
  for (const auto& f : res.fits) {
    cells_out.write_line(std::string(to_string(f.key.market)) + "," + f.key.date.to_string() +
                         "," + f.key.expiry.to_string() + "," + fmt_double(f.tau) + "," +
                         fmt_double(f.b_hat) + "," + fmt_double(f.f_hat) + "," +
                         fmt_double(f.r2) + "," + std::to_string(f.n_strikes) + "," +
                         fmt_double(f.ba_med_bp));
    if (f.flags & kFlagHighB) ++flag_high_b;
    if (f.flags & kFlagForwardOff) ++flag_forward_off;
    if (f.flags & kFlagAtmFallback) ++flag_atm_fallback;
  }
  cells_out.commit();

  OutputFile rej_out(paths.cell_rejects());
  rej_out.write_line("market,date,expiry,tau,n_strikes,reason");
  for (const auto& r : res.rejects)
    rej_out.write_line(std::string(to_string(r.key.market)) + "," + r.key.date.to_string() + "," +
                       r.key.expiry.to_string() + "," + fmt_double(r.tau) + "," +
                       std::to_string(r.n_strikes) + "," + std::string(to_string(r.reason)));
  rej_out.commit();

  audit["pairing"] = {{"unmatched", pair_totals.n_unmatched},
                      {"duplicate_quotes", pair_totals.n_duplicates}};
  audit["filters"] = {{"dropped_min_mid", filter_totals.dropped_min_mid},
                      {"dropped_rel_spread", filter_totals.dropped_rel_spread},
                      {"dropped_small_cell_pairs", filter_totals.dropped_small_cell},
                      {"cells_dropped_too_small", filter_totals.n_cells_dropped}};
  audit["fits"] = {{"accepted", long(res.fits.size())},
                   {"rejected", long(res.rejects.size())},
                   {"flag_high_b", flag_high_b},
                   {"flag_forward_off", flag_forward_off},
                   {"flag_atm_fallback", flag_atm_fallback}};
  write_json(paths.extract_audit(), audit);
  return {long(res.fits.size()), long(res.rejects.size())};
}

inline std::vector<CellFit> read_cells_csv(const std::string& path) {
  CsvReader reader(path, kCellsHeader);
  std::vector<CellFit> out;
  std::vector<std::string_view> f;
  while (reader.next(f)) {
    CellFit c{};
    c.key.market = parse_market(f[0]);
    c.key.date = parse_date(f[1]);
    c.key.expiry = parse_date(f[2]);
    c.tau = parse_double(f[3], "tau");
    c.b_hat = parse_double(f[4], "b_hat");
    c.f_hat = parse_double(f[5], "f_hat");
    c.r2 = parse_double(f[6], "r2");
    c.n_strikes = parse_long(f[7], "n_strikes");
    c.ba_med_bp = parse_double(f[8], "ba_med_bp");
    out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// stage: curves (bootstrap / dgs mapping)
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCurvesHeader = "date,kind,tau,df,zero_rate";

struct CurveStageResult {
  long n_dates = 0;
  long n_excluded = 0;
};

inline CurveStageResult stage_curves(const RunConfig& cfg) {
  const OutPaths paths{cfg.out_dir};
  const std::string& src = cfg.benchmark == CurveKind::OIS ? cfg.ois : cfg.dgs;
  const CurveQuotesLoad quotes = load_curve_quotes(src);

  std::vector<std::pair<Date, const std::vector<std::pair<double, double>>*>> dates;
  dates.reserve(quotes.pillars.size());
  for (const auto& [d, pillars] : quotes.pillars) dates.emplace_back(d, &pillars);

  struct Built {
    bool ok = false;
    RateCurve curve;
    std::string reason;
    bool non_monotone = false;
  };
  std::vector<Built> built(dates.size());
  parallel_for(dates.size(), cfg.workers, [&](size_t i) {
    const auto& [date, pillars] = dates[i];
    Built& b = built[i];
    try {
      if (cfg.benchmark == CurveKind::OIS) {
        b.curve = bootstrap_ois(date, *pillars, cfg.accrual);
      } else {
        if (pillars->size() < 2) throw std::runtime_error("need >= 2 tenors");
        b.curve = build_dgs_curve(date, *pillars);
      }
    } catch (const std::exception& e) {
      b.reason = e.what();
      return;
    }
    if (max_adjacent_zero_jump(b.curve) > cfg.max_zero_jump_bp / 1e4) {
      b.reason = "anomalous zero-rate jump exceeds " + fmt_double(cfg.max_zero_jump_bp) + " bp";
      return;
    }
    bool nonneg_rates = true;
    for (const auto& [t, r] : *pillars)
      if (r < 0.0) nonneg_rates = false;
    if (nonneg_rates && !dfs_nonincreasing(b.curve)) b.non_monotone = true;
    b.ok = true;
  });

  OutputFile out(paths.curves());
  out.write_line(std::string(kCurvesHeader));
  ojson excluded = ojson::array();
  long n_ok = 0, n_non_monotone = 0;
  for (size_t i = 0; i < built.size(); ++i) {
    const Built& b = built[i];
    if (!b.ok) {
      excluded.push_back({{"date", dates[i].first.to_string()}, {"reason", b.reason}});
      continue;
    }
    ++n_ok;
    if (b.non_monotone) ++n_non_monotone;
    for (size_t k = 0; k < b.curve.tau.size(); ++k) {
      const double df = std::exp(b.curve.lndf[k]);
      out.write_line(b.curve.date.to_string() + "," + std::string(to_string(b.curve.kind)) + "," +
                     fmt_double(b.curve.tau[k]) + "," + fmt_double(df) + "," +
                     fmt_double(-b.curve.lndf[k] / b.curve.tau[k]));
    }
  }
  out.commit();

  ojson audit;
  audit["source"] = src;
  audit["kind"] = std::string(to_string(cfg.benchmark));
  audit["dates_in"] = long(dates.size());
  audit["dates_built"] = n_ok;
  audit["dates_excluded"] = long(excluded.size());
  audit["duplicate_quotes"] = quotes.n_duplicates;
  audit["non_monotone_df_warnings"] = n_non_monotone;
  audit["excluded"] = excluded;
  write_json(paths.curves_audit(), audit);
  return {n_ok, long(excluded.size())};
}

// Rebuild per-date curves from the curves.csv artifact. Discount factors are
// written with shortest-round-trip formatting, so the reread pillars are
// bit-identical to the stage that wrote them.
inline std::map<Date, RateCurve> read_curves_csv(const std::string& path, CurveKind want) {
  CsvReader reader(path, kCurvesHeader);
  std::map<Date, std::pair<std::vector<double>, std::vector<double>>> pillars;
  std::vector<std::string_view> f;
  while (reader.next(f)) {
    const Date d = parse_date(f[0]);
    const CurveKind kind = parse_curve_kind(f[1]);
    if (kind != want)
      throw std::runtime_error(path + ": contains " + std::string(to_string(kind)) +
                               " pillars but the configured benchmark is " +
                               std::string(to_string(want)) +
                               " (re-run the curve stage with this benchmark)");
    auto& [taus, dfs] = pillars[d];
    taus.push_back(parse_double(f[2], "tau"));
    dfs.push_back(parse_double(f[3], "df"));
  }
  std::map<Date, RateCurve> out;
  for (auto& [d, td] : pillars)
    out.emplace(d, RateCurve::from_pillars(want, d, std::move(td.first), std::move(td.second)));
  return out;
}

// ---------------------------------------------------------------------------
// stage: carry-gap panel + regression panel
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCarrygapPanelHeader =
    "market,date,expiry,tau,bin,cg_bp,ba_med_over_tau";
inline constexpr std::string_view kDailyMedianHeader = "scope,date,median_cg_bp,n_cells";
inline constexpr std::string_view kHistHeader = "scope,bin_lo_bp,bin_hi_bp,count";
inline constexpr std::string_view kPanelHeader =
    "market,date,expiry,tau,bin,cg_bp,gbm_1y,gbm_10y,ba_over_tau,nfci,spx_dummy";

struct PanelDropAudit {
  long cells_in = 0;
  long missing_curve = 0;   // date excluded by the curve stage (or absent)
  long extrapolated_df = 0;  // tau beyond last pillar: counted, kept
  long obs_out = 0;          // carry-gap observations (all maturities)
  long sub_1m = 0;           // eligible-gap rows excluded from the regression
  long missing_rate = 0;
  long missing_vol = 0;
  long missing_nfci = 0;
  long rows_out = 0;  // regression rows
};

struct BuiltPanel {
  std::vector<CarryGapObs> obs;
  std::vector<PanelRow> rows;
  PanelDropAudit audit;
};

// Join cell fits with the benchmark curve and macro series. Every cell with a
// usable curve yields a carry-gap observation; regression rows additionally
// need the sample rule (tau >= 1 month) and all regressors on that date.
inline BuiltPanel build_panel(const std::vector<CellFit>& cells,
                              const std::map<Date, RateCurve>& curves, const MacroSeries& macro,
                              CurveKind benchmark) {
  BuiltPanel out;
  out.audit.cells_in = long(cells.size());
  const auto& rate_quotes = benchmark == CurveKind::OIS ? macro.ois : macro.dgs;
  for (const auto& c : cells) {
    const auto curve_it = curves.find(c.key.date);
    if (curve_it == curves.end()) {
      ++out.audit.missing_curve;
      continue;
    }
    bool extrapolated = false;
    const double d_bench = curve_it->second.discount_at(c.tau, &extrapolated);
    if (extrapolated) ++out.audit.extrapolated_df;
    const CarryGap gap = carry_gap(d_bench, c.b_hat, c.tau);

    CarryGapObs o;
    o.market = c.key.market;
    o.date = c.key.date;
    o.expiry = c.key.expiry;
    o.tau = c.tau;
    o.bin = assign_bin(c.tau);
    o.cg = gap.cg;
    o.cg_bp = gap.cg_bp;
    o.ba_med_over_tau = c.ba_med_bp / c.tau;
    out.obs.push_back(o);
    ++out.audit.obs_out;

    if (o.bin == MaturityBin::SUB_1M) {
      ++out.audit.sub_1m;
      continue;
    }
    const auto rq = rate_quotes.find(c.key.date);
    if (rq == rate_quotes.end()) {
      ++out.audit.missing_rate;
      continue;
    }
    const auto vol = macro.vol_at(c.key.market, c.key.date);
    if (!vol) {
      ++out.audit.missing_vol;
      continue;
    }
    const auto nfci = macro.nfci_at(c.key.date);
    if (!nfci) {
      ++out.audit.missing_nfci;
      continue;
    }
    PanelRow r;
    r.market = o.market;
    r.date = o.date;
    r.expiry = o.expiry;
    r.tau = o.tau;
    r.bin = o.bin;
    r.cg_bp = o.cg_bp;
    r.gbm_1y = gbm_term(rate_at_tenor(rq->second, 1.0), *vol, o.tau);
    r.gbm_10y = gbm_term(rate_at_tenor(rq->second, 10.0), *vol, o.tau);
    r.ba_over_tau = o.ba_med_over_tau;
    r.nfci = *nfci;
    out.rows.push_back(r);
    ++out.audit.rows_out;
  }
  return out;
}

inline ojson dist_stats_json(const DistStats& s) {
  return ojson{{"n", s.n},
               {"mean_bp", s.mean},
               {"median_bp", s.median},
               {"pct_positive", s.pct_positive}};
}

inline void stage_panel(const RunConfig& cfg) {
  const OutPaths paths{cfg.out_dir};
  const std::vector<CellFit> cells = read_cells_csv(paths.cells());
  const std::map<Date, RateCurve> curves = read_curves_csv(paths.curves(), cfg.benchmark);
  const MacroSeries macro =
      align_macro({cfg.ois, cfg.dgs, cfg.vix, cfg.rvx, cfg.nfci});
  const BuiltPanel panel = build_panel(cells, curves, macro, cfg.benchmark);

  OutputFile cg_out(paths.carrygap_panel());
  cg_out.write_line(std::string(kCarrygapPanelHeader));
  for (const auto& o : panel.obs)
    cg_out.write_line(std::string(to_string(o.market)) + "," + o.date.to_string() + "," +
                      o.expiry.to_string() + "," + fmt_double(o.tau) + "," +
                      std::string(bin_label(o.bin)) + "," + fmt_double(o.cg_bp) + "," +
                      fmt_double(o.ba_med_over_tau));
  cg_out.commit();

  // daily medians per market plus a pooled variant
  OutputFile dm_out(paths.daily_median());
  dm_out.write_line(std::string(kDailyMedianHeader));
  for (const auto& dm : aggregate_daily(panel.obs))
    dm_out.write_line(std::string(to_string(dm.market)) + "," + dm.date.to_string() + "," +
                      fmt_double(dm.median_cg_bp) + "," + std::to_string(dm.n_cells));
  {
    std::map<Date, std::vector<double>> pooled;
    for (const auto& o : panel.obs) pooled[o.date].push_back(o.cg_bp);
    for (auto& [date, vals] : pooled)
      dm_out.write_line("POOLED," + date.to_string() + "," + fmt_double(median(vals)) + "," +
                        std::to_string(vals.size()));
  }
  dm_out.commit();

  // distribution stats + histogram plot data over raw observations
  std::vector<double> all_cg, spx_cg, rut_cg;
  for (const auto& o : panel.obs) {
    all_cg.push_back(o.cg_bp);
    (o.market == Market::SPX ? spx_cg : rut_cg).push_back(o.cg_bp);
  }
  ojson stats;
  stats["bin_width_bp"] = cfg.hist_bin_bp;
  OutputFile hist_out(paths.hist());
  hist_out.write_line(std::string(kHistHeader));
  auto emit_scope = [&](const char* scope, const std::vector<double>& vals) {
    if (vals.empty()) {
      stats[scope] = nullptr;
      return;
    }
    const DistStats s = distribution_stats(vals, cfg.hist_bin_bp);
    stats[scope] = dist_stats_json(s);
    for (const auto& hb : s.histogram)
      hist_out.write_line(std::string(scope) + "," + fmt_double(hb.lo) + "," + fmt_double(hb.hi) +
                          "," + std::to_string(hb.count));
  };
  emit_scope("POOLED", all_cg);
  emit_scope("SPX", spx_cg);
  emit_scope("RUT", rut_cg);
  hist_out.commit();
  write_json(paths.dist_stats(), stats);

  OutputFile p_out(paths.panel());
  p_out.write_line(std::string(kPanelHeader));
  for (const auto& r : panel.rows)
    p_out.write_line(std::string(to_string(r.market)) + "," + r.date.to_string() + "," +
                     r.expiry.to_string() + "," + fmt_double(r.tau) + "," +
                     std::string(bin_label(r.bin)) + "," + fmt_double(r.cg_bp) + "," +
                     fmt_double(r.gbm_1y) + "," + fmt_double(r.gbm_10y) + "," +
                     fmt_double(r.ba_over_tau) + "," + fmt_double(r.nfci) + "," +
                     (r.market == Market::SPX ? "1" : "0"));
  p_out.commit();

  ojson audit;
  audit["cells_in"] = panel.audit.cells_in;
  audit["missing_curve"] = panel.audit.missing_curve;
  audit["extrapolated_df"] = panel.audit.extrapolated_df;
  audit["carrygap_obs"] = panel.audit.obs_out;
  audit["sub_1m_excluded"] = panel.audit.sub_1m;
  audit["missing_rate"] = panel.audit.missing_rate;
  audit["missing_vol"] = panel.audit.missing_vol;
  audit["missing_nfci"] = panel.audit.missing_nfci;
  audit["regression_rows"] = panel.audit.rows_out;
  audit["macro_duplicate_warnings"] = macro.n_duplicate_warnings;
  write_json(paths.panel_audit(), audit);
}

inline std::vector<PanelRow> read_panel_csv(const std::string& path) {
  CsvReader reader(path, kPanelHeader);
  std::vector<PanelRow> out;
  std::vector<std::string_view> f;
  while (reader.next(f)) {
    PanelRow r{};
    r.market = parse_market(f[0]);
    r.date = parse_date(f[1]);
    r.expiry = parse_date(f[2]);
    r.tau = parse_double(f[3], "tau");
    r.bin = parse_bin(f[4]);
    r.cg_bp = parse_double(f[5], "cg_bp");
    r.gbm_1y = parse_double(f[6], "gbm_1y");
    r.gbm_10y = parse_double(f[7], "gbm_10y");
    r.ba_over_tau = parse_double(f[8], "ba_over_tau");
    r.nfci = parse_double(f[9], "nfci");
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// stage: regression fits
// ---------------------------------------------------------------------------

inline ojson fit_to_json(const OlsFit& fit) {
  ojson j;
  j["spec"] = std::string(to_string(fit.spec));
  j["benchmark"] = std::string(to_string(fit.benchmark));
  j["n_obs"] = fit.n_obs;
  j["n_days"] = fit.n_days;
  j["n_params"] = fit.n_params;
  j["se_available"] = fit.se_available;
  ojson coef, se, tstat, pval;
  for (size_t i = 0; i < fit.names.size(); ++i) {
    coef[fit.names[i]] = fit.coef[i];
    se[fit.names[i]] = fit.se[i];
    tstat[fit.names[i]] = fit.tstat[i];
    pval[fit.names[i]] = fit.pvalue[i];
  }
  j["coefficients"] = coef;
  j["clustered_se"] = se;
  j["t_stats"] = tstat;
  j["p_values"] = pval;
  j["metrics"] = {{"r2", fit.r2},
                  {"adj_r2", fit.adj_r2},
                  {"rmse_bp", fit.rmse_bp},
                  {"mae_bp", fit.mae_bp}};
  ojson bins;
  for (const auto& [bin, br] : fit.per_bin_r2) {
    ojson b;
    b["n"] = br.n;
    b["r2"] = br.valid ? ojson(br.r2) : ojson(nullptr);
    bins[std::string(bin_label(bin))] = b;
  }
  j["per_bin_r2"] = bins;
  j["rel_err"] = {{"daily_mean_rel_err", fit.rel_err.daily_mean_rel_err},
                  {"daily_mean_abs_rel_err", fit.rel_err.daily_mean_abs_rel_err},
                  {"n_excluded_zero_actual", fit.rel_err.n_excluded_zero_actual},
                  {"n_days", fit.rel_err.n_days}};
  return j;
}

inline void stage_regress(const RunConfig& cfg) {
  const OutPaths paths{cfg.out_dir};
  const std::vector<PanelRow> rows = read_panel_csv(paths.panel());
  for (SpecKind spec : cfg.specs) {
    const OlsFit fit = fit_ols(rows, spec, cfg.benchmark);
    write_json(paths.fit(spec, cfg.benchmark), fit_to_json(fit));
  }
}

// ---------------------------------------------------------------------------
// stage: LOYO validation + sign table
// ---------------------------------------------------------------------------

inline ojson aggregates_json(const LoyoAggregates& a) {
  return ojson{{"mean_oos_r2", a.mean_oos_r2},
               {"median_oos_r2", a.median_oos_r2},
               {"pooled_oos_r2", a.pooled_oos_r2},
               {"mean_corr", a.mean_corr},
               {"mean_rmse_bp", a.mean_rmse_bp},
               {"n_folds_used", a.n_folds_used},
               {"years_positive", a.years_positive}};
}

inline void stage_loyo(const RunConfig& cfg) {
  const OutPaths paths{cfg.out_dir};
  const std::vector<PanelRow> rows = read_panel_csv(paths.panel());

  OutputFile sign_out(paths.sign_table());
  sign_out.write_line("spec,benchmark,coefficient,n_pos,n_neg,n_zero,n_folds,rendered");
  for (SpecKind spec : cfg.specs) {
    const LoyoReport rep =
        run_loyo(rows, spec, cfg.benchmark, cfg.loyo_min_test_rows, cfg.workers);

    OutputFile fold_out(paths.loyo(spec, cfg.benchmark));
    std::string header = "year,n_train,n_test,used,oos_r2,oos_r2_trainmean,corr,rmse_bp";
    for (const auto& n : rep.names) header += ",coef_" + n;
    fold_out.write_line(header);
    for (const auto& f : rep.folds) {
      std::string line = std::to_string(f.year) + "," + std::to_string(f.n_train) + "," +
                         std::to_string(f.n_test) + "," + (f.used ? "1" : "0") + "," +
                         fmt_double(f.oos_r2) + "," + fmt_double(f.oos_r2_trainmean) + "," +
                         fmt_double(f.corr) + "," + fmt_double(f.rmse_bp);
      for (size_t j = 0; j < rep.names.size(); ++j)
        line += "," + (f.used ? fmt_double(f.coef[j]) : std::string());
      fold_out.write_line(line);
    }
    fold_out.commit();

    ojson summary;
    summary["spec"] = std::string(to_string(spec));
    summary["benchmark"] = std::string(to_string(cfg.benchmark));
    summary["aggregates"] = aggregates_json(rep.all);
    summary["ex2020"] = rep.ex2020 ? aggregates_json(*rep.ex2020) : ojson(nullptr);
    ojson signs = ojson::array();
    for (const auto& s : rep.signs)
      signs.push_back({{"name", s.name},
                       {"n_pos", s.n_pos},
                       {"n_neg", s.n_neg},
                       {"n_zero", s.n_zero},
                       {"rendered", render_sign(s)}});
    summary["signs"] = signs;
    write_json(paths.loyo_summary(spec, cfg.benchmark), summary);

    for (const auto& s : rep.signs)
      sign_out.write_line(std::string(to_string(spec)) + "," +
                          std::string(to_string(cfg.benchmark)) + "," + s.name + "," +
                          std::to_string(s.n_pos) + "," + std::to_string(s.n_neg) + "," +
                          std::to_string(s.n_zero) + "," + std::to_string(s.n_pos + s.n_neg) +
                          "," + render_sign(s));
  }
  sign_out.commit();
}

// ---------------------------------------------------------------------------
// stage: Monte Carlo closed-form check
// ---------------------------------------------------------------------------

inline bool stage_mc_check(const RunConfig& cfg) {
  const OutPaths paths{cfg.out_dir};
  McConfig mc;
  mc.sigma = cfg.mc_sigma;
  mc.horizon = cfg.mc_horizon;
  mc.n_paths = cfg.mc_paths;
  mc.n_steps = cfg.mc_steps;
  mc.seed = cfg.seed;
  const McResult r = mc_support(mc, cfg.workers);

  auto rel_ok = [&](double est, double target) {
    if (target == 0.0) return est == 0.0;
    return std::abs(est - target) <= cfg.mc_tolerance * std::abs(target);
  };
  const bool ok_support = rel_ok(r.mean_support_at_horizon, r.closed_form_support);
  const bool ok_avg = rel_ok(r.mean_time_avg_support, r.closed_form_time_avg);

  ojson j;
  j["sigma"] = mc.sigma;
  j["horizon"] = mc.horizon;
  j["n_paths"] = mc.n_paths;
  j["n_steps"] = mc.n_steps;
  j["seed"] = mc.seed;
  j["tolerance"] = cfg.mc_tolerance;
  j["support_at_horizon"] = {{"closed_form", r.closed_form_support},
                             {"estimate", r.mean_support_at_horizon},
                             {"std_error", r.se_support_at_horizon},
                             {"pass", ok_support}};
  j["time_avg_support"] = {{"closed_form", r.closed_form_time_avg},
                           {"estimate", r.mean_time_avg_support},
                           {"std_error", r.se_time_avg_support},
                           {"pass", ok_avg}};
  j["pass"] = ok_support && ok_avg;
  write_json(paths.pathrisk_check(), j);
  return ok_support && ok_avg;
}

// ---------------------------------------------------------------------------
// manifest + orchestration
// ---------------------------------------------------------------------------

// Config echo: every semantic knob, in fixed order. Execution-only settings
// (worker count, output directory) are deliberately omitted so reruns of the
// same analysis produce byte-identical manifests regardless of where and how
// wide they ran.
inline ojson config_echo(const RunConfig& cfg) {
  ojson j;
  j["benchmark"] = std::string(to_string(cfg.benchmark));
  {
    std::string s;
    for (size_t i = 0; i < cfg.specs.size(); ++i)
      s += std::string(i ? "," : "") + std::string(to_string(cfg.specs[i]));
    j["specs"] = s;
  }
  j["quotes_spx"] = cfg.quotes_spx;
  j["quotes_rut"] = cfg.quotes_rut;
  j["ois"] = cfg.ois;
  j["dgs"] = cfg.dgs;
  j["vix"] = cfg.vix;
  j["rvx"] = cfg.rvx;
  j["nfci"] = cfg.nfci;
  j["snapshot_time"] = format_minute(cfg.snapshot_minute);
  j["min_mid"] = cfg.filters.min_mid;
  j["max_rel_spread"] = cfg.filters.max_rel_spread;
  j["min_strikes"] = cfg.filters.min_strikes;
  j["atm_band"] = cfg.fit.atm_band;
  j["inverse_spread_weighting"] = cfg.fit.inverse_spread_weighting;
  j["accrual"] = cfg.accrual == Accrual::UNIT ? "unit" : "act360";
  j["max_zero_jump_bp"] = cfg.max_zero_jump_bp;
  j["hist_bin_bp"] = cfg.hist_bin_bp;
  j["loyo"] = cfg.loyo;
  j["loyo_min_test_rows"] = cfg.loyo_min_test_rows;
  j["mc_check"] = cfg.mc_check;
  j["mc_sigma"] = cfg.mc_sigma;
  j["mc_horizon"] = cfg.mc_horizon;
  j["mc_paths"] = cfg.mc_paths;
  j["mc_steps"] = cfg.mc_steps;
  j["mc_tolerance"] = cfg.mc_tolerance;
  j["seed"] = cfg.seed;
  return j;
}

inline void write_manifest(const RunConfig& cfg) {
  const OutPaths paths{cfg.out_dir};
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(cfg.out_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name == "run_manifest.json" || name.ends_with(".partial")) continue;
    names.push_back(name);
  }
  std::sort(names.begin(), names.end());
  ojson files = ojson::array();
  for (const auto& name : names) {
    const std::string full = cfg.out_dir + "/" + name;
    files.push_back({{"name", name},
                     {"bytes", long(std::filesystem::file_size(full))},
                     {"fnv1a64", hex64(fnv1a64_file(full))}});
  }
  ojson j;
  j["config"] = config_echo(cfg);
  j["files"] = files;
  write_json(paths.manifest(), j);
}

// Full run: validate, execute every configured stage in order, hash the
// artifacts. Composition contract: this calls exactly the per-stage functions
// the subcommands call, so stage-at-a-time execution produces the same bytes.
inline int run_pipeline(const RunConfig& cfg, std::ostream& log = std::cerr) {
  try {
    validate_config(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    const ExtractStageResult ex = stage_extract(cfg);
    log << "extract: " << ex.n_fits << " cells fit, " << ex.n_rejects << " rejected\n";
    const CurveStageResult cu = stage_curves(cfg);
    log << "curves: " << cu.n_dates << " dates built, " << cu.n_excluded << " excluded\n";
    stage_panel(cfg);
    log << "panel: written\n";
    stage_regress(cfg);
    log << "regress: " << cfg.specs.size() << " spec(s) fit\n";
    if (cfg.loyo) {
      stage_loyo(cfg);
      log << "loyo: done\n";
    }
    if (cfg.mc_check) {
      const bool ok = stage_mc_check(cfg);
      log << "mc-check: " << (ok ? "pass" : "FAIL") << "\n";
    }
    write_manifest(cfg);
    log << "manifest: " << OutPaths{cfg.out_dir}.manifest() << "\n";
    return 0;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace carrygap
