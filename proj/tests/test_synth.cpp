#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "carrygap/implied_discount.hpp"
#include "carrygap/synthgen.hpp"

using namespace carrygap;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

long count_lines(const std::string& text) {
  return long(std::count(text.begin(), text.end(), '\n'));
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

std::string fresh_dir(const char* name) {
  namespace fs = std::filesystem;
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

}  // namespace

// ---------------------------------------------------------------------------
// planted quote cells
// ---------------------------------------------------------------------------

TEST_CASE("planted quote cells carry the parity line exactly when noiseless") {
  PlantedCell p;
  p.b_true = 0.97;
  p.f_true = 4000.0;
  p.half_spread = 0.25;
  p.noise_sd = 0.0;
  for (int k = 3600; k <= 4400; k += 50) p.strikes.push_back(double(k));

  const CellSample s = gen_quote_cell(p);
  REQUIRE(s.pairs.size() == 17);
  // noiseless floor mid is exactly zero, so the default cushion applies
  CHECK(s.cushion == 1.0);

  CHECK(s.pairs[0].market == Market::SPX);
  CHECK(s.pairs[0].date == Date(2024, 1, 2));
  CHECK(s.pairs[0].expiry == Date(2024, 7, 1));

  for (const auto& q : s.pairs) {
    CHECK(q.call_spread == 0.5);
    CHECK(q.put_spread == 0.5);
    CHECK(q.call_mid - 0.5 * q.call_spread >= 0.0);
    CHECK(q.put_mid - 0.5 * q.put_spread >= 0.0);
    CHECK(q.call_mid - q.put_mid == Catch::Approx(0.97 * (4000.0 - q.strike)).margin(1e-9));
  }
  CHECK(std::is_sorted(s.pairs.begin(), s.pairs.end(),
                       [](const QuotePair& a, const QuotePair& b) { return a.strike < b.strike; }));
  CHECK(s.pairs.front().put_mid == s.cushion);  // deepest ITM call pairs with a bare-cushion put

  CellGroup cell;
  cell.key = CellKey{Market::SPX, Date(2024, 1, 2), Date(2024, 7, 1)};
  cell.tau = year_fraction(cell.key.date, cell.key.expiry);
  cell.pairs = s.pairs;
  const FitOutcome out = fit_cell(cell, FitConfig{});
  REQUIRE(std::holds_alternative<CellFit>(out));
  const CellFit& fit = std::get<CellFit>(out);
  CHECK(fit.b_hat == Catch::Approx(0.97).margin(1e-10));
  CHECK(fit.f_hat == Catch::Approx(4000.0).margin(1e-6));
  CHECK(fit.r2 >= 1.0 - 1e-12);
  CHECK(fit.flags == 0u);
  CHECK(fit.n_strikes == 17);
}

TEST_CASE("planted quote cells sort strikes without detaching their mids") {
  PlantedCell p;
  p.b_true = 0.9;
  p.f_true = 100.0;
  p.half_spread = 0.05;
  p.strikes = {120.0, 80.0, 100.0};

  const CellSample s = gen_quote_cell(p);
  REQUIRE(s.pairs.size() == 3);
  CHECK(s.pairs[0].strike == 80.0);
  CHECK(s.pairs[1].strike == 100.0);
  CHECK(s.pairs[2].strike == 120.0);
  for (const auto& q : s.pairs)
    CHECK(q.call_mid - q.put_mid == Catch::Approx(0.9 * (100.0 - q.strike)).margin(1e-12));
}

TEST_CASE("planted quote cells raise the cushion so wide quotes cannot cross zero") {
  PlantedCell p;
  p.b_true = 0.98;
  p.f_true = 4000.0;
  p.half_spread = 3.0;  // wider than the default cushion
  for (int k = 3700; k <= 4300; k += 60) p.strikes.push_back(double(k));

  const CellSample s = gen_quote_cell(p);
  CHECK(s.cushion == Catch::Approx(3.01).margin(1e-12));
  double min_bid = std::numeric_limits<double>::infinity();
  for (const auto& q : s.pairs) {
    min_bid = std::min(min_bid, q.call_mid - 0.5 * q.call_spread);
    min_bid = std::min(min_bid, q.put_mid - 0.5 * q.put_spread);
  }
  CHECK(min_bid == Catch::Approx(0.01).margin(1e-9));

  // heavy parity noise: the floor scan still keeps every reconstructed bid >= 0
  p.noise_sd = 5.0;
  p.seed = 1;
  const CellSample noisy = gen_quote_cell(p);
  for (const auto& q : noisy.pairs) {
    CHECK(q.call_mid - 0.5 * q.call_spread >= 0.0);
    CHECK(q.put_mid - 0.5 * q.put_spread >= 0.0);
  }
}

TEST_CASE("planted quote cells are deterministic per seed") {
  PlantedCell p;
  p.b_true = 0.95;
  p.f_true = 2000.0;
  p.noise_sd = 2.0;
  p.seed = 5;
  for (int k = 1800; k <= 2200; k += 40) p.strikes.push_back(double(k));

  const CellSample a = gen_quote_cell(p);
  const CellSample b = gen_quote_cell(p);
  REQUIRE(a.pairs.size() == b.pairs.size());
  for (size_t i = 0; i < a.pairs.size(); ++i) {
    CHECK(a.pairs[i].call_mid == b.pairs[i].call_mid);
    CHECK(a.pairs[i].put_mid == b.pairs[i].put_mid);
  }

  p.seed = 6;
  const CellSample c = gen_quote_cell(p);
  bool differs = false;
  for (size_t i = 0; i < a.pairs.size(); ++i)
    differs = differs || a.pairs[i].call_mid != c.pairs[i].call_mid;
  CHECK(differs);
}

TEST_CASE("planted quote cell input validation") {
  auto base = [] {
    PlantedCell p;
    p.strikes = {90.0, 100.0, 110.0};
    return p;
  };
  {
    auto p = base();
    p.b_true = 0.0;
    REQUIRE_THROWS_WITH(gen_quote_cell(p), ContainsSubstring("b_true"));
  }
  {
    auto p = base();
    p.b_true = 1.11;
    REQUIRE_THROWS_WITH(gen_quote_cell(p), ContainsSubstring("b_true"));
  }
  {
    auto p = base();
    p.b_true = 1.1;  // boundary value is allowed
    REQUIRE_NOTHROW(gen_quote_cell(p));
  }
  {
    auto p = base();
    p.f_true = 0.0;
    REQUIRE_THROWS_WITH(gen_quote_cell(p), ContainsSubstring("f_true"));
  }
  {
    auto p = base();
    p.strikes.clear();
    REQUIRE_THROWS_WITH(gen_quote_cell(p), ContainsSubstring("no strikes"));
  }
  {
    auto p = base();
    p.strikes = {100.0, -1.0};
    REQUIRE_THROWS_WITH(gen_quote_cell(p), ContainsSubstring("positive"));
  }
  {
    auto p = base();
    p.strikes = {100.0, 100.0};
    REQUIRE_THROWS_WITH(gen_quote_cell(p), ContainsSubstring("distinct"));
  }
  {
    auto p = base();
    p.half_spread = -0.1;
    REQUIRE_THROWS_WITH(gen_quote_cell(p), ContainsSubstring("negative"));
  }
  {
    auto p = base();
    p.noise_sd = -0.1;
    REQUIRE_THROWS_WITH(gen_quote_cell(p), ContainsSubstring("negative"));
  }
}

// ---------------------------------------------------------------------------
// planted regression panels
// ---------------------------------------------------------------------------

TEST_CASE("planted regression panels have the declared layout and echo their truth") {
  PlantedPanelSpec s;
  s.start_year = 2018;
  s.n_years = 3;
  s.days_per_year = 5;
  s.cells_per_day = 2;
  s.seed = 11;

  const GeneratedPanel g = gen_regression_panel(s);
  REQUIRE(g.rows.size() == 60);  // 3y x 5d x 2 markets x 2 cells
  CHECK(g.truth.names == regressor_names(SpecKind::POOLED));
  CHECK(g.truth.coef == s.coef_vector());
  CHECK(g.truth.noise_sd_bp == s.noise_sd_bp);

  long n_spx = 0;
  std::map<Date, double> nfci_by_date, ratio_by_date;
  for (size_t i = 0; i < g.rows.size(); ++i) {
    const PanelRow& r = g.rows[i];
    CHECK(r.date.is_business_day());
    CHECK((r.date.year() >= 2018 && r.date.year() <= 2020));
    CHECK(days_between(r.date, r.expiry) >= 32);
    CHECK(r.tau == year_fraction(r.date, r.expiry));
    CHECK(r.bin == assign_bin(r.tau));
    CHECK(r.tau <= 2.02);
    CHECK(r.gbm_1y > 0.0);
    CHECK(r.gbm_10y > 0.0);
    CHECK(r.ba_over_tau > 0.0);
    CHECK((r.nfci >= -1.0 && r.nfci <= 2.0));
    if (r.market == Market::SPX) ++n_spx;
    if (i > 0) CHECK(!(r.date < g.rows[i - 1].date));
    // one macro state per day: nfci is shared, and the two funding terms keep
    // a common rate ratio across every row of the day (vol and tau cancel)
    auto [it, fresh] = nfci_by_date.try_emplace(r.date, r.nfci);
    if (!fresh) CHECK(it->second == r.nfci);
    auto [jt, fresh_ratio] = ratio_by_date.try_emplace(r.date, r.gbm_10y / r.gbm_1y);
    if (!fresh_ratio) CHECK(jt->second == Catch::Approx(r.gbm_10y / r.gbm_1y).epsilon(1e-12));
  }
  CHECK(n_spx == 30);
  CHECK(nfci_by_date.size() == 15);

  const GeneratedPanel h = gen_regression_panel(s);
  REQUIRE(h.rows.size() == g.rows.size());
  bool same = true;
  for (size_t i = 0; i < g.rows.size(); ++i) {
    const PanelRow& a = g.rows[i];
    const PanelRow& b = h.rows[i];
    same = same && a.market == b.market && a.date == b.date && a.expiry == b.expiry &&
           a.tau == b.tau && a.cg_bp == b.cg_bp && a.gbm_1y == b.gbm_1y &&
           a.gbm_10y == b.gbm_10y && a.ba_over_tau == b.ba_over_tau && a.nfci == b.nfci;
  }
  CHECK(same);

  s.seed = 12;
  const GeneratedPanel k = gen_regression_panel(s);
  bool differs = false;
  for (size_t i = 0; i < g.rows.size(); ++i) differs = differs || g.rows[i].cg_bp != k.rows[i].cg_bp;
  CHECK(differs);
}

TEST_CASE("noiseless planted panels are recovered exactly by the pooled fit") {
  PlantedPanelSpec s;
  s.noise_sd_bp = 0.0;
  s.start_year = 2019;
  s.n_years = 3;
  s.days_per_year = 30;
  s.cells_per_day = 3;
  s.seed = 17;

  const GeneratedPanel g = gen_regression_panel(s);
  REQUIRE(g.rows.size() == 540);

  const OlsFit fit = fit_ols(g.rows, SpecKind::POOLED, CurveKind::OIS);
  REQUIRE(fit.coef.size() == g.truth.coef.size());
  for (size_t j = 0; j < fit.coef.size(); ++j)
    CHECK(fit.coef[j] == Catch::Approx(g.truth.coef[j]).margin(1e-5));
  CHECK(fit.r2 >= 1.0 - 1e-10);
  CHECK(fit.rmse_bp < 1e-6);

  const LoyoReport rep = run_loyo(g.rows, SpecKind::POOLED, CurveKind::OIS);
  REQUIRE(rep.folds.size() == 3);
  CHECK(rep.all.n_folds_used == 3);
  CHECK(rep.all.mean_oos_r2 > 1.0 - 1e-9);
  CHECK(rep.all.pooled_oos_r2 > 1.0 - 1e-9);
  CHECK(rep.all.years_positive == 3);
  REQUIRE(rep.ex2020.has_value());  // 2020 sits inside the sample
  CHECK(rep.ex2020->n_folds_used == 2);

  // every fold recovers the planted coefficient signs
  REQUIRE(rep.signs.size() == g.truth.coef.size());
  for (size_t j = 0; j < rep.signs.size(); ++j) {
    CHECK(rep.signs[j].n_zero == 0);
    CHECK(rep.signs[j].n_pos == (g.truth.coef[j] > 0.0 ? 3 : 0));
    CHECK(rep.signs[j].n_neg == (g.truth.coef[j] > 0.0 ? 0 : 3));
  }
}

TEST_CASE("noisy planted panels reproduce the planted noise level in the fit rmse") {
  PlantedPanelSpec s;
  s.start_year = 2015;
  s.n_years = 4;
  s.days_per_year = 40;
  s.cells_per_day = 4;
  s.seed = 23;

  const GeneratedPanel g = gen_regression_panel(s);
  REQUIRE(g.rows.size() == 1280);

  const OlsFit fit = fit_ols(g.rows, SpecKind::POOLED, CurveKind::OIS);
  CHECK(fit.n_obs == 1280);
  CHECK(fit.n_days == 160);
  CHECK(fit.n_params == 6);
  CHECK(fit.se_available);
  // with the model exactly right, the residual scale estimates the noise sd
  CHECK(fit.rmse_bp > 12.0);
  CHECK(fit.rmse_bp < 15.2);
  CHECK(fit.r2 > 0.0);
  CHECK(fit.r2 < 1.0);
}

TEST_CASE("planted regression panel input validation") {
  {
    PlantedPanelSpec s;
    s.n_years = 2;
    REQUIRE_THROWS_WITH(gen_regression_panel(s), ContainsSubstring("3 years"));
  }
  {
    PlantedPanelSpec s;
    s.noise_sd_bp = -1.0;
    REQUIRE_THROWS_WITH(gen_regression_panel(s), ContainsSubstring("negative noise"));
  }
  {
    PlantedPanelSpec s;
    s.days_per_year = 0;
    REQUIRE_THROWS_WITH(gen_regression_panel(s), ContainsSubstring("empty layout"));
  }
  {
    PlantedPanelSpec s;
    s.cells_per_day = 0;
    REQUIRE_THROWS_WITH(gen_regression_panel(s), ContainsSubstring("empty layout"));
  }
}

// ---------------------------------------------------------------------------
// full synthetic input dataset
// ---------------------------------------------------------------------------

TEST_CASE("synthetic datasets are schema-correct and byte-stable across reruns") {
  DatasetSpec spec;
  spec.start_year = 2021;
  spec.n_years = 1;
  spec.days_per_year = 3;
  spec.taus = {0.25, 0.5};
  spec.strikes_per_cell = 9;
  spec.seed = 9;

  const std::string dir_a = fresh_dir("cg_synth_a");
  const std::string dir_b = fresh_dir("cg_synth_b");
  const DatasetTruth ta = write_synthetic_dataset(dir_a, spec);
  const DatasetTruth tb = write_synthetic_dataset(dir_b, spec);

  CHECK(ta.n_cells == 12);  // 3 days x 2 taus x 2 markets
  CHECK(ta.cg_mean_bp == spec.cg_mean_bp);
  CHECK(ta.cg_sd_bp == spec.cg_sd_bp);
  CHECK(std::abs(ta.realized_mean_cg_bp - spec.cg_mean_bp) < 12.0);  // 12 draws at sd 8
  CHECK(ta.realized_mean_cg_bp ==
        Catch::Approx(0.5 * (ta.realized_mean_spx + ta.realized_mean_rut)).margin(1e-9));
  CHECK(tb.realized_mean_cg_bp == ta.realized_mean_cg_bp);

  const DatasetFiles fa = dataset_files(dir_a);
  const DatasetFiles fb = dataset_files(dir_b);
  const std::vector<std::pair<std::string, std::string>> mirrors = {
      {fa.quotes_spx, fb.quotes_spx},
      {fa.quotes_rut, fb.quotes_rut},
      {fa.ois, fb.ois},
      {fa.dgs, fb.dgs},
      {fa.vix, fb.vix},
      {fa.rvx, fb.rvx},
      {fa.nfci, fb.nfci}};
  for (const auto& [pa, pb] : mirrors) CHECK(slurp(pa) == slurp(pb));

  const std::string spx = slurp(fa.quotes_spx);
  CHECK(first_line(spx) == std::string(kQuoteHeader));
  CHECK(count_lines(spx) == 1 + 6 * (2 * 9 + 1));  // 6 cells: 9 pairs plus one decoy each
  const std::string ois_text = slurp(fa.ois);
  CHECK(first_line(ois_text) == std::string(kCurveHeader));
  CHECK(count_lines(ois_text) == 1 + 3 * 5);
  CHECK(count_lines(slurp(fa.dgs)) == 1 + 3 * 6);
  const std::string vix_text = slurp(fa.vix);
  CHECK(first_line(vix_text) == std::string(kSeriesHeader));
  CHECK(count_lines(vix_text) == 1 + 3);

  // the weekly series releases only on Fridays of the same business-day grid
  const SeriesLoad vix_s = load_series(fa.vix);
  const SeriesLoad nfci_s = load_series(fa.nfci);
  REQUIRE(vix_s.values.size() == 3);
  long fridays = 0;
  for (const auto& [d, v] : vix_s.values)
    if (std::chrono::weekday{d.sd} == std::chrono::Friday) ++fridays;
  CHECK(long(nfci_s.values.size()) == fridays);
  for (const auto& [d, v] : nfci_s.values) {
    CHECK(std::chrono::weekday{d.sd} == std::chrono::Friday);
    CHECK(vix_s.values.count(d) == 1);
  }

  spec.seed = 10;
  const std::string dir_c = fresh_dir("cg_synth_c");
  write_synthetic_dataset(dir_c, spec);
  CHECK(slurp(dataset_files(dir_c).quotes_spx) != spx);
}

TEST_CASE("synthetic datasets round trip through ingest and recover the planted gap") {
  DatasetSpec spec;
  spec.start_year = 2022;
  spec.n_years = 1;
  spec.days_per_year = 4;
  spec.taus = {0.25, 0.75};
  spec.strikes_per_cell = 11;
  spec.seed = 21;

  const std::string dir = fresh_dir("cg_synth_rt");
  const DatasetTruth truth = write_synthetic_dataset(dir, spec);
  REQUIRE(truth.n_cells == 16);
  const DatasetFiles files = dataset_files(dir);

  const CurveQuotesLoad ois = load_curve_quotes(files.ois);
  REQUIRE(ois.pillars.size() == 4);
  for (const auto& [d, pillars] : ois.pillars) REQUIRE(pillars.size() == 5);

  std::vector<CellGroup> cells;
  for (Market m : {Market::SPX, Market::RUT}) {
    const std::string& tape = m == Market::SPX ? files.quotes_spx : files.quotes_rut;
    const LoadResult load = load_quotes(tape, m, 15 * 60 + 45);
    CHECK(load.n_rows == 184);  // 8 cells x (22 quotes + 1 decoy)
    CHECK(load.n_other_time == 8);
    CHECK(load.skipped() == 0);
    REQUIRE(load.quotes.size() == 176);
    // the decoys are the only rows at the off-snapshot minute
    CHECK(load_quotes(tape, m, 10 * 60 + 30).quotes.size() == 8);

    const PairResult pr = pair_quotes(load.quotes);
    CHECK(pr.n_unmatched == 0);
    CHECK(pr.n_duplicates == 0);
    REQUIRE(pr.pairs.size() == 88);

    const FilterResult fr = apply_filters(pr.pairs, FilterConfig{});
    CHECK(fr.dropped_min_mid == 0);
    CHECK(fr.dropped_rel_spread == 0);
    CHECK(fr.n_cells_dropped == 0);
    REQUIRE(fr.cells.size() == 8);
    for (auto& c : fr.cells) cells.push_back(std::move(c));
  }

  const ExtractResult res = extract_panel(cells, FitConfig{});
  REQUIRE(res.fits.size() == 16);
  CHECK(res.rejects.empty());

  // re-bootstrap the written benchmark curve and undo the planted discounting;
  // the per-cell gaps must average back to the realized planted mean
  long double sum_cg = 0.0L;
  for (const CellFit& f : res.fits) {
    CHECK(f.flags == 0u);
    CHECK(f.r2 > 0.9999);
    const RateCurve curve = bootstrap_ois(f.key.date, ois.pillars.at(f.key.date));
    const CarryGap cg = carry_gap(curve.discount_at(f.tau), f.b_hat, f.tau);
    CHECK(std::abs(cg.cg_bp - spec.cg_mean_bp) < 60.0);
    sum_cg += cg.cg_bp;
  }
  const double mean_cg = double(sum_cg / 16.0L);
  CHECK(mean_cg == Catch::Approx(truth.realized_mean_cg_bp).margin(2.5));
}

TEST_CASE("synthetic dataset input validation") {
  {
    DatasetSpec s;
    s.days_per_year = 0;
    REQUIRE_THROWS_WITH(write_synthetic_dataset("/tmp", s), ContainsSubstring("empty layout"));
  }
  {
    DatasetSpec s;
    s.n_years = 0;
    REQUIRE_THROWS_WITH(write_synthetic_dataset("/tmp", s), ContainsSubstring("empty layout"));
  }
  {
    DatasetSpec s;
    s.strikes_per_cell = 1;
    REQUIRE_THROWS_WITH(write_synthetic_dataset("/tmp", s), ContainsSubstring("2 strikes"));
  }
}
