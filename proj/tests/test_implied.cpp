#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "carrygap/implied_discount.hpp"

using namespace carrygap;

namespace {

const Date kD(2024, 1, 2);
const Date kE(2024, 3, 15);

CellGroup make_cell_g(Market m, Date d, Date e, const std::vector<double>& strikes,
                      const std::function<double(double)>& g_of_k, double cs = 0.5,
                      double ps = 0.3, double put_base = 5.0) {
  CellGroup g;
  g.key = {m, d, e};
  g.tau = year_fraction(d, e);
  for (double k : strikes) {
    const double gg = g_of_k(k);
    const double put = std::max(-gg, 0.0) + put_base;
    g.pairs.push_back({m, d, e, k, gg + put, put, cs, ps});
  }
  return g;
}

CellGroup make_cell(Market m, Date d, Date e, double b, double f,
                    const std::vector<double>& strikes, double cs = 0.5, double ps = 0.3) {
  return make_cell_g(m, d, e, strikes, [=](double k) { return b * (f - k); }, cs, ps);
}

std::vector<double> ladder(double lo, double step, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(lo + step * i);
  return v;
}

}  // namespace

TEST_CASE("noiseless parity line is recovered to machine precision") {
  const double b = 0.97, f = 4000.0;
  const CellGroup cell = make_cell(Market::SPX, kD, kE, b, f, ladder(3800, 50, 9));
  const FitOutcome out = fit_cell(cell, FitConfig{});
  REQUIRE(std::holds_alternative<CellFit>(out));
  const CellFit& fit = std::get<CellFit>(out);
  CHECK(fit.b_hat == Catch::Approx(b).epsilon(1e-12));
  CHECK(fit.f_hat == Catch::Approx(f).epsilon(1e-12));
  CHECK(fit.r2 > 1.0 - 1e-12);
  CHECK(fit.n_strikes == 9);
  CHECK(fit.flags == 0);
  CHECK(fit.tau == cell.tau);
  CHECK(fit.key == cell.key);
  // all pairs share half-spread (0.5 + 0.3)/2 = 0.4; bp of discounted forward
  CHECK(fit.ba_med_bp == Catch::Approx(1e4 * 0.4 / (f * b)).epsilon(1e-9));
}

TEST_CASE("inverse-spread weighting mutes a wide-quoted outlier") {
  const double b = 0.97, f = 4000.0;
  CellGroup cell = make_cell(Market::SPX, kD, kE, b, f, ladder(3800, 50, 8));
  // ninth strike quotes way off the line with an enormous spread
  const double k_out = 4200.0, g_out = b * (f - k_out) + 50.0;
  const double put = std::max(-g_out, 0.0) + 5.0;
  cell.pairs.push_back({Market::SPX, kD, kE, k_out, g_out + put, put, 500.0, 500.0});

  FitConfig plain;
  FitConfig weighted;
  weighted.inverse_spread_weighting = true;
  const auto fit_u = std::get<CellFit>(fit_cell(cell, plain));
  const auto fit_w = std::get<CellFit>(fit_cell(cell, weighted));
  CHECK(std::abs(fit_u.b_hat - b) > 1e-2);
  CHECK(std::abs(fit_w.b_hat - b) < 5e-4);
  CHECK(std::abs(fit_w.f_hat - f) < std::abs(fit_u.f_hat - f));
}

TEST_CASE("reject reasons") {
  FitConfig cfg;

  SECTION("too few strikes") {
    const CellGroup cell = make_cell(Market::SPX, kD, kE, 0.97, 4000, ladder(3900, 50, 3));
    const FitOutcome out = fit_cell(cell, cfg);
    REQUIRE(std::holds_alternative<CellReject>(out));
    const CellReject& rej = std::get<CellReject>(out);
    CHECK(rej.reason == RejectReason::TOO_FEW_STRIKES);
    CHECK(rej.n_strikes == 3);
    CHECK(rej.key == cell.key);
    CHECK(rej.tau == cell.tau);
  }

  SECTION("fewer than two strikes rejected even when the floor allows it") {
    cfg.min_strikes = 1;
    const CellGroup cell = make_cell(Market::SPX, kD, kE, 0.97, 4000, {4000.0});
    const FitOutcome out = fit_cell(cell, cfg);
    REQUIRE(std::holds_alternative<CellReject>(out));
    CHECK(std::get<CellReject>(out).reason == RejectReason::TOO_FEW_STRIKES);
  }

  SECTION("no strike dispersion") {
    cfg.min_strikes = 2;
    const CellGroup cell = make_cell(Market::SPX, kD, kE, 0.97, 4000, {4000.0, 4000.0});
    const FitOutcome out = fit_cell(cell, cfg);
    REQUIRE(std::holds_alternative<CellReject>(out));
    CHECK(std::get<CellReject>(out).reason == RejectReason::SINGULAR_DESIGN);
  }

  SECTION("upward-sloping synthetic forward") {
    const CellGroup cell = make_cell_g(Market::SPX, kD, kE, ladder(3800, 50, 9),
                                       [](double k) { return 0.1 * (k - 4000.0); });
    const FitOutcome out = fit_cell(cell, cfg);
    REQUIRE(std::holds_alternative<CellReject>(out));
    CHECK(std::get<CellReject>(out).reason == RejectReason::NON_NEGATIVE_SLOPE);
  }

  SECTION("negative implied forward") {
    const CellGroup cell = make_cell_g(Market::SPX, kD, kE, ladder(3800, 50, 9),
                                       [](double k) { return -0.5 * k - 10.0; });
    const FitOutcome out = fit_cell(cell, cfg);
    REQUIRE(std::holds_alternative<CellReject>(out));
    CHECK(std::get<CellReject>(out).reason == RejectReason::NON_POSITIVE_FORWARD);
  }

  SECTION("reason labels") {
    CHECK(to_string(RejectReason::TOO_FEW_STRIKES) == "too_few_strikes");
    CHECK(to_string(RejectReason::NON_NEGATIVE_SLOPE) == "non_negative_slope");
    CHECK(to_string(RejectReason::SINGULAR_DESIGN) == "singular_design");
    CHECK(to_string(RejectReason::NON_POSITIVE_FORWARD) == "non_positive_forward");
  }
}

TEST_CASE("quality flags") {
  SECTION("discount factor above the sanity cap") {
    const CellGroup cell = make_cell(Market::SPX, kD, kE, 1.25, 4000, ladder(3800, 50, 9));
    const CellFit fit = std::get<CellFit>(fit_cell(cell, FitConfig{}));
    CHECK(fit.b_hat == Catch::Approx(1.25).epsilon(1e-12));
    CHECK(fit.flags == kFlagHighB);
  }

  SECTION("forward far outside the strike range, no ATM strike") {
    const CellGroup cell = make_cell(Market::SPX, kD, kE, 0.97, 4000, ladder(5000, 50, 9));
    const CellFit fit = std::get<CellFit>(fit_cell(cell, FitConfig{}));
    CHECK(fit.f_hat == Catch::Approx(4000.0).epsilon(1e-10));
    CHECK(fit.flags == (kFlagForwardOff | kFlagAtmFallback));
  }

  SECTION("ATM fallback takes the nearest strike's spread") {
    CellGroup cell = make_cell(Market::SPX, kD, kE, 0.97, 4000, ladder(4150, 50, 9));
    cell.pairs[0].call_spread = 1.0;  // nearest strike (4150) quoted wider
    cell.pairs[0].put_spread = 0.5;
    const CellFit fit = std::get<CellFit>(fit_cell(cell, FitConfig{}));
    CHECK(fit.flags == kFlagAtmFallback);
    CHECK(fit.ba_med_bp ==
          Catch::Approx(1e4 * 0.75 / (fit.f_hat * fit.b_hat)).epsilon(1e-12));
  }
}

TEST_CASE("r2 drops below one under noise but stays in [0, 1]") {
  CellGroup cell = make_cell(Market::SPX, kD, kE, 0.97, 4000, ladder(3800, 50, 9));
  for (size_t i = 0; i < cell.pairs.size(); ++i)
    cell.pairs[i].call_mid += (i % 2 == 0 ? 0.5 : -0.5);
  const CellFit fit = std::get<CellFit>(fit_cell(cell, FitConfig{}));
  CHECK(fit.r2 < 1.0);
  CHECK(fit.r2 > 0.99);  // noise is tiny next to the strike-range swing in g
}

TEST_CASE("extract_panel sorts deterministically and is worker-count invariant") {
  const Date d2(2024, 1, 3);
  const Date e_feb(2024, 2, 16), e_jun(2024, 6, 21);
  std::vector<CellGroup> cells;
  cells.push_back(make_cell(Market::SPX, d2, e_jun, 0.96, 4010, ladder(3800, 50, 9)));
  cells.push_back(make_cell(Market::SPX, kD, kE, 0.97, 4000, ladder(3800, 50, 9)));
  cells.push_back(make_cell(Market::RUT, kD, kE, 0.98, 2000, ladder(1900, 25, 9)));
  cells.push_back(make_cell(Market::SPX, kD, e_jun, 0.95, 4020, ladder(3800, 50, 9)));
  cells.push_back(make_cell(Market::SPX, kD, e_feb, 0.99, 4000, ladder(3900, 50, 3)));

  const ExtractResult one = extract_panel(cells, FitConfig{}, 1);
  REQUIRE(one.fits.size() == 4);
  REQUIRE(one.rejects.size() == 1);
  // (market, date, tau) ascending: SPX 01-02 mar, SPX 01-02 jun, SPX 01-03 jun, RUT
  CHECK(one.fits[0].key == CellKey{Market::SPX, kD, kE});
  CHECK(one.fits[1].key == CellKey{Market::SPX, kD, e_jun});
  CHECK(one.fits[2].key == CellKey{Market::SPX, d2, e_jun});
  CHECK(one.fits[3].key == CellKey{Market::RUT, kD, kE});
  CHECK(one.rejects[0].key == CellKey{Market::SPX, kD, e_feb});
  CHECK(one.rejects[0].reason == RejectReason::TOO_FEW_STRIKES);

  const ExtractResult par = extract_panel(cells, FitConfig{}, 4);
  REQUIRE(par.fits.size() == one.fits.size());
  for (size_t i = 0; i < one.fits.size(); ++i) {
    CHECK(par.fits[i].key == one.fits[i].key);
    CHECK(par.fits[i].b_hat == one.fits[i].b_hat);
    CHECK(par.fits[i].f_hat == one.fits[i].f_hat);
    CHECK(par.fits[i].r2 == one.fits[i].r2);
    CHECK(par.fits[i].ba_med_bp == one.fits[i].ba_med_bp);
    CHECK(par.fits[i].flags == one.fits[i].flags);
  }
}
