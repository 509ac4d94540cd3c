#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "carrygap/carrygap.hpp"
#include "carrygap/csv.hpp"
#include "carrygap/curves.hpp"
#include "carrygap/dates.hpp"
#include "carrygap/econometrics.hpp"
#include "carrygap/ingest.hpp"
#include "carrygap/pathrisk.hpp"
#include "carrygap/rng.hpp"
#include "carrygap/types.hpp"

namespace carrygap {

// ---------------------------------------------------------------------------
// planted option cells
// ---------------------------------------------------------------------------

struct PlantedCell {
  double b_true = 0.98;   // in (0, 1.1]
  double f_true = 4000.0;
  std::vector<double> strikes;  // distinct, positive
  double half_spread = 0.25;    // per leg: bid/ask = mid -/+ half_spread
  double noise_sd = 0.0;        // Gaussian noise on the synthetic forward
  std::uint64_t seed = 1;
};

struct CellSample {
  std::vector<QuotePair> pairs;
  double cushion = 0.0;  // additive put-mid floor actually used
};

// Invert the identification: plant G = b*(f - K) + noise, then split G into
// positive call/put mids. Only the difference matters for the fit, so the
// split uses a smooth put base b*max(K-f, 0) plus a cushion, raised
// automatically if the quoted spread would push any bid below zero.
inline CellSample gen_quote_cell(const PlantedCell& p, const CellKey& key) {
  if (!(p.b_true > 0.0) || p.b_true > 1.1)
    throw std::runtime_error("gen_quote_cell: b_true must be in (0, 1.1]");
  if (!(p.f_true > 0.0)) throw std::runtime_error("gen_quote_cell: f_true must be positive");
  if (p.strikes.empty()) throw std::runtime_error("gen_quote_cell: no strikes");
  if (p.half_spread < 0.0 || p.noise_sd < 0.0)
    throw std::runtime_error("gen_quote_cell: negative half_spread or noise_sd");
  {
    std::vector<double> ks = p.strikes;
    std::sort(ks.begin(), ks.end());
    for (size_t i = 0; i < ks.size(); ++i) {
      if (!(ks[i] > 0.0)) throw std::runtime_error("gen_quote_cell: strikes must be positive");
      if (i > 0 && ks[i] == ks[i - 1])
        throw std::runtime_error("gen_quote_cell: strikes must be distinct");
    }
  }

  Rng rng(p.seed);
  const size_t n = p.strikes.size();
  std::vector<double> g(n), put_base(n);
  double floor_mid = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double k = p.strikes[i];
    g[i] = p.b_true * (p.f_true - k) + (p.noise_sd > 0.0 ? p.noise_sd * rng.normal() : 0.0);
    put_base[i] = p.b_true * std::max(k - p.f_true, 0.0);
    floor_mid = std::min({floor_mid, put_base[i] + g[i], put_base[i]});
  }
  // both mids must stay >= half_spread so the reconstructed bids are >= 0
  double cushion = 1.0;
  if (floor_mid + cushion < p.half_spread) cushion = p.half_spread - floor_mid + 0.01;

  CellSample out;
  out.cushion = cushion;
  out.pairs.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    QuotePair q;
    q.market = key.market;
    q.date = key.date;
    q.expiry = key.expiry;
    q.strike = p.strikes[i];
    q.put_mid = put_base[i] + cushion;
    q.call_mid = g[i] + q.put_mid;
    q.call_spread = 2.0 * p.half_spread;
    q.put_spread = 2.0 * p.half_spread;
    out.pairs.push_back(q);
  }
  std::sort(out.pairs.begin(), out.pairs.end(),
            [](const QuotePair& a, const QuotePair& b) { return a.strike < b.strike; });
  return out;
}

inline CellSample gen_quote_cell(const PlantedCell& p) {
  return gen_quote_cell(p, CellKey{Market::SPX, Date(2024, 1, 2), Date(2024, 7, 1)});
}

// ---------------------------------------------------------------------------
// planted regression panels
// ---------------------------------------------------------------------------

struct PlantedPanelSpec {
  // coefficient layout = regressor_names(POOLED)
  double intercept = 24.901;
  double spx_dummy = -0.985;
  double gbm_1y = -0.557;
  double gbm_10y = 0.469;
  double ba_over_tau = 0.158;
  double nfci = -24.598;
  double noise_sd_bp = 13.57;
  int start_year = 2015;
  int n_years = 10;
  int days_per_year = 252;  // capped at the year's business-day count
  int cells_per_day = 10;   // per market
  double ar1 = 0.97;        // daily persistence of the latent macro states
  std::uint64_t seed = 42;

  std::vector<double> coef_vector() const {
    return {intercept, spx_dummy, gbm_1y, gbm_10y, ba_over_tau, nfci};
  }
};

struct PanelTruth {
  std::vector<std::string> names;
  std::vector<double> coef;
  double noise_sd_bp;
};

struct GeneratedPanel {
  std::vector<PanelRow> rows;
  PanelTruth truth;
};

// Regressors follow AR(1) latent macro states (funding rates, vol indices,
// NFCI) so the panel has realistic low-frequency structure; the dependent
// variable is the planted linear combination plus Gaussian noise.
inline GeneratedPanel gen_regression_panel(const PlantedPanelSpec& s) {
  if (s.n_years < 3) throw std::runtime_error("gen_regression_panel: need >= 3 years");
  if (s.noise_sd_bp < 0.0) throw std::runtime_error("gen_regression_panel: negative noise");
  if (s.days_per_year < 1 || s.cells_per_day < 1)
    throw std::runtime_error("gen_regression_panel: empty layout");

  Rng rng(derive_stream(s.seed, 0x70616e656cULL));
  double rate1 = 3.0, rate10 = 3.5, vix = 20.0, rvx = 25.0, nf = -0.3;
  auto step = [&](double cur, double mean, double sd, double lo, double hi) {
    return std::clamp(mean + s.ar1 * (cur - mean) + sd * rng.normal(), lo, hi);
  };

  const std::vector<double> coef = s.coef_vector();
  GeneratedPanel out;
  out.truth = {regressor_names(SpecKind::POOLED), coef, s.noise_sd_bp};

  for (int y = s.start_year; y < s.start_year + s.n_years; ++y) {
    Date d(y, 1, 1);
    int days = 0;
    while (d.year() == y && days < s.days_per_year) {
      if (!d.is_business_day()) {
        d = d.plus_days(1);
        continue;
      }
      ++days;
      rate1 = step(rate1, 3.0, 0.08, 0.1, 8.0);
      rate10 = step(rate10, 3.5, 0.08, 0.1, 9.0);
      vix = step(vix, 20.0, 0.8, 8.0, 60.0);
      rvx = step(rvx, 25.0, 1.0, 10.0, 70.0);
      nf = step(nf, -0.3, 0.04, -1.0, 2.0);
      for (Market m : {Market::SPX, Market::RUT}) {
        const double vol = m == Market::SPX ? vix : rvx;
        for (int c = 0; c < s.cells_per_day; ++c) {
          PanelRow r;
          r.market = m;
          r.date = d;
          const double tau_target = rng.uniform(1.0 / 12.0, 2.0);
          r.expiry = d.plus_days(int(std::max<long long>(32, std::llround(tau_target * 365.25))));
          r.tau = year_fraction(d, r.expiry);
          r.bin = assign_bin(r.tau);
          r.gbm_1y = gbm_term(rate1, vol, r.tau);
          r.gbm_10y = gbm_term(rate10, vol, r.tau);
          r.ba_over_tau = std::exp(rng.normal(std::log(8.0), 0.5)) / r.tau;
          r.nfci = nf;
          double buf[8];
          design_row(r, SpecKind::POOLED, buf);
          double mu = 0.0;
          for (size_t j = 0; j < coef.size(); ++j) mu += coef[j] * buf[j];
          r.cg_bp = mu + (s.noise_sd_bp > 0.0 ? s.noise_sd_bp * rng.normal() : 0.0);
          out.rows.push_back(r);
        }
      }
      d = d.plus_days(1);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// full synthetic input dataset (ingest-schema CSVs)
// ---------------------------------------------------------------------------

struct DatasetSpec {
  int start_year = 2019;
  int n_years = 3;  // LOYO downstream needs >= 3
  int days_per_year = 40;
  std::vector<double> taus = {0.10, 0.22, 0.35, 0.50, 0.75, 1.00, 1.50};
  int strikes_per_cell = 15;
  double strike_span = 0.10;  // strikes span forward*(1 +/- span)
  double half_spread = 0.25;
  double cushion_hint = 12.0;  // keeps wing mids comfortably above the spread filter
  double noise_sd = 0.05;      // parity noise in index points
  double cg_mean_bp = 37.0;    // planted carry-gap distribution
  double cg_sd_bp = 8.0;
  std::uint64_t seed = 42;
};

struct DatasetTruth {
  double cg_mean_bp = 0.0;  // planted parameters echoed back
  double cg_sd_bp = 0.0;
  double realized_mean_cg_bp = 0.0;  // realized mean of the planted draws
  double realized_mean_spx = 0.0;
  double realized_mean_rut = 0.0;
  long n_cells = 0;
};

struct DatasetFiles {
  std::string quotes_spx, quotes_rut, ois, dgs, vix, rvx, nfci;
};

inline DatasetFiles dataset_files(const std::string& dir) {
  auto at = [&](const char* name) { return dir + "/" + name; };
  return {at("quotes_spx.csv"), at("quotes_rut.csv"), at("ois.csv"), at("dgs.csv"),
          at("vix.csv"),        at("rvx.csv"),        at("nfci.csv")};
}

// Emit a complete synthetic input set: quote tapes for both markets plus all
// macro series, with each cell's implied discount factor planted as
// b = df_ois(tau) * exp(-cg*tau) off the same OIS curve the pipeline will
// bootstrap. The planted cg draws are the ground truth for recovery tests.
inline DatasetTruth write_synthetic_dataset(const std::string& dir, const DatasetSpec& spec) {
  if (spec.n_years < 1 || spec.days_per_year < 1)
    throw std::runtime_error("write_synthetic_dataset: empty layout");
  if (spec.strikes_per_cell < 2)
    throw std::runtime_error("write_synthetic_dataset: need >= 2 strikes");

  const DatasetFiles files = dataset_files(dir);
  OutputFile q_spx(files.quotes_spx), q_rut(files.quotes_rut), ois(files.ois), dgs(files.dgs),
      vix(files.vix), rvx(files.rvx), nfci(files.nfci);
  q_spx.write_line(std::string(kQuoteHeader));
  q_rut.write_line(std::string(kQuoteHeader));
  ois.write_line(std::string(kCurveHeader));
  dgs.write_line(std::string(kCurveHeader));
  vix.write_line(std::string(kSeriesHeader));
  rvx.write_line(std::string(kSeriesHeader));
  nfci.write_line(std::string(kSeriesHeader));

  Rng rng(derive_stream(spec.seed, 0x64617461ULL));
  double base_rate = 3.0, vix_lvl = 20.0, rvx_lvl = 25.0, nfci_lvl = -0.3;
  double s_spx = 4000.0, s_rut = 2000.0;
  const std::vector<double> ois_tenors = {0.25, 0.5, 1.0, 2.0, 3.0};
  const std::vector<double> dgs_tenors = {0.25, 0.5, 1.0, 2.0, 3.0, 5.0};

  DatasetTruth truth;
  truth.cg_mean_bp = spec.cg_mean_bp;
  truth.cg_sd_bp = spec.cg_sd_bp;
  long double sum_cg = 0.0L, sum_spx = 0.0L, sum_rut = 0.0L;
  long n_spx = 0, n_rut = 0;
  std::uint64_t cell_counter = 0;

  auto write_quote = [](OutputFile& f, Date d, const char* time, Date expiry, char right,
                        double strike, double bid, double ask) {
    f.write_line(d.to_string() + "," + time + "," + expiry.to_string() + "," + right + ',' +
                 fmt_double(strike) + "," + fmt_double(bid) + "," + fmt_double(ask));
  };

  for (int y = spec.start_year; y < spec.start_year + spec.n_years; ++y) {
    Date d(y, 1, 1);
    int days = 0;
    while (d.year() == y && days < spec.days_per_year) {
      if (!d.is_business_day()) {
        d = d.plus_days(1);
        continue;
      }
      ++days;
      base_rate = std::clamp(3.0 + 0.97 * (base_rate - 3.0) + 0.05 * rng.normal(), 0.2, 8.0);
      vix_lvl = std::clamp(20.0 + 0.97 * (vix_lvl - 20.0) + 0.8 * rng.normal(), 8.0, 60.0);
      rvx_lvl = std::clamp(25.0 + 0.97 * (rvx_lvl - 25.0) + 1.0 * rng.normal(), 10.0, 70.0);
      nfci_lvl = std::clamp(-0.3 + 0.97 * (nfci_lvl + 0.3) + 0.04 * rng.normal(), -1.0, 2.0);
      s_spx *= std::exp(0.0006 * rng.normal());
      s_rut *= std::exp(0.0008 * rng.normal());

      std::vector<std::pair<double, double>> ois_pillars, dgs_pillars;
      for (double t : ois_tenors) {
        ois_pillars.emplace_back(t, base_rate + 0.10 * t);
        ois.write_line(d.to_string() + "," + fmt_double(t) + "," +
                       fmt_double(ois_pillars.back().second));
      }
      for (double t : dgs_tenors) {
        dgs_pillars.emplace_back(t, base_rate + 0.25 + 0.08 * t);
        dgs.write_line(d.to_string() + "," + fmt_double(t) + "," +
                       fmt_double(dgs_pillars.back().second));
      }
      vix.write_line(d.to_string() + "," + fmt_double(vix_lvl));
      rvx.write_line(d.to_string() + "," + fmt_double(rvx_lvl));
      if (std::chrono::weekday{d.sd} == std::chrono::Friday)
        nfci.write_line(d.to_string() + "," + fmt_double(nfci_lvl));

      const RateCurve curve = bootstrap_ois(d, ois_pillars);
      for (Market m : {Market::SPX, Market::RUT}) {
        OutputFile& tape = m == Market::SPX ? q_spx : q_rut;
        const double s_lvl = m == Market::SPX ? s_spx : s_rut;
        for (double tau_target : spec.taus) {
          const Date expiry =
              d.plus_days(int(std::max<long long>(32, std::llround(tau_target * 365.25))));
          const double tau = year_fraction(d, expiry);
          const double f = s_lvl * (1.0 + 0.015 * tau);
          const double cg_bp = rng.normal(spec.cg_mean_bp, spec.cg_sd_bp);
          const double b = curve.discount_at(tau) * std::exp(-(cg_bp / 1e4) * tau);

          PlantedCell cell;
          cell.b_true = b;
          cell.f_true = f;
          cell.half_spread = spec.half_spread;
          cell.noise_sd = spec.noise_sd;
          cell.seed = derive_stream(spec.seed, ++cell_counter);
          for (int i = 0; i < spec.strikes_per_cell; ++i)
            cell.strikes.push_back(std::round(
                f * (1.0 - spec.strike_span) +
                double(i) * 2.0 * spec.strike_span * f / double(spec.strikes_per_cell - 1)));

          CellSample sample = gen_quote_cell(cell, CellKey{m, d, expiry});
          // raise mids well above the relative-spread filter, not just above zero
          if (sample.cushion < spec.cushion_hint) {
            const double extra = spec.cushion_hint - sample.cushion;
            for (auto& p : sample.pairs) {
              p.call_mid += extra;
              p.put_mid += extra;
            }
          }
          bool first = true;
          for (const auto& p : sample.pairs) {
            write_quote(tape, d, "15:45", expiry, 'C', p.strike, p.call_mid - 0.5 * p.call_spread,
                        p.call_mid + 0.5 * p.call_spread);
            write_quote(tape, d, "15:45", expiry, 'P', p.strike, p.put_mid - 0.5 * p.put_spread,
                        p.put_mid + 0.5 * p.put_spread);
            if (first) {  // off-snapshot decoy the ingest filter must ignore
              write_quote(tape, d, "10:30", expiry, 'C', p.strike,
                          p.call_mid - 0.4 * p.call_spread, p.call_mid + 0.6 * p.call_spread);
              first = false;
            }
          }
          sum_cg += cg_bp;
          (m == Market::SPX ? sum_spx : sum_rut) += cg_bp;
          ++(m == Market::SPX ? n_spx : n_rut);
          ++truth.n_cells;
        }
      }
      d = d.plus_days(1);
    }
  }

  truth.realized_mean_cg_bp = double(sum_cg / (long double)(truth.n_cells));
  truth.realized_mean_spx = double(sum_spx / (long double)(std::max(n_spx, 1L)));
  truth.realized_mean_rut = double(sum_rut / (long double)(std::max(n_rut, 1L)));
  q_spx.commit();
  q_rut.commit();
  ois.commit();
  dgs.commit();
  vix.commit();
  rvx.commit();
  nfci.commit();
  return truth;
}

}  // namespace carrygap
