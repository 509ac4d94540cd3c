#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "carrygap/carrygap.hpp"
#include "carrygap/parallel.hpp"
#include "carrygap/types.hpp"

namespace carrygap {

// One regression observation: a carry-gap cell joined with its regressors.
struct PanelRow {
  Market market;
  Date date;
  Date expiry;
  double tau;
  MaturityBin bin;
  double cg_bp;  // dependent variable
  double gbm_1y;
  double gbm_10y;
  double ba_over_tau;
  double nfci;
};

inline std::vector<std::string> regressor_names(SpecKind spec) {
  if (spec == SpecKind::POOLED)
    return {"intercept", "spx_dummy", "gbm_1y", "gbm_10y", "ba_over_tau", "nfci"};
  return {"intercept", "gbm_1y", "gbm_10y", "ba_over_tau", "nfci"};
}

inline void design_row(const PanelRow& r, SpecKind spec, double* x) {
  size_t j = 0;
  x[j++] = 1.0;
  if (spec == SpecKind::POOLED) x[j++] = r.market == Market::SPX ? 1.0 : 0.0;
  x[j++] = r.gbm_1y;
  x[j++] = r.gbm_10y;
  x[j++] = r.ba_over_tau;
  x[j++] = r.nfci;
}

inline std::vector<PanelRow> select_rows(const std::vector<PanelRow>& rows, SpecKind spec) {
  if (spec == SpecKind::POOLED) return rows;
  const Market want = spec == SpecKind::SPX ? Market::SPX : Market::RUT;
  std::vector<PanelRow> out;
  for (const auto& r : rows)
    if (r.market == want) out.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// diagnostics shared by the full fit and the holdout folds
// ---------------------------------------------------------------------------

struct BinR2 {
  long n = 0;
  double r2 = std::numeric_limits<double>::quiet_NaN();
  bool valid = false;  // needs >= 10 rows and dispersion within the bin
};

// Per-maturity-bin R^2 of given fitted values, with the total sum of squares
// taken around each bin's own mean.
inline std::map<MaturityBin, BinR2> binned_fit(const std::vector<PanelRow>& rows,
                                               const std::vector<double>& fitted,
                                               long min_rows = 10) {
  if (rows.size() != fitted.size()) throw std::runtime_error("binned_fit: size mismatch");
  std::map<MaturityBin, std::vector<size_t>> groups;
  for (size_t i = 0; i < rows.size(); ++i) groups[rows[i].bin].push_back(i);
  std::map<MaturityBin, BinR2> out;
  for (const auto& [bin, idx] : groups) {
    BinR2 b;
    b.n = long(idx.size());
    if (b.n >= min_rows) {
      long double mean = 0.0L;
      for (size_t i : idx) mean += rows[i].cg_bp;
      mean /= (long double)(idx.size());
      long double sse = 0.0L, sst = 0.0L;
      for (size_t i : idx) {
        const long double e = rows[i].cg_bp - fitted[i];
        const long double d = rows[i].cg_bp - mean;
        sse += e * e;
        sst += d * d;
      }
      if (sst > 0.0L) {
        b.r2 = double(1.0L - sse / sst);
        b.valid = true;
      }
    }
    out[bin] = b;
  }
  return out;
}

struct RelErrDiag {
  double daily_mean_rel_err = std::numeric_limits<double>::quiet_NaN();
  double daily_mean_abs_rel_err = std::numeric_limits<double>::quiet_NaN();
  long n_excluded_zero_actual = 0;
  long n_days = 0;
};

// Relative error (fitted - actual) / actual, averaged within each date first
// and then across dates, so heavy quoting days do not dominate. Rows with a
// zero actual are excluded and counted.
inline RelErrDiag rel_error_diag(const std::vector<PanelRow>& rows,
                                 const std::vector<double>& fitted) {
  if (rows.size() != fitted.size()) throw std::runtime_error("rel_error_diag: size mismatch");
  struct Acc {
    long double sum = 0.0L, sum_abs = 0.0L;
    long n = 0;
  };
  std::map<Date, Acc> days;
  RelErrDiag out;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].cg_bp == 0.0) {
      ++out.n_excluded_zero_actual;
      continue;
    }
    const double rel = (fitted[i] - rows[i].cg_bp) / rows[i].cg_bp;
    auto& a = days[rows[i].date];
    a.sum += rel;
    a.sum_abs += std::abs(rel);
    ++a.n;
  }
  if (days.empty()) return out;
  long double m = 0.0L, ma = 0.0L;
  for (const auto& [d, a] : days) {
    m += a.sum / (long double)(a.n);
    ma += a.sum_abs / (long double)(a.n);
  }
  out.n_days = long(days.size());
  out.daily_mean_rel_err = double(m / (long double)(days.size()));
  out.daily_mean_abs_rel_err = double(ma / (long double)(days.size()));
  return out;
}

// ---------------------------------------------------------------------------
// pooled / per-market OLS with date-clustered standard errors
// ---------------------------------------------------------------------------

struct OlsFit {
  SpecKind spec;
  CurveKind benchmark;
  std::vector<std::string> names;
  std::vector<double> coef;
  std::vector<double> se;      // cluster-robust, clustered by date
  std::vector<double> tstat;
  std::vector<double> pvalue;  // two-sided normal
  bool se_available = true;    // false when there is a single date cluster
  double r2 = 0.0;
  double adj_r2 = 0.0;
  double rmse_bp = 0.0;
  double mae_bp = 0.0;
  long n_obs = 0;
  long n_days = 0;
  int n_params = 0;
  std::map<MaturityBin, BinR2> per_bin_r2;
  RelErrDiag rel_err;
  std::vector<double> fitted;  // aligned with select_rows(rows, spec)
};

namespace detail {

// Core solver used by the headline fit and by every holdout fold: ordinary
// least squares via column-pivoted QR, with a rank check that names the first
// offending regressor instead of silently returning garbage.
inline Eigen::VectorXd solve_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                 const std::vector<std::string>& names) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < x.cols()) {
    for (Eigen::Index j = 1; j <= x.cols(); ++j) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> sub(x.leftCols(j));
      sub.setThreshold(1e-10);
      if (sub.rank() < j)
        throw std::runtime_error("fit_ols: rank-deficient design, column '" +
                                 names[size_t(j - 1)] + "' is collinear with earlier columns");
    }
    throw std::runtime_error("fit_ols: rank-deficient design");
  }
  return qr.solve(y);
}

}  // namespace detail

inline OlsFit fit_ols(const std::vector<PanelRow>& all_rows, SpecKind spec,
                      CurveKind benchmark) {
  const std::vector<PanelRow> rows = select_rows(all_rows, spec);
  const std::vector<std::string> names = regressor_names(spec);
  const Eigen::Index n = Eigen::Index(rows.size());
  const Eigen::Index k = Eigen::Index(names.size());
  if (n < k + 2)
    throw std::runtime_error("fit_ols: need at least " + std::to_string(k + 2) + " rows, got " +
                             std::to_string(n));

  Eigen::MatrixXd x(n, k);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double buf[8];
    design_row(rows[size_t(i)], spec, buf);
    for (Eigen::Index j = 0; j < k; ++j) x(i, j) = buf[j];
    y(i) = rows[size_t(i)].cg_bp;
  }

  const Eigen::VectorXd beta = detail::solve_ols(x, y, names);
  const Eigen::VectorXd resid = y - x * beta;

  OlsFit fit;
  fit.spec = spec;
  fit.benchmark = benchmark;
  fit.names = names;
  fit.n_params = int(k);
  fit.n_obs = long(n);
  fit.coef.assign(beta.data(), beta.data() + k);

  const double ybar = y.mean();
  const double sse = resid.squaredNorm();
  const double sst = (y.array() - ybar).matrix().squaredNorm();
  if (!(sst > 0.0)) throw std::runtime_error("fit_ols: dependent variable has zero variance");
  fit.r2 = 1.0 - sse / sst;
  fit.adj_r2 = 1.0 - (1.0 - fit.r2) * double(n - 1) / double(n - k);
  fit.rmse_bp = std::sqrt(sse / double(n));
  fit.mae_bp = resid.array().abs().mean();

  // cluster-robust sandwich, clustered on the quote date
  std::map<Date, std::vector<Eigen::Index>> clusters;
  for (Eigen::Index i = 0; i < n; ++i) clusters[rows[size_t(i)].date].push_back(i);
  fit.n_days = long(clusters.size());

  const Eigen::MatrixXd xtx_inv =
      (x.transpose() * x).ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  if (clusters.size() > 1) {
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
    for (const auto& [d, idx] : clusters) {
      Eigen::VectorXd s = Eigen::VectorXd::Zero(k);
      for (Eigen::Index i : idx) s += x.row(i).transpose() * resid(i);
      meat += s * s.transpose();
    }
    const double g = double(clusters.size());
    const double scale = g / (g - 1.0) * double(n - 1) / double(n - k);
    const Eigen::MatrixXd cov = scale * xtx_inv * meat * xtx_inv;
    fit.se.resize(size_t(k));
    fit.tstat.resize(size_t(k));
    fit.pvalue.resize(size_t(k));
    for (Eigen::Index j = 0; j < k; ++j) {
      fit.se[size_t(j)] = std::sqrt(std::max(cov(j, j), 0.0));
      fit.tstat[size_t(j)] = fit.se[size_t(j)] > 0.0 ? fit.coef[size_t(j)] / fit.se[size_t(j)]
                                                     : std::numeric_limits<double>::quiet_NaN();
      fit.pvalue[size_t(j)] = std::erfc(std::abs(fit.tstat[size_t(j)]) / std::sqrt(2.0));
    }
  } else {
    fit.se_available = false;
    fit.se.assign(size_t(k), std::numeric_limits<double>::quiet_NaN());
    fit.tstat = fit.se;
    fit.pvalue = fit.se;
  }

  fit.fitted.resize(size_t(n));
  for (Eigen::Index i = 0; i < n; ++i) fit.fitted[size_t(i)] = y(i) - resid(i);
  fit.per_bin_r2 = binned_fit(rows, fit.fitted);
  fit.rel_err = rel_error_diag(rows, fit.fitted);
  return fit;
}

// ---------------------------------------------------------------------------
// leave-one-year-out validation
// ---------------------------------------------------------------------------

struct LoyoFold {
  int year = 0;
  long n_train = 0;
  long n_test = 0;
  bool used = false;  // folds with too few holdout rows are reported but excluded
  double oos_r2 = std::numeric_limits<double>::quiet_NaN();        // holdout-mean baseline
  double oos_r2_trainmean = std::numeric_limits<double>::quiet_NaN();  // train-mean baseline
  double corr = std::numeric_limits<double>::quiet_NaN();
  double rmse_bp = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> coef;
};

struct LoyoAggregates {
  double mean_oos_r2 = std::numeric_limits<double>::quiet_NaN();
  double median_oos_r2 = std::numeric_limits<double>::quiet_NaN();
  double pooled_oos_r2 = std::numeric_limits<double>::quiet_NaN();
  double mean_corr = std::numeric_limits<double>::quiet_NaN();
  double mean_rmse_bp = std::numeric_limits<double>::quiet_NaN();
  long n_folds_used = 0;
  long years_positive = 0;  // used folds with oos_r2 > 0
};

struct SignCount {
  std::string name;
  long n_pos = 0;   // exact zeros are counted here and flagged in n_zero
  long n_neg = 0;
  long n_zero = 0;
};

struct LoyoReport {
  SpecKind spec;
  CurveKind benchmark;
  std::vector<std::string> names;
  std::vector<LoyoFold> folds;  // ascending year
  LoyoAggregates all;
  std::optional<LoyoAggregates> ex2020;  // present whenever a 2020 fold exists
  std::vector<SignCount> signs;          // over used folds
};

// Pluggable training step: rows -> coefficient vector in regressor_names
// order. Production passes the OLS solver; tests inject fixed coefficients to
// pin the aggregation arithmetic down independently of the solver.
using LoyoFitter =
    std::function<std::vector<double>(const std::vector<PanelRow>&, SpecKind)>;

inline std::vector<double> ols_coef_fitter(const std::vector<PanelRow>& rows, SpecKind spec) {
  const std::vector<std::string> names = regressor_names(spec);
  const Eigen::Index n = Eigen::Index(rows.size());
  const Eigen::Index k = Eigen::Index(names.size());
  if (n < k + 2) throw std::runtime_error("loyo: training fold too small");
  Eigen::MatrixXd x(n, k);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double buf[8];
    design_row(rows[size_t(i)], spec, buf);
    for (Eigen::Index j = 0; j < k; ++j) x(i, j) = buf[j];
    y(i) = rows[size_t(i)].cg_bp;
  }
  const Eigen::VectorXd beta = detail::solve_ols(x, y, names);
  return std::vector<double>(beta.data(), beta.data() + k);
}

namespace detail {

inline LoyoAggregates aggregate_folds(const std::vector<const LoyoFold*>& used,
                                      const std::vector<std::pair<double, double>>& pooled_pa) {
  LoyoAggregates a;
  a.n_folds_used = long(used.size());
  if (used.empty()) return a;
  std::vector<double> r2s;
  long double sum_r2 = 0.0L, sum_corr = 0.0L, sum_rmse = 0.0L;
  for (const auto* f : used) {
    r2s.push_back(f->oos_r2);
    sum_r2 += f->oos_r2;
    sum_corr += f->corr;
    sum_rmse += f->rmse_bp;
    if (f->oos_r2 > 0.0) ++a.years_positive;
  }
  a.mean_oos_r2 = double(sum_r2 / (long double)(used.size()));
  a.median_oos_r2 = median(r2s);
  a.mean_corr = double(sum_corr / (long double)(used.size()));
  a.mean_rmse_bp = double(sum_rmse / (long double)(used.size()));
  if (!pooled_pa.empty()) {
    long double mean_y = 0.0L;
    for (const auto& [pred, actual] : pooled_pa) mean_y += actual;
    mean_y /= (long double)(pooled_pa.size());
    long double sse = 0.0L, sst = 0.0L;
    for (const auto& [pred, actual] : pooled_pa) {
      sse += (long double)(actual - pred) * (actual - pred);
      sst += ((long double)(actual)-mean_y) * ((long double)(actual)-mean_y);
    }
    if (sst > 0.0L) a.pooled_oos_r2 = double(1.0L - sse / sst);
  }
  return a;
}

}  // namespace detail

inline LoyoReport run_loyo_with(const std::vector<PanelRow>& all_rows, SpecKind spec,
                                CurveKind benchmark, const LoyoFitter& fitter,
                                long min_test_rows = 30, int workers = 1) {
  const std::vector<PanelRow> rows = select_rows(all_rows, spec);
  const std::vector<std::string> names = regressor_names(spec);
  std::set<int> year_set;
  for (const auto& r : rows) year_set.insert(r.date.year());
  if (year_set.size() < 3)
    throw std::runtime_error("run_loyo: need at least 3 distinct years, got " +
                             std::to_string(year_set.size()));
  const std::vector<int> years(year_set.begin(), year_set.end());

  struct FoldData {
    LoyoFold fold;
    std::vector<std::pair<double, double>> pred_actual;  // holdout (pred, actual)
  };
  std::vector<FoldData> fds(years.size());

  parallel_for(years.size(), workers, [&](size_t yi) {
    const int year = years[yi];
    std::vector<PanelRow> train, test;
    for (const auto& r : rows) (r.date.year() == year ? test : train).push_back(r);
    LoyoFold& f = fds[yi].fold;
    f.year = year;
    f.n_train = long(train.size());
    f.n_test = long(test.size());
    if (f.n_test < min_test_rows) return;  // reported but not used
    f.used = true;
    f.coef = fitter(train, spec);
    if (f.coef.size() != names.size()) throw std::runtime_error("loyo: fitter size mismatch");

    auto& pa = fds[yi].pred_actual;
    pa.reserve(test.size());
    long double mean_test = 0.0L, mean_train = 0.0L;
    for (const auto& r : test) mean_test += r.cg_bp;
    mean_test /= (long double)(test.size());
    for (const auto& r : train) mean_train += r.cg_bp;
    mean_train /= (long double)(std::max<size_t>(train.size(), 1));

    long double sse = 0.0L, sst = 0.0L, sst_train = 0.0L;
    long double sp = 0.0L, sa = 0.0L, spp = 0.0L, saa = 0.0L, spa = 0.0L;
    for (const auto& r : test) {
      double buf[8];
      design_row(r, spec, buf);
      double pred = 0.0;
      for (size_t j = 0; j < names.size(); ++j) pred += f.coef[j] * buf[j];
      pa.emplace_back(pred, r.cg_bp);
      const long double e = r.cg_bp - pred;
      sse += e * e;
      sst += ((long double)(r.cg_bp)-mean_test) * ((long double)(r.cg_bp)-mean_test);
      sst_train += ((long double)(r.cg_bp)-mean_train) * ((long double)(r.cg_bp)-mean_train);
      sp += pred;
      sa += r.cg_bp;
      spp += (long double)(pred)*pred;
      saa += (long double)(r.cg_bp)*r.cg_bp;
      spa += (long double)(pred)*r.cg_bp;
    }
    const long double nt = (long double)(test.size());
    if (sst > 0.0L) f.oos_r2 = double(1.0L - sse / sst);
    if (sst_train > 0.0L) f.oos_r2_trainmean = double(1.0L - sse / sst_train);
    f.rmse_bp = double(std::sqrt(double(sse / nt)));
    const long double cov = spa - sp * sa / nt;
    const long double vp = spp - sp * sp / nt, va = saa - sa * sa / nt;
    if (vp > 0.0L && va > 0.0L) f.corr = double(cov / std::sqrt(double(vp * va)));
  });

  LoyoReport rep;
  rep.spec = spec;
  rep.benchmark = benchmark;
  rep.names = names;
  rep.folds.reserve(fds.size());  // pointers into rep.folds are taken below
  bool has_2020 = false;
  std::vector<const LoyoFold*> used_all, used_ex;
  std::vector<std::pair<double, double>> pa_all, pa_ex;
  for (const auto& fd : fds) {
    rep.folds.push_back(fd.fold);
    if (fd.fold.year == 2020) has_2020 = true;
    if (!fd.fold.used) continue;
    used_all.push_back(&rep.folds.back());
    pa_all.insert(pa_all.end(), fd.pred_actual.begin(), fd.pred_actual.end());
    if (fd.fold.year != 2020) {
      used_ex.push_back(&rep.folds.back());
      pa_ex.insert(pa_ex.end(), fd.pred_actual.begin(), fd.pred_actual.end());
    }
  }
  rep.all = detail::aggregate_folds(used_all, pa_all);
  if (has_2020) rep.ex2020 = detail::aggregate_folds(used_ex, pa_ex);

  for (size_t j = 0; j < names.size(); ++j) {
    SignCount s;
    s.name = names[j];
    for (const auto* f : used_all) {
      if (f->coef[j] > 0.0) {
        ++s.n_pos;
      } else if (f->coef[j] < 0.0) {
        ++s.n_neg;
      } else {
        ++s.n_pos;  // exact zero: counted positive, flagged
        ++s.n_zero;
      }
    }
    rep.signs.push_back(std::move(s));
  }
  return rep;
}

inline LoyoReport run_loyo(const std::vector<PanelRow>& rows, SpecKind spec, CurveKind benchmark,
                           long min_test_rows = 30, int workers = 1) {
  return run_loyo_with(rows, spec, benchmark, ols_coef_fitter, min_test_rows, workers);
}

// Stability summary line, e.g. "+10/10", "-9/10", "mixed (+1/10, -9/10)".
inline std::string render_sign(const SignCount& s) {
  const long n = s.n_pos + s.n_neg;
  std::string out;
  if (n == 0)
    out = "n/a";
  else if (s.n_neg == 0)
    out = "+" + std::to_string(s.n_pos) + "/" + std::to_string(n);
  else if (s.n_pos == 0)
    out = "-" + std::to_string(s.n_neg) + "/" + std::to_string(n);
  else
    out = "mixed (+" + std::to_string(s.n_pos) + "/" + std::to_string(n) + ", -" +
          std::to_string(s.n_neg) + "/" + std::to_string(n) + ")";
  if (s.n_zero > 0) out += " [" + std::to_string(s.n_zero) + " zero-flagged]";
  return out;
}

}  // namespace carrygap
