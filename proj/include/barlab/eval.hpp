#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "barlab/dataset.hpp"
#include "barlab/tdist.hpp"

namespace barlab::eval {

struct EvalSample {
  SampleKey key;
  double y = 0.0;  // standardized target
  tdist::StudentTParams pred;
  std::optional<double> close_over_vwap;  // raw ln(close_t / vwap_t)
};

/// Pairs predictions with the dataset's targets, in dataset (key) order.
std::vector<EvalSample> make_samples(const Dataset& d, std::span<const tdist::StudentTParams> pred);

/// -mean t_logpdf. ValidationError when empty.
double nll(std::span<const EvalSample> s);

struct Ablation {
  double nll_gauss = 0.0;
  double delta = 0.0;  // gauss - t
  bool operator==(const Ablation&) const = default;
};
/// Moment-matched Gaussian N(mu, sigma^2 nu / (nu - 2)) in place of each t.
Ablation gaussian_ablation(std::span<const EvalSample> s);

struct CalibrationCurve {
  int m = 100;
  std::vector<double> levels;     // j / (M + 1)
  std::vector<double> empirical;  // share of PIT values strictly below each level
  double cal_error = 0.0;
  double chi_sq = 0.0;  // Pearson statistic of the 100-bin PIT histogram vs uniform
  bool operator==(const CalibrationCurve&) const = default;
};
CalibrationCurve calibration_from_pit(std::span<const double> pit, int m = 100);
CalibrationCurve calibration(std::span<const EvalSample> s, int m = 100);

struct MseR2 {
  double mse = 0.0;
  double r2 = 0.0;
};
/// R^2 against the evaluation-set mean; DomainError on zero total variance.
MseR2 mse_r2(std::span<const double> y, std::span<const double> yhat);

/// sqrt(mean((VarPred - (y - mu)^2)^2)), VarPred = sigma^2 nu / (nu - 2).
double cond_var_rmse(std::span<const EvalSample> s);

inline constexpr int kDeciles = 10;

struct Directional {
  double overall = 0.0;
  std::array<double, kDeciles> accuracy{};
  std::array<std::size_t, kDeciles> count{};
  std::array<double, kDeciles + 1> edges{};  // |mu| at decile boundaries, then the max
  bool operator==(const Directional&) const = default;
};
/// sign(0) = +1. Deciles of |mu| by stable rank, so ties keep sample order.
Directional directional(std::span<const double> mu, std::span<const double> y);

struct Baselines {
  double std_normal_nll = 0.0;
  double std_normal_mse = 0.0;
  double std_normal_r2 = 0.0;
  double std_normal_cal_error = 0.0;
  double std_normal_cond_var_rmse = 0.0;
  double zero_raw_mse = 0.0;
  // Restricted to samples with a computable close/VWAP return.
  std::size_t vwap_subset = 0;
  std::optional<double> vwap_to_close_mse;
  std::optional<double> vwap_subset_zero_raw_mse;
  std::optional<double> vwap_subset_model_mse;
  bool operator==(const Baselines&) const = default;
};
Baselines baselines(std::span<const EvalSample> s, const NormStats& norm);

struct Histogram {
  double lo = 0.0, hi = 0.0;
  std::vector<std::size_t> counts;
  std::size_t underflow = 0, overflow = 0;
  double width() const { return (hi - lo) / static_cast<double>(counts.size()); }
};
Histogram histogram(std::span<const double> v, double lo, double hi, std::size_t bins);

struct TargetStats {
  std::size_t n = 0;
  double mean = 0.0, median = 0.0, std = 0.0, iqr = 0.0;
  double skewness = 0.0, quartile_skewness = 0.0;
  double excess_kurtosis = 0.0, quantile_excess_kurtosis = 0.0;
  bool operator==(const TargetStats&) const = default;
};
inline constexpr double kNormalQuantileKurtosis = 3.449;
/// Moments use the adjusted (sample) estimators; ValidationError when n < 100,
/// DomainError when the IQR is zero.
TargetStats target_stats(std::span<const double> y);
/// 512-bin density data over [P0.1, P99.9].
Histogram target_histogram(std::span<const double> y, std::size_t bins = 512);

/// Square-bin 2-D counts; out-of-range points are clamped to the edge bins.
struct Grid2D {
  double x_lo = 0.0, x_hi = 0.0, y_lo = 0.0, y_hi = 0.0;
  std::size_t nx = 64, ny = 64;
  std::vector<std::size_t> counts;  // row-major, x outer
};
Grid2D grid2d(std::span<const double> x, std::span<const double> y, std::size_t nx = 64, std::size_t ny = 64);

struct EvalReport {
  int schema_version = 1;
  std::string feature_set;
  std::string split;
  std::size_t n = 0;
  double nll = 0.0;
  Ablation ablation;
  CalibrationCurve calibration;
  double mse = 0.0, r2 = 0.0, cond_var_rmse = 0.0;
  Directional directional;
  Baselines baselines;
  TargetStats target;
  bool operator==(const EvalReport&) const = default;
};

/// Figure data that goes to CSV rather than report.json.
struct PlotData {
  Histogram target_hist;
  Grid2D mean_grid;  // predicted mean (x) vs observed (y)
  Grid2D var_grid;   // log predicted variance (x) vs log squared error (y)
  Histogram log_pred_var, log_sq_error;  // shared range
};

struct Evaluation {
  EvalReport report;
  PlotData plots;
};

Evaluation evaluate(const Dataset& d, std::span<const tdist::StudentTParams> pred, const std::string& split);

nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

/// report.json, calibration.csv, deciles.csv, target_hist.csv, mean_hexbin.csv,
/// var_density.csv, var_hexbin.csv.
void emit_report(const Evaluation& e, const std::filesystem::path& dir);

}  // namespace barlab::eval
