#include "barlab/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "barlab/common.hpp"
#include "barlab/error.hpp"
#include "barlab/parallel.hpp"

namespace barlab::eval {

namespace {

void require_nonempty(std::size_t n, const char* what) {
  if (n == 0) throw ValidationError(std::string(what) + ": empty evaluation set");
}

template <class Fn>
std::vector<double> per_sample(std::size_t n, Fn&& fn) {
  std::vector<double> out(n);
  parallel::for_each_index(n, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

double mean_of(std::span<const double> v) {
  NeumaierSum s;
  for (double x : v) s.add(x);
  return s.value() / static_cast<double>(v.size());
}

double predicted_var(const tdist::StudentTParams& p) { return tdist::t_mean_var(p).variance; }

std::vector<double> sorted_copy(std::span<const double> v) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  return s;
}

std::pair<double, double> quantile_range(std::span<const double> v, double q) {
  auto s = sorted_copy(v);
  double lo = percentile_sorted(s, q), hi = percentile_sorted(s, 1.0 - q);
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  return {lo, hi};
}

std::size_t bin_of(double v, double lo, double hi, std::size_t n) {
  const double f = (v - lo) / (hi - lo) * static_cast<double>(n);
  if (!(f > 0)) return 0;
  return std::min(n - 1, static_cast<std::size_t>(f));
}

std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double get_num(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  return v.is_null() ? std::nan("") : v.get<double>();
}

std::optional<double> get_opt(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

std::vector<EvalSample> make_samples(const Dataset& d, std::span<const tdist::StudentTParams> pred) {
  if (pred.size() != d.size()) throw ContractViolation("make_samples: prediction count does not match dataset");
  std::vector<EvalSample> s(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    s[i].key = d.keys[i];
    s[i].y = d.y[i];
    s[i].pred = pred[i];
    s[i].close_over_vwap = d.close_over_vwap_raw(i);
  }
  return s;
}

double nll(std::span<const EvalSample> s) {
  require_nonempty(s.size(), "nll");
  auto terms = per_sample(s.size(), [&](std::size_t i) { return -tdist::t_logpdf(s[i].pred, s[i].y); });
  return mean_of(terms);
}

Ablation gaussian_ablation(std::span<const EvalSample> s) {
  require_nonempty(s.size(), "gaussian_ablation");
  auto terms = per_sample(s.size(), [&](std::size_t i) {
    return -tdist::gauss_logpdf(tdist::moment_matched_gaussian(s[i].pred), s[i].y);
  });
  Ablation a;
  a.nll_gauss = mean_of(terms);
  a.delta = a.nll_gauss - nll(s);
  return a;
}

CalibrationCurve calibration_from_pit(std::span<const double> pit, int m) {
  require_nonempty(pit.size(), "calibration");
  if (m < 1) throw ValidationError("calibration: M must be positive");
  const auto sorted = sorted_copy(pit);
  const double n = static_cast<double>(pit.size());
  CalibrationCurve c;
  c.m = m;
  NeumaierSum err;
  for (int j = 1; j <= m; ++j) {
    const double p = static_cast<double>(j) / (m + 1);
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), p) - sorted.begin();
    const double e = static_cast<double>(below) / n;
    c.levels.push_back(p);
    c.empirical.push_back(e);
    err.add((p - e) * (p - e));
  }
  c.cal_error = err.value();

  constexpr std::size_t kBins = 100;
  const auto h = histogram(pit, 0.0, 1.0, kBins);
  auto counts = h.counts;
  counts.front() += h.underflow;
  counts.back() += h.overflow;
  const double expected = n / kBins;
  NeumaierSum chi;
  for (auto k : counts) chi.add((static_cast<double>(k) - expected) * (static_cast<double>(k) - expected) / expected);
  c.chi_sq = chi.value();
  return c;
}

CalibrationCurve calibration(std::span<const EvalSample> s, int m) {
  auto pit = per_sample(s.size(), [&](std::size_t i) { return tdist::t_cdf(s[i].pred, s[i].y); });
  return calibration_from_pit(pit, m);
}

MseR2 mse_r2(std::span<const double> y, std::span<const double> yhat) {
  require_nonempty(y.size(), "mse_r2");
  if (y.size() != yhat.size()) throw ContractViolation("mse_r2: size mismatch");
  const double ybar = mean_of(y);
  NeumaierSum sse, sst;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sse.add((y[i] - yhat[i]) * (y[i] - yhat[i]));
    sst.add((y[i] - ybar) * (y[i] - ybar));
  }
  if (!(sst.value() > 0)) throw DomainError("mse_r2: targets have zero variance");
  return {sse.value() / static_cast<double>(y.size()), 1.0 - sse.value() / sst.value()};
}

double cond_var_rmse(std::span<const EvalSample> s) {
  require_nonempty(s.size(), "cond_var_rmse");
  auto terms = per_sample(s.size(), [&](std::size_t i) {
    const double e = s[i].y - s[i].pred.mu;
    const double d = predicted_var(s[i].pred) - e * e;
    return d * d;
  });
  return std::sqrt(mean_of(terms));
}

Directional directional(std::span<const double> mu, std::span<const double> y) {
  if (mu.size() != y.size()) throw ContractViolation("directional: size mismatch");
  if (mu.size() < kDeciles) throw ValidationError("directional: need at least 10 samples");
  const std::size_t n = mu.size();
  auto hit = [&](std::size_t i) { return (mu[i] >= 0) == (y[i] >= 0); };
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::fabs(mu[a]) < std::fabs(mu[b]); });
  Directional d;
  std::size_t total = 0;
  for (int k = 0; k < kDeciles; ++k) {
    const std::size_t b = n * k / kDeciles, e = n * (k + 1) / kDeciles;
    std::size_t hits = 0;
    for (std::size_t r = b; r < e; ++r) hits += hit(order[r]);
    total += hits;
    d.count[k] = e - b;
    d.accuracy[k] = static_cast<double>(hits) / static_cast<double>(e - b);
    d.edges[k] = std::fabs(mu[order[b]]);
  }
  d.edges[kDeciles] = std::fabs(mu[order[n - 1]]);
  d.overall = static_cast<double>(total) / static_cast<double>(n);
  return d;
}

Baselines baselines(std::span<const EvalSample> s, const NormStats& norm) {
  require_nonempty(s.size(), "baselines");
  const std::size_t n = s.size();
  std::vector<double> y(n), zero(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) y[i] = s[i].y;
  const tdist::GaussianParams unit{0.0, 1.0};

  Baselines b;
  b.std_normal_nll = mean_of(per_sample(n, [&](std::size_t i) { return -tdist::gauss_logpdf(unit, y[i]); }));
  const auto fit = mse_r2(y, zero);
  b.std_normal_mse = fit.mse;
  b.std_normal_r2 = fit.r2;
  b.std_normal_cal_error =
      calibration_from_pit(per_sample(n, [&](std::size_t i) { return tdist::gauss_cdf(unit, y[i]); })).cal_error;
  b.std_normal_cond_var_rmse = std::sqrt(mean_of(per_sample(n, [&](std::size_t i) {
    const double d = 1.0 - y[i] * y[i];
    return d * d;
  })));

  const double zero_hat = (0.0 - norm.target_mean) / norm.target_std;
  NeumaierSum zero_sse, vwap_sse, vwap_zero_sse, vwap_model_sse;
  for (std::size_t i = 0; i < n; ++i) {
    zero_sse.add((y[i] - zero_hat) * (y[i] - zero_hat));
    if (!s[i].close_over_vwap) continue;
    const double hat = (*s[i].close_over_vwap - norm.target_mean) / norm.target_std;
    ++b.vwap_subset;
    vwap_sse.add((y[i] - hat) * (y[i] - hat));
    vwap_zero_sse.add((y[i] - zero_hat) * (y[i] - zero_hat));
    vwap_model_sse.add((y[i] - s[i].pred.mu) * (y[i] - s[i].pred.mu));
  }
  b.zero_raw_mse = zero_sse.value() / static_cast<double>(n);
  if (b.vwap_subset > 0) {
    const double m = static_cast<double>(b.vwap_subset);
    b.vwap_to_close_mse = vwap_sse.value() / m;
    b.vwap_subset_zero_raw_mse = vwap_zero_sse.value() / m;
    b.vwap_subset_model_mse = vwap_model_sse.value() / m;
  }
  return b;
}

Histogram histogram(std::span<const double> v, double lo, double hi, std::size_t bins) {
  if (bins == 0 || !(hi > lo)) throw ContractViolation("histogram: need bins > 0 and hi > lo");
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0), 0, 0};
  for (double x : v) {
    if (x < lo) {
      ++h.underflow;
    } else if (x > hi) {
      ++h.overflow;
    } else {
      ++h.counts[bin_of(x, lo, hi, bins)];
    }
  }
  return h;
}

TargetStats target_stats(std::span<const double> y) {
  if (y.size() < 100) throw ValidationError("target_stats: need at least 100 values");
  const auto s = sorted_copy(y);
  TargetStats t;
  t.n = y.size();
  const double n = static_cast<double>(t.n);
  t.mean = mean_of(y);
  NeumaierSum m2, m3, m4;
  for (double v : y) {
    const double d = v - t.mean;
    m2.add(d * d);
    m3.add(d * d * d);
    m4.add(d * d * d * d);
  }
  const double c2 = m2.value() / n, c3 = m3.value() / n, c4 = m4.value() / n;
  t.std = std::sqrt(m2.value() / (n - 1));
  const double g1 = c3 / std::pow(c2, 1.5), g2 = c4 / (c2 * c2) - 3.0;
  t.skewness = std::sqrt(n * (n - 1)) / (n - 2) * g1;
  t.excess_kurtosis = (n - 1) / ((n - 2) * (n - 3)) * ((n + 1) * g2 + 6.0);

  t.median = percentile_sorted(s, 0.5);
  const double q1 = percentile_sorted(s, 0.25), q3 = percentile_sorted(s, 0.75);
  t.iqr = q3 - q1;
  if (!(t.iqr > 0)) throw DomainError("target_stats: interquartile range is zero");
  t.quartile_skewness = (q3 + q1 - 2.0 * t.median) / t.iqr;
  t.quantile_excess_kurtosis = (percentile_sorted(s, 0.99) - percentile_sorted(s, 0.01)) / t.iqr - kNormalQuantileKurtosis;
  return t;
}

Histogram target_histogram(std::span<const double> y, std::size_t bins) {
  require_nonempty(y.size(), "target_histogram");
  const auto [lo, hi] = quantile_range(y, 0.001);
  return histogram(y, lo, hi, bins);
}

Grid2D grid2d(std::span<const double> x, std::span<const double> y, std::size_t nx, std::size_t ny) {
  require_nonempty(x.size(), "grid2d");
  if (x.size() != y.size()) throw ContractViolation("grid2d: size mismatch");
  Grid2D g;
  std::tie(g.x_lo, g.x_hi) = quantile_range(x, 0.005);
  std::tie(g.y_lo, g.y_hi) = quantile_range(y, 0.005);
  g.nx = nx;
  g.ny = ny;
  g.counts.assign(nx * ny, 0);
  for (std::size_t i = 0; i < x.size(); ++i)
    ++g.counts[bin_of(x[i], g.x_lo, g.x_hi, nx) * ny + bin_of(y[i], g.y_lo, g.y_hi, ny)];
  return g;
}

Evaluation evaluate(const Dataset& d, std::span<const tdist::StudentTParams> pred, const std::string& split) {
  const auto s = make_samples(d, pred);
  require_nonempty(s.size(), "evaluate");
  const std::size_t n = s.size();
  std::vector<double> y(n), mu(n), log_var(n), log_sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = s[i].y;
    mu[i] = s[i].pred.mu;
    const double e = y[i] - mu[i];
    log_var[i] = std::log(predicted_var(s[i].pred));
    log_sq[i] = std::log(std::max(e * e, 1e-300));
  }

  Evaluation out;
  EvalReport& r = out.report;
  r.feature_set = to_string(d.tag);
  r.split = split;
  r.n = n;
  r.nll = nll(s);
  r.ablation = gaussian_ablation(s);
  r.calibration = calibration(s);
  const auto fit = mse_r2(y, mu);
  r.mse = fit.mse;
  r.r2 = fit.r2;
  r.cond_var_rmse = cond_var_rmse(s);
  r.directional = directional(mu, y);
  r.baselines = baselines(s, d.norm);
  r.target = target_stats(y);

  PlotData& p = out.plots;
  p.target_hist = target_histogram(y);
  p.mean_grid = grid2d(mu, y);
  p.var_grid = grid2d(log_var, log_sq);
  const auto [a_lo, a_hi] = quantile_range(log_var, 0.005);
  const auto [b_lo, b_hi] = quantile_range(log_sq, 0.005);
  const double lo = std::min(a_lo, b_lo), hi = std::max(a_hi, b_hi);
  p.log_pred_var = histogram(log_var, lo, hi, 128);
  p.log_sq_error = histogram(log_sq, lo, hi, 128);
  return out;
}

nlohmann::json to_json(const EvalReport& r) {
  using nlohmann::json;
  const auto& c = r.calibration;
  const auto& d = r.directional;
  const auto& b = r.baselines;
  const auto& t = r.target;
  return json{
      {"schemaVersion", r.schema_version},
      {"featureSet", r.feature_set},
      {"split", r.split},
      {"n", r.n},
      {"nll", r.nll},
      {"gaussianAblation", {{"nllGaussian", r.ablation.nll_gauss}, {"delta", r.ablation.delta}}},
      {"calibration",
       {{"M", c.m}, {"calError", c.cal_error}, {"chiSq", c.chi_sq}, {"levels", c.levels}, {"empirical", c.empirical}}},
      {"mse", r.mse},
      {"r2", r.r2},
      {"condVarRmse", r.cond_var_rmse},
      {"directional", {{"overall", d.overall}, {"accuracy", d.accuracy}, {"count", d.count}, {"edges", d.edges}}},
      {"baselines",
       {{"stdNormal",
         {{"nll", b.std_normal_nll},
          {"mse", b.std_normal_mse},
          {"r2", b.std_normal_r2},
          {"calError", b.std_normal_cal_error},
          {"condVarRmse", b.std_normal_cond_var_rmse}}},
        {"zeroRawMse", b.zero_raw_mse},
        {"vwapSubset",
         {{"n", b.vwap_subset},
          {"vwapToCloseMse", opt_json(b.vwap_to_close_mse)},
          {"zeroRawMse", opt_json(b.vwap_subset_zero_raw_mse)},
          {"modelMse", opt_json(b.vwap_subset_model_mse)}}}}},
      {"targetStats",
       {{"n", t.n},
        {"mean", t.mean},
        {"median", t.median},
        {"std", t.std},
        {"iqr", t.iqr},
        {"skewness", t.skewness},
        {"quartileSkewness", t.quartile_skewness},
        {"excessKurtosis", t.excess_kurtosis},
        {"quantileExcessKurtosis", t.quantile_excess_kurtosis}}},
  };
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.schema_version = j.at("schemaVersion").get<int>();
    if (r.schema_version != 1) throw FormatError("report: unsupported schemaVersion " + std::to_string(r.schema_version));
    r.feature_set = j.at("featureSet").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.n = j.at("n").get<std::size_t>();
    r.nll = get_num(j, "nll");
    const auto& a = j.at("gaussianAblation");
    r.ablation = {get_num(a, "nllGaussian"), get_num(a, "delta")};
    const auto& c = j.at("calibration");
    r.calibration.m = c.at("M").get<int>();
    r.calibration.cal_error = get_num(c, "calError");
    r.calibration.chi_sq = get_num(c, "chiSq");
    r.calibration.levels = c.at("levels").get<std::vector<double>>();
    r.calibration.empirical = c.at("empirical").get<std::vector<double>>();
    r.mse = get_num(j, "mse");
    r.r2 = get_num(j, "r2");
    r.cond_var_rmse = get_num(j, "condVarRmse");
    const auto& d = j.at("directional");
    r.directional.overall = get_num(d, "overall");
    r.directional.accuracy = d.at("accuracy").get<std::array<double, kDeciles>>();
    r.directional.count = d.at("count").get<std::array<std::size_t, kDeciles>>();
    r.directional.edges = d.at("edges").get<std::array<double, kDeciles + 1>>();
    const auto& b = j.at("baselines");
    const auto& sn = b.at("stdNormal");
    r.baselines.std_normal_nll = get_num(sn, "nll");
    r.baselines.std_normal_mse = get_num(sn, "mse");
    r.baselines.std_normal_r2 = get_num(sn, "r2");
    r.baselines.std_normal_cal_error = get_num(sn, "calError");
    r.baselines.std_normal_cond_var_rmse = get_num(sn, "condVarRmse");
    r.baselines.zero_raw_mse = get_num(b, "zeroRawMse");
    const auto& v = b.at("vwapSubset");
    r.baselines.vwap_subset = v.at("n").get<std::size_t>();
    r.baselines.vwap_to_close_mse = get_opt(v, "vwapToCloseMse");
    r.baselines.vwap_subset_zero_raw_mse = get_opt(v, "zeroRawMse");
    r.baselines.vwap_subset_model_mse = get_opt(v, "modelMse");
    const auto& t = j.at("targetStats");
    r.target.n = t.at("n").get<std::size_t>();
    r.target.mean = get_num(t, "mean");
    r.target.median = get_num(t, "median");
    r.target.std = get_num(t, "std");
    r.target.iqr = get_num(t, "iqr");
    r.target.skewness = get_num(t, "skewness");
    r.target.quartile_skewness = get_num(t, "quartileSkewness");
    r.target.excess_kurtosis = get_num(t, "excessKurtosis");
    r.target.quantile_excess_kurtosis = get_num(t, "quantileExcessKurtosis");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

namespace {

std::string histogram_csv(const Histogram& h, std::size_t total) {
  std::string out = "bin_lo,bin_hi,count,density\n";
  const double w = h.width();
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    const double lo = h.lo + w * static_cast<double>(k);
    out += num(lo) + "," + num(lo + w) + "," + std::to_string(h.counts[k]) + "," +
           num(static_cast<double>(h.counts[k]) / (static_cast<double>(total) * w)) + "\n";
  }
  return out;
}

std::string grid_csv(const Grid2D& g) {
  std::string out = "ix,iy,x,y,count\n";
  const double wx = (g.x_hi - g.x_lo) / static_cast<double>(g.nx);
  const double wy = (g.y_hi - g.y_lo) / static_cast<double>(g.ny);
  for (std::size_t i = 0; i < g.nx; ++i)
    for (std::size_t k = 0; k < g.ny; ++k)
      out += std::to_string(i) + "," + std::to_string(k) + "," + num(g.x_lo + wx * (static_cast<double>(i) + 0.5)) +
             "," + num(g.y_lo + wy * (static_cast<double>(k) + 0.5)) + "," + std::to_string(g.counts[i * g.ny + k]) +
             "\n";
  return out;
}

}  // namespace

void emit_report(const Evaluation& e, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const EvalReport& r = e.report;
  write_file_atomic(dir / "report.json", to_json(r).dump(2) + "\n");

  std::string cal = "level,empirical\n";
  for (std::size_t j = 0; j < r.calibration.levels.size(); ++j)
    cal += num(r.calibration.levels[j]) + "," + num(r.calibration.empirical[j]) + "\n";
  write_file_atomic(dir / "calibration.csv", cal);

  std::string dec = "decile,abs_mu_lo,abs_mu_hi,count,accuracy\n";
  for (int k = 0; k < kDeciles; ++k)
    dec += std::to_string(k + 1) + "," + num(r.directional.edges[k]) + "," + num(r.directional.edges[k + 1]) + "," +
           std::to_string(r.directional.count[k]) + "," + num(r.directional.accuracy[k]) + "\n";
  write_file_atomic(dir / "deciles.csv", dec);

  write_file_atomic(dir / "target_hist.csv", histogram_csv(e.plots.target_hist, r.n));
  write_file_atomic(dir / "mean_hexbin.csv", grid_csv(e.plots.mean_grid));
  write_file_atomic(dir / "var_hexbin.csv", grid_csv(e.plots.var_grid));

  const auto& a = e.plots.log_pred_var;
  const auto& b = e.plots.log_sq_error;
  std::string var = "bin_lo,bin_hi,log_pred_var_density,log_sq_error_density\n";
  const double w = a.width(), total = static_cast<double>(r.n);
  for (std::size_t k = 0; k < a.counts.size(); ++k) {
    const double lo = a.lo + w * static_cast<double>(k);
    var += num(lo) + "," + num(lo + w) + "," + num(static_cast<double>(a.counts[k]) / (total * w)) + "," +
           num(static_cast<double>(b.counts[k]) / (total * w)) + "\n";
  }
  write_file_atomic(dir / "var_density.csv", var);
}

}  // namespace barlab::eval
