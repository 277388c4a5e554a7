#include "barlab/features.hpp"

#include <algorithm>
#include <cmath>

#include "barlab/error.hpp"

namespace barlab {

namespace {

using N = Normalization;

constexpr std::array<ColumnInfo, kFullDim> kColumns{{
    {"scaledOpen", "Open", "Basic Prices", N::MinMax},
    {"scaledHigh", "High", "Basic Prices", N::MinMax},
    {"scaledLow", "Low", "Basic Prices", N::MinMax},
    {"scaledClose", "Close", "Basic Prices", N::MinMax},
    {"vwapLogRet", "VWAP Log Return", "Log Returns", N::MeanStd},
    {"barLogRet", "Bar Log Return", "Log Returns", N::MeanStd},
    {"closeOverHigh", "High/Close Log Return", "Log Returns", N::MeanStd},
    {"highOverLow", "High/Low Log Return", "Log Returns", N::MeanStd},
    {"closeOverVwap", "Close/VWAP Log Return", "Log Returns", N::MeanStd},
    {"volume", "Volume", "Volume Measures", N::MedianIqr},
    {"logVolume", "Log Volume", "Volume Measures", N::MedianIqr},
    {"dollarVolume", "Dollar Volume", "Volume Measures", N::MedianIqr},
    {"logDollarVolume", "Log Dollar Volume", "Volume Measures", N::MedianIqr},
    {"tickCount", "Tick Count", "Volume Measures", N::MedianIqr},
    {"scaledBarHeight", "Scaled Bar Height", "Bar Scale Measures", N::None},
    {"scaledCloseVsOpen", "Scaled Close vs. Open", "Bar Scale Measures", N::None},
    {"closeFraction", "Close Fraction", "Bar Scale Measures", N::None},
    {"openFraction", "Open Fraction", "Bar Scale Measures", N::None},
    {"minuteIndex", "Minute Index", "Time of Day", N::None},
    {"meanPrior", "Mean Prior Volume", "Volume In Recent Past", N::MeanStd},
    {"stdPrior", "Std. Dev. Prior Volume", "Volume In Recent Past", N::MeanStd},
    {"medianPrior", "Median Prior Volume", "Volume In Recent Past", N::MeanStd},
    {"p25Prior", "Pct25 Prior Volume", "Volume In Recent Past", N::MeanStd},
    {"p75Prior", "Pct75 Prior Volume", "Volume In Recent Past", N::MeanStd},
    {"standardZ", "Prior Volume Standard Z Score", "Relative Activity", N::None},
    {"robustZ", "Prior Volume Robust Z Score", "Relative Activity", N::None},
    {"highTimeNorm", "High Time (normalized)", "Basic Timing Features", N::UnitInterval},
    {"lowTimeNorm", "Low Time (normalized)", "Basic Timing Features", N::UnitInterval},
    {"timeDiff", "Time Difference", "Derived Timing Features", N::None},
    {"timingSurprise", "Timing Surprise", "Derived Timing Features", N::None},
}};

double fraction(Price p, Price lo, Price hi) {
  if (hi == lo) return 0.5;
  return static_cast<double>(p.ticks - lo.ticks) / static_cast<double>(hi.ticks - lo.ticks);
}

void require_positive(const Bar& b) {
  if (b.open.ticks <= 0 || b.high.ticks <= 0 || b.low.ticks <= 0 || b.close.ticks <= 0 || !(b.vwap > 0.0))
    throw ContractViolation("features: non-positive price in bar " + b.symbol + " minute " +
                            std::to_string(b.minute));
}

}  // namespace

const char* to_string(FeatureSet tag) {
  switch (tag) {
    case FeatureSet::Basic: return "basic";
    case FeatureSet::NoTiming: return "no-timing";
    case FeatureSet::Full: return "full";
  }
  return "?";
}

FeatureSet parse_feature_set(std::string_view text) {
  if (text == "basic") return FeatureSet::Basic;
  if (text == "no-timing" || text == "no_timing" || text == "notiming") return FeatureSet::NoTiming;
  if (text == "full") return FeatureSet::Full;
  throw ConfigError("unknown feature set '" + std::string(text) + "' (basic, no-timing, full)");
}

std::size_t feature_dim(FeatureSet tag) {
  switch (tag) {
    case FeatureSet::Basic: return 5;
    case FeatureSet::NoTiming: return 26;
    case FeatureSet::Full: return 30;
  }
  throw ConfigError("bad feature set tag");
}

const char* to_string(Normalization n) {
  switch (n) {
    case N::MinMax: return "minmax_window";
    case N::MeanStd: return "mean_std_train";
    case N::MedianIqr: return "median_iqr_train";
    case N::None: return "none";
    case N::UnitInterval: return "unit_interval";
  }
  return "?";
}

std::span<const ColumnInfo> columns(FeatureSet tag) {
  return std::span<const ColumnInfo>(kColumns.data(), feature_dim(tag));
}

nlohmann::json column_manifest(FeatureSet tag) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns(tag))
    cols.push_back({{"name", c.name}, {"key", c.key}, {"group", c.group}, {"normalization", to_string(c.norm)}});
  return {{"featureSet", to_string(tag)}, {"lookback", kLookback}, {"columns", cols}};
}

std::string column_manifest_hash(FeatureSet tag) { return git_blob_hash(column_manifest(tag).dump()); }

const CenterScale& NormStats::at(const std::string& key) const {
  auto it = columns.find(key);
  if (it == columns.end()) throw ConfigError("normalization stats missing key '" + key + "'");
  return it->second;
}

nlohmann::json to_json(const NormStats& n) {
  nlohmann::json cols = nlohmann::json::object();
  for (const auto& [k, cs] : n.columns) cols[k] = {{"center", cs.center}, {"scale", cs.scale}};
  return {{"targetMean", n.target_mean}, {"targetStd", n.target_std}, {"columns", cols}};
}

NormStats norm_stats_from_json(const nlohmann::json& j) {
  try {
    NormStats n;
    n.target_mean = j.at("targetMean").get<double>();
    n.target_std = j.at("targetStd").get<double>();
    for (const auto& [k, v] : j.at("columns").items())
      n.columns[k] = {v.at("center").get<double>(), v.at("scale").get<double>()};
    return n;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("norm stats json: ") + e.what());
  }
}

WindowScale window_scale(std::span<const Bar* const> bars) {
  Price lo = bars.front()->low, hi = bars.front()->high;
  for (const Bar* b : bars) {
    lo = std::min(lo, b->low);
    hi = std::max(hi, b->high);
  }
  if (hi == lo) throw ContractViolation("features: flat window (max high == min low)");
  return {lo.value(), hi.value()};
}

LogReturns log_returns(const Bar& prev, const Bar& bar) {
  require_positive(prev);
  require_positive(bar);
  const double o = bar.open.value(), h = bar.high.value(), l = bar.low.value(), c = bar.close.value();
  return {std::log(bar.vwap / prev.vwap), std::log(c / o), std::log(c / h), std::log(h / l),
          std::log(c / bar.vwap)};
}

VolumeMeasures volume_measures(const Bar& bar) {
  const auto v = static_cast<double>(bar.volume);
  return {v, std::log(v), bar.dollar_volume, std::log(bar.dollar_volume), static_cast<double>(bar.tick_count)};
}

BarScale bar_scale(const Bar& bar, const WindowScale& s) {
  return {s(bar.high.value()) - s(bar.low.value()), s(bar.close.value()) - s(bar.open.value()),
          fraction(bar.close, bar.low, bar.high), fraction(bar.open, bar.low, bar.high)};
}

double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ContractViolation("percentile of empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(i);
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

PriorVolumeStats prior_volume_stats(std::span<const double> values) {
  constexpr std::size_t kDays = 5;
  PriorVolumeStats s;
  if (values.size() < kDays) return s;
  std::array<double, kDays> v{};
  std::copy(values.end() - kDays, values.end(), v.begin());
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / kDays;
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / (kDays - 1));
  std::sort(v.begin(), v.end());
  s.median = percentile_sorted(v, 0.5);
  s.p25 = percentile_sorted(v, 0.25);
  s.p75 = percentile_sorted(v, 0.75);
  s.available = s.std > 0.0 && s.p75 > s.p25;
  return s;
}

Activity relative_activity(double log_dollar_volume, const PriorVolumeStats& p) {
  if (!(p.std > 0.0) || !(p.p75 > p.p25))
    throw ContractViolation("features: prior volume stats without dispersion");
  return {(log_dollar_volume - p.mean) / p.std, (log_dollar_volume - p.median) / (p.p75 - p.p25)};
}

Timing timing_features(const Bar& bar, const SessionSpec& session) {
  const Nanos start = session.bar_start(bar.minute);
  const auto w = static_cast<double>(session.bar_width);
  const double ht = static_cast<double>(bar.high_ts - start) / w;
  const double lt = static_cast<double>(bar.low_ts - start) / w;
  const bool up = bar.close > bar.open;
  const bool down = bar.close < bar.open;
  const bool surprise = (up && bar.high_ts < bar.low_ts) || (down && bar.low_ts < bar.high_ts);
  return {ht, lt, ht - lt, surprise ? 1.0 : 0.0};
}

std::array<double, kFullDim> raw_bar_features(const Bar& prev, const Bar& bar, const PriorVolumeStats& prior,
                                              const SessionSpec& session) {
  std::array<double, kFullDim> f{};
  f[col::ScaledOpen] = bar.open.value();
  f[col::ScaledHigh] = bar.high.value();
  f[col::ScaledLow] = bar.low.value();
  f[col::ScaledClose] = bar.close.value();
  const LogReturns lr = log_returns(prev, bar);
  f[col::VwapLogRet] = lr.vwap_log_ret;
  f[col::BarLogRet] = lr.bar_log_ret;
  f[col::CloseOverHigh] = lr.close_over_high;
  f[col::HighOverLow] = lr.high_over_low;
  f[col::CloseOverVwap] = lr.close_over_vwap;
  const VolumeMeasures vm = volume_measures(bar);
  f[col::Volume] = vm.volume;
  f[col::LogVolume] = vm.log_volume;
  f[col::DollarVolume] = vm.dollar_volume;
  f[col::LogDollarVolume] = vm.log_dollar_volume;
  f[col::TickCount] = vm.tick_count;
  f[col::CloseFraction] = fraction(bar.close, bar.low, bar.high);
  f[col::OpenFraction] = fraction(bar.open, bar.low, bar.high);
  f[col::MinuteIndex] = bar.minute;
  f[col::MeanPrior] = prior.mean;
  f[col::StdPrior] = prior.std;
  f[col::MedianPrior] = prior.median;
  f[col::P25Prior] = prior.p25;
  f[col::P75Prior] = prior.p75;
  const Activity a = relative_activity(vm.log_dollar_volume, prior);
  f[col::StandardZ] = a.standard_z;
  f[col::RobustZ] = a.robust_z;
  const Timing t = timing_features(bar, session);
  f[col::HighTimeNorm] = t.high_time;
  f[col::LowTimeNorm] = t.low_time;
  f[col::TimeDiff] = t.time_diff;
  f[col::TimingSurprise] = t.surprise;
  return f;
}

void assemble(std::span<const Bar* const> bars, std::span<const PriorVolumeStats> priors, FeatureSet tag,
              const NormStats& norm, const SessionSpec& session, std::span<float> out) {
  const std::size_t d = feature_dim(tag);
  if (bars.size() != kLookback + 1 || priors.size() != kLookback || out.size() != kLookback * d)
    throw ContractViolation("assemble: expected 21 bars, 20 prior stats and a 20 x D buffer");

  const auto cols = columns(tag);
  std::array<CenterScale, kFullDim> cs{};
  for (std::size_t j = 0; j < d; ++j)
    if (cols[j].norm == N::MeanStd || cols[j].norm == N::MedianIqr) cs[j] = norm.at(cols[j].key);

  const auto feature_bars = bars.subspan(1);
  const WindowScale scale = window_scale(feature_bars);
  for (std::size_t r = 0; r < kLookback; ++r) {
    const Bar& bar = *bars[r + 1];
    auto f = raw_bar_features(*bars[r], bar, priors[r], session);
    for (std::size_t j = col::ScaledOpen; j <= col::ScaledClose; ++j) f[j] = scale(f[j]);
    const BarScale bs = bar_scale(bar, scale);
    f[col::ScaledBarHeight] = bs.scaled_bar_height;
    f[col::ScaledCloseVsOpen] = bs.scaled_close_vs_open;
    float* row = out.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      double v = f[j];
      if (cols[j].norm == N::MeanStd || cols[j].norm == N::MedianIqr) v = (v - cs[j].center) / cs[j].scale;
      row[j] = static_cast<float>(v);
    }
  }
}

}  // namespace barlab
