#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>

#include <json.hpp>

#include "barlab/bars.hpp"

namespace barlab {

enum class FeatureSet : std::uint8_t { Basic = 0, NoTiming = 1, Full = 2 };

const char* to_string(FeatureSet tag);
FeatureSet parse_feature_set(std::string_view text);  // "basic" | "no-timing" | "full"
std::size_t feature_dim(FeatureSet tag);               // 5 / 26 / 30

inline constexpr int kLookback = 20;
inline constexpr std::size_t kFullDim = 30;

enum class Normalization { MinMax, MeanStd, MedianIqr, None, UnitInterval };
const char* to_string(Normalization n);

struct ColumnInfo {
  const char* key;
  const char* name;
  const char* group;
  Normalization norm;
};

/// Column order for FULL. Every tag uses a prefix of this list.
std::span<const ColumnInfo> columns(FeatureSet tag);

namespace col {
enum : std::size_t {
  ScaledOpen, ScaledHigh, ScaledLow, ScaledClose, VwapLogRet,
  BarLogRet, CloseOverHigh, HighOverLow, CloseOverVwap,
  Volume, LogVolume, DollarVolume, LogDollarVolume, TickCount,
  ScaledBarHeight, ScaledCloseVsOpen, CloseFraction, OpenFraction,
  MinuteIndex,
  MeanPrior, StdPrior, MedianPrior, P25Prior, P75Prior,
  StandardZ, RobustZ,
  HighTimeNorm, LowTimeNorm, TimeDiff, TimingSurprise,
};
}  // namespace col

/// Ordered list of {name, key, group, normalization}.
nlohmann::json column_manifest(FeatureSet tag);
/// Git-style blob hash of the serialized column manifest.
std::string column_manifest_hash(FeatureSet tag);

struct CenterScale {
  double center = 0.0;
  double scale = 1.0;
  bool operator==(const CenterScale&) const = default;
};

/// Training-split normalization constants. `columns` is keyed by column key and
/// holds mean/std or median/IQR depending on the column's group.
struct NormStats {
  double target_mean = 0.0;
  double target_std = 1.0;
  std::map<std::string, CenterScale> columns;

  const CenterScale& at(const std::string& key) const;  // ConfigError if missing
  bool operator==(const NormStats&) const = default;
};

nlohmann::json to_json(const NormStats& n);
NormStats norm_stats_from_json(const nlohmann::json& j);

/// Min-max map of the window's price range onto [-1, 1].
struct WindowScale {
  double lo = 0.0;
  double hi = 0.0;
  double operator()(double price) const { return 2.0 * (price - lo) / (hi - lo) - 1.0; }
};
WindowScale window_scale(std::span<const Bar* const> bars);  // ContractViolation if flat

struct LogReturns {
  double vwap_log_ret, bar_log_ret, close_over_high, high_over_low, close_over_vwap;
};
LogReturns log_returns(const Bar& prev, const Bar& bar);

struct VolumeMeasures {
  double volume, log_volume, dollar_volume, log_dollar_volume, tick_count;
};
VolumeMeasures volume_measures(const Bar& bar);

struct BarScale {
  double scaled_bar_height, scaled_close_vs_open, close_fraction, open_fraction;
};
BarScale bar_scale(const Bar& bar, const WindowScale& scale);

/// Same-minute log dollar volume statistics over the previous five trading days.
struct PriorVolumeStats {
  bool available = false;
  double mean = 0.0, std = 0.0, median = 0.0, p25 = 0.0, p75 = 0.0;
};
/// `values` are the prior days' log dollar volumes, oldest first; the last five
/// are used. Unavailable with fewer than five values, zero std or zero IQR.
PriorVolumeStats prior_volume_stats(std::span<const double> values);

/// Linear-interpolation percentile of sorted data, q in [0, 1].
double percentile_sorted(std::span<const double> sorted, double q);

struct Activity {
  double standard_z, robust_z;
};
Activity relative_activity(double log_dollar_volume, const PriorVolumeStats& prior);

struct Timing {
  double high_time, low_time, time_diff, surprise;
};
Timing timing_features(const Bar& bar, const SessionSpec& session);

/// Window-independent raw values of all FULL columns for one bar. Price
/// columns hold raw prices and the two scaled bar-scale columns are left at 0;
/// assemble() fills them per window.
std::array<double, kFullDim> raw_bar_features(const Bar& prev, const Bar& bar,
                                              const PriorVolumeStats& prior,
                                              const SessionSpec& session);

/// Fills a kLookback x D row-major matrix (oldest bar first). `bars` holds the
/// context bar followed by the kLookback feature bars; `priors` aligns with the
/// feature bars.
void assemble(std::span<const Bar* const> bars, std::span<const PriorVolumeStats> priors,
              FeatureSet tag, const NormStats& norm, const SessionSpec& session, std::span<float> out);

}  // namespace barlab
