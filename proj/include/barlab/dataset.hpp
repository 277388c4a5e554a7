#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "barlab/bars.hpp"
#include "barlab/features.hpp"

namespace barlab {

/// Half-open date range [begin, end).
struct DateRange {
  Date begin;
  Date end;
  bool contains(Date d) const { return d >= begin && d < end; }
};

enum class Split { Train, Valid, Test };
const char* to_string(Split s);
Split parse_split(std::string_view text);  // "train" | "valid" | "test"

struct SplitSpec {
  DateRange train, valid, test;
  void validate() const;  // ConfigError unless disjoint and ordered
  std::optional<Split> classify(Date d) const;
};

/// Bars of every (symbol, day) partition on a dense minute grid, plus the
/// same-minute prior volume statistics of each bar.
class BarStore {
 public:
  struct Partition {
    std::uint32_t symbol = 0;
    Date day;
    std::vector<Bar> bars;
    std::vector<std::int32_t> at_minute;  // index into bars or -1
    std::vector<PriorVolumeStats> priors;  // per minute

    const Bar* bar(int minute) const {
      const auto i = at_minute[static_cast<std::size_t>(minute)];
      return i < 0 ? nullptr : &bars[static_cast<std::size_t>(i)];
    }
  };

  /// Partitions must each hold one (symbol, day) in minute order.
  static BarStore from_bars(std::vector<std::vector<Bar>> parts, const SessionSpec& session);
  /// Reads every `*.bars.csv` in `dir`.
  static BarStore load(const std::filesystem::path& dir, const SessionSpec& session);

  const SessionSpec& session() const { return session_; }
  const std::vector<std::string>& symbols() const { return symbols_; }
  const std::vector<Partition>& partitions() const { return parts_; }

 private:
  SessionSpec session_;
  std::vector<std::string> symbols_;  // sorted; id = index
  std::vector<Partition> parts_;      // sorted by (symbol, day)
};

enum class FilterRule { MinPrice, MinTicks, FlatWindow, MissingBar, NoTarget, PriorVolumeUnavailable };
const char* to_string(FilterRule r);

inline constexpr std::int64_t kMinPriceTicks = 4 * Price::kScale;
inline constexpr std::int64_t kMinTicksPerBar = 30;

/// A candidate window: the context bar t-20, feature bars t-19..t (entries may
/// be null for missing minutes), the target bar t+1 (null if absent) and prior
/// stats aligned with the feature bars.
struct Candidate {
  std::span<const Bar* const> bars;
  const Bar* target = nullptr;
  std::span<const PriorVolumeStats> priors;
};

/// Returns the first failing rule in table order, or nullopt if accepted.
std::optional<FilterRule> apply_filters(const Candidate& c);

struct SampleKey {
  std::uint32_t symbol = 0;
  std::uint32_t day = 0;  // days since 1970-01-01
  std::uint16_t minute = 0;
  auto operator<=>(const SampleKey&) const = default;
};

struct SampleRef {
  std::uint32_t part = 0;   // BarStore partition index
  std::uint16_t minute = 0;  // end minute t
  double target_raw = 0.0;
};

struct SampleSets {
  std::vector<SampleRef> train, valid, test;
  NormStats norm;
  std::vector<std::size_t> rejected;  // per FilterRule, over all split days

  const std::vector<SampleRef>& get(Split s) const;
};

/// Enumerates, filters and splits every window, then derives NormStats from the
/// training split. Per-column constants are taken over the endpoint bar of each
/// training sample. Throws ConfigError on an empty training split.
SampleSets enumerate_samples(const BarStore& store, const SplitSpec& splits);

/// Materialized samples: keys, 20 x D features and standardized targets.
struct Dataset {
  FeatureSet tag = FeatureSet::Full;
  std::size_t dim = 0;
  std::vector<std::string> symbols;
  std::vector<SampleKey> keys;
  std::vector<float> x;  // size() * kLookback * dim
  std::vector<float> y;
  NormStats norm;

  std::size_t size() const { return keys.size(); }
  std::size_t row_width() const { return kLookback * dim; }
  std::span<const float> features(std::size_t i) const {
    return {x.data() + i * row_width(), row_width()};
  }
  /// Raw ln(close_t / vwap_t) recovered from the close/vwap column, if present.
  std::optional<double> close_over_vwap_raw(std::size_t i) const;
};

Dataset materialize(const BarStore& store, std::span<const SampleRef> refs, FeatureSet tag,
                    const NormStats& norm);

/// Keeps the first D columns of a wider dataset (feature sets are nested).
Dataset project(const Dataset& d, FeatureSet tag);

inline constexpr std::uint16_t kDatasetVersion = 1;

/// Binary dataset plus `<stem>.norm.json` and `<stem>.columns.json` sidecars.
void write_dataset(const std::filesystem::path& path, const Dataset& d);
Dataset read_dataset(const std::filesystem::path& path);
std::filesystem::path norm_sidecar(const std::filesystem::path& dataset_path);
std::filesystem::path columns_sidecar(const std::filesystem::path& dataset_path);

}  // namespace barlab
