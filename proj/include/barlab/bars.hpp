#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "barlab/ingest.hpp"

namespace barlab {

struct CodeCount {
  std::int64_t volume = 0;
  std::int64_t ticks = 0;
  bool operator==(const CodeCount&) const = default;
};

/// Timing-enhanced one-minute bar.
///
/// `per_code` tracks every non-empty condition code seen in the minute,
/// whether or not the code was excluded from aggregation. Regular (code-less)
/// trades are not listed there.
struct Bar {
  std::string symbol;
  Date day;
  int minute = 0;  // 0 = first session minute
  Price open, high, low, close;
  Nanos open_ts = 0, high_ts = 0, low_ts = 0, close_ts = 0;
  std::int64_t notional = 0;  // sum of price ticks * size over included trades
  std::int64_t volume = 0;    // shares
  std::int64_t tick_count = 0;
  double vwap = 0.0;
  double dollar_volume = 0.0;
  std::map<std::string, CodeCount> per_code;

  bool operator==(const Bar&) const = default;
};

/// VWAP and dollar volume from the exact integer notional.
double vwap_from(std::int64_t notional, std::int64_t volume);
double dollars_from(std::int64_t notional);

struct BarBuildConfig {
  std::set<std::string> excluded_codes;
  SessionSpec session;
};

/// Aggregates one sorted (symbol, day) tick stream into bars. Minutes without an
/// included tick produce no bar. Throws ContractViolation on unsorted input.
std::vector<Bar> build_bars(std::span<const Tick> ticks, const BarBuildConfig& cfg);

/// Builds every partition, OpenMP-parallel across partitions.
std::vector<std::vector<Bar>> build_all_bars(std::span<const TickPartition> parts,
                                             const BarBuildConfig& cfg);

namespace reference {
/// Serial counterpart of build_all_bars, kept for tests and benchmarks.
std::vector<std::vector<Bar>> build_all_bars(std::span<const TickPartition> parts,
                                             const BarBuildConfig& cfg);
}  // namespace reference

std::string bar_file_name(const std::string& symbol, Date day);

/// Bar CSV, format version 1. `vwap` is informational on read: it is recomputed
/// from dollar_volume and volume and checked against the column.
void write_bars(const std::filesystem::path& path, std::span<const Bar> bars);
std::vector<Bar> read_bars(const std::filesystem::path& path);

/// Round lots (100 shares), for display only.
inline double round_lots(std::int64_t shares) { return static_cast<double>(shares) / 100.0; }

}  // namespace barlab
