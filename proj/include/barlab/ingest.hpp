#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "barlab/common.hpp"

namespace barlab {

/// Fixed-point price on a 1e-4 grid (four fractional digits).
struct Price {
  static constexpr std::int64_t kScale = 10'000;
  std::int64_t ticks = 0;

  static Price from_double(double v);  // rounds to the nearest grid point
  double value() const { return static_cast<double>(ticks) / kScale; }
  std::string str() const;             // "100.0000"
  auto operator<=>(const Price&) const = default;
};

/// Parses "123", "123.4", "123.4567"; more than four fractional digits is an error.
bool parse_price(std::string_view text, Price& out);

struct Tick {
  std::string symbol;
  Date day;
  Nanos ts = 0;  // since midnight, exchange-local
  Price price;
  std::int64_t size = 0;
  std::string code;  // empty = regular trade

  bool operator==(const Tick&) const = default;
};

struct SessionSpec {
  int minutes_per_day = 390;
  Nanos session_open = 34'200 * kNanosPerSecond;  // 09:30
  Nanos bar_width = 60 * kNanosPerSecond;

  Nanos session_close() const { return session_open + minutes_per_day * bar_width; }
  Nanos bar_start(int minute) const { return session_open + minute * bar_width; }
  void validate() const;  // throws ConfigError
};

/// One (symbol, day) partition of ticks, sorted by ts.
struct TickPartition {
  std::string symbol;
  Date day;
  std::vector<Tick> ticks;
};

/// Reads a tick CSV and groups rows by (symbol, day), each group sorted by ts
/// (stable for equal ts). Rows outside the session are rejected.
std::vector<TickPartition> read_ticks(const std::filesystem::path& path, const SessionSpec& session);
void write_ticks(const std::filesystem::path& path, const std::vector<Tick>& ticks);
std::string tick_file_name(const std::string& symbol, Date day);

struct SynthConfig {
  int symbols = 20;
  int days = 30;
  std::uint64_t seed = 20210104;
  std::string first_day = "2021-01-04";
  double base_price_low = 20.0;
  double base_price_high = 200.0;
  double drift_phi = 0.98;         // AR(1) coefficient of the latent drift
  double drift_shock = 6e-5;       // sd of the drift innovation
  double minute_vol = 1e-3;        // per-minute log-return sd before the symbol and day multipliers
  double symbol_vol_sd = 0.6;      // log-sd of the per-symbol volatility multiplier
  double day_vol_sd = 0.3;         // log-sd of the per-(symbol, day) multiplier
  std::vector<double> vol_curve;   // intraday multiplier; empty = default U shape
  double alpha_momentum = 0.1;
  double alpha_close_fraction = 0.1;
  double alpha_timing = 0.5;
  int tick_base = 30;
  double tick_lambda = 40.0;
  double tick_nu = 4.0;
  double tick_noise_scale = 0.25;  // interior tick shock scale, in units of the minute vol
  double off_exchange_fraction = 0.05;
  double size_log_mean = 5.3;
  double size_log_sd = 1.0;
  double daily_gap_sd = 0.02;

  void validate(const SessionSpec& session) const;  // throws ConfigError
  std::vector<double> curve(const SessionSpec& session) const;
};

/// Off-exchange condition code attached to a fraction of synthetic ticks.
inline constexpr const char* kOffExchangeCode = "X";

/// Minute volatility sigma_b of one (symbol, day): minuteVol times log-normal
/// symbol and day multipliers. The drift innovation scales with it too.
double partition_vol(const SynthConfig& cfg, int symbol_index, int day_index);

/// Generates one (symbol, day) partition; deterministic in (cfg.seed, symbol, day).
TickPartition generate_partition(const SynthConfig& cfg, const SessionSpec& session,
                                 int symbol_index, int day_index);

std::string synth_symbol(int index);
std::vector<Date> synth_days(const SynthConfig& cfg);

/// Generates every partition (OpenMP over partitions) and writes one file per
/// (symbol, day) into `dir`. Returns the written paths in (symbol, day) order.
std::vector<std::filesystem::path> generate_ticks(const SynthConfig& cfg,
                                                  const SessionSpec& session,
                                                  const std::filesystem::path& dir);

}  // namespace barlab
