#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace barlab {

using Date = std::chrono::sys_days;

/// Nanoseconds since local midnight.
using Nanos = std::int64_t;

inline constexpr Nanos kNanosPerSecond = 1'000'000'000;

Date parse_date(std::string_view iso);  // throws ValidationError
std::string format_date(Date d);
std::uint32_t day_number(Date d);  // days since 1970-01-01
Date from_day_number(std::uint32_t n);

/// Weekdays starting at (and including, if a weekday) `first`.
std::vector<Date> business_days(Date first, int count);

std::string read_file(const std::filesystem::path& p);
void write_file_atomic(const std::filesystem::path& p, std::string_view bytes);

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double unit_double(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1p-53; }

/// Neumaier-compensated running sum.
struct NeumaierSum {
  double s = 0.0, c = 0.0;
  void add(double x) {
    const double t = s + x;
    c += std::fabs(s) >= std::fabs(x) ? (s - t) + x : (x - t) + s;
    s = t;
  }
  double value() const { return s + c; }
};

/// Hex SHA-1 of "blob <len>\0<content>", i.e. what `git hash-object` prints.
std::string git_blob_hash(std::string_view content);

}  // namespace barlab
