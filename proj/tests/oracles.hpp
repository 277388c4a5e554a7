#pragma once

// Independent brute-force oracles. Nothing here calls into the code under test
// beyond plain data types.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "barlab/bars.hpp"
#include "barlab/ingest.hpp"

namespace oracle {

struct NaiveBar {
  int minute = 0;
  barlab::Price open, high, low, close;
  barlab::Nanos open_ts = 0, high_ts = 0, low_ts = 0, close_ts = 0;
  long double vwap = 0.0L;
  std::int64_t volume = 0;
  std::int64_t ticks = 0;
  std::map<std::string, barlab::CodeCount> per_code;
};

/// Groups ticks by minute, then finds extremes and their first index by rescanning.
inline std::vector<NaiveBar> naive_bars(const std::vector<barlab::Tick>& ticks,
                                        const barlab::SessionSpec& s,
                                        const std::set<std::string>& excluded) {
  std::map<int, std::vector<barlab::Tick>> by_minute;
  for (const auto& t : ticks) by_minute[static_cast<int>((t.ts - s.session_open) / s.bar_width)].push_back(t);
  std::vector<NaiveBar> out;
  for (const auto& [minute, all] : by_minute) {
    std::vector<barlab::Tick> inc;
    NaiveBar b;
    b.minute = minute;
    for (const auto& t : all) {
      if (!t.code.empty()) {
        b.per_code[t.code].volume += t.size;
        b.per_code[t.code].ticks += 1;
      }
      if (!excluded.contains(t.code)) inc.push_back(t);
    }
    if (inc.empty()) continue;
    auto by_price = [](const barlab::Tick& a, const barlab::Tick& c) { return a.price < c.price; };
    const auto hi = std::max_element(inc.begin(), inc.end(), by_price);
    const auto lo = std::min_element(inc.begin(), inc.end(), by_price);
    b.open = inc.front().price;
    b.open_ts = inc.front().ts;
    b.close = inc.back().price;
    b.close_ts = inc.back().ts;
    for (const auto& t : inc)
      if (t.price == hi->price) { b.high = t.price; b.high_ts = t.ts; break; }
    for (const auto& t : inc)
      if (t.price == lo->price) { b.low = t.price; b.low_ts = t.ts; break; }
    long double num = 0.0L;
    for (const auto& t : inc) {
      num += static_cast<long double>(t.price.value()) * t.size;
      b.volume += t.size;
      b.ticks += 1;
    }
    b.vwap = num / b.volume;
    out.push_back(b);
  }
  return out;
}

/// Random tick list in one session minute range with deliberate price and ts ties.
inline std::vector<barlab::Tick> random_ticks(std::mt19937_64& rng, const barlab::SessionSpec& s,
                                              int count, int minutes) {
  std::uniform_int_distribution<int> minute_d(0, minutes - 1);
  std::uniform_int_distribution<barlab::Nanos> off_d(0, s.bar_width - 1);
  std::uniform_int_distribution<int> price_d(9990, 10010);  // narrow grid => many ties
  std::uniform_int_distribution<int> size_d(1, 500);
  std::uniform_int_distribution<int> code_d(0, 9);
  std::vector<barlab::Tick> ticks;
  for (int i = 0; i < count; ++i) {
    barlab::Tick t;
    t.symbol = "RND";
    t.day = barlab::Date{std::chrono::days{18631}};
    // coarse ts grid so equal timestamps occur
    t.ts = s.bar_start(minute_d(rng)) + (off_d(rng) / 1'000'000'000) * 1'000'000'000;
    t.price = barlab::Price{static_cast<std::int64_t>(price_d(rng)) * 100};
    t.size = size_d(rng);
    const int c = code_d(rng);
    t.code = c == 0 ? "X" : (c == 1 ? "Z" : "");
    ticks.push_back(t);
  }
  std::stable_sort(ticks.begin(), ticks.end(),
                   [](const barlab::Tick& a, const barlab::Tick& b) { return a.ts < b.ts; });
  return ticks;
}

}  // namespace oracle
