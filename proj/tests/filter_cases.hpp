#pragma once

// Crafted filter windows: a clean 21-bar window plus its target bar.

#include <vector>

#include "barlab/dataset.hpp"

namespace filter_cases {

using namespace barlab;

// Bar with a given price level and spread; timestamps mid-bar.
inline Bar make_bar(int minute, double low, double high, std::int64_t ticks = 40) {
  Bar b;
  b.symbol = "XYZ";
  b.day = parse_date("2021-01-11");
  b.minute = minute;
  b.low = Price::from_double(low);
  b.high = Price::from_double(high);
  b.open = b.low;
  b.close = b.high;
  const Nanos s = SessionSpec{}.bar_start(minute);
  b.open_ts = b.low_ts = s + 1'000'000'000;
  b.high_ts = b.close_ts = s + 30'000'000'000;
  b.volume = 1000;
  b.notional = (b.low.ticks + b.high.ticks) / 2 * b.volume;
  b.vwap = vwap_from(b.notional, b.volume);
  b.dollar_volume = dollars_from(b.notional);
  b.tick_count = ticks;
  return b;
}

struct CandidateFixture {
  std::vector<Bar> bars;
  Bar target = make_bar(21, 10.0, 10.5);
  std::vector<PriorVolumeStats> priors;
  std::vector<const Bar*> ptrs;

  CandidateFixture() {
    for (int m = 0; m <= kLookback; ++m) bars.push_back(make_bar(m, 10.0 + 0.01 * m, 10.2 + 0.01 * m));
    priors.assign(kLookback, prior_volume_stats(std::vector<double>{1, 2, 3, 4, 5}));
    refresh();
  }
  void refresh() {
    ptrs.clear();
    for (const auto& b : bars) ptrs.push_back(&b);
  }
  Candidate candidate(bool with_target = true) const { return {ptrs, with_target ? &target : nullptr, priors}; }
};

}  // namespace filter_cases
