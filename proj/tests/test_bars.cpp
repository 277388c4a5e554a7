#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "barlab/bars.hpp"
#include "barlab/error.hpp"
#include "oracles.hpp"

using namespace barlab;

namespace {

const Date kDay = parse_date("2021-01-04");

Tick tick(Nanos ts, double price, std::int64_t size, std::string code = "") {
  return Tick{"XYZ", kDay, ts, Price::from_double(price), size, std::move(code)};
}

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "barlab_test_bars";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void expect_matches_oracle(const std::vector<Bar>& bars, const std::vector<oracle::NaiveBar>& ref) {
  ASSERT_EQ(bars.size(), ref.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const Bar& b = bars[i];
    const auto& r = ref[i];
    EXPECT_EQ(b.minute, r.minute);
    EXPECT_EQ(b.open, r.open);
    EXPECT_EQ(b.high, r.high);
    EXPECT_EQ(b.low, r.low);
    EXPECT_EQ(b.close, r.close);
    EXPECT_EQ(b.open_ts, r.open_ts);
    EXPECT_EQ(b.high_ts, r.high_ts);
    EXPECT_EQ(b.low_ts, r.low_ts);
    EXPECT_EQ(b.close_ts, r.close_ts);
    EXPECT_EQ(b.volume, r.volume);
    EXPECT_EQ(b.tick_count, r.ticks);
    EXPECT_EQ(b.per_code, r.per_code);
    EXPECT_LE(std::fabs(b.vwap - static_cast<double>(r.vwap)), 1e-12 * static_cast<double>(r.vwap));
  }
}

}  // namespace

TEST(BuildBars, SingleTick) {
  BarBuildConfig cfg;
  const Nanos start = cfg.session.bar_start(0);
  const std::vector<Tick> ticks{tick(start + 10 * kNanosPerSecond, 100.0, 5)};
  const auto bars = build_bars(ticks, cfg);
  ASSERT_EQ(bars.size(), 1u);
  const Bar& b = bars[0];
  EXPECT_EQ(b.open.value(), 100.0);
  EXPECT_EQ(b.high, b.open);
  EXPECT_EQ(b.low, b.open);
  EXPECT_EQ(b.close, b.open);
  for (Nanos ts : {b.open_ts, b.high_ts, b.low_ts, b.close_ts}) EXPECT_EQ(ts, start + 10 * kNanosPerSecond);
  EXPECT_EQ(b.vwap, 100.0);
  EXPECT_EQ(b.volume, 5);
  EXPECT_EQ(b.tick_count, 1);
}

TEST(BuildBars, FirstOccurrenceOfExtremes) {
  BarBuildConfig cfg;
  const Nanos s = cfg.session.bar_start(3);
  const Nanos t1 = s + 1, t2 = s + 2, t3 = s + 3, t4 = s + 4, t5 = s + 5;
  const std::vector<Tick> ticks{tick(t1, 100, 1), tick(t2, 102, 1), tick(t3, 98, 1),
                                tick(t4, 102, 1), tick(t5, 99, 2)};
  const auto bars = build_bars(ticks, cfg);
  ASSERT_EQ(bars.size(), 1u);
  const Bar& b = bars[0];
  EXPECT_EQ(b.minute, 3);
  EXPECT_EQ(b.open.value(), 100.0);
  EXPECT_EQ(b.open_ts, t1);
  EXPECT_EQ(b.high.value(), 102.0);
  EXPECT_EQ(b.high_ts, t2);  // not t4
  EXPECT_EQ(b.low.value(), 98.0);
  EXPECT_EQ(b.low_ts, t3);
  EXPECT_EQ(b.close.value(), 99.0);
  EXPECT_EQ(b.close_ts, t5);
  EXPECT_EQ(b.volume, 6);
  EXPECT_DOUBLE_EQ(b.vwap, 100.0);
  EXPECT_DOUBLE_EQ(b.dollar_volume, 600.0);
  expect_matches_oracle(bars, oracle::naive_bars(ticks, cfg.session, cfg.excluded_codes));
}

TEST(BuildBars, UnsortedInputIsContractViolation) {
  BarBuildConfig cfg;
  const Nanos s = cfg.session.bar_start(0);
  const std::vector<Tick> ticks{tick(s + 5, 100, 1), tick(s + 4, 100, 1)};
  EXPECT_THROW(build_bars(ticks, cfg), ContractViolation);
}

TEST(BuildBars, AllExcludedGivesEmptyList) {
  BarBuildConfig cfg;
  cfg.excluded_codes = {"X"};
  const Nanos s = cfg.session.bar_start(0);
  const std::vector<Tick> ticks{tick(s + 5, 100, 1, "X"), tick(s + 9, 101, 3, "X")};
  EXPECT_TRUE(build_bars(ticks, cfg).empty());
  EXPECT_TRUE(build_bars(std::vector<Tick>{}, cfg).empty());
}

TEST(BuildBars, EmptyMinutesAreAbsent) {
  BarBuildConfig cfg;
  const std::vector<Tick> ticks{tick(cfg.session.bar_start(0) + 1, 100, 1),
                                tick(cfg.session.bar_start(5) + 1, 101, 1)};
  const auto bars = build_bars(ticks, cfg);
  ASSERT_EQ(bars.size(), 2u);
  EXPECT_EQ(bars[0].minute, 0);
  EXPECT_EQ(bars[1].minute, 5);
}

TEST(BuildBars, OracleEquivalenceOnRandomLists) {
  std::mt19937_64 rng(42);
  BarBuildConfig cfg;
  cfg.excluded_codes = {"X"};
  std::uniform_int_distribution<int> n_d(1, 500);
  for (int trial = 0; trial < 300; ++trial) {
    const auto ticks = oracle::random_ticks(rng, cfg.session, n_d(rng), 4);
    expect_matches_oracle(build_bars(ticks, cfg), oracle::naive_bars(ticks, cfg.session, cfg.excluded_codes));
  }
}

TEST(BuildBars, PermutationRobustness) {
  std::mt19937_64 rng(5);
  BarBuildConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    auto ticks = oracle::random_ticks(rng, cfg.session, 200, 3);
    // distinct timestamps, so re-sorting a shuffle recovers one order
    for (std::size_t i = 0; i < ticks.size(); ++i) ticks[i].ts += static_cast<Nanos>(i);
    const auto base = build_bars(ticks, cfg);
    auto shuffled = ticks;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::stable_sort(shuffled.begin(), shuffled.end(), [](const Tick& a, const Tick& b) { return a.ts < b.ts; });
    EXPECT_EQ(build_bars(shuffled, cfg), base);
  }
}

TEST(BuildBars, ExclusionConsistency) {
  std::mt19937_64 rng(9);
  BarBuildConfig with_x;
  with_x.excluded_codes = {"X"};
  BarBuildConfig plain;
  for (int trial = 0; trial < 50; ++trial) {
    const auto ticks = oracle::random_ticks(rng, plain.session, 300, 3);
    std::vector<Tick> filtered;
    for (const auto& t : ticks)
      if (t.code != "X") filtered.push_back(t);
    auto a = build_bars(ticks, with_x);
    const auto b = build_bars(filtered, plain);
    // identical except that per_code["X"] survives in the former
    for (auto& bar : a) bar.per_code.erase("X");
    EXPECT_EQ(a, b);
  }
}

TEST(BuildBars, MonotoneContainment) {
  std::mt19937_64 rng(13);
  BarBuildConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    auto ticks = oracle::random_ticks(rng, cfg.session, 50, 1);
    const auto before = build_bars(ticks, cfg);
    ticks.push_back(oracle::random_ticks(rng, cfg.session, 1, 1).front());
    ticks.back().ts = ticks[ticks.size() - 2].ts;  // keep sorted
    const auto after = build_bars(ticks, cfg);
    ASSERT_EQ(before.size(), after.size());
    EXPECT_GE(after[0].high, before[0].high);
    EXPECT_LE(after[0].low, before[0].low);
  }
}

TEST(BuildBars, VolumeEqualsRegularPlusIncludedCodes) {
  std::mt19937_64 rng(21);
  BarBuildConfig cfg;
  cfg.excluded_codes = {"X"};
  const auto ticks = oracle::random_ticks(rng, cfg.session, 400, 2);
  const auto bars = build_bars(ticks, cfg);
  for (const Bar& b : bars) {
    std::int64_t regular = 0, regular_ticks = 0;
    for (const auto& t : ticks)
      if (t.code.empty() && (t.ts - cfg.session.session_open) / cfg.session.bar_width == b.minute) {
        regular += t.size;
        ++regular_ticks;
      }
    std::int64_t vol = regular, cnt = regular_ticks;
    for (const auto& [code, cc] : b.per_code)
      if (!cfg.excluded_codes.contains(code)) {
        vol += cc.volume;
        cnt += cc.ticks;
      }
    EXPECT_EQ(b.volume, vol);
    EXPECT_EQ(b.tick_count, cnt);
    EXPECT_LE(b.low.value(), b.vwap);
    EXPECT_LE(b.vwap, b.high.value());
  }
}

TEST(BuildBars, ParallelMatchesSerialReference) {
  SynthConfig synth;
  synth.symbols = 2;
  synth.days = 2;
  SessionSpec session;
  std::vector<TickPartition> parts;
  for (int s = 0; s < 2; ++s)
    for (int d = 0; d < 2; ++d) parts.push_back(generate_partition(synth, session, s, d));
  BarBuildConfig cfg;
  cfg.excluded_codes = {"X"};
  EXPECT_EQ(build_all_bars(parts, cfg), reference::build_all_bars(parts, cfg));
}

TEST(BarCsv, TableOneRowRoundTrips) {
  Bar b;
  b.symbol = "XYZ";
  b.day = parse_date("2023-01-02");
  b.minute = 0;
  b.open = Price::from_double(100.00);
  b.high = Price::from_double(100.12);
  b.low = Price::from_double(99.94);
  b.close = Price::from_double(99.96);
  b.open_ts = 34'200 * kNanosPerSecond;
  b.high_ts = b.open_ts + 7 * kNanosPerSecond;
  b.low_ts = b.open_ts + 31 * kNanosPerSecond;
  b.close_ts = b.open_ts + 59 * kNanosPerSecond;
  b.volume = 100'000;  // 1000 round lots
  b.notional = 1'000'150'000'000;
  b.tick_count = 412;
  b.vwap = vwap_from(b.notional, b.volume);
  b.dollar_volume = dollars_from(b.notional);
  EXPECT_EQ(round_lots(b.volume), 1000.0);
  const auto path = temp_path("table1.bars.csv");
  write_bars(path, std::vector<Bar>{b});
  const auto back = read_bars(path);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], b);
}

TEST(BarCsv, PerCodeColumns) {
  BarBuildConfig cfg;
  const Nanos s = cfg.session.bar_start(0);
  std::vector<Tick> ticks{tick(s + 1, 10, 100), tick(s + 2, 10.5, 200, "X"), tick(s + 3, 10.2, 150, "X"),
                          tick(s + 4, 10.1, 150, "X"), tick(cfg.session.bar_start(1) + 1, 10.3, 20)};
  cfg.excluded_codes = {"X"};
  const auto bars = build_bars(ticks, cfg);
  ASSERT_EQ(bars.size(), 2u);
  EXPECT_EQ(bars[0].per_code.at("X"), (CodeCount{500, 3}));
  EXPECT_TRUE(bars[1].per_code.empty());
  const auto path = temp_path("codes.bars.csv");
  write_bars(path, bars);
  const std::string text = read_file(path);
  EXPECT_NE(text.find(",vol[X],ticks[X]\n"), std::string::npos);
  EXPECT_NE(text.find(",500,3\n"), std::string::npos);
  const auto back = read_bars(path);
  EXPECT_EQ(back, bars);
  EXPECT_TRUE(back[1].per_code.empty());
}

TEST(BarCsv, EmptyPerCodeHasNoExtraColumns) {
  BarBuildConfig cfg;
  const auto bars = build_bars(std::vector<Tick>{tick(cfg.session.bar_start(2) + 5, 42.0, 7)}, cfg);
  const auto path = temp_path("plain.bars.csv");
  write_bars(path, bars);
  const std::string text = read_file(path);
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "symbol,date,minute,open,high,low,close,open_ts,high_ts,low_ts,close_ts,vwap,volume,"
            "dollar_volume,ticks");
  EXPECT_EQ(read_bars(path), bars);
}

TEST(BarCsv, RandomBarsRoundTrip) {
  std::mt19937_64 rng(77);
  BarBuildConfig cfg;
  cfg.excluded_codes = {"X"};
  std::vector<Bar> bars;
  while (bars.size() < 1000) {
    const auto ticks = oracle::random_ticks(rng, cfg.session, 400, 50);
    for (auto& b : build_bars(ticks, cfg)) bars.push_back(std::move(b));
  }
  const auto path = temp_path("random.bars.csv");
  write_bars(path, bars);
  EXPECT_EQ(read_bars(path), bars);
}

TEST(BarCsv, SchemaMismatchIsFormatError) {
  const auto path = temp_path("bad.bars.csv");
  write_file_atomic(path, "symbol,date,minute,open\nXYZ,2021-01-04,0,1\n");
  EXPECT_THROW(read_bars(path), FormatError);
  write_file_atomic(path,
                    "symbol,date,minute,open,high,low,close,open_ts,high_ts,low_ts,close_ts,vwap,volume,"
                    "dollar_volume,ticks,vol[X]\n");
  EXPECT_THROW(read_bars(path), FormatError);
}

TEST(BarCsv, MalformedRowIsParseErrorWithLine) {
  const auto path = temp_path("malformed.bars.csv");
  write_file_atomic(path,
                    "symbol,date,minute,open,high,low,close,open_ts,high_ts,low_ts,close_ts,vwap,volume,"
                    "dollar_volume,ticks\n"
                    "XYZ,2021-01-04,0,1.0,1.0,1.0,1.0,1,1,1,1,1.00000000,1,1.0000,1\n"
                    "XYZ,2021-01-04,zero,1.0,1.0,1.0,1.0,1,1,1,1,1.00000000,1,1.0000,1\n");
  try {
    read_bars(path);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}
