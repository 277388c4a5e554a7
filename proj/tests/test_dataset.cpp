#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <cstring>
#include <map>
#include <set>

#include "barlab/dataset.hpp"
#include "barlab/error.hpp"
#include "filter_cases.hpp"

using namespace barlab;

namespace {

const SessionSpec kSession;
using filter_cases::make_bar;
using filter_cases::CandidateFixture;

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "barlab_test_dataset" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

SynthConfig small_cfg() {
  SynthConfig cfg;
  cfg.symbols = 2;
  cfg.days = 10;
  return cfg;
}

BarStore synth_store(const SynthConfig& cfg, int max_day = -1) {
  BarBuildConfig bcfg;
  bcfg.excluded_codes = {"X"};
  std::vector<std::vector<Bar>> parts;
  for (int s = 0; s < cfg.symbols; ++s)
    for (int d = 0; d < cfg.days; ++d) {
      if (max_day >= 0 && d > max_day) continue;
      parts.push_back(build_bars(generate_partition(cfg, kSession, s, d).ticks, bcfg));
    }
  return BarStore::from_bars(std::move(parts), kSession);
}

SplitSpec split_for(const SynthConfig& cfg) {
  const auto days = synth_days(cfg);
  // days 0-4 only feed prior volume history
  return {{days[0], days[7]}, {days[7], days[9]}, {days[9], days[9] + std::chrono::days{1}}};
}

}  // namespace

TEST(Filters, AcceptsCleanWindow) {
  CandidateFixture f;
  EXPECT_EQ(apply_filters(f.candidate()), std::nullopt);
}

TEST(Filters, MinPrice) {
  CandidateFixture f;
  f.bars[7] = make_bar(7, 3.99, 10.1);
  EXPECT_EQ(apply_filters(f.candidate()), FilterRule::MinPrice);
  f.bars[7] = make_bar(7, 4.00, 10.1);
  EXPECT_EQ(apply_filters(f.candidate()), std::nullopt);
  // the context bar t-20 is checked too
  f.bars[0] = make_bar(0, 3.99, 10.1);
  EXPECT_EQ(apply_filters(f.candidate()), FilterRule::MinPrice);
}

TEST(Filters, MinTicks) {
  CandidateFixture f;
  f.bars[12].tick_count = 29;
  EXPECT_EQ(apply_filters(f.candidate()), FilterRule::MinTicks);
  f.bars[12].tick_count = 30;
  EXPECT_EQ(apply_filters(f.candidate()), std::nullopt);
}

TEST(Filters, FlatWindow) {
  CandidateFixture f;
  for (int m = 1; m <= kLookback; ++m) f.bars[static_cast<std::size_t>(m)] = make_bar(m, 50.0, 50.0);
  EXPECT_EQ(apply_filters(f.candidate()), FilterRule::FlatWindow);
  f.bars[20] = make_bar(20, 50.0, 50.01);
  EXPECT_EQ(apply_filters(f.candidate()), std::nullopt);
}

TEST(Filters, MissingBarAndTarget) {
  CandidateFixture f;
  f.ptrs[5] = nullptr;
  EXPECT_EQ(apply_filters(f.candidate()), FilterRule::MissingBar);
  f.refresh();
  EXPECT_EQ(apply_filters(f.candidate(false)), FilterRule::NoTarget);
}

TEST(Filters, PriorVolume) {
  CandidateFixture f;
  f.priors[19] = prior_volume_stats(std::vector<double>{1, 2, 3});
  EXPECT_EQ(apply_filters(f.candidate()), FilterRule::PriorVolumeUnavailable);
}

TEST(Filters, FirstFailingRuleInTableOrder) {
  CandidateFixture f;
  f.bars[3].tick_count = 10;
  f.bars[4] = make_bar(4, 2.0, 3.0);
  EXPECT_EQ(apply_filters(f.candidate(false)), FilterRule::MinPrice);
}

TEST(SplitSpecs, Validation) {
  const Date d = parse_date("2021-01-04");
  const auto day = std::chrono::days{1};
  SplitSpec ok{{d, d + 2 * day}, {d + 2 * day, d + 3 * day}, {d + 3 * day, d + 4 * day}};
  EXPECT_NO_THROW(ok.validate());
  SplitSpec overlap{{d, d + 3 * day}, {d + 2 * day, d + 4 * day}, {d + 4 * day, d + 5 * day}};
  EXPECT_THROW(overlap.validate(), ConfigError);
  EXPECT_EQ(ok.classify(d + day), Split::Train);
  EXPECT_EQ(ok.classify(d + 3 * day), Split::Test);
  EXPECT_EQ(ok.classify(d + 9 * day), std::nullopt);
}

TEST(BarStoreTest, PriorStatsUseFiveMostRecentDaysWithBar) {
  // one symbol, seven days, minute 3 only; day 2 lacks the bar
  std::vector<std::vector<Bar>> parts;
  const auto days = business_days(parse_date("2021-01-04"), 7);
  for (int d = 0; d < 7; ++d) {
    if (d == 2) {
      parts.push_back({});
      continue;
    }
    Bar b = make_bar(3, 10, 11);
    b.day = days[static_cast<std::size_t>(d)];
    b.volume = 100 * (d + 1);
    b.notional = 10 * Price::kScale * b.volume;
    b.dollar_volume = dollars_from(b.notional);
    b.vwap = vwap_from(b.notional, b.volume);
    parts.push_back({b});
  }
  const auto store = BarStore::from_bars(parts, kSession);
  const auto& p = store.partitions();
  ASSERT_EQ(p.size(), 6u);
  EXPECT_FALSE(p[4].priors[3].available);  // day 5: only days 0,1,3,4 before it
  ASSERT_TRUE(p[5].priors[3].available);   // day 6: days 0,1,3,4,5
  std::vector<double> expect;
  for (int d : {0, 1, 3, 4, 5}) expect.push_back(std::log(10.0 * 100 * (d + 1)));
  double mean = 0;
  for (double v : expect) mean += v / 5;
  EXPECT_NEAR(p[5].priors[3].mean, mean, 1e-12);
}

class SynthDataset : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = new SynthConfig(small_cfg());
    store_ = new BarStore(synth_store(*cfg_));
    sets_ = new SampleSets(enumerate_samples(*store_, split_for(*cfg_)));
  }
  static void TearDownTestSuite() {
    delete sets_;
    delete store_;
    delete cfg_;
  }
  static SynthConfig* cfg_;
  static BarStore* store_;
  static SampleSets* sets_;
};
SynthConfig* SynthDataset::cfg_ = nullptr;
BarStore* SynthDataset::store_ = nullptr;
SampleSets* SynthDataset::sets_ = nullptr;

TEST_F(SynthDataset, TrainingTargetsStandardize) {
  const auto& n = sets_->norm;
  double sum = 0.0;
  for (const auto& r : sets_->train) sum += (r.target_raw - n.target_mean) / n.target_std;
  const double mean = sum / static_cast<double>(sets_->train.size());
  double ss = 0.0;
  for (const auto& r : sets_->train) {
    const double z = (r.target_raw - n.target_mean) / n.target_std;
    ss += (z - mean) * (z - mean);
  }
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(sets_->train.size() - 1)), 1.0, 1e-12);
}

TEST_F(SynthDataset, FullyActiveDayYields369) {
  std::map<std::uint32_t, std::size_t> per_part;
  for (const auto* v : {&sets_->train, &sets_->valid, &sets_->test})
    for (const auto& r : *v) ++per_part[r.part];
  ASSERT_FALSE(per_part.empty());
  for (const auto& [part, n] : per_part) EXPECT_LE(n, 369u);
  // the generator fills every minute with >= 30 regular ticks, so full days hit the bound
  EXPECT_EQ(per_part.begin()->second, 369u);
}

TEST_F(SynthDataset, EmittedSamplesRepassFilters) {
  const auto& parts = store_->partitions();
  for (const auto* v : {&sets_->train, &sets_->valid, &sets_->test})
    for (const auto& r : *v) {
      const auto& p = parts[r.part];
      std::vector<const Bar*> w;
      for (int m = r.minute - kLookback; m <= r.minute; ++m) {
        w.push_back(p.bar(m));
        ASSERT_NE(w.back(), nullptr);
        ASSERT_EQ(w.back()->minute, m);  // contiguity
      }
      const Candidate c{w, p.bar(r.minute + 1),
                        std::span(p.priors).subspan(static_cast<std::size_t>(r.minute - kLookback + 1), kLookback)};
      ASSERT_EQ(apply_filters(c), std::nullopt);
      ASSERT_DOUBLE_EQ(r.target_raw, std::log(c.target->vwap / w.back()->vwap));
    }
}

TEST_F(SynthDataset, SplitsAreDisjointByKey) {
  std::set<std::pair<std::uint32_t, int>> seen;
  const auto& parts = store_->partitions();
  for (const auto* v : {&sets_->train, &sets_->valid, &sets_->test})
    for (const auto& r : *v) ASSERT_TRUE(seen.insert({r.part, r.minute}).second);
  const auto split = split_for(*cfg_);
  for (const auto& r : sets_->valid) ASSERT_EQ(split.classify(parts[r.part].day), Split::Valid);
  for (const auto& r : sets_->test) ASSERT_EQ(split.classify(parts[r.part].day), Split::Test);
}

TEST_F(SynthDataset, NormStatsIgnoreLaterDays) {
  // drop every partition after the training range and rebuild
  const auto split = split_for(*cfg_);
  BarStore truncated = synth_store(*cfg_, 6);
  SplitSpec s = split;
  const auto norm = enumerate_samples(truncated, s).norm;
  EXPECT_EQ(norm, sets_->norm);
}

TEST(BuildDataset, ZeroTargetWhenVwapUnchanged) {
  const auto days = business_days(parse_date("2021-01-04"), 6);
  std::vector<std::vector<Bar>> parts;
  for (std::size_t d = 0; d < days.size(); ++d) {
    std::vector<Bar> bars;
    for (int m = 0; m <= 22; ++m) {
      Bar b = m == 20 ? make_bar(m, 99.9, 100.1) : m == 21 ? make_bar(m, 99.8, 100.2) : make_bar(m, 99.0 + 0.05 * m, 99.5 + 0.06 * m);
      b.day = days[d];
      b.volume = 1000 + static_cast<std::int64_t>(37 * d * d + m);
      b.tick_count = 30 + m;
      if (m == 21) b.close = Price::from_double(100.0);
      b.notional = (b.low.ticks + b.high.ticks) / 2 * b.volume;
      b.vwap = vwap_from(b.notional, b.volume);
      b.dollar_volume = dollars_from(b.notional);
      bars.push_back(b);
    }
    parts.push_back(bars);
  }
  const auto store = BarStore::from_bars(parts, kSession);
  const SplitSpec split{{days[5], days[5] + std::chrono::days{1}},
                        {days[5] + std::chrono::days{1}, days[5] + std::chrono::days{2}},
                        {days[5] + std::chrono::days{2}, days[5] + std::chrono::days{3}}};
  const auto sets = enumerate_samples(store, split);
  ASSERT_EQ(sets.train.size(), 2u);
  EXPECT_EQ(sets.train[0].minute, 20);
  EXPECT_EQ(sets.train[0].target_raw, 0.0);
  const Dataset d = materialize(store, sets.train, FeatureSet::Basic, sets.norm);
  EXPECT_FLOAT_EQ(d.y[0], static_cast<float>(-sets.norm.target_mean / sets.norm.target_std));
}

TEST_F(SynthDataset, EmptyTrainingSplitIsConfigError) {
  const auto days = synth_days(*cfg_);
  // training range inside the warm-up days: no prior stats => no samples
  SplitSpec s{{days[0], days[2]}, {days[7], days[9]}, {days[9], days[9] + std::chrono::days{1}}};
  EXPECT_THROW(enumerate_samples(*store_, s), ConfigError);
}

TEST_F(SynthDataset, ProjectionEqualsDirectMaterialization) {
  const std::span<const SampleRef> refs(sets_->valid.data(), 500);
  const Dataset full = materialize(*store_, refs, FeatureSet::Full, sets_->norm);
  for (FeatureSet tag : {FeatureSet::Basic, FeatureSet::NoTiming}) {
    const Dataset direct = materialize(*store_, refs, tag, sets_->norm);
    const Dataset proj = project(full, tag);
    EXPECT_EQ(direct.x, proj.x);
    EXPECT_EQ(direct.y, proj.y);
    EXPECT_EQ(direct.keys, proj.keys);
  }
  for (float v : full.x) ASSERT_TRUE(std::isfinite(v));
  // close-over-vwap recovered from the standardized column
  const auto& r = refs[0];
  const Bar* b = store_->partitions()[r.part].bar(r.minute);
  EXPECT_NEAR(*full.close_over_vwap_raw(0), std::log(b->close.value() / b->vwap), 1e-7);
  EXPECT_FALSE(project(full, FeatureSet::Basic).close_over_vwap_raw(0).has_value());
}

TEST_F(SynthDataset, BinaryRoundTrip) {
  const auto dir = temp_dir("roundtrip");
  std::vector<SampleRef> refs;
  while (refs.size() < 10'000) refs.push_back(sets_->valid[refs.size() % sets_->valid.size()]);
  ASSERT_EQ(refs.size(), 10'000u);
  const Dataset d = materialize(*store_, refs, FeatureSet::Full, sets_->norm);
  write_dataset(dir / "a.bin", d);
  const Dataset back = read_dataset(dir / "a.bin");
  EXPECT_EQ(back.tag, d.tag);
  EXPECT_EQ(back.dim, d.dim);
  EXPECT_EQ(back.keys, d.keys);
  EXPECT_EQ(back.symbols, d.symbols);
  EXPECT_EQ(std::memcmp(back.x.data(), d.x.data(), d.x.size() * sizeof(float)), 0);
  EXPECT_EQ(back.y, d.y);
  EXPECT_EQ(back.norm, d.norm);  // full double precision through JSON
  write_dataset(dir / "b.bin", back);
  EXPECT_EQ(read_file(dir / "a.bin"), read_file(dir / "b.bin"));
  EXPECT_TRUE(std::filesystem::exists(dir / "a.norm.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "a.columns.json"));
}

TEST_F(SynthDataset, CorruptFilesAreFormatErrors) {
  const auto dir = temp_dir("corrupt");
  const Dataset d = materialize(*store_, std::span(sets_->valid.data(), 50), FeatureSet::Basic, sets_->norm);
  write_dataset(dir / "a.bin", d);
  const std::string bytes = read_file(dir / "a.bin");

  write_file_atomic(dir / "a.bin", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_dataset(dir / "a.bin"), FormatError);
  write_file_atomic(dir / "a.bin", bytes.substr(0, 10));
  EXPECT_THROW(read_dataset(dir / "a.bin"), FormatError);

  std::string bad = bytes;
  bad[0] = 'X';
  write_file_atomic(dir / "a.bin", bad);
  EXPECT_THROW(read_dataset(dir / "a.bin"), FormatError);

  bad = bytes;
  bad[7] = 9;  // version
  write_file_atomic(dir / "a.bin", bad);
  EXPECT_THROW(read_dataset(dir / "a.bin"), FormatError);
}

TEST(BarStoreTest, LoadFromFilesMatchesInMemory) {
  SynthConfig cfg;
  cfg.symbols = 2;
  cfg.days = 2;
  BarBuildConfig bcfg;
  bcfg.excluded_codes = {"X"};
  const auto dir = temp_dir("load");
  std::vector<std::vector<Bar>> parts;
  for (int s = 0; s < 2; ++s)
    for (int d = 0; d < 2; ++d) {
      auto bars = build_bars(generate_partition(cfg, kSession, s, d).ticks, bcfg);
      write_bars(dir / bar_file_name(bars[0].symbol, bars[0].day), bars);
      parts.push_back(std::move(bars));
    }
  const auto a = BarStore::load(dir, kSession);
  const auto b = BarStore::from_bars(parts, kSession);
  ASSERT_EQ(a.partitions().size(), b.partitions().size());
  EXPECT_EQ(a.symbols(), b.symbols());
  for (std::size_t i = 0; i < a.partitions().size(); ++i) EXPECT_EQ(a.partitions()[i].bars, b.partitions()[i].bars);
}
