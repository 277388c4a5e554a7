#include "barlab/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>

#include "barlab/error.hpp"
#include "barlab/parallel.hpp"

namespace barlab {

namespace {

using Sum = NeumaierSum;

CenterScale mean_std(std::span<const double> v) {
  Sum s;
  for (double x : v) s.add(x);
  const double mean = s.value() / static_cast<double>(v.size());
  Sum ss;
  for (double x : v) ss.add((x - mean) * (x - mean));
  return {mean, std::sqrt(ss.value() / static_cast<double>(v.size() - 1))};
}

CenterScale median_iqr(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return {percentile_sorted(v, 0.5), percentile_sorted(v, 0.75) - percentile_sorted(v, 0.25)};
}

constexpr char kMagic[7] = {'B', 'A', 'R', 'L', 'A', 'B', '\0'};
constexpr std::size_t kHeaderBytes = sizeof kMagic + 2 + 1 + 4 + 4 + 8;
constexpr std::size_t kKeyBytes = 4 + 4 + 2;

template <class T>
void put(std::string& buf, T v) {
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf.push_back(static_cast<char>(u & 0xFF));
    if constexpr (sizeof(T) > 1) u = static_cast<U>(u >> 8);
  }
}

void put_f32(std::string& buf, float f) { put(buf, std::bit_cast<std::uint32_t>(f)); }

template <class T>
T get(const unsigned char*& p) {
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(p[i]) << (8 * i);
  p += sizeof(T);
  return static_cast<T>(u);
}

float get_f32(const unsigned char*& p) { return std::bit_cast<float>(get<std::uint32_t>(p)); }

}  // namespace

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "valid" || text == "validation") return Split::Valid;
  if (text == "test") return Split::Test;
  throw ConfigError("unknown split '" + std::string(text) + "' (train, valid, test)");
}

void SplitSpec::validate() const {
  for (const DateRange* r : {&train, &valid, &test})
    if (!(r->begin < r->end)) throw ConfigError("splits: every range needs begin < end");
  if (!(train.end <= valid.begin && valid.end <= test.begin))
    throw ConfigError("splits: ranges must be disjoint and ordered train < valid < test");
}

std::optional<Split> SplitSpec::classify(Date d) const {
  if (train.contains(d)) return Split::Train;
  if (valid.contains(d)) return Split::Valid;
  if (test.contains(d)) return Split::Test;
  return std::nullopt;
}

BarStore BarStore::from_bars(std::vector<std::vector<Bar>> parts, const SessionSpec& session) {
  session.validate();
  BarStore store;
  store.session_ = session;
  std::map<std::pair<std::string, Date>, std::vector<Bar>> grouped;
  for (auto& p : parts)
    for (auto& b : p) {
      if (b.minute < 0 || b.minute >= session.minutes_per_day)
        throw ValidationError("bar minute " + std::to_string(b.minute) + " outside session for " + b.symbol);
      grouped[{b.symbol, b.day}].push_back(std::move(b));
    }
  for (const auto& [key, _] : grouped)
    if (store.symbols_.empty() || store.symbols_.back() != key.first) store.symbols_.push_back(key.first);

  const auto minutes = static_cast<std::size_t>(session.minutes_per_day);
  std::uint32_t sym = 0;
  for (auto& [key, bars] : grouped) {
    while (store.symbols_[sym] != key.first) ++sym;
    std::sort(bars.begin(), bars.end(), [](const Bar& a, const Bar& b) { return a.minute < b.minute; });
    Partition p;
    p.symbol = sym;
    p.day = key.second;
    p.at_minute.assign(minutes, -1);
    for (std::size_t i = 0; i < bars.size(); ++i) {
      auto& slot = p.at_minute[static_cast<std::size_t>(bars[i].minute)];
      if (slot >= 0) throw ValidationError("duplicate bar for " + key.first + " minute " + std::to_string(bars[i].minute));
      slot = static_cast<std::int32_t>(i);
    }
    p.bars = std::move(bars);
    store.parts_.push_back(std::move(p));
  }

  // same-minute history per symbol, walking days forward
  std::vector<std::vector<double>> history;
  for (std::size_t i = 0; i < store.parts_.size(); ++i) {
    Partition& p = store.parts_[i];
    if (i == 0 || store.parts_[i - 1].symbol != p.symbol) history.assign(minutes, {});
    p.priors.resize(minutes);
    for (std::size_t m = 0; m < minutes; ++m) p.priors[m] = prior_volume_stats(history[m]);
    for (const Bar& b : p.bars) {
      auto& h = history[static_cast<std::size_t>(b.minute)];
      h.push_back(std::log(b.dollar_volume));
      if (h.size() > 5) h.erase(h.begin());
    }
  }
  return store;
}

BarStore BarStore::load(const std::filesystem::path& dir, const SessionSpec& session) {
  if (!std::filesystem::is_directory(dir)) throw IoError("bars directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.ends_with(".bars.csv")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::vector<Bar>> parts(files.size());
  parallel::for_each_index(files.size(), [&](std::size_t i) { parts[i] = read_bars(files[i]); });
  return from_bars(std::move(parts), session);
}

const char* to_string(FilterRule r) {
  switch (r) {
    case FilterRule::MinPrice: return "MIN_PRICE";
    case FilterRule::MinTicks: return "MIN_TICKS";
    case FilterRule::FlatWindow: return "FLAT_WINDOW";
    case FilterRule::MissingBar: return "MISSING_BAR";
    case FilterRule::NoTarget: return "NO_TARGET";
    case FilterRule::PriorVolumeUnavailable: return "PRIOR_VOLUME_UNAVAILABLE";
  }
  return "?";
}

std::optional<FilterRule> apply_filters(const Candidate& c) {
  if (c.bars.size() != kLookback + 1 || c.priors.size() != kLookback)
    throw ContractViolation("apply_filters: expected 21 bars and 20 prior stats");
  for (const Bar* b : c.bars)
    if (b && b->low.ticks < kMinPriceTicks) return FilterRule::MinPrice;
  for (const Bar* b : c.bars)
    if (b && b->tick_count < kMinTicksPerBar) return FilterRule::MinTicks;
  std::optional<Price> lo, hi;
  for (const Bar* b : c.bars.subspan(1)) {
    if (!b) continue;
    lo = lo ? std::min(*lo, b->low) : b->low;
    hi = hi ? std::max(*hi, b->high) : b->high;
  }
  if (lo && *lo == *hi) return FilterRule::FlatWindow;
  for (const Bar* b : c.bars)
    if (!b) return FilterRule::MissingBar;
  if (!c.target) return FilterRule::NoTarget;
  for (const auto& p : c.priors)
    if (!p.available) return FilterRule::PriorVolumeUnavailable;
  return std::nullopt;
}

const std::vector<SampleRef>& SampleSets::get(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Valid: return valid;
    case Split::Test: return test;
  }
  return train;
}

SampleSets enumerate_samples(const BarStore& store, const SplitSpec& splits) {
  splits.validate();
  const auto& parts = store.partitions();
  const int minutes = store.session().minutes_per_day;
  constexpr std::size_t kRules = 6;

  struct PartOut {
    std::vector<SampleRef> refs;
    std::array<std::size_t, kRules> rejected{};
  };
  std::vector<PartOut> outs(parts.size());
  parallel::for_each_index(parts.size(), [&](std::size_t pi) {
    const auto& p = parts[pi];
    if (!splits.classify(p.day)) return;
    std::array<const Bar*, kLookback + 1> window{};
    for (int t = kLookback; t + 1 < minutes; ++t) {
      for (int k = 0; k <= kLookback; ++k) window[static_cast<std::size_t>(k)] = p.bar(t - kLookback + k);
      const Candidate c{window, p.bar(t + 1),
                        std::span(p.priors).subspan(static_cast<std::size_t>(t - kLookback + 1), kLookback)};
      if (const auto rule = apply_filters(c)) {
        ++outs[pi].rejected[static_cast<std::size_t>(*rule)];
        continue;
      }
      outs[pi].refs.push_back({static_cast<std::uint32_t>(pi), static_cast<std::uint16_t>(t),
                               std::log(c.target->vwap / window.back()->vwap)});
    }
  });

  SampleSets sets;
  sets.rejected.assign(kRules, 0);
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    for (std::size_t r = 0; r < kRules; ++r) sets.rejected[r] += outs[pi].rejected[r];
    const auto split = splits.classify(parts[pi].day);
    if (!split) continue;
    auto& dst = *split == Split::Train ? sets.train : (*split == Split::Valid ? sets.valid : sets.test);
    dst.insert(dst.end(), outs[pi].refs.begin(), outs[pi].refs.end());
  }
  if (sets.train.size() < 2) throw ConfigError("training split has no usable samples");

  // normalization constants, training split only, fixed key order
  std::vector<double> targets;
  targets.reserve(sets.train.size());
  for (const auto& r : sets.train) targets.push_back(r.target_raw);
  const CenterScale t = mean_std(targets);
  sets.norm.target_mean = t.center;
  sets.norm.target_std = t.scale;
  if (!(t.scale > 0.0)) throw ValidationError("training targets have zero variance");

  const auto cols = columns(FeatureSet::Full);
  std::vector<std::vector<double>> raw(kFullDim);
  for (auto& v : raw) v.reserve(sets.train.size());
  for (const auto& r : sets.train) {
    const auto& p = parts[r.part];
    const auto f = raw_bar_features(*p.bar(r.minute - 1), *p.bar(r.minute), p.priors[r.minute], store.session());
    for (std::size_t j = 0; j < kFullDim; ++j) raw[j].push_back(f[j]);
  }
  for (std::size_t j = 0; j < kFullDim; ++j) {
    CenterScale cs;
    if (cols[j].norm == Normalization::MeanStd) cs = mean_std(raw[j]);
    else if (cols[j].norm == Normalization::MedianIqr) cs = median_iqr(raw[j]);
    else continue;
    if (!(cs.scale > 0.0))
      throw ValidationError(std::string("training column '") + cols[j].key + "' has zero dispersion");
    sets.norm.columns[cols[j].key] = cs;
  }
  return sets;
}

std::optional<double> Dataset::close_over_vwap_raw(std::size_t i) const {
  if (dim <= col::CloseOverVwap) return std::nullopt;
  const CenterScale& cs = norm.at("closeOverVwap");
  const float v = x[i * row_width() + (kLookback - 1) * dim + col::CloseOverVwap];
  return static_cast<double>(v) * cs.scale + cs.center;
}

Dataset materialize(const BarStore& store, std::span<const SampleRef> refs, FeatureSet tag,
                    const NormStats& norm) {
  Dataset d;
  d.tag = tag;
  d.dim = feature_dim(tag);
  d.symbols = store.symbols();
  d.norm = norm;
  d.keys.resize(refs.size());
  d.y.resize(refs.size());
  d.x.resize(refs.size() * d.row_width());
  const auto& parts = store.partitions();
  parallel::for_each_index(refs.size(), [&](std::size_t i) {
    const SampleRef& r = refs[i];
    const auto& p = parts[r.part];
    std::array<const Bar*, kLookback + 1> window{};
    for (int k = 0; k <= kLookback; ++k) window[static_cast<std::size_t>(k)] = p.bar(r.minute - kLookback + k);
    assemble(window, std::span(p.priors).subspan(static_cast<std::size_t>(r.minute - kLookback + 1), kLookback),
             tag, norm, store.session(), std::span(d.x).subspan(i * d.row_width(), d.row_width()));
    d.keys[i] = {p.symbol, day_number(p.day), r.minute};
    d.y[i] = static_cast<float>((r.target_raw - norm.target_mean) / norm.target_std);
  });
  return d;
}

Dataset project(const Dataset& src, FeatureSet tag) {
  const std::size_t dim = feature_dim(tag);
  if (dim > src.dim) throw ContractViolation("project: target feature set is wider than the source");
  Dataset d;
  d.tag = tag;
  d.dim = dim;
  d.symbols = src.symbols;
  d.keys = src.keys;
  d.y = src.y;
  d.norm = src.norm;
  d.x.resize(src.size() * d.row_width());
  for (std::size_t i = 0; i < src.size(); ++i)
    for (std::size_t r = 0; r < kLookback; ++r)
      std::copy_n(src.x.data() + i * src.row_width() + r * src.dim, dim, d.x.data() + i * d.row_width() + r * dim);
  return d;
}

std::filesystem::path norm_sidecar(const std::filesystem::path& p) {
  auto s = p;
  return s.replace_extension(".norm.json");
}

std::filesystem::path columns_sidecar(const std::filesystem::path& p) {
  auto s = p;
  return s.replace_extension(".columns.json");
}

void write_dataset(const std::filesystem::path& path, const Dataset& d) {
  if (d.x.size() != d.size() * d.row_width() || d.y.size() != d.size())
    throw ContractViolation("write_dataset: inconsistent buffers");
  std::string buf;
  buf.reserve(kHeaderBytes + d.size() * (kKeyBytes + 4 * (d.row_width() + 1)));
  buf.append(kMagic, sizeof kMagic);
  put<std::uint16_t>(buf, kDatasetVersion);
  put<std::uint8_t>(buf, static_cast<std::uint8_t>(d.tag));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(d.dim));
  put<std::uint32_t>(buf, kLookback);
  put<std::uint64_t>(buf, d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    put(buf, d.keys[i].symbol);
    put(buf, d.keys[i].day);
    put(buf, d.keys[i].minute);
    for (float v : d.features(i)) put_f32(buf, v);
    put_f32(buf, d.y[i]);
  }
  write_file_atomic(path, buf);
  nlohmann::json side = {{"featureSet", to_string(d.tag)},
                         {"columnManifestHash", column_manifest_hash(d.tag)},
                         {"symbols", d.symbols},
                         {"normStats", to_json(d.norm)}};
  write_file_atomic(norm_sidecar(path), side.dump(2) + "\n");
  write_file_atomic(columns_sidecar(path), column_manifest(d.tag).dump(2) + "\n");
}

Dataset read_dataset(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const std::string what = "dataset " + path.filename().string();
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw FormatError(what + ": bad magic");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + sizeof kMagic;
  const auto version = get<std::uint16_t>(p);
  if (version != kDatasetVersion) throw FormatError(what + ": unsupported version " + std::to_string(version));
  const auto tag_byte = get<std::uint8_t>(p);
  if (tag_byte > 2) throw FormatError(what + ": bad feature-set tag");
  Dataset d;
  d.tag = static_cast<FeatureSet>(tag_byte);
  d.dim = get<std::uint32_t>(p);
  const auto lookback = get<std::uint32_t>(p);
  const auto count = get<std::uint64_t>(p);
  if (d.dim != feature_dim(d.tag) || lookback != kLookback) throw FormatError(what + ": header shape mismatch");
  const std::size_t rec = kKeyBytes + 4 * (d.row_width() + 1);
  if (count > (bytes.size() - kHeaderBytes) / rec || bytes.size() != kHeaderBytes + count * rec)
    throw FormatError(what + ": truncated or oversized (" + std::to_string(bytes.size()) + " bytes)");

  nlohmann::json side;
  try {
    side = nlohmann::json::parse(read_file(norm_sidecar(path)));
    d.symbols = side.at("symbols").get<std::vector<std::string>>();
    if (side.at("featureSet").get<std::string>() != to_string(d.tag))
      throw FormatError(what + ": sidecar feature set disagrees with header");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": bad norm sidecar: " + e.what());
  }
  d.norm = norm_stats_from_json(side.at("normStats"));

  d.keys.resize(count);
  d.y.resize(count);
  d.x.resize(count * d.row_width());
  float* x = d.x.data();
  for (std::size_t i = 0; i < count; ++i) {
    d.keys[i].symbol = get<std::uint32_t>(p);
    d.keys[i].day = get<std::uint32_t>(p);
    d.keys[i].minute = get<std::uint16_t>(p);
    if (d.keys[i].symbol >= d.symbols.size()) throw FormatError(what + ": symbol id out of range");
    for (std::size_t j = 0; j < d.row_width(); ++j) *x++ = get_f32(p);
    d.y[i] = get_f32(p);
  }
  return d;
}

}  // namespace barlab
