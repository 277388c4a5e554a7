#include "barlab/config.hpp"

#include <algorithm>
#include <set>

#include "barlab/common.hpp"
#include "barlab/error.hpp"

namespace barlab {

using nlohmann::json;

namespace {

void check_keys(const char* section, const json& j, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(section) + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
      throw ConfigError(std::string(section) + ": unknown key '" + k + "'");
  }
}

const json& require(const json& j, const char* key, const char* section) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(std::string(section) + ": missing key '" + key + "'");
  return *it;
}

SessionSpec session_from_json(const json& j) {
  check_keys("session", j, {"minutesPerDay", "sessionOpenSeconds", "barWidthSeconds"});
  SessionSpec s;
  s.minutes_per_day = j.value("minutesPerDay", s.minutes_per_day);
  s.session_open = j.value("sessionOpenSeconds", s.session_open / kNanosPerSecond) * kNanosPerSecond;
  s.bar_width = j.value("barWidthSeconds", s.bar_width / kNanosPerSecond) * kNanosPerSecond;
  return s;
}

json to_json(const SessionSpec& s) {
  return {{"minutesPerDay", s.minutes_per_day},
          {"sessionOpenSeconds", s.session_open / kNanosPerSecond},
          {"barWidthSeconds", s.bar_width / kNanosPerSecond}};
}

SynthConfig synth_from_json(const json& j) {
  check_keys("synth", j,
             {"symbols", "days", "seed", "firstDay", "basePriceRange", "driftPhi", "driftShock", "minuteVol",
              "symbolVolSd", "dayVolSd", "volCurve", "alphaMomentum", "alphaCloseFraction", "alphaTiming", "tickBase", "tickLambda",
              "tickNu", "tickNoiseScale", "offExchangeFraction", "sizeLogMean", "sizeLogSd", "dailyGapSd"});
  SynthConfig c;
  c.symbols = j.value("symbols", c.symbols);
  c.days = j.value("days", c.days);
  c.seed = j.value("seed", c.seed);
  c.first_day = j.value("firstDay", c.first_day);
  if (j.contains("basePriceRange")) {
    const auto r = j.at("basePriceRange").get<std::vector<double>>();
    if (r.size() != 2) throw ConfigError("synth: basePriceRange must be [low, high]");
    c.base_price_low = r[0];
    c.base_price_high = r[1];
  }
  c.drift_phi = j.value("driftPhi", c.drift_phi);
  c.drift_shock = j.value("driftShock", c.drift_shock);
  c.minute_vol = j.value("minuteVol", c.minute_vol);
  c.symbol_vol_sd = j.value("symbolVolSd", c.symbol_vol_sd);
  c.day_vol_sd = j.value("dayVolSd", c.day_vol_sd);
  c.vol_curve = j.value("volCurve", c.vol_curve);
  c.alpha_momentum = j.value("alphaMomentum", c.alpha_momentum);
  c.alpha_close_fraction = j.value("alphaCloseFraction", c.alpha_close_fraction);
  c.alpha_timing = j.value("alphaTiming", c.alpha_timing);
  c.tick_base = j.value("tickBase", c.tick_base);
  c.tick_lambda = j.value("tickLambda", c.tick_lambda);
  c.tick_nu = j.value("tickNu", c.tick_nu);
  c.tick_noise_scale = j.value("tickNoiseScale", c.tick_noise_scale);
  c.off_exchange_fraction = j.value("offExchangeFraction", c.off_exchange_fraction);
  c.size_log_mean = j.value("sizeLogMean", c.size_log_mean);
  c.size_log_sd = j.value("sizeLogSd", c.size_log_sd);
  c.daily_gap_sd = j.value("dailyGapSd", c.daily_gap_sd);
  return c;
}

json to_json(const SynthConfig& c) {
  return {{"symbols", c.symbols},
          {"days", c.days},
          {"seed", c.seed},
          {"firstDay", c.first_day},
          {"basePriceRange", {c.base_price_low, c.base_price_high}},
          {"driftPhi", c.drift_phi},
          {"driftShock", c.drift_shock},
          {"minuteVol", c.minute_vol},
          {"symbolVolSd", c.symbol_vol_sd},
          {"dayVolSd", c.day_vol_sd},
          {"volCurve", c.vol_curve},
          {"alphaMomentum", c.alpha_momentum},
          {"alphaCloseFraction", c.alpha_close_fraction},
          {"alphaTiming", c.alpha_timing},
          {"tickBase", c.tick_base},
          {"tickLambda", c.tick_lambda},
          {"tickNu", c.tick_nu},
          {"tickNoiseScale", c.tick_noise_scale},
          {"offExchangeFraction", c.off_exchange_fraction},
          {"sizeLogMean", c.size_log_mean},
          {"sizeLogSd", c.size_log_sd},
          {"dailyGapSd", c.daily_gap_sd}};
}

DateRange range_from_json(const json& j, const char* name) {
  check_keys(name, j, {"begin", "end"});
  try {
    return {parse_date(require(j, "begin", name).get<std::string>()),
            parse_date(require(j, "end", name).get<std::string>())};
  } catch (const ValidationError& e) {
    throw ConfigError(std::string(name) + ": " + e.what());
  }
}

json to_json(const DateRange& r) { return {{"begin", format_date(r.begin)}, {"end", format_date(r.end)}}; }

std::filesystem::path resolve(const json& paths, const char* key, const std::filesystem::path& base) {
  std::filesystem::path p = require(paths, key, "paths").get<std::string>();
  return (p.is_absolute() ? p : base / p).lexically_normal();
}

}  // namespace

void RunConfig::validate() const {
  session.validate();
  synth.validate(session);
  splits.validate();
  train.validate();
  const std::vector<std::filesystem::path> all{paths.ticks, paths.bars, paths.datasets, paths.runs, paths.reports};
  std::set<std::filesystem::path> unique(all.begin(), all.end());
  if (unique.size() != all.size()) throw ConfigError("paths: ticks, bars, datasets, runs and reports must be distinct");
  for (const auto& p : all)
    if (p.empty()) throw ConfigError("paths: empty path");
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  try {
    check_keys("config", j, {"session", "synth", "splits", "barBuild", "featureSet", "train", "paths"});
    c.session = session_from_json(require(j, "session", "config"));
    c.synth = synth_from_json(require(j, "synth", "config"));

    const json& sp = require(j, "splits", "config");
    check_keys("splits", sp, {"train", "valid", "test"});
    c.splits.train = range_from_json(require(sp, "train", "splits"), "splits.train");
    c.splits.valid = range_from_json(require(sp, "valid", "splits"), "splits.valid");
    c.splits.test = range_from_json(require(sp, "test", "splits"), "splits.test");

    const json& bb = require(j, "barBuild", "config");
    check_keys("barBuild", bb, {"excludedCodes"});
    const auto codes = bb.value("excludedCodes", std::vector<std::string>{kOffExchangeCode});
    c.bar_build.excluded_codes = {codes.begin(), codes.end()};
    c.bar_build.session = c.session;

    c.feature_set = parse_feature_set(require(j, "featureSet", "config").get<std::string>());

    const json& tr = require(j, "train", "config");
    check_keys("train", tr,
               {"learningRate", "weightDecay", "dropoutRate", "batchSize", "epochs", "batchesPerEpoch", "seeds"});
    c.train = model::train_config_from_json(tr);

    const json& p = require(j, "paths", "config");
    check_keys("paths", p, {"ticks", "bars", "datasets", "runs", "reports"});
    c.paths = {resolve(p, "ticks", base_dir), resolve(p, "bars", base_dir), resolve(p, "datasets", base_dir),
               resolve(p, "runs", base_dir), resolve(p, "reports", base_dir)};
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  std::vector<std::string> codes(c.bar_build.excluded_codes.begin(), c.bar_build.excluded_codes.end());
  return {{"session", to_json(c.session)},
          {"synth", to_json(c.synth)},
          {"splits", {{"train", to_json(c.splits.train)}, {"valid", to_json(c.splits.valid)}, {"test", to_json(c.splits.test)}}},
          {"barBuild", {{"excludedCodes", codes}}},
          {"featureSet", to_string(c.feature_set)},
          {"train", model::to_json(c.train)},
          {"paths",
           {{"ticks", c.paths.ticks.string()},
            {"bars", c.paths.bars.string()},
            {"datasets", c.paths.datasets.string()},
            {"runs", c.paths.runs.string()},
            {"reports", c.paths.reports.string()}}}};
}

RunConfig load_run_config(const std::filesystem::path& file) {
  if (!std::filesystem::is_regular_file(file)) throw ConfigError("config file not found: " + file.string());
  json j;
  try {
    j = json::parse(read_file(file));
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return run_config_from_json(j, std::filesystem::absolute(file).parent_path());
}

void write_fingerprint(const RunConfig& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string text = to_json(c).dump(2) + "\n";
  write_file_atomic(dir / "config.json", text);
  write_file_atomic(dir / "config.hash", git_blob_hash(text) + "\n");
}

}  // namespace barlab
