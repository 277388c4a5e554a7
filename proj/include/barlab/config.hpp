#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "barlab/bars.hpp"
#include "barlab/dataset.hpp"
#include "barlab/ingest.hpp"
#include "barlab/model.hpp"

namespace barlab {

struct RunPaths {
  std::filesystem::path ticks, bars, datasets, runs, reports;
};

/// Everything one pipeline run needs. Relative paths resolve against the
/// directory of the config file.
struct RunConfig {
  SessionSpec session;
  SynthConfig synth;
  SplitSpec splits;
  BarBuildConfig bar_build;
  FeatureSet feature_set = FeatureSet::Full;
  model::TrainConfig train;
  RunPaths paths;

  void validate() const;  // ConfigError
};

/// Strict: unknown keys and missing sections are ConfigErrors. Keys missing
/// inside a section keep their defaults, except the three split ranges.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
nlohmann::json to_json(const RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& file);

/// Writes `config.json` (the effective config) and `config.hash` (its git blob
/// hash) into `dir`.
void write_fingerprint(const RunConfig& c, const std::filesystem::path& dir);

}  // namespace barlab
