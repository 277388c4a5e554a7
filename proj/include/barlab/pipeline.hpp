#pragma once

// End-to-end stages shared by the command-line tool and the acceptance suite.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "barlab/config.hpp"
#include "barlab/eval.hpp"

namespace barlab::pipeline {

/// Generates ticks and builds bars in memory, skipping the CSV round trip.
BarStore synth_store(const SynthConfig& synth, const BarBuildConfig& bar_build);

/// Train, valid and test datasets for one feature set.
struct SplitDatasets {
  std::array<Dataset, 3> sets;  // indexed by Split
  std::vector<std::size_t> rejected;
  const Dataset& operator[](Split s) const { return sets[static_cast<std::size_t>(s)]; }
};
SplitDatasets split_datasets(const BarStore& store, const SplitSpec& splits, FeatureSet tag);

// --- on-disk layout -------------------------------------------------------------

std::filesystem::path dataset_file(const std::filesystem::path& root, FeatureSet tag, Split s);
std::filesystem::path run_dir(const std::filesystem::path& root, FeatureSet tag, std::uint64_t seed);
std::filesystem::path checkpoint_stem(const std::filesystem::path& run);  // <run>/run
std::filesystem::path report_dir(const std::filesystem::path& root, FeatureSet tag, std::uint64_t seed, Split s);

/// Writes every (symbol, day) tick file into `out`.
void gen_ticks(const RunConfig& c, const std::filesystem::path& out);
/// Builds one bar file per tick file.
void build_bar_files(const RunConfig& c, const std::filesystem::path& ticks, const std::filesystem::path& out);
/// Writes `<out>/<tag>/{train,valid,test}.dataset` plus sidecars.
void build_dataset_files(const RunConfig& c, FeatureSet tag, const std::filesystem::path& bars,
                         const std::filesystem::path& out);
/// Trains one seed and writes the checkpoint and `train_log.csv` into `run`.
model::Checkpoint train_run(const RunConfig& c, FeatureSet tag, std::uint64_t seed,
                            const std::filesystem::path& datasets, const std::filesystem::path& run);
/// Two-stage grid over the config's training settings; writes `grid.json`.
model::GridResult grid_run(const RunConfig& c, FeatureSet tag, const std::filesystem::path& datasets,
                           const std::filesystem::path& out);
/// Loads a checkpoint, refuses a mismatched dataset, evaluates and emits the report.
eval::Evaluation evaluate_run(const std::filesystem::path& run, const std::filesystem::path& dataset,
                              Split s, const std::filesystem::path& out);
/// Target statistics of one split; writes `stats.json` and `target_hist.csv`.
eval::TargetStats stats_run(const std::filesystem::path& dataset, const std::filesystem::path& out);

/// Mean and across-seed standard error of a metric per feature set.
struct SummaryRow {
  FeatureSet tag = FeatureSet::Full;
  std::vector<std::uint64_t> seeds;
  double nll_mean = 0.0, nll_se = 0.0;
  double cal_error_mean = 0.0;
  double r2_mean = 0.0;
  double directional_mean = 0.0;
  double ablation_delta_mean = 0.0;
};
/// Collects every `report.json` under `reports` for split `s`; writes
/// `summary.json` and `summary.csv` into `out`.
std::vector<SummaryRow> summarize(const std::filesystem::path& reports, Split s, const std::filesystem::path& out);

/// Sample mean and standard error (n - 1 denominator) of a small sample.
struct MeanSe {
  double mean = 0.0, se = 0.0;
};
MeanSe mean_se(std::span<const double> v);

}  // namespace barlab::pipeline
