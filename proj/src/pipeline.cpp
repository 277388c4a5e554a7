#include "barlab/pipeline.hpp"

#include <cmath>
#include <map>

#include "barlab/common.hpp"
#include "barlab/error.hpp"
#include "barlab/parallel.hpp"

namespace barlab::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

BarStore synth_store(const SynthConfig& synth, const BarBuildConfig& bar_build) {
  synth.validate(bar_build.session);
  std::vector<std::vector<Bar>> parts(static_cast<std::size_t>(synth.symbols * synth.days));
  parallel::for_each_index(parts.size(), [&](std::size_t i) {
    const auto ticks = generate_partition(synth, bar_build.session, static_cast<int>(i) / synth.days,
                                          static_cast<int>(i) % synth.days);
    parts[i] = build_bars(ticks.ticks, bar_build);
  });
  return BarStore::from_bars(std::move(parts), bar_build.session);
}

SplitDatasets split_datasets(const BarStore& store, const SplitSpec& splits, FeatureSet tag) {
  const auto refs = enumerate_samples(store, splits);
  SplitDatasets out;
  for (Split s : {Split::Train, Split::Valid, Split::Test})
    out.sets[static_cast<std::size_t>(s)] = materialize(store, refs.get(s), tag, refs.norm);
  out.rejected = refs.rejected;
  return out;
}

fs::path dataset_file(const fs::path& root, FeatureSet tag, Split s) {
  return root / to_string(tag) / (std::string(to_string(s)) + ".dataset");
}

fs::path run_dir(const fs::path& root, FeatureSet tag, std::uint64_t seed) {
  return root / to_string(tag) / ("seed" + std::to_string(seed));
}

fs::path checkpoint_stem(const fs::path& run) { return run / "run"; }

fs::path report_dir(const fs::path& root, FeatureSet tag, std::uint64_t seed, Split s) {
  return root / to_string(tag) / ("seed" + std::to_string(seed)) / to_string(s);
}

void gen_ticks(const RunConfig& c, const fs::path& out) {
  generate_ticks(c.synth, c.session, out);
  write_fingerprint(c, out);
}

void build_bar_files(const RunConfig& c, const fs::path& ticks, const fs::path& out) {
  if (!fs::is_directory(ticks)) throw IoError("ticks directory not found: " + ticks.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(ticks))
    if (e.is_regular_file() && e.path().filename().string().ends_with(".ticks.csv")) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  fs::create_directories(out);
  parallel::for_each_index(files.size(), [&](std::size_t i) {
    for (const auto& part : read_ticks(files[i], c.session))
      write_bars(out / bar_file_name(part.symbol, part.day), build_bars(part.ticks, c.bar_build));
  });
  write_fingerprint(c, out);
}

void build_dataset_files(const RunConfig& c, FeatureSet tag, const fs::path& bars, const fs::path& out) {
  const auto store = BarStore::load(bars, c.session);
  const auto d = split_datasets(store, c.splits, tag);
  for (Split s : {Split::Train, Split::Valid, Split::Test}) {
    const auto path = dataset_file(out, tag, s);
    fs::create_directories(path.parent_path());
    write_dataset(path, d[s]);
  }
  json rejected = json::object();
  for (std::size_t r = 0; r < d.rejected.size(); ++r)
    rejected[to_string(static_cast<FilterRule>(r))] = d.rejected[r];
  json summary = {{"featureSet", to_string(tag)},
                  {"train", d[Split::Train].size()},
                  {"valid", d[Split::Valid].size()},
                  {"test", d[Split::Test].size()},
                  {"rejected", rejected}};
  write_file_atomic(out / to_string(tag) / "samples.json", summary.dump(2) + "\n");
  write_fingerprint(c, out / to_string(tag));
}

model::Checkpoint train_run(const RunConfig& c, FeatureSet tag, std::uint64_t seed, const fs::path& datasets,
                            const fs::path& run) {
  const auto train_set = read_dataset(dataset_file(datasets, tag, Split::Train));
  const auto valid_set = read_dataset(dataset_file(datasets, tag, Split::Valid));
  const auto result = model::train(train_set, valid_set, c.train, seed);
  auto ckpt = model::make_checkpoint(result, train_set, c.train, seed);
  fs::create_directories(run);
  model::save_checkpoint(checkpoint_stem(run), ckpt);
  write_file_atomic(run / "train_log.csv", model::log_csv(result.log));
  write_fingerprint(c, run);
  return ckpt;
}

model::GridResult grid_run(const RunConfig& c, FeatureSet tag, const fs::path& datasets, const fs::path& out) {
  const auto train_set = read_dataset(dataset_file(datasets, tag, Split::Train));
  const auto valid_set = read_dataset(dataset_file(datasets, tag, Split::Valid));
  auto g = model::grid_search(train_set, valid_set, model::GridSpace{}, c.train);
  fs::create_directories(out);
  write_file_atomic(out / "grid.json", model::to_json(g).dump(2) + "\n");
  write_fingerprint(c, out);
  return g;
}

eval::Evaluation evaluate_run(const fs::path& run, const fs::path& dataset, Split s, const fs::path& out) {
  const auto ckpt = model::load_checkpoint(checkpoint_stem(run));
  const auto d = read_dataset(dataset);
  model::check_compatible(ckpt, d);
  const auto pred = model::predict(ckpt.net, d);
  auto e = eval::evaluate(d, pred, to_string(s));
  eval::emit_report(e, out);
  return e;
}

eval::TargetStats stats_run(const fs::path& dataset, const fs::path& out) {
  const auto d = read_dataset(dataset);
  std::vector<double> y(d.y.begin(), d.y.end());
  const auto t = eval::target_stats(y);
  eval::EvalReport r;
  r.target = t;
  const auto j = to_json(r).at("targetStats");
  fs::create_directories(out);
  write_file_atomic(out / "stats.json", j.dump(2) + "\n");
  const auto h = eval::target_histogram(y);
  std::string csv = "bin_lo,bin_hi,count,density\n";
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    const double lo = h.lo + h.width() * static_cast<double>(k);
    csv += json(lo).dump() + "," + json(lo + h.width()).dump() + "," + std::to_string(h.counts[k]) + "," +
           json(static_cast<double>(h.counts[k]) / (static_cast<double>(y.size()) * h.width())).dump() + "\n";
  }
  write_file_atomic(out / "target_hist.csv", csv);
  return t;
}

MeanSe mean_se(std::span<const double> v) {
  if (v.empty()) throw ValidationError("mean_se: empty sample");
  NeumaierSum s;
  for (double x : v) s.add(x);
  MeanSe r;
  r.mean = s.value() / static_cast<double>(v.size());
  if (v.size() < 2) return r;
  NeumaierSum ss;
  for (double x : v) ss.add((x - r.mean) * (x - r.mean));
  r.se = std::sqrt(ss.value() / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return r;
}

std::vector<SummaryRow> summarize(const fs::path& reports, Split s, const fs::path& out) {
  std::vector<SummaryRow> rows;
  for (FeatureSet tag : {FeatureSet::Basic, FeatureSet::NoTiming, FeatureSet::Full}) {
    const fs::path dir = reports / to_string(tag);
    if (!fs::is_directory(dir)) continue;
    std::map<std::uint64_t, eval::EvalReport> by_seed;
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (!e.is_directory() || !name.starts_with("seed")) continue;
      const fs::path file = e.path() / to_string(s) / "report.json";
      if (!fs::is_regular_file(file)) continue;
      std::uint64_t seed = 0;
      try {
        seed = std::stoull(name.substr(4));
      } catch (const std::exception&) {
        continue;
      }
      try {
        by_seed[seed] = eval::report_from_json(json::parse(read_file(file)));
      } catch (const json::exception& ex) {
        throw FormatError(file.string() + ": " + ex.what());
      }
    }
    if (by_seed.empty()) continue;
    SummaryRow row;
    row.tag = tag;
    std::vector<double> nll, cal, r2, dir_acc, delta;
    for (const auto& [seed, r] : by_seed) {
      row.seeds.push_back(seed);
      nll.push_back(r.nll);
      cal.push_back(r.calibration.cal_error);
      r2.push_back(r.r2);
      dir_acc.push_back(r.directional.overall);
      delta.push_back(r.ablation.delta);
    }
    const auto n = mean_se(nll);
    row.nll_mean = n.mean;
    row.nll_se = n.se;
    row.cal_error_mean = mean_se(cal).mean;
    row.r2_mean = mean_se(r2).mean;
    row.directional_mean = mean_se(dir_acc).mean;
    row.ablation_delta_mean = mean_se(delta).mean;
    rows.push_back(row);
  }
  if (rows.empty()) throw IoError("no report.json found under " + reports.string() + " for split " + to_string(s));

  json j = json::array();
  std::string csv = "feature_set,seeds,nll_mean,nll_se,cal_error_x100,r2,directional_accuracy,ablation_delta\n";
  for (const auto& r : rows) {
    j.push_back({{"featureSet", to_string(r.tag)},
                 {"seeds", r.seeds},
                 {"nllMean", r.nll_mean},
                 {"nllSe", r.nll_se},
                 {"calErrorMean", r.cal_error_mean},
                 {"r2Mean", r.r2_mean},
                 {"directionalMean", r.directional_mean},
                 {"ablationDeltaMean", r.ablation_delta_mean}});
    csv += std::string(to_string(r.tag)) + "," + std::to_string(r.seeds.size()) + "," + json(r.nll_mean).dump() +
           "," + json(r.nll_se).dump() + "," + json(100 * r.cal_error_mean).dump() + "," + json(r.r2_mean).dump() +
           "," + json(r.directional_mean).dump() + "," + json(r.ablation_delta_mean).dump() + "\n";
  }
  fs::create_directories(out);
  write_file_atomic(out / "summary.json", json{{"split", to_string(s)}, {"rows", j}}.dump(2) + "\n");
  write_file_atomic(out / "summary.csv", csv);
  return rows;
}

}  // namespace barlab::pipeline
