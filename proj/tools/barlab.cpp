// barlab: tick-to-forecast pipeline driver.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "barlab/config.hpp"
#include "barlab/error.hpp"
#include "barlab/parallel.hpp"
#include "barlab/pipeline.hpp"

namespace fs = std::filesystem;
using namespace barlab;

namespace {

constexpr int kExitUsage = 64;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Parse: return 65;
    case ErrorKind::Validation: return 66;
    case ErrorKind::Domain: return 67;
    case ErrorKind::Format: return 68;
    case ErrorKind::Manifest: return 69;
    case ErrorKind::Contract: return 70;
    case ErrorKind::Training: return 71;
    case ErrorKind::Io: return 74;
    case ErrorKind::Config: return 78;
  }
  return 1;
}

struct Options {
  std::string config;
  std::optional<int> threads;
  std::optional<std::string> feature_set;
  std::optional<std::string> split;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void warn_overwrite(const fs::path& p) {
  std::cerr << "warning: overwriting " << p.string() << "\n";
}

/// Removes files with `suffix` directly inside `dir`.
void clear_files(const fs::path& dir, const std::string& suffix) {
  if (!fs::is_directory(dir)) return;
  bool warned = false;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || !e.path().filename().string().ends_with(suffix)) continue;
    if (!warned) warn_overwrite(dir);
    warned = true;
    fs::remove(e.path());
  }
}

void clear_dir(const fs::path& dir) {
  if (!fs::exists(dir)) return;
  warn_overwrite(dir);
  fs::remove_all(dir);
}

fs::path out_or(const Options& o, const fs::path& fallback) { return o.out ? fs::path(*o.out) : fallback; }

FeatureSet tag_of(const Options& o, const RunConfig& c) {
  return o.feature_set ? parse_feature_set(*o.feature_set) : c.feature_set;
}

Split split_of(const Options& o, Split fallback) {
  if (!o.split) return fallback;
  try {
    return parse_split(*o.split);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

std::vector<std::uint64_t> seeds_of(const Options& o, const RunConfig& c) {
  if (o.seed) return {*o.seed};
  return {c.train.seeds.begin(), c.train.seeds.end()};
}

int run(const std::string& cmd, const Options& o) {
  parallel::set_threads(parallel::resolve_threads(o.threads));
  const RunConfig c = load_run_config(o.config);

  if (cmd == "gen-ticks") {
    const auto out = out_or(o, c.paths.ticks);
    clear_files(out, ".ticks.csv");
    pipeline::gen_ticks(c, out);
    std::cout << "ticks: " << c.synth.symbols * c.synth.days << " files in " << out.string() << "\n";
  } else if (cmd == "build-bars") {
    const auto out = out_or(o, c.paths.bars);
    clear_files(out, ".bars.csv");
    pipeline::build_bar_files(c, c.paths.ticks, out);
    std::cout << "bars: " << out.string() << "\n";
  } else if (cmd == "build-dataset") {
    const auto tag = tag_of(o, c);
    const auto out = out_or(o, c.paths.datasets);
    clear_dir(out / to_string(tag));
    pipeline::build_dataset_files(c, tag, c.paths.bars, out);
    std::cout << "datasets: " << (out / to_string(tag)).string() << "\n";
  } else if (cmd == "train") {
    const auto tag = tag_of(o, c);
    const auto out = out_or(o, c.paths.runs);
    for (auto seed : seeds_of(o, c)) {
      const auto dir = pipeline::run_dir(out, tag, seed);
      clear_dir(dir);
      const auto ckpt = pipeline::train_run(c, tag, seed, c.paths.datasets, dir);
      std::cout << to_string(tag) << " seed " << seed << ": best valid NLL " << ckpt.best_valid_nll << " at epoch "
                << ckpt.best_epoch << "\n";
    }
  } else if (cmd == "grid") {
    const auto tag = tag_of(o, c);
    const auto out = out_or(o, c.paths.runs) / to_string(tag) / "grid";
    clear_dir(out);
    const auto g = pipeline::grid_run(c, tag, c.paths.datasets, out);
    std::cout << "grid winner: dropout " << g.winner.dropout << " weight decay " << g.winner.weight_decay
              << " learning rate " << g.winner.learning_rate << " mean valid NLL " << g.winner.mean_valid_nll << "\n";
  } else if (cmd == "evaluate") {
    const auto tag = tag_of(o, c);
    const auto split = split_of(o, Split::Valid);
    const auto out = out_or(o, c.paths.reports);
    for (auto seed : seeds_of(o, c)) {
      const auto dir = pipeline::report_dir(out, tag, seed, split);
      clear_dir(dir);
      const auto e = pipeline::evaluate_run(pipeline::run_dir(c.paths.runs, tag, seed),
                                            pipeline::dataset_file(c.paths.datasets, tag, split), split, dir);
      std::cout << to_string(tag) << " seed " << seed << " " << to_string(split) << ": NLL " << e.report.nll
                << " calError x100 " << 100 * e.report.calibration.cal_error << "\n";
    }
  } else if (cmd == "stats") {
    const auto tag = tag_of(o, c);
    const auto split = split_of(o, Split::Train);
    const auto out = out_or(o, c.paths.reports) / "stats" / to_string(split);
    clear_dir(out);
    const auto t = pipeline::stats_run(pipeline::dataset_file(c.paths.datasets, tag, split), out);
    write_fingerprint(c, out);
    std::cout << to_string(split) << ": n " << t.n << " skew " << t.skewness << " excess kurtosis "
              << t.excess_kurtosis << " quantile excess kurtosis " << t.quantile_excess_kurtosis << "\n";
  } else if (cmd == "report") {
    const auto split = split_of(o, Split::Valid);
    const auto out = out_or(o, c.paths.reports);
    const auto rows = pipeline::summarize(c.paths.reports, split, out);
    write_fingerprint(c, out);
    for (const auto& r : rows)
      std::cout << to_string(r.tag) << ": NLL " << r.nll_mean << " +- " << r.nll_se << " over " << r.seeds.size()
                << " seeds\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"barlab: synthetic ticks to probabilistic bar forecasts"};
  app.require_subcommand(1, 1);
  Options o;
  app.add_option("--config", o.config, "run configuration (JSON)")->required();
  app.add_option("--threads", o.threads, "worker cap (falls back to BARLAB_THREADS)")->check(CLI::PositiveNumber);

  struct Cmd {
    const char* name;
    const char* help;
    bool feature_set, split, seed;
  };
  const Cmd cmds[] = {
      {"gen-ticks", "generate synthetic tick files", false, false, false},
      {"build-bars", "aggregate ticks into timing-enhanced bars", false, false, false},
      {"build-dataset", "filter, window and standardize samples", true, false, false},
      {"train", "train one model per seed", true, false, true},
      {"grid", "two-stage hyperparameter grid", true, false, false},
      {"evaluate", "score a checkpoint on a split and emit the report", true, true, true},
      {"stats", "target statistics of a split", true, true, false},
      {"report", "summarize evaluated runs per feature set", false, true, false},
  };
  for (const auto& c : cmds) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->fallthrough();
    if (c.feature_set) sub->add_option("--feature-set", o.feature_set, "basic | no-timing | full");
    if (c.split) sub->add_option("--split", o.split, "train | valid | test");
    if (c.seed) sub->add_option("--seed", o.seed, "single seed instead of the config's list");
    sub->add_option("--out", o.out, "output root");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[usage]: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    return run(app.get_subcommands().front()->get_name(), o);
  } catch (const Error& e) {
    std::cerr << "error[" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error[io]: " << e.what() << "\n";
    return exit_code(ErrorKind::Io);
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
}
