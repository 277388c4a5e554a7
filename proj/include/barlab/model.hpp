#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "barlab/autodiff.hpp"
#include "barlab/dataset.hpp"
#include "barlab/tdist.hpp"

namespace barlab::model {

struct MlpSpec {
  std::size_t input_dim = kLookback * kFullDim;
  int blocks = 2;
  std::size_t hidden = 256;
  double dropout = 0.1;
  std::size_t head = 3;

  static MlpSpec for_features(FeatureSet tag, double dropout);
  void validate() const;  // ConfigError
  bool operator==(const MlpSpec&) const = default;
};

nlohmann::json to_json(const MlpSpec& s);
MlpSpec mlp_spec_from_json(const nlohmann::json& j);

inline constexpr double kSigmaFloor = 1e-6;
inline constexpr double kNuFloor = 2.0;

/// Weights in a fixed tensor order:
///   in.W, in.b, block<i>.{W1, b1, W2, b2, gamma, beta}, head.W, head.b
/// Linear maps are stored (fan_in x fan_out) and applied as x * W.
template <class T>
struct Mlp {
  MlpSpec spec;
  std::vector<std::string> names;
  std::vector<ad::Matrix<T>> tensors;

  /// Weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, gamma 1, beta 0.
  static Mlp init(const MlpSpec& spec, std::uint64_t seed);
  static Mlp zeros(const MlpSpec& spec);

  std::size_t parameter_count() const;
  std::vector<ad::Matrix<T>> zero_like() const;

  template <class U>
  Mlp<U> cast() const {
    Mlp<U> out;
    out.spec = spec;
    out.names = names;
    for (const auto& m : tensors) {
      ad::Matrix<U> c(m.rows, m.cols);
      for (std::size_t i = 0; i < m.size(); ++i) c.data[i] = static_cast<U>(m.data[i]);
      out.tensors.push_back(std::move(c));
    }
    return out;
  }
  bool operator==(const Mlp&) const = default;
};

/// Raw (m, s, v) head for a batch of flattened inputs, batch x 3.
/// With `grads`, parameters become tape leaves feeding those buffers.
/// With `dropout_rng`, dropout masks are drawn from it (training mode).
template <class T>
ad::Var<T> forward(ad::Tape<T>& tape, const Mlp<T>& net, std::span<const T> x, std::size_t batch,
                   std::vector<ad::Matrix<T>>* grads = nullptr, std::mt19937_64* dropout_rng = nullptr);

/// mu = m, sigma = softplus(s) + 1e-6, nu = 2 + softplus(max(v, -30)).
tdist::StudentTParams head_transform(double m, double s, double v);

/// -mean t log density of y under the head, built from tape primitives.
template <class T>
ad::Var<T> t_nll(ad::Var<T> raw_head, std::span<const T> y);

/// Eval-mode predictions for every sample, in dataset order.
std::vector<tdist::StudentTParams> predict(const Mlp<float>& net, const Dataset& d);

/// -mean t_logpdf, compensated, in sample order.
double mean_nll(std::span<const tdist::StudentTParams> pred, std::span<const float> y);

// --- optimization -------------------------------------------------------------

struct AdamW {
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m, v;

  /// Decoupled decay w *= (1 - lr * wd), then the bias-corrected Adam step.
  template <class T>
  void update(std::vector<ad::Matrix<T>>& params, const std::vector<ad::Matrix<T>>& grads);
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  double dropout = 0.1;
  std::size_t batch_size = 1024;
  int epochs = 10;
  int batches_per_epoch = 200;  // 0 = one pass over the training split
  std::vector<std::uint64_t> seeds{1, 2, 3};

  void validate() const;  // ConfigError
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; wrong types are ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Seeded stream of mini-batches: indices of a shuffled permutation, reshuffled
/// whenever exhausted.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch, std::uint64_t seed);
  std::span<const std::size_t> next();

 private:
  std::size_t n_, batch_, pos_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> perm_, out_;
};

struct EpochLog {
  int epoch = 0;
  std::int64_t step = 0;
  double train_nll = 0.0;
  double valid_nll = 0.0;
};

struct TrainResult {
  Mlp<float> best;
  int best_epoch = 0;
  double best_valid_nll = 0.0;
  std::vector<EpochLog> log;
};

/// MLE training with AdamW and dropout; keeps the weights with the lowest
/// validation NLL. Throws TrainingFault on a non-finite loss.
TrainResult train(const Dataset& train_set, const Dataset& valid_set, const TrainConfig& cfg,
                  std::uint64_t seed);

std::string log_csv(std::span<const EpochLog> log);

// --- checkpoints ---------------------------------------------------------------

struct Checkpoint {
  MlpSpec spec;
  FeatureSet tag = FeatureSet::Full;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::string column_hash;
  NormStats norm;
  TrainConfig train;
  int best_epoch = 0;
  double best_valid_nll = 0.0;
  Mlp<float> net;
};

Checkpoint make_checkpoint(const TrainResult& r, const Dataset& train_set, const TrainConfig& cfg,
                           std::uint64_t seed);

/// Writes `<run>.manifest.json` and `<run>.weights.bin`.
void save_checkpoint(const std::filesystem::path& run, const Checkpoint& c);
/// ManifestError on any inconsistency between manifest and weights.
Checkpoint load_checkpoint(const std::filesystem::path& run);
/// ManifestError unless feature set, width, column manifest and norm stats match.
void check_compatible(const Checkpoint& c, const Dataset& d);

// --- grid search ---------------------------------------------------------------

struct GridSpace {
  std::vector<double> dropouts{0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> weight_decays{1e-5, 1e-4, 1e-3, 1e-2};
  std::vector<double> learning_rates{1e-5, 1e-4, 1e-3, 1e-2};
  double default_weight_decay = 1e-4;
  double default_learning_rate = 1e-4;
};

struct GridCell {
  int stage = 1;
  double dropout = 0.0, weight_decay = 0.0, learning_rate = 0.0;
  std::vector<double> valid_nll;  // per seed; +inf for diverged runs
  double mean_valid_nll = 0.0;
};

struct GridResult {
  std::vector<GridCell> cells;  // stage 1 then stage 2
  GridCell winner;
};

/// Returns the best validation NLL of one run; may throw TrainingFault.
using GridRunner = std::function<double(const TrainConfig&, std::uint64_t seed)>;

/// Stage 1 tunes dropout at the default (wd, lr); stage 2 tunes wd x lr at the
/// winning dropout. Cells run in parallel; ties go to the earlier cell.
GridResult grid_search(const GridSpace& space, const TrainConfig& base, const GridRunner& run);
GridResult grid_search(const Dataset& train_set, const Dataset& valid_set, const GridSpace& space,
                       const TrainConfig& base);

nlohmann::json to_json(const GridResult& g);

}  // namespace barlab::model
