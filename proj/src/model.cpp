#include "barlab/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#ifdef __GLIBC__
#include <malloc.h>
#endif
#include <numbers>
#include <sstream>

#include "barlab/common.hpp"
#include "barlab/error.hpp"
#include "barlab/parallel.hpp"

namespace barlab::model {

static_assert(std::endian::native == std::endian::little, "weights are stored little-endian");

using nlohmann::json;

MlpSpec MlpSpec::for_features(FeatureSet tag, double dropout) {
  MlpSpec s;
  s.input_dim = static_cast<std::size_t>(kLookback) * feature_dim(tag);
  s.dropout = dropout;
  return s;
}

void MlpSpec::validate() const {
  if (input_dim == 0 || hidden == 0 || blocks < 0) throw ConfigError("mlp: dimensions must be positive");
  if (head != 3) throw ConfigError("mlp: the Student-t head has 3 outputs");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("mlp: dropout must lie in [0, 1)");
}

json to_json(const MlpSpec& s) {
  return {{"kind", "mlp"},         {"inputDim", s.input_dim}, {"blocks", s.blocks},
          {"hidden", s.hidden},    {"dropoutRate", s.dropout}, {"headDim", s.head},
          {"residualBlocks", true}, {"layerNorm", "post"},     {"activation", "relu"}};
}

MlpSpec mlp_spec_from_json(const json& j) {
  try {
    if (j.at("kind").get<std::string>() != "mlp") throw ManifestError("architecture: unsupported kind");
    MlpSpec s;
    s.input_dim = j.at("inputDim").get<std::size_t>();
    s.blocks = j.at("blocks").get<int>();
    s.hidden = j.at("hidden").get<std::size_t>();
    s.dropout = j.at("dropoutRate").get<double>();
    s.head = j.at("headDim").get<std::size_t>();
    return s;
  } catch (const json::exception& e) {
    throw ManifestError(std::string("architecture: ") + e.what());
  }
}

// --- Mlp ----------------------------------------------------------------------

namespace {

struct Shape {
  std::string name;
  std::size_t rows, cols;
};

std::vector<Shape> layout(const MlpSpec& s) {
  std::vector<Shape> out{{"in.W", s.input_dim, s.hidden}, {"in.b", 1, s.hidden}};
  for (int b = 0; b < s.blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    out.push_back({p + "W1", s.hidden, s.hidden});
    out.push_back({p + "b1", 1, s.hidden});
    out.push_back({p + "W2", s.hidden, s.hidden});
    out.push_back({p + "b2", 1, s.hidden});
    out.push_back({p + "gamma", 1, s.hidden});
    out.push_back({p + "beta", 1, s.hidden});
  }
  out.push_back({"head.W", s.hidden, s.head});
  out.push_back({"head.b", 1, s.head});
  return out;
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

template <class T>
Mlp<T> Mlp<T>::zeros(const MlpSpec& spec) {
  spec.validate();
  Mlp<T> m;
  m.spec = spec;
  for (const auto& sh : layout(spec)) {
    m.names.push_back(sh.name);
    m.tensors.emplace_back(sh.rows, sh.cols);
  }
  return m;
}

template <class T>
Mlp<T> Mlp<T>::init(const MlpSpec& spec, std::uint64_t seed) {
  Mlp<T> m = zeros(spec);
  std::mt19937_64 rng(splitmix64(seed ^ 0x5EEDF00DULL));
  for (std::size_t i = 0; i < m.tensors.size(); ++i) {
    auto& t = m.tensors[i];
    const std::string& name = m.names[i];
    if (ends_with(name, "gamma")) {
      std::fill(t.data.begin(), t.data.end(), T(1));
    } else if (t.rows > 1) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(t.rows));
      for (auto& w : t.data) w = static_cast<T>((2.0 * unit_double(rng()) - 1.0) * bound);
    }
  }
  return m;
}

template <class T>
std::size_t Mlp<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

template <class T>
std::vector<ad::Matrix<T>> Mlp<T>::zero_like() const {
  std::vector<ad::Matrix<T>> out;
  out.reserve(tensors.size());
  for (const auto& t : tensors) out.emplace_back(t.rows, t.cols);
  return out;
}

template <class T>
ad::Var<T> forward(ad::Tape<T>& tape, const Mlp<T>& net, std::span<const T> x, std::size_t batch,
                   std::vector<ad::Matrix<T>>* grads, std::mt19937_64* dropout_rng) {
  const MlpSpec& s = net.spec;
  if (x.size() != batch * s.input_dim)
    throw ContractViolation("mlp: input has " + std::to_string(x.size()) + " values, expected " +
                            std::to_string(batch) + " x " + std::to_string(s.input_dim));
  auto p = [&](std::size_t i) {
    const auto& t = net.tensors[i];
    return grads ? tape.param(t, (*grads)[i]) : tape.constant(t.rows, t.cols, t.data);
  };
  auto drop = [&](ad::Var<T> v) {
    if (!dropout_rng || s.dropout <= 0.0) return v;
    // Two 32-bit uniforms per draw.
    std::vector<std::uint8_t> keep(v.value().size());
    const auto threshold = static_cast<std::uint64_t>(s.dropout * 4294967296.0);
    for (std::size_t i = 0; i < keep.size(); i += 2) {
      const std::uint64_t bits = (*dropout_rng)();
      keep[i] = (bits >> 32) >= threshold;
      if (i + 1 < keep.size()) keep[i + 1] = (bits & 0xFFFFFFFFULL) >= threshold;
    }
    return ad::dropout(v, std::span<const std::uint8_t>(keep), s.dropout);
  };

  ad::Var<T> in = tape.constant(batch, s.input_dim, std::vector<T>(x.begin(), x.end()));
  ad::Var<T> h = ad::add(ad::matmul(in, p(0)), p(1));
  for (int b = 0; b < s.blocks; ++b) {
    const std::size_t k = 2 + 6 * static_cast<std::size_t>(b);
    ad::Var<T> u = drop(ad::relu(ad::add(ad::matmul(h, p(k)), p(k + 1))));
    ad::Var<T> v = ad::add(ad::matmul(u, p(k + 2)), p(k + 3));
    h = ad::add(ad::mul(ad::layer_norm(ad::add(h, v)), p(k + 4)), p(k + 5));
  }
  const std::size_t kh = 2 + 6 * static_cast<std::size_t>(s.blocks);
  return ad::add(ad::matmul(h, p(kh)), p(kh + 1));
}

tdist::StudentTParams head_transform(double m, double s, double v) {
  auto softplus = [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); };
  // Below -30, 2 + softplus(v) would round to exactly 2.
  return {m, softplus(s) + kSigmaFloor, kNuFloor + softplus(std::max(v, -30.0))};
}

template <class T>
ad::Var<T> t_nll(ad::Var<T> raw, std::span<const T> y) {
  if (raw.cols() != 3 || y.size() != raw.rows()) throw ContractViolation("t_nll: head/target shape mismatch");
  ad::Tape<T>& tape = *raw.tape;
  auto mu = ad::column(raw, 0);
  auto sigma = ad::add_scalar(ad::softplus(ad::column(raw, 1)), T(kSigmaFloor));
  auto nu = ad::add_scalar(ad::softplus(ad::column(raw, 2)), T(kNuFloor));
  auto yv = tape.constant(y.size(), 1, std::vector<T>(y.begin(), y.end()));
  auto z = ad::div(ad::sub(yv, mu), sigma);
  auto half_nu = ad::scale(nu, T(0.5));
  auto half_nu1 = ad::add_scalar(half_nu, T(0.5));
  auto tail = ad::log(ad::add_scalar(ad::div(ad::mul(z, z), nu), T(1)));
  auto lp = ad::sub(ad::log_gamma(half_nu1), ad::log_gamma(half_nu));
  lp = ad::sub(lp, ad::scale(ad::log(nu), T(0.5)));
  lp = ad::add_scalar(lp, T(-0.5 * std::log(std::numbers::pi)));
  lp = ad::sub(lp, ad::log(sigma));
  lp = ad::sub(lp, ad::mul(half_nu1, tail));
  return ad::scale(ad::mean(lp), T(-1));
}

std::vector<tdist::StudentTParams> predict(const Mlp<float>& net, const Dataset& d) {
  if (d.row_width() != net.spec.input_dim)
    throw ContractViolation("predict: dataset width " + std::to_string(d.row_width()) + " != model input " +
                            std::to_string(net.spec.input_dim));
  constexpr std::size_t kChunk = 1024;
  std::vector<tdist::StudentTParams> out(d.size());
  for (std::size_t start = 0; start < d.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, d.size() - start);
    ad::Tape<float> tape(false);
    auto raw = forward<float>(tape, net, std::span<const float>(d.x).subspan(start * d.row_width(), n * d.row_width()),
                              n);
    const auto& r = raw.value();
    for (std::size_t i = 0; i < n; ++i) out[start + i] = head_transform(r[3 * i], r[3 * i + 1], r[3 * i + 2]);
  }
  return out;
}

double mean_nll(std::span<const tdist::StudentTParams> pred, std::span<const float> y) {
  if (pred.empty() || pred.size() != y.size()) throw ContractViolation("mean_nll: empty or mismatched input");
  NeumaierSum s;
  for (std::size_t i = 0; i < pred.size(); ++i) s.add(tdist::t_logpdf(pred[i], y[i]));
  return -s.value() / static_cast<double>(pred.size());
}

// --- AdamW --------------------------------------------------------------------

template <class T>
void AdamW::update(std::vector<ad::Matrix<T>>& params, const std::vector<ad::Matrix<T>>& grads) {
  if (params.size() != grads.size()) throw ContractViolation("adamw: parameter/gradient count mismatch");
  if (m.empty()) {
    for (const auto& p : params) {
      m.emplace_back(p.size(), 0.0);
      v.emplace_back(p.size(), 0.0);
    }
  }
  ++step;
  const T decay = static_cast<T>(1.0 - learning_rate * weight_decay);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& w = params[k].data;
    const auto& g = grads[k].data;
    if (g.size() != w.size()) throw ContractViolation("adamw: gradient shape mismatch for tensor " + std::to_string(k));
    auto& mk = m[k];
    auto& vk = v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] *= decay;
      const double gi = g[i];
      mk[i] = beta1 * mk[i] + (1.0 - beta1) * gi;
      vk[i] = beta2 * vk[i] + (1.0 - beta2) * gi * gi;
      const double step_size = learning_rate * (mk[i] / c1) / (std::sqrt(vk[i] / c2) + eps);
      if (step_size != 0.0) w[i] = static_cast<T>(w[i] - step_size);
    }
  }
}

// --- config -------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: learningRate must be > 0");
  if (!(weight_decay >= 0.0) || learning_rate * weight_decay >= 1.0)
    throw ConfigError("train: weightDecay must be >= 0 with learningRate * weightDecay < 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("train: dropoutRate must lie in [0, 1)");
  if (batch_size == 0) throw ConfigError("train: batchSize must be positive");
  if (epochs <= 0) throw ConfigError("train: epochs must be positive");
  if (batches_per_epoch < 0) throw ConfigError("train: batchesPerEpoch must be >= 0");
  if (seeds.empty()) throw ConfigError("train: seeds must not be empty");
}

json to_json(const TrainConfig& c) {
  return {{"learningRate", c.learning_rate}, {"weightDecay", c.weight_decay}, {"dropoutRate", c.dropout},
          {"batchSize", c.batch_size},       {"epochs", c.epochs},            {"batchesPerEpoch", c.batches_per_epoch},
          {"seeds", c.seeds}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    if (!j.is_object()) throw ConfigError("train: expected an object");
    c.learning_rate = j.value("learningRate", c.learning_rate);
    c.weight_decay = j.value("weightDecay", c.weight_decay);
    c.dropout = j.value("dropoutRate", c.dropout);
    c.batch_size = j.value("batchSize", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.batches_per_epoch = j.value("batchesPerEpoch", c.batches_per_epoch);
    c.seeds = j.value("seeds", c.seeds);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  c.validate();
  return c;
}

// --- training -----------------------------------------------------------------

BatchStream::BatchStream(std::size_t n, std::size_t batch, std::uint64_t seed)
    : n_(n), batch_(std::min(batch, n)), pos_(n), rng_(splitmix64(seed ^ 0xBA7C4E5ULL)), perm_(n) {
  if (n == 0 || batch == 0) throw ContractViolation("batch stream: empty data or zero batch size");
  for (std::size_t i = 0; i < n; ++i) perm_[i] = i;
}

std::span<const std::size_t> BatchStream::next() {
  out_.clear();
  while (out_.size() < batch_) {
    if (pos_ == n_) {
      // Fisher-Yates with an explicit bounded draw, portable across standard libraries.
      for (std::size_t i = n_ - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(unit_double(rng_()) * static_cast<double>(i + 1));
        std::swap(perm_[i], perm_[std::min(j, i)]);
      }
      pos_ = 0;
    }
    out_.push_back(perm_[pos_++]);
  }
  return out_;
}

namespace {

// Each step allocates and frees the same set of megabyte-sized tape buffers;
// keeping them in the heap avoids fresh page faults on every step.
void keep_heap() {
#ifdef __GLIBC__
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

std::string key_str(const Dataset& d, const SampleKey& k) {
  return d.symbols.at(k.symbol) + "/" + format_date(from_day_number(k.day)) + "/" + std::to_string(k.minute);
}

[[noreturn]] void fault(const Dataset& d, std::span<const std::size_t> idx, std::int64_t step,
                        const std::string& what) {
  SampleKey lo = d.keys[idx[0]], hi = lo;
  for (std::size_t i : idx) {
    lo = std::min(lo, d.keys[i]);
    hi = std::max(hi, d.keys[i]);
  }
  throw TrainingFault(what + " at step " + std::to_string(step) + ", batch keys " + key_str(d, lo) + " .. " +
                      key_str(d, hi));
}

}  // namespace

TrainResult train(const Dataset& train_set, const Dataset& valid_set, const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  keep_heap();
  if (train_set.size() == 0 || valid_set.size() == 0) throw ContractViolation("train: empty training or validation set");
  if (train_set.tag != valid_set.tag || train_set.dim != valid_set.dim)
    throw ContractViolation("train: training and validation sets use different feature sets");
  const MlpSpec spec = MlpSpec::for_features(train_set.tag, cfg.dropout);
  if (spec.input_dim != train_set.row_width()) throw ContractViolation("train: dataset width does not match feature set");

  TrainResult r;
  Mlp<float> net = Mlp<float>::init(spec, seed);
  AdamW opt;
  opt.learning_rate = cfg.learning_rate;
  opt.weight_decay = cfg.weight_decay;
  BatchStream stream(train_set.size(), cfg.batch_size, seed);
  std::mt19937_64 drop_rng(splitmix64(seed ^ 0xD209F00DULL));

  const std::size_t width = train_set.row_width();
  const int steps = cfg.batches_per_epoch > 0
                        ? cfg.batches_per_epoch
                        : static_cast<int>((train_set.size() + cfg.batch_size - 1) / cfg.batch_size);
  std::vector<float> xb, yb;
  std::int64_t step = 0;
  r.best_valid_nll = std::numeric_limits<double>::infinity();
  r.best = net;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    NeumaierSum epoch_loss;
    for (int s = 0; s < steps; ++s) {
      const auto idx = stream.next();
      xb.resize(idx.size() * width);
      yb.resize(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto row = train_set.features(idx[i]);
        std::copy(row.begin(), row.end(), xb.begin() + static_cast<std::ptrdiff_t>(i * width));
        yb[i] = train_set.y[idx[i]];
      }
      ad::Tape<float> tape;
      auto grads = net.zero_like();
      auto raw = forward<float>(tape, net, xb, idx.size(), &grads, &drop_rng);
      auto loss = t_nll<float>(raw, yb);
      const double l = loss.value()[0];
      ++step;
      if (!std::isfinite(l)) fault(train_set, idx, step, "non-finite training loss");
      tape.backward(loss);
      for (const auto& g : grads)
        for (float v : g.data)
          if (!std::isfinite(v)) fault(train_set, idx, step, "non-finite gradient");
      opt.update(net.tensors, grads);
      epoch_loss.add(l);
    }
    const auto pred = predict(net, valid_set);
    const double vn = mean_nll(pred, valid_set.y);
    if (!std::isfinite(vn)) throw TrainingFault("non-finite validation NLL after epoch " + std::to_string(epoch));
    r.log.push_back({epoch, step, epoch_loss.value() / steps, vn});
    if (vn < r.best_valid_nll) {
      r.best_valid_nll = vn;
      r.best_epoch = epoch;
      r.best = net;
    }
  }
  return r;
}

std::string log_csv(std::span<const EpochLog> log) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,step,train_nll,valid_nll\n";
  for (const auto& e : log) os << e.epoch << ',' << e.step << ',' << e.train_nll << ',' << e.valid_nll << '\n';
  return os.str();
}

// --- checkpoints --------------------------------------------------------------

namespace {

constexpr int kCheckpointVersion = 1;

std::filesystem::path with_suffix(const std::filesystem::path& run, const char* suffix) {
  return run.parent_path() / (run.filename().string() + suffix);
}

std::string weights_blob(const Mlp<float>& net) {
  std::string out;
  out.reserve(net.parameter_count() * sizeof(float));
  for (const auto& t : net.tensors)
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
  return out;
}

std::string norm_hash(const NormStats& n) { return git_blob_hash(to_json(n).dump()); }

}  // namespace

Checkpoint make_checkpoint(const TrainResult& r, const Dataset& train_set, const TrainConfig& cfg,
                           std::uint64_t seed) {
  Checkpoint c;
  c.spec = r.best.spec;
  c.tag = train_set.tag;
  c.dim = train_set.dim;
  c.seed = seed;
  c.column_hash = column_manifest_hash(train_set.tag);
  c.norm = train_set.norm;
  c.train = cfg;
  c.best_epoch = r.best_epoch;
  c.best_valid_nll = r.best_valid_nll;
  c.net = r.best;
  return c;
}

void save_checkpoint(const std::filesystem::path& run, const Checkpoint& c) {
  const std::string blob = weights_blob(c.net);
  json tensors = json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < c.net.tensors.size(); ++i) {
    const auto& t = c.net.tensors[i];
    tensors.push_back({{"name", c.net.names[i]}, {"shape", {t.rows, t.cols}}, {"offset", offset}});
    offset += t.size() * sizeof(float);
  }
  const json m = {{"formatVersion", kCheckpointVersion},
                  {"architecture", to_json(c.spec)},
                  {"featureSet", to_string(c.tag)},
                  {"D", c.dim},
                  {"lookback", kLookback},
                  {"seed", c.seed},
                  {"columnManifestHash", c.column_hash},
                  {"normStats", to_json(c.norm)},
                  {"normStatsHash", norm_hash(c.norm)},
                  {"train", to_json(c.train)},
                  {"bestEpoch", c.best_epoch},
                  {"bestValidNll", c.best_valid_nll},
                  {"tensors", tensors},
                  {"weightsBytes", blob.size()},
                  {"weightsHash", git_blob_hash(blob)}};
  std::filesystem::create_directories(run.parent_path().empty() ? "." : run.parent_path());
  write_file_atomic(with_suffix(run, ".weights.bin"), blob);
  write_file_atomic(with_suffix(run, ".manifest.json"), m.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& run) {
  const auto mpath = with_suffix(run, ".manifest.json");
  const auto wpath = with_suffix(run, ".weights.bin");
  if (!std::filesystem::exists(mpath)) throw ManifestError("checkpoint manifest not found: " + mpath.string());
  if (!std::filesystem::exists(wpath)) throw ManifestError("checkpoint weights not found: " + wpath.string());
  Checkpoint c;
  std::string blob;
  try {
    const json m = json::parse(read_file(mpath));
    if (m.at("formatVersion").get<int>() != kCheckpointVersion) throw ManifestError("checkpoint: unsupported formatVersion");
    c.spec = mlp_spec_from_json(m.at("architecture"));
    c.tag = parse_feature_set(m.at("featureSet").get<std::string>());
    c.dim = m.at("D").get<std::size_t>();
    c.seed = m.at("seed").get<std::uint64_t>();
    c.column_hash = m.at("columnManifestHash").get<std::string>();
    c.norm = norm_stats_from_json(m.at("normStats"));
    c.train = train_config_from_json(m.at("train"));
    c.best_epoch = m.at("bestEpoch").get<int>();
    c.best_valid_nll = m.at("bestValidNll").get<double>();
    if (m.at("lookback").get<int>() != kLookback) throw ManifestError("checkpoint: lookback mismatch");
    if (c.dim != feature_dim(c.tag) || c.spec.input_dim != kLookback * c.dim)
      throw ManifestError("checkpoint: D / inputDim inconsistent with featureSet");
    if (c.column_hash != column_manifest_hash(c.tag))
      throw ManifestError("checkpoint: column manifest hash does not match featureSet " + std::string(to_string(c.tag)));
    if (m.at("normStatsHash").get<std::string>() != norm_hash(c.norm))
      throw ManifestError("checkpoint: normStatsHash mismatch");

    c.net = Mlp<float>::zeros(c.spec);
    const json& ts = m.at("tensors");
    if (!ts.is_array() || ts.size() != c.net.tensors.size()) throw ManifestError("checkpoint: tensor table mismatch");
    std::size_t offset = 0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const auto& t = c.net.tensors[i];
      if (ts[i].at("name").get<std::string>() != c.net.names[i] ||
          ts[i].at("shape") != json{t.rows, t.cols} || ts[i].at("offset").get<std::size_t>() != offset)
        throw ManifestError("checkpoint: tensor " + std::to_string(i) + " does not match the architecture");
      offset += t.size() * sizeof(float);
    }
    blob = read_file(wpath);
    if (blob.size() != offset || m.at("weightsBytes").get<std::size_t>() != offset)
      throw ManifestError("checkpoint: weights blob has " + std::to_string(blob.size()) + " bytes, expected " +
                          std::to_string(offset));
    if (git_blob_hash(blob) != m.at("weightsHash").get<std::string>())
      throw ManifestError("checkpoint: weights hash mismatch");
  } catch (const json::exception& e) {
    throw ManifestError(std::string("checkpoint manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw ManifestError(std::string("checkpoint manifest: ") + e.what());
  } catch (const FormatError& e) {
    throw ManifestError(std::string("checkpoint manifest: ") + e.what());
  }
  std::size_t offset = 0;
  for (auto& t : c.net.tensors) {
    std::memcpy(t.data.data(), blob.data() + offset, t.size() * sizeof(float));
    offset += t.size() * sizeof(float);
  }
  return c;
}

void check_compatible(const Checkpoint& c, const Dataset& d) {
  if (c.tag != d.tag)
    throw ManifestError(std::string("feature set mismatch: checkpoint ") + to_string(c.tag) + ", dataset " +
                        to_string(d.tag));
  if (c.dim != d.dim || c.spec.input_dim != d.row_width()) throw ManifestError("feature width mismatch");
  if (c.column_hash != column_manifest_hash(d.tag)) throw ManifestError("column manifest hash mismatch");
  if (norm_hash(c.norm) != norm_hash(d.norm))
    throw ManifestError("normalization statistics differ between checkpoint and dataset");
}

// --- grid ---------------------------------------------------------------------

namespace {

void run_cells(std::vector<GridCell>& cells, const TrainConfig& base, const GridRunner& run) {
  const std::size_t ns = base.seeds.size();
  for (auto& c : cells) c.valid_nll.assign(ns, 0.0);
  parallel::for_each_index(cells.size() * ns, [&](std::size_t i) {
    GridCell& c = cells[i / ns];
    TrainConfig cfg = base;
    cfg.dropout = c.dropout;
    cfg.weight_decay = c.weight_decay;
    cfg.learning_rate = c.learning_rate;
    double v;
    try {
      v = run(cfg, base.seeds[i % ns]);
    } catch (const TrainingFault&) {
      v = std::numeric_limits<double>::infinity();
    }
    c.valid_nll[i % ns] = std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  });
  for (auto& c : cells) {
    NeumaierSum s;
    bool diverged = false;
    for (double v : c.valid_nll) {
      if (!std::isfinite(v)) diverged = true;
      else s.add(v);
    }
    c.mean_valid_nll = diverged ? std::numeric_limits<double>::infinity() : s.value() / static_cast<double>(ns);
  }
}

std::size_t best_of(const std::vector<GridCell>& cells) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < cells.size(); ++i)
    if (cells[i].mean_valid_nll < cells[best].mean_valid_nll) best = i;
  return best;
}

}  // namespace

GridResult grid_search(const GridSpace& space, const TrainConfig& base, const GridRunner& run) {
  if (space.dropouts.empty() || space.weight_decays.empty() || space.learning_rates.empty())
    throw ConfigError("grid: every axis needs at least one value");
  if (base.seeds.empty()) throw ConfigError("grid: seeds must not be empty");

  std::vector<GridCell> s1;
  for (double d : space.dropouts) s1.push_back({1, d, space.default_weight_decay, space.default_learning_rate, {}, 0.0});
  run_cells(s1, base, run);
  const GridCell& best1 = s1[best_of(s1)];

  std::vector<GridCell> s2, todo;
  for (double wd : space.weight_decays)
    for (double lr : space.learning_rates) s2.push_back({2, best1.dropout, wd, lr, {}, 0.0});
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < s2.size(); ++i) {
    if (s2[i].weight_decay == best1.weight_decay && s2[i].learning_rate == best1.learning_rate) {
      s2[i].valid_nll = best1.valid_nll;
      s2[i].mean_valid_nll = best1.mean_valid_nll;
    } else {
      pending.push_back(i);
      todo.push_back(s2[i]);
    }
  }
  run_cells(todo, base, run);
  for (std::size_t k = 0; k < pending.size(); ++k) s2[pending[k]] = todo[k];

  GridResult g;
  g.winner = s2[best_of(s2)];
  g.cells = s1;
  g.cells.insert(g.cells.end(), s2.begin(), s2.end());
  return g;
}

GridResult grid_search(const Dataset& train_set, const Dataset& valid_set, const GridSpace& space,
                       const TrainConfig& base) {
  return grid_search(space, base, [&](const TrainConfig& cfg, std::uint64_t seed) {
    return train(train_set, valid_set, cfg, seed).best_valid_nll;
  });
}

json to_json(const GridResult& g) {
  auto cell = [](const GridCell& c) {
    json nll = json::array();
    for (double v : c.valid_nll) nll.push_back(std::isfinite(v) ? json(v) : json("inf"));
    return json{{"stage", c.stage},
                {"dropoutRate", c.dropout},
                {"weightDecay", c.weight_decay},
                {"learningRate", c.learning_rate},
                {"validNll", nll},
                {"meanValidNll", std::isfinite(c.mean_valid_nll) ? json(c.mean_valid_nll) : json("inf")}};
  };
  json cells = json::array();
  for (const auto& c : g.cells) cells.push_back(cell(c));
  return {{"cells", cells}, {"winner", cell(g.winner)}};
}

// --- instantiations -----------------------------------------------------------

template struct Mlp<float>;
template struct Mlp<double>;
template ad::Var<float> forward(ad::Tape<float>&, const Mlp<float>&, std::span<const float>, std::size_t,
                                std::vector<ad::Matrix<float>>*, std::mt19937_64*);
template ad::Var<double> forward(ad::Tape<double>&, const Mlp<double>&, std::span<const double>, std::size_t,
                                 std::vector<ad::Matrix<double>>*, std::mt19937_64*);
template ad::Var<float> t_nll(ad::Var<float>, std::span<const float>);
template ad::Var<double> t_nll(ad::Var<double>, std::span<const double>);
template void AdamW::update(std::vector<ad::Matrix<float>>&, const std::vector<ad::Matrix<float>>&);
template void AdamW::update(std::vector<ad::Matrix<double>>&, const std::vector<ad::Matrix<double>>&);

}  // namespace barlab::model
