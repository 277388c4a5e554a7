#pragma once

// Central finite differences over every parameter of the full batch loss.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "barlab/model.hpp"

namespace oracle {

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

/// Relative error |a - n| / max(|a|, |n|, floor).
inline double rel_error(double a, double n, double floor = 1e-6) {
  return std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), floor});
}

inline GradCheck full_loss_gradcheck(const barlab::model::MlpSpec& spec, std::size_t batch, std::uint64_t seed,
                                     double h = 1e-5) {
  using namespace barlab;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  std::student_t_distribution<double> t4(4.0);

  auto net = model::Mlp<double>::init(spec, seed);
  for (std::size_t i = 0; i < net.tensors.size(); ++i)
    if (net.tensors[i].rows == 1)
      for (auto& w : net.tensors[i].data) w += 0.3 * n01(rng);
  std::vector<double> x(batch * spec.input_dim), y(batch);
  for (auto& v : x) v = n01(rng);
  for (auto& v : y) v = t4(rng);
  const std::uint64_t mask_seed = rng();

  auto loss = [&](std::vector<ad::Matrix<double>>* grads) {
    ad::Tape<double> tape;
    std::mt19937_64 drop(mask_seed);
    auto raw = model::forward<double>(tape, net, x, batch, grads, &drop);
    auto l = model::t_nll<double>(raw, y);
    if (grads) tape.backward(l);
    return l.value()[0];
  };

  auto grads = net.zero_like();
  loss(&grads);

  GradCheck r;
  for (std::size_t k = 0; k < net.tensors.size(); ++k) {
    for (std::size_t i = 0; i < net.tensors[k].size(); ++i) {
      double& w = net.tensors[k].data[i];
      const double w0 = w;
      w = w0 + h;
      const double up = loss(nullptr);
      w = w0 - h;
      const double down = loss(nullptr);
      w = w0;
      const double e = rel_error(grads[k].data[i], (up - down) / (2 * h));
      ++r.checked;
      if (e > r.max_rel) {
        r.max_rel = e;
        r.worst = net.names[k] + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

/// A random small architecture for gradient checks.
inline barlab::model::MlpSpec random_spec(std::mt19937_64& rng) {
  barlab::model::MlpSpec s;
  s.input_dim = 4 + rng() % 21;
  s.hidden = 3 + rng() % 10;
  s.blocks = static_cast<int>(rng() % 3);
  s.dropout = (rng() % 2) ? 0.0 : 0.1 + 0.1 * static_cast<double>(rng() % 4);
  return s;
}

}  // namespace oracle
