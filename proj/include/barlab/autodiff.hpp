#pragma once

// Tape-based reverse-mode automatic differentiation over dense row-major
// matrices. A Tape records every op's output and a backward closure; calling
// backward() on a 1x1 result walks the tape in reverse.

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "barlab/error.hpp"
#include "barlab/kernels.hpp"
#include "barlab/tdist.hpp"

namespace barlab::ad {

template <class T>
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}
  std::size_t size() const { return data.size(); }
  T& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  T operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  bool operator==(const Matrix&) const = default;
};

template <class T>
class Tape;

template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  std::size_t rows() const { return tape->node(id).rows; }
  std::size_t cols() const { return tape->node(id).cols; }
  const std::vector<T>& value() const { return tape->node(id).value; }
  /// Gradient after backward(); zeros if the node received none.
  const std::vector<T>& grad() const { return tape->grad(id); }
};

template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    std::size_t rows = 0, cols = 0;
    std::vector<T> value;
    std::vector<T> grad;
    Backward backward;
    bool needs = false;  // some parameter leaf feeds this node
    Matrix<T>* sink = nullptr;  // parameter gradient receiving this leaf's grad
  };

  explicit Tape(bool record = true) : record_(record) {}

  bool recording() const { return record_; }
  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  Var<T> constant(std::size_t rows, std::size_t cols, std::vector<T> value) {
    if (value.size() != rows * cols) throw ContractViolation("ad::constant: size mismatch");
    return push(rows, cols, std::move(value));
  }

  /// Leaf for a trainable matrix; backward() adds its gradient into `grad`.
  Var<T> param(const Matrix<T>& value, Matrix<T>& grad) {
    if (grad.size() != value.size()) throw ContractViolation("ad::param: gradient shape mismatch");
    Var<T> v = push(value.rows, value.cols, value.data);
    nodes_[v.id].sink = &grad;
    nodes_[v.id].needs = true;
    return v;
  }

  Var<T> push(std::size_t rows, std::size_t cols, std::vector<T> value, Backward backward = {}) {
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.value = std::move(value);
    if (record_) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  /// Result of an op on `inputs`; the backward closure is kept only when an
  /// input leads back to a parameter.
  Var<T> op(std::size_t rows, std::size_t cols, std::vector<T> value, std::initializer_list<std::size_t> inputs,
            Backward backward) {
    bool needs = false;
    for (std::size_t i : inputs) needs = needs || nodes_[i].needs;
    Var<T> v = push(rows, cols, std::move(value), needs ? std::move(backward) : Backward{});
    nodes_[v.id].needs = needs && record_;
    return v;
  }

  /// Gradient buffer of a node, allocated as zeros on first use.
  std::vector<T>& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), T(0));
    return n.grad;
  }

  void backward(Var<T> out) {
    if (!record_) throw ContractViolation("ad::backward on a non-recording tape");
    if (out.rows() != 1 || out.cols() != 1) throw ContractViolation("ad::backward needs a 1x1 output");
    grad(out.id)[0] = T(1);
    for (std::size_t i = out.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (n.sink) {
        auto& g = n.sink->data;
        const auto& ng = nodes_[i].grad;
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += ng[j];
      }
    }
  }

 private:
  bool record_;
  std::vector<Node> nodes_;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractViolation("ad::" + what);
}

enum class Bcast { Same, Row };

template <class T>
Bcast broadcast_kind(const Var<T>& a, const Var<T>& b, const char* op) {
  require(a.tape == b.tape, std::string(op) + ": operands on different tapes");
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::Same;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::Row;
  throw ContractViolation(std::string("ad::") + op + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
}

// Elementwise op with f(x) and f'(x, f(x)).
template <class T, class F, class D>
Var<T> unary(Var<T> a, F f, D df) {
  Tape<T>& t = *a.tape;
  const auto& av = a.value();
  std::vector<T> v(av.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(av[i]);
  const std::size_t ia = a.id;
  return t.op(a.rows(), a.cols(), std::move(v), {ia}, [ia, df](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.node(self).grad;
    const auto& y = tp.node(self).value;
    const auto& x = tp.node(ia).value;
    auto& ga = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
  });
}

// Elementwise binary op with row broadcasting of b. da(x, y, out), db(x, y, out)
template <class T, class F, class DA, class DB>
Var<T> binary(Var<T> a, Var<T> b, const char* name, F f, DA da, DB db) {
  const Bcast kind = broadcast_kind(a, b, name);
  Tape<T>& t = *a.tape;
  const std::size_t rows = a.rows(), cols = a.cols();
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<T> v(av.size());
  if (kind == Bcast::Same) {
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = f(av[k], bv[k]);
  } else {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) v[i * cols + j] = f(av[i * cols + j], bv[j]);
  }
  const std::size_t ia = a.id, ib = b.id;
  return t.op(rows, cols, std::move(v), {ia, ib}, [=](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.node(self).grad;
    const auto& y = tp.node(self).value;
    const auto& x1 = tp.node(ia).value;
    const auto& x2 = tp.node(ib).value;
    if (tp.node(ia).needs) {
      auto& ga = tp.grad(ia);
      if (kind == Bcast::Same) {
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * da(x1[k], x2[k], y[k]);
      } else {
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) {
            const std::size_t k = i * cols + j;
            ga[k] += g[k] * da(x1[k], x2[j], y[k]);
          }
      }
    }
    if (!tp.node(ib).needs) return;
    auto& gb = tp.grad(ib);
    if (kind == Bcast::Same) {
      for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k] * db(x1[k], x2[k], y[k]);
    } else {
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
          const std::size_t k = i * cols + j;
          gb[j] += g[k] * db(x1[k], x2[j], y[k]);
        }
    }
  });
}

}  // namespace detail

/// (m x k) * (k x n)
template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::require(a.tape == b.tape, "matmul: operands on different tapes");
  detail::require(a.cols() == b.rows(), "matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                                            std::to_string(b.rows()) + ")");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<T> v(m * n);
  kernels::gemm_nn<T>(m, n, k, a.value(), b.value(), v);
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->op(m, n, std::move(v), {ia, ib}, [=](Tape<T>& tp, std::size_t self) {
    const std::vector<T>& g = tp.node(self).grad;
    if (tp.node(ia).needs) kernels::gemm_nt<T>(m, k, n, g, tp.node(ib).value, tp.grad(ia), true);  // dA += dC B^T
    if (tp.node(ib).needs) kernels::gemm_tn<T>(k, n, m, tp.node(ia).value, g, tp.grad(ib), true);  // dB += A^T dC
  });
}

/// a + b, b same shape or a 1 x cols row broadcast over a's rows.
template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  return detail::binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T, T) { return T(1); }, [](T, T, T) { return T(1); });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  return detail::binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T, T) { return T(1); }, [](T, T, T) { return T(-1); });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  return detail::binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y, T) { return y; }, [](T x, T, T) { return x; });
}

template <class T>
Var<T> div(Var<T> a, Var<T> b) {
  return detail::binary(
      a, b, "div", [](T x, T y) { return x / y; }, [](T, T y, T) { return T(1) / y; },
      [](T, T y, T out) { return -out / y; });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  return detail::unary(a, [s](T x) { return s * x; }, [s](T, T) { return s; });
}

template <class T>
Var<T> add_scalar(Var<T> a, T s) {
  return detail::unary(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <class T>
Var<T> relu(Var<T> a) {
  return detail::unary(a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

/// ln(1 + e^x), computed without overflow; derivative is the logistic function.
template <class T>
Var<T> softplus(Var<T> a) {
  return detail::unary(
      a, [](T x) { return std::max(x, T(0)) + std::log1p(std::exp(-std::fabs(x))); },
      [](T x, T) { return T(1) / (T(1) + std::exp(-x)); });
}

template <class T>
Var<T> log(Var<T> a) {
  return detail::unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

/// ln Gamma, evaluated in double precision.
template <class T>
Var<T> log_gamma(Var<T> a) {
  return detail::unary(
      a, [](T x) { return static_cast<T>(tdist::log_gamma(static_cast<double>(x))); },
      [](T x, T) { return static_cast<T>(tdist::digamma(static_cast<double>(x))); });
}

/// Row-wise (x - mean) / sqrt(var + eps), population variance, no affine part.
template <class T>
Var<T> layer_norm(Var<T> a, T eps = T(1e-5)) {
  const std::size_t rows = a.rows(), cols = a.cols();
  const auto& av = a.value();
  std::vector<T> v(av.size());
  std::vector<T> inv_std(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const T* x = av.data() + i * cols;
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += x[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
    inv_std[i] = static_cast<T>(is);
    for (std::size_t j = 0; j < cols; ++j) v[i * cols + j] = static_cast<T>((x[j] - mean) * is);
  }
  const std::size_t ia = a.id;
  return a.tape->op(rows, cols, std::move(v), {ia}, [=](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.node(self).grad;
    const auto& y = tp.node(self).value;
    auto& ga = tp.grad(ia);
    for (std::size_t i = 0; i < rows; ++i) {
      const T* gi = g.data() + i * cols;
      const T* yi = y.data() + i * cols;
      double mg = 0.0, mgy = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        mg += gi[j];
        mgy += static_cast<double>(gi[j]) * yi[j];
      }
      mg /= static_cast<double>(cols);
      mgy /= static_cast<double>(cols);
      for (std::size_t j = 0; j < cols; ++j)
        ga[i * cols + j] += static_cast<T>(inv_std[i] * (gi[j] - mg - yi[j] * mgy));
    }
  });
}

/// Inverted dropout: kept units are scaled by 1 / (1 - rate). `keep` has one
/// entry per element of `a`.
template <class T>
Var<T> dropout(Var<T> a, std::span<const std::uint8_t> keep, double rate) {
  detail::require(keep.size() == a.value().size(), "dropout: mask size mismatch");
  detail::require(rate >= 0.0 && rate < 1.0, "dropout: rate must lie in [0, 1)");
  const T s = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) mask[i] = keep[i] ? s : T(0);
  Var<T> m = a.tape->constant(a.rows(), a.cols(), std::move(mask));
  return mul(a, m);
}

/// Column j as a rows x 1 matrix.
template <class T>
Var<T> column(Var<T> a, std::size_t j) {
  const std::size_t rows = a.rows(), cols = a.cols();
  detail::require(j < cols, "column: index out of range");
  std::vector<T> v(rows);
  for (std::size_t i = 0; i < rows; ++i) v[i] = a.value()[i * cols + j];
  const std::size_t ia = a.id;
  return a.tape->op(rows, 1, std::move(v), {ia}, [=](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.node(self).grad;
    auto& ga = tp.grad(ia);
    for (std::size_t i = 0; i < rows; ++i) ga[i * cols + j] += g[i];
  });
}

/// Sum of all entries as 1 x 1, accumulated in double with compensation.
template <class T>
Var<T> sum(Var<T> a) {
  double s = 0.0, c = 0.0;
  for (T x : a.value()) {
    const double t = s + x;
    c += std::fabs(s) >= std::fabs(static_cast<double>(x)) ? (s - t) + x : (x - t) + s;
    s = t;
  }
  const std::size_t ia = a.id;
  return a.tape->op(1, 1, {static_cast<T>(s + c)}, {ia}, [=](Tape<T>& tp, std::size_t self) {
    const T g = tp.node(self).grad[0];
    for (auto& x : tp.grad(ia)) x += g;
  });
}

template <class T>
Var<T> mean(Var<T> a) {
  const auto n = static_cast<T>(a.value().size());
  return scale(sum(a), T(1) / n);
}

}  // namespace barlab::ad
