#pragma once

// Dense row-major 2-D tensors and the handful of kernels the LSTM needs.
//
// All reductions run in a fixed order so that repeated runs are bit-identical:
// matmul accumulates each output element left to right over the inner
// dimension, starting from zero.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "lprnn/errors.hpp"

namespace lprnn {

template <typename Scalar = float>
class Tensor {
  static_assert(std::is_floating_point_v<Scalar>);

 public:
  using value_type = Scalar;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, Scalar fill = Scalar(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<Scalar> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(rows_, cols_));
    }
  }
  Tensor(std::initializer_list<std::initializer_list<Scalar>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("ragged tensor initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = Scalar(1);
    return t;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Scalar& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Scalar operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }

  std::span<Scalar> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const Scalar> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<Scalar> values() noexcept { return data_; }
  std::span<const Scalar> values() const noexcept { return data_; }
  std::vector<Scalar>& storage() noexcept { return data_; }
  const std::vector<Scalar>& storage() const noexcept { return data_; }

  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

  std::string shape() const { return shape_string(rows_, cols_); }

  template <typename Other>
  Tensor<Other> cast() const {
    std::vector<Other> out(data_.begin(), data_.end());
    return Tensor<Other>(rows_, cols_, std::move(out));
  }

  bool same_shape(const Tensor& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

  friend std::ostream& operator<<(std::ostream& os, const Tensor& t) {
    os << shape_string(t.rows_, t.cols_) << " {";
    const std::size_t shown = std::min<std::size_t>(t.data_.size(), 16);
    for (std::size_t i = 0; i < shown; ++i) os << (i ? ", " : "") << t.data_[i];
    if (shown < t.data_.size()) os << ", ...";
    return os << "}";
  }

  static std::string shape_string(std::size_t r, std::size_t c) {
    return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Scalar> data_;
};

/// Deterministic random source. std::mt19937_64 is fully specified by the
/// standard, and the real conversions below avoid the implementation-defined
/// std distributions, so a seed yields the same stream everywhere.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  template <typename Scalar>
  void fill_uniform(Tensor<Scalar>& t, double lo, double hi) {
    for (auto& v : t.values()) v = static_cast<Scalar>(uniform(lo, hi));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

namespace detail {
inline void require_same_shape(const char* what, std::size_t ar, std::size_t ac,
                               std::size_t br, std::size_t bc) {
  if (ar != br || ac != bc) {
    throw ShapeError(std::string(what) + ": shape mismatch " +
                     Tensor<float>::shape_string(ar, ac) + " vs " +
                     Tensor<float>::shape_string(br, bc));
  }
}
}  // namespace detail

/// c = a * b.
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + a.shape() + " * " + b.shape());
  }
  Tensor<Scalar> c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    Scalar* crow = c.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const Scalar aik = a(i, k);
      const Scalar* brow = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

/// acc += a^T * b, accumulating over the rows of a and b in ascending order.
template <typename Scalar>
void matmul_tn_accumulate(const Tensor<Scalar>& a, const Tensor<Scalar>& b,
                          Tensor<Scalar>& acc) {
  if (a.rows() != b.rows() || acc.rows() != a.cols() || acc.cols() != b.cols()) {
    throw ShapeError("matmul_tn: " + a.shape() + "^T * " + b.shape() + " into " +
                     acc.shape());
  }
  const std::size_t n = b.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const Scalar* brow = b.row(r).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const Scalar ari = a(r, i);
      Scalar* crow = acc.row(i).data();
      for (std::size_t j = 0; j < n; ++j) crow[j] += ari * brow[j];
    }
  }
}

/// c = a * b^T.
template <typename Scalar>
Tensor<Scalar> matmul_nt(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + a.shape() + " * " + b.shape() + "^T");
  }
  Tensor<Scalar> c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const Scalar* arow = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const Scalar* brow = b.row(j).data();
      Scalar s(0);
      for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
      c(i, j) = s;
    }
  }
  return c;
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

enum class ElementwiseOp { kAdd, kMul, kSigmoid, kTanh, kScale };

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape("add", a.rows(), a.cols(), b.rows(), b.cols());
  Tensor<Scalar> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape("mul", a.rows(), a.cols(), b.rows(), b.cols());
  Tensor<Scalar> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar s) {
  Tensor<Scalar> out = a;
  for (auto& v : out.values()) v *= s;
  return out;
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& a) {
  Tensor<Scalar> out = a;
  for (auto& v : out.values()) v = sigmoid(v);
  return out;
}

template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& a) {
  Tensor<Scalar> out = a;
  for (auto& v : out.values()) v = std::tanh(v);
  return out;
}

/// Dispatcher over the elementwise family; `b` is the second operand for the
/// binary ops and ignored otherwise, `s` is the factor for kScale.
template <typename Scalar>
Tensor<Scalar> elementwise(ElementwiseOp op, const Tensor<Scalar>& a,
                           const Tensor<Scalar>* b = nullptr, Scalar s = Scalar(1)) {
  switch (op) {
    case ElementwiseOp::kAdd:
    case ElementwiseOp::kMul:
      if (b == nullptr) throw ShapeError("elementwise: binary op needs two operands");
      return op == ElementwiseOp::kAdd ? add(a, *b) : mul(a, *b);
    case ElementwiseOp::kSigmoid:
      return sigmoid(a);
    case ElementwiseOp::kTanh:
      return tanh(a);
    case ElementwiseOp::kScale:
      return scale(a, s);
  }
  return a;
}

/// Adds `bias` (length cols) to every row.
template <typename Scalar>
void add_row_vector(Tensor<Scalar>& t, std::span<const Scalar> bias) {
  if (bias.size() != t.cols()) {
    throw ShapeError("add_row_vector: bias length " + std::to_string(bias.size()) +
                     " vs " + t.shape());
  }
  for (std::size_t r = 0; r < t.rows(); ++r) {
    Scalar* row = t.row(r).data();
    for (std::size_t j = 0; j < t.cols(); ++j) row[j] += bias[j];
  }
}

/// acc[j] += sum_r t(r, j), rows in ascending order.
template <typename Scalar>
void column_sum_accumulate(const Tensor<Scalar>& t, std::span<Scalar> acc) {
  if (acc.size() != t.cols()) throw ShapeError("column_sum: length mismatch");
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const Scalar* row = t.row(r).data();
    for (std::size_t j = 0; j < t.cols(); ++j) acc[j] += row[j];
  }
}

template <typename Scalar>
bool all_finite(const Tensor<Scalar>& t) {
  return std::all_of(t.values().begin(), t.values().end(),
                     [](Scalar v) { return std::isfinite(v); });
}

template <typename Scalar>
struct XentResult {
  double loss = 0.0;  // mean negative log-likelihood over the batch, nats
  Tensor<Scalar> grad;
};

/// Mean softmax cross-entropy and its gradient with respect to the logits.
template <typename Scalar>
XentResult<Scalar> softmax_xent(const Tensor<Scalar>& logits, std::span<const int> targets) {
  if (targets.size() != logits.rows()) {
    throw ShapeError("softmax_xent: " + std::to_string(targets.size()) +
                     " targets for logits " + logits.shape());
  }
  const std::size_t batch = logits.rows();
  const std::size_t vocab = logits.cols();
  XentResult<Scalar> out{0.0, Tensor<Scalar>(batch, vocab)};
  if (batch == 0) return out;
  const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(batch);
  double total = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    const int target = targets[r];
    if (target < 0 || static_cast<std::size_t>(target) >= vocab) {
      throw std::out_of_range("softmax_xent: target " + std::to_string(target) +
                              " outside vocabulary of " + std::to_string(vocab));
    }
    auto row = logits.row(r);
    const Scalar mx = *std::max_element(row.begin(), row.end());
    Scalar z(0);
    auto g = out.grad.row(r);
    for (std::size_t j = 0; j < vocab; ++j) {
      g[j] = std::exp(row[j] - mx);
      z += g[j];
    }
    const Scalar log_z = std::log(z);
    total += static_cast<double>(log_z - (row[target] - mx));
    for (std::size_t j = 0; j < vocab; ++j) g[j] = (g[j] / z) * inv_batch;
    g[target] -= inv_batch;
  }
  out.loss = total / static_cast<double>(batch);
  return out;
}

}  // namespace lprnn
