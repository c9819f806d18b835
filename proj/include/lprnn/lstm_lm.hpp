#pragma once

// Quantization-aware single-layer LSTM language model.
//
//   x_t   = Qa(Qw(E)[token])                 embedding lookup
//   z_t   = [x_t | h_{t-1}] Qw(W) + b          gates, blocks [i | f | g | o]
//   c_t   = f * c_{t-1} + i * g                cell state (never quantized)
//   h_t   = Qa(o * tanh(c_t))                  symmetric activation grid
//   y_t   = h_t Qw(P) + p                      logits
//
// Qw is the tanh-rescaled weight quantizer at weight_bits, Qa the symmetric
// activation quantizer at activation_bits; both are the identity at 32 bits.
// `quantize_io = false` keeps E and P at full precision.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lprnn/corpus.hpp"
#include "lprnn/errors.hpp"
#include "lprnn/quantization.hpp"
#include "lprnn/tensor.hpp"

namespace lprnn {

struct LmDims {
  std::size_t vocab = 0;
  std::size_t embed = 0;
  std::size_t hidden = 0;
  friend bool operator==(const LmDims&, const LmDims&) = default;
};

template <typename Scalar = float>
struct LstmParams {
  Tensor<Scalar> weight;     // [(E + H) x 4H]
  std::vector<Scalar> bias;  // [4H]
  std::size_t input_dim = 0;
  std::size_t hidden = 0;

  void validate() const {
    if (input_dim == 0 || hidden == 0) throw ShapeError("lstm: dims must be >= 1");
    if (weight.rows() != input_dim + hidden || weight.cols() != 4 * hidden) {
      throw ShapeError("lstm: weight " + weight.shape() + " inconsistent with E=" +
                       std::to_string(input_dim) + " H=" + std::to_string(hidden));
    }
    if (bias.size() != 4 * hidden) throw ShapeError("lstm: bias length != 4H");
  }
};

template <typename Scalar = float>
struct LmModel {
  Tensor<Scalar> embedding;   // [V x E]
  LstmParams<Scalar> lstm;
  Tensor<Scalar> projection;  // [H x V]
  std::vector<Scalar> projection_bias;
  QuantSpec quant;
  bool quantize_io = true;
  // Weights already sit on their grids (model restored from packed storage);
  // the forward pass then uses them as-is.
  bool frozen = false;

  LmDims dims() const { return {embedding.rows(), embedding.cols(), lstm.hidden}; }

  /// Effective weight bit-widths of the three matrices.
  int lstm_weight_bits() const { return frozen ? kFullPrecisionBits : quant.weight_bits; }
  int io_weight_bits() const {
    return (frozen || !quantize_io) ? kFullPrecisionBits : quant.weight_bits;
  }
  /// Bit-widths as stored: what the model occupies on disk.
  int stored_lstm_bits() const { return quant.weight_bits; }
  int stored_io_bits() const { return quantize_io ? quant.weight_bits : kFullPrecisionBits; }

  void validate() const {
    quant.validate();
    lstm.validate();
    const LmDims d = dims();
    if (d.vocab == 0 || d.embed == 0) throw ShapeError("model: empty embedding");
    if (lstm.input_dim != d.embed) throw ShapeError("model: embedding width != LSTM input");
    if (projection.rows() != d.hidden || projection.cols() != d.vocab) {
      throw ShapeError("model: projection " + projection.shape() + " != [H x V]");
    }
    if (projection_bias.size() != d.vocab) throw ShapeError("model: projection bias != V");
  }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) with fan_in = rows of each
/// matrix; forget-gate bias 1, all other biases 0.
template <typename Scalar = float>
LmModel<Scalar> init_model(const LmDims& d, QuantSpec quant, bool quantize_io,
                           std::uint64_t seed) {
  quant.validate();
  if (d.vocab == 0 || d.embed == 0 || d.hidden == 0) {
    throw ConfigError("model dims must all be >= 1");
  }
  SeededRng rng(seed);
  LmModel<Scalar> m;
  m.quant = quant;
  m.quantize_io = quantize_io;
  auto init = [&](Tensor<Scalar>& t) {
    const double r = 1.0 / std::sqrt(static_cast<double>(t.rows()));
    rng.fill_uniform(t, -r, r);
  };
  m.embedding = Tensor<Scalar>(d.vocab, d.embed);
  init(m.embedding);
  m.lstm.input_dim = d.embed;
  m.lstm.hidden = d.hidden;
  m.lstm.weight = Tensor<Scalar>(d.embed + d.hidden, 4 * d.hidden);
  init(m.lstm.weight);
  m.lstm.bias.assign(4 * d.hidden, Scalar(0));
  for (std::size_t j = d.hidden; j < 2 * d.hidden; ++j) m.lstm.bias[j] = Scalar(1);
  m.projection = Tensor<Scalar>(d.hidden, d.vocab);
  init(m.projection);
  m.projection_bias.assign(d.vocab, Scalar(0));
  return m;
}

template <typename Scalar>
struct StepRecord {
  Tensor<Scalar> x_pre;   // embedding rows before activation quantization
  Tensor<Scalar> xh;      // [x | h_prev]
  Tensor<Scalar> c_prev;
  Tensor<Scalar> gates;   // post-nonlinearity [i | f | g | o]
  Tensor<Scalar> tanh_c;
  Tensor<Scalar> h_raw;   // o * tanh(c), before activation quantization
  Tensor<Scalar> h;
  std::vector<int> tokens;
};

template <typename Scalar>
struct StepOutput {
  Tensor<Scalar> h;
  Tensor<Scalar> c;
  StepRecord<Scalar> record;
};

namespace detail {
template <typename Scalar>
Tensor<Scalar> concat_cols(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rows() != b.rows()) throw ShapeError("concat: " + a.shape() + " | " + b.shape());
  Tensor<Scalar> out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + a.cols());
  }
  return out;
}

/// One LSTM step given already-quantized weights.
template <typename Scalar>
StepOutput<Scalar> lstm_step_quantized(const Tensor<Scalar>& x, const Tensor<Scalar>& h_prev,
                                       const Tensor<Scalar>& c_prev,
                                       const Tensor<Scalar>& weight_q,
                                       std::span<const Scalar> bias, int activation_bits) {
  const std::size_t hidden = h_prev.cols();
  if (c_prev.rows() != h_prev.rows() || c_prev.cols() != hidden || x.rows() != h_prev.rows()) {
    throw ShapeError("lstm_step: x " + x.shape() + ", h " + h_prev.shape() + ", c " +
                     c_prev.shape());
  }
  StepOutput<Scalar> out;
  auto& rec = out.record;
  rec.xh = concat_cols(x, h_prev);
  rec.gates = matmul(rec.xh, weight_q);
  add_row_vector(rec.gates, bias);
  rec.c_prev = c_prev;
  out.c = Tensor<Scalar>(x.rows(), hidden);
  rec.tanh_c = Tensor<Scalar>(x.rows(), hidden);
  rec.h_raw = Tensor<Scalar>(x.rows(), hidden);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    Scalar* z = rec.gates.row(r).data();
    for (std::size_t j = 0; j < hidden; ++j) {
      const Scalar i = sigmoid(z[j]);
      const Scalar f = sigmoid(z[hidden + j]);
      const Scalar g = std::tanh(z[2 * hidden + j]);
      const Scalar o = sigmoid(z[3 * hidden + j]);
      z[j] = i;
      z[hidden + j] = f;
      z[2 * hidden + j] = g;
      z[3 * hidden + j] = o;
      const Scalar c = f * c_prev(r, j) + i * g;
      out.c(r, j) = c;
      rec.tanh_c(r, j) = std::tanh(c);
      rec.h_raw(r, j) = o * rec.tanh_c(r, j);
    }
  }
  rec.h = quantize_activations(rec.h_raw, activation_bits, ActivationRange::kSymmetric);
  out.h = rec.h;
  return out;
}
}  // namespace detail

/// Single LSTM step: quantizes W at weight_bits, h at activation_bits.
template <typename Scalar>
StepOutput<Scalar> lstm_step(const Tensor<Scalar>& x, const Tensor<Scalar>& h_prev,
                             const Tensor<Scalar>& c_prev, const LstmParams<Scalar>& params,
                             const QuantSpec& quant) {
  quant.validate();
  params.validate();
  if (x.cols() != params.input_dim || h_prev.cols() != params.hidden) {
    throw ShapeError("lstm_step: x " + x.shape() + " / h " + h_prev.shape() +
                     " do not match E=" + std::to_string(params.input_dim) +
                     " H=" + std::to_string(params.hidden));
  }
  const auto wq = quantize_weights(params.weight, quant.weight_bits);
  return detail::lstm_step_quantized(x, h_prev, c_prev, wq.values,
                                     std::span<const Scalar>(params.bias),
                                     quant.activation_bits);
}

template <typename Scalar>
struct LstmState {
  Tensor<Scalar> h;
  Tensor<Scalar> c;

  static LstmState zeros(std::size_t batch, std::size_t hidden) {
    return {Tensor<Scalar>(batch, hidden), Tensor<Scalar>(batch, hidden)};
  }
};

template <typename Scalar>
struct ForwardTape {
  LmDims dims;
  QuantSpec quant;
  std::size_t batch = 0;
  WeightQuantization<Scalar> embedding_q;
  WeightQuantization<Scalar> lstm_q;
  WeightQuantization<Scalar> projection_q;
  std::vector<StepRecord<Scalar>> steps;

  std::size_t length() const noexcept { return steps.size(); }
};

template <typename Scalar>
struct ForwardResult {
  std::vector<Tensor<Scalar>> logits;  // T tensors of [batch x V]
  ForwardTape<Scalar> tape;
  LstmState<Scalar> final_state;
};

/// Unrolled forward pass over `tokens` ([batch x T]) starting from `initial`
/// (zeros when absent).
template <typename Scalar>
ForwardResult<Scalar> forward_sequence(const TokenBatch& tokens, const LmModel<Scalar>& model,
                                       const LstmState<Scalar>* initial = nullptr) {
  const LmDims d = model.dims();
  const std::size_t batch = tokens.batch;
  if (tokens.ids.size() != batch * tokens.steps) throw ShapeError("forward: ragged token batch");
  for (int id : tokens.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= d.vocab) {
      throw std::out_of_range("forward: token id " + std::to_string(id) +
                              " outside vocabulary of " + std::to_string(d.vocab));
    }
  }

  ForwardResult<Scalar> out;
  auto& tape = out.tape;
  tape.dims = d;
  tape.quant = model.quant;
  tape.batch = batch;
  tape.embedding_q = quantize_weights(model.embedding, model.io_weight_bits());
  tape.lstm_q = quantize_weights(model.lstm.weight, model.lstm_weight_bits());
  tape.projection_q = quantize_weights(model.projection, model.io_weight_bits());
  tape.steps.reserve(tokens.steps);
  out.logits.reserve(tokens.steps);

  LstmState<Scalar> state = initial ? *initial : LstmState<Scalar>::zeros(batch, d.hidden);
  if (state.h.rows() != batch || state.h.cols() != d.hidden) {
    throw ShapeError("forward: initial state " + state.h.shape() + " for batch " +
                     std::to_string(batch));
  }
  const std::span<const Scalar> bias(model.lstm.bias);
  const int act_bits = model.quant.activation_bits;

  for (std::size_t t = 0; t < tokens.steps; ++t) {
    Tensor<Scalar> x_pre(batch, d.embed);
    std::vector<int> step_tokens(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      step_tokens[b] = tokens.at(b, t);
      auto src = tape.embedding_q.values.row(static_cast<std::size_t>(step_tokens[b]));
      std::copy(src.begin(), src.end(), x_pre.row(b).begin());
    }
    const Tensor<Scalar> x = quantize_activations(x_pre, act_bits, ActivationRange::kSymmetric);
    auto step = detail::lstm_step_quantized(x, state.h, state.c, tape.lstm_q.values, bias,
                                            act_bits);
    Tensor<Scalar> logits = matmul(step.h, tape.projection_q.values);
    add_row_vector(logits, std::span<const Scalar>(model.projection_bias));
    out.logits.push_back(std::move(logits));

    step.record.x_pre = std::move(x_pre);
    step.record.tokens = std::move(step_tokens);
    state.h = std::move(step.h);
    state.c = std::move(step.c);
    tape.steps.push_back(std::move(step.record));
  }
  out.final_state = std::move(state);
  return out;
}

template <typename Scalar = float>
struct LmGradients {
  Tensor<Scalar> embedding;
  Tensor<Scalar> lstm_weight;
  std::vector<Scalar> lstm_bias;
  Tensor<Scalar> projection;
  std::vector<Scalar> projection_bias;

  static LmGradients zeros_like(const LmModel<Scalar>& m) {
    const LmDims d = m.dims();
    return {Tensor<Scalar>(d.vocab, d.embed), Tensor<Scalar>(d.embed + d.hidden, 4 * d.hidden),
            std::vector<Scalar>(4 * d.hidden, Scalar(0)), Tensor<Scalar>(d.hidden, d.vocab),
            std::vector<Scalar>(d.vocab, Scalar(0))};
  }

  /// Visits every gradient buffer in a fixed order.
  template <typename Fn>
  void for_each(Fn&& fn) {
    fn(embedding.values());
    fn(lstm_weight.values());
    fn(std::span<Scalar>(lstm_bias));
    fn(projection.values());
    fn(std::span<Scalar>(projection_bias));
  }
};

/// Reverse-mode pass through the unrolled network given d(loss)/d(logits) for
/// every step. Quantizer sites use the straight-through rules.
template <typename Scalar>
LmGradients<Scalar> backward_from_logit_grads(const ForwardTape<Scalar>& tape,
                                              const LmModel<Scalar>& model,
                                              const std::vector<Tensor<Scalar>>& dlogits) {
  const LmDims d = model.dims();
  if (!(tape.dims == d) || !(tape.quant == model.quant)) {
    throw ShapeError("backward: tape was recorded for a different model");
  }
  if (dlogits.size() != tape.length()) throw ShapeError("backward: logit grads != tape length");

  const std::size_t H = d.hidden;
  const std::size_t E = d.embed;
  const std::size_t batch = tape.batch;
  const int act_bits = model.quant.activation_bits;

  LmGradients<Scalar> g = LmGradients<Scalar>::zeros_like(model);
  Tensor<Scalar> d_embq(d.vocab, E);
  Tensor<Scalar> d_wq(E + H, 4 * H);
  Tensor<Scalar> d_pq(H, d.vocab);

  Tensor<Scalar> dh_next(batch, H);
  Tensor<Scalar> dc_next(batch, H);
  Tensor<Scalar> dgates(batch, 4 * H);

  for (std::size_t t = tape.length(); t-- > 0;) {
    const auto& rec = tape.steps[t];
    const auto& dy = dlogits[t];

    matmul_tn_accumulate(rec.h, dy, d_pq);
    column_sum_accumulate(dy, std::span<Scalar>(g.projection_bias));
    Tensor<Scalar> dh = matmul_nt(dy, tape.projection_q.values);
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += dh_next[i];
    const Tensor<Scalar> dh_raw =
        ste_backward(dh, rec.h_raw, SteKind::kActivationSymmetric, Scalar(0), act_bits);

    for (std::size_t r = 0; r < batch; ++r) {
      const Scalar* gate = rec.gates.row(r).data();
      Scalar* dz = dgates.row(r).data();
      for (std::size_t j = 0; j < H; ++j) {
        const Scalar i = gate[j], f = gate[H + j], gg = gate[2 * H + j], o = gate[3 * H + j];
        const Scalar tc = rec.tanh_c(r, j);
        const Scalar dhr = dh_raw(r, j);
        const Scalar dc = dhr * o * (Scalar(1) - tc * tc) + dc_next(r, j);
        const Scalar d_o = dhr * tc;
        const Scalar d_i = dc * gg;
        const Scalar d_g = dc * i;
        const Scalar d_f = dc * rec.c_prev(r, j);
        dc_next(r, j) = dc * f;
        dz[j] = d_i * i * (Scalar(1) - i);
        dz[H + j] = d_f * f * (Scalar(1) - f);
        dz[2 * H + j] = d_g * (Scalar(1) - gg * gg);
        dz[3 * H + j] = d_o * o * (Scalar(1) - o);
      }
    }

    matmul_tn_accumulate(rec.xh, dgates, d_wq);
    column_sum_accumulate(dgates, std::span<Scalar>(g.lstm_bias));
    const Tensor<Scalar> dxh = matmul_nt(dgates, tape.lstm_q.values);

    Tensor<Scalar> dx(batch, E);
    for (std::size_t r = 0; r < batch; ++r) {
      auto src = dxh.row(r);
      std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(E), dx.row(r).begin());
      std::copy(src.begin() + static_cast<std::ptrdiff_t>(E), src.end(), dh_next.row(r).begin());
    }
    const Tensor<Scalar> dx_pre =
        ste_backward(dx, rec.x_pre, SteKind::kActivationSymmetric, Scalar(0), act_bits);
    for (std::size_t r = 0; r < batch; ++r) {
      auto dst = d_embq.row(static_cast<std::size_t>(rec.tokens[r]));
      auto src = dx_pre.row(r);
      for (std::size_t j = 0; j < E; ++j) dst[j] += src[j];
    }
  }

  g.embedding = ste_backward(d_embq, model.embedding, SteKind::kWeight,
                             tape.embedding_q.max_tanh, model.io_weight_bits());
  g.lstm_weight = ste_backward(d_wq, model.lstm.weight, SteKind::kWeight, tape.lstm_q.max_tanh,
                               model.lstm_weight_bits());
  g.projection = ste_backward(d_pq, model.projection, SteKind::kWeight,
                              tape.projection_q.max_tanh, model.io_weight_bits());
  return g;
}

template <typename Scalar>
struct LossAndGradients {
  double mean_nll = 0.0;
  LmGradients<Scalar> grads;
};

/// Mean NLL over all batch x T targets and its exact gradient.
template <typename Scalar>
LossAndGradients<Scalar> backward(const ForwardResult<Scalar>& fwd, const LmModel<Scalar>& model,
                                  const TokenBatch& targets) {
  const std::size_t steps = fwd.logits.size();
  if (targets.steps != steps || targets.batch != fwd.tape.batch) {
    throw ShapeError("backward: targets do not match the forward pass");
  }
  std::vector<Tensor<Scalar>> dlogits;
  dlogits.reserve(steps);
  double total = 0.0;
  const Scalar inv_steps = Scalar(1) / static_cast<Scalar>(steps);
  std::vector<int> step_targets(targets.batch);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < targets.batch; ++b) step_targets[b] = targets.at(b, t);
    auto xent = softmax_xent(fwd.logits[t], std::span<const int>(step_targets));
    total += xent.loss;
    for (auto& v : xent.grad.values()) v *= inv_steps;
    dlogits.push_back(std::move(xent.grad));
  }
  return {total / static_cast<double>(steps),
          backward_from_logit_grads(fwd.tape, model, dlogits)};
}

struct EvalReport {
  double ppw = 0.0;
  double mean_nll = 0.0;
  std::size_t tokens = 0;
};

/// Perplexity per word over a whole token stream: a single lane walked in
/// windows of `window` tokens with the hidden state carried across windows,
/// so every token after the first is scored exactly once.
template <typename Scalar>
EvalReport evaluate_ppw(const LmModel<Scalar>& model, const TokenStream& stream,
                        std::size_t window = 128) {
  if (stream.size() < 2) throw DataError("evaluate: corpus needs at least 2 tokens");
  if (window == 0) throw ConfigError("evaluate: window must be >= 1");
  LstmState<Scalar> state = LstmState<Scalar>::zeros(1, model.dims().hidden);
  double total = 0.0;
  const std::size_t n_targets = stream.size() - 1;
  for (std::size_t start = 0; start < n_targets; start += window) {
    const std::size_t len = std::min(window, n_targets - start);
    TokenBatch inputs{1, len, std::vector<int>(stream.begin() + static_cast<std::ptrdiff_t>(start),
                                               stream.begin() + static_cast<std::ptrdiff_t>(start + len))};
    auto fwd = forward_sequence(inputs, model, &state);
    for (std::size_t t = 0; t < len; ++t) {
      const int target = stream[start + t + 1];
      total += softmax_xent(fwd.logits[t], std::span<const int>(&target, 1)).loss;
    }
    state = std::move(fwd.final_state);
  }
  EvalReport r;
  r.tokens = n_targets;
  r.mean_nll = total / static_cast<double>(n_targets);
  r.ppw = std::exp(r.mean_nll);
  return r;
}

}  // namespace lprnn
