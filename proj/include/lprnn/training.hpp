#pragma once

// Truncated-BPTT SGD over contiguous batches. Master weights stay at full
// precision and are re-quantized by every forward pass.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lprnn/corpus.hpp"
#include "lprnn/errors.hpp"
#include "lprnn/lstm_lm.hpp"

namespace lprnn {

struct TrainSchedule {
  double learning_rate = 1.0;
  double clip_norm = 5.0;       // global gradient-norm threshold; <= 0 disables
  std::size_t epochs = 1;
  std::size_t batch = 16;
  std::size_t seqlen = 32;
  double lr_decay = 0.5;        // applied after `patience` epochs without improvement
  std::size_t patience = 1;
  std::size_t eval_window = 128;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("train.lr must be a finite value >= 0");
    }
    if (batch == 0) throw ConfigError("train.batch must be >= 1");
    if (seqlen == 0) throw ConfigError("train.seqlen must be >= 1");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("train.lr_decay must be in (0, 1]");
    if (eval_window == 0) throw ConfigError("train.eval_window must be >= 1");
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_nll = 0.0;
  double learning_rate = 0.0;
  std::optional<EvalReport> valid;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
};

/// w <- w - lr * g
template <typename Scalar>
void sgd_update(std::span<Scalar> weights, std::span<const Scalar> grads, Scalar lr) {
  if (weights.size() != grads.size()) throw ShapeError("sgd_update: length mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] -= lr * grads[i];
}

/// Scales the gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename Scalar>
double clip_global_norm(LmGradients<Scalar>& g, double max_norm) {
  double sq = 0.0;
  g.for_each([&](std::span<Scalar> buf) {
    for (Scalar v : buf) sq += static_cast<double>(v) * static_cast<double>(v);
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto s = static_cast<Scalar>(max_norm / norm);
    g.for_each([&](std::span<Scalar> buf) {
      for (Scalar& v : buf) v *= s;
    });
  }
  return norm;
}

template <typename Scalar>
void apply_gradients(LmModel<Scalar>& m, const LmGradients<Scalar>& g, Scalar lr) {
  sgd_update(m.embedding.values(), g.embedding.values(), lr);
  sgd_update(m.lstm.weight.values(), g.lstm_weight.values(), lr);
  sgd_update(std::span<Scalar>(m.lstm.bias), std::span<const Scalar>(g.lstm_bias), lr);
  sgd_update(m.projection.values(), g.projection.values(), lr);
  sgd_update(std::span<Scalar>(m.projection_bias), std::span<const Scalar>(g.projection_bias), lr);
}

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains `model` in place. Validation (when `valid` is non-empty) runs after
/// every epoch and drives the learning-rate decay.
template <typename Scalar>
TrainResult train(LmModel<Scalar>& model, const TokenStream& train_stream,
                  const TokenStream& valid, const TrainSchedule& schedule,
                  const EpochCallback& on_epoch = {}) {
  schedule.validate();
  model.validate();
  if (model.frozen) throw ConfigError("train: model holds frozen quantized weights");
  const LmDims d = model.dims();
  for (int id : train_stream) {
    if (id < 0 || static_cast<std::size_t>(id) >= d.vocab) {
      throw DataError("train: token id outside the model vocabulary");
    }
  }

  TrainResult result;
  if (schedule.epochs == 0) return result;
  const Batches batches(train_stream, schedule.batch, schedule.seqlen);

  double lr = schedule.learning_rate;
  double best_ppw = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;

  for (std::size_t epoch = 1; epoch <= schedule.epochs; ++epoch) {
    LstmState<Scalar> state = LstmState<Scalar>::zeros(schedule.batch, d.hidden);
    double total = 0.0;
    for (std::size_t w = 0; w < batches.size(); ++w) {
      const LmWindow win = batches[w];
      auto fwd = forward_sequence(win.inputs, model, &state);
      auto lg = backward(fwd, model, win.targets);
      if (!std::isfinite(lg.mean_nll)) {
        throw DivergenceError("training loss became non-finite at epoch " +
                              std::to_string(epoch) + ", window " + std::to_string(w));
      }
      total += lg.mean_nll;
      clip_global_norm(lg.grads, schedule.clip_norm);
      apply_gradients(model, lg.grads, static_cast<Scalar>(lr));
      state = std::move(fwd.final_state);
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_nll = total / static_cast<double>(batches.size());
    log.learning_rate = lr;
    if (!valid.empty()) {
      log.valid = evaluate_ppw(model, valid, schedule.eval_window);
      if (!std::isfinite(log.valid->mean_nll)) {
        throw DivergenceError("validation loss became non-finite at epoch " +
                              std::to_string(epoch));
      }
      if (log.valid->ppw < best_ppw) {
        best_ppw = log.valid->ppw;
        bad_epochs = 0;
      } else if (++bad_epochs >= schedule.patience) {
        lr *= schedule.lr_decay;
        bad_epochs = 0;
      }
    }
    if (on_epoch) on_epoch(log);
    result.epochs.push_back(log);
  }
  return result;
}

}  // namespace lprnn
