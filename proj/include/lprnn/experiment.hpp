#pragma once

// One training run as described by a RunConfig: load corpora, build the
// model, train, evaluate.

#include <cstdint>
#include <optional>
#include <string>

#include "lprnn/accounting.hpp"
#include "lprnn/config.hpp"
#include "lprnn/corpus.hpp"
#include "lprnn/lstm_lm.hpp"
#include "lprnn/training.hpp"
#include "lprnn/widening.hpp"

namespace lprnn {

struct Corpora {
  Vocab vocab;
  TokenStream train;
  TokenStream valid;  // empty when no validation file is configured
};

/// The vocabulary is built from the training text only.
inline Corpora load_corpora(const RunConfig& cfg) {
  if (cfg.data.train.empty()) throw ConfigError("data.train: no training corpus configured");
  Corpora c;
  const std::string train_text = read_text_file(cfg.data.train);
  c.vocab = Vocab::build(train_text, cfg.model.vocab_mode, cfg.model.max_vocab);
  c.train = c.vocab.encode(train_text);
  if (!cfg.data.valid.empty()) c.valid = c.vocab.encode(read_text_file(cfg.data.valid));
  return c;
}

/// Model dims after applying the [widen] section to the LM architecture.
/// The LM has a single hidden (recurrent) layer, so automatic selection
/// widens it directly; an explicit select list may also name the embedding.
inline LmDims configured_dims(const RunConfig& cfg, std::size_t vocab) {
  LmDims d{vocab, cfg.model.embed, cfg.model.hidden};
  if (cfg.widen.factor == 1.0) return d;
  const ModelSpec spec = lm_model_spec(d.vocab, d.embed, d.hidden, cfg.model.quant, cfg.model.quantize_io);
  const WidenPlan plan = cfg.widen.select.empty()
                             ? select_layers(spec, cfg.widen.budget, cfg.widen.factor)
                             : manual_plan(spec, cfg.widen.select, cfg.widen.factor);
  const ModelSpec wide = apply_widening(spec, plan);
  d.embed = wide.layer(1).out_dim;
  d.hidden = wide.layer(2).out_dim;
  return d;
}

struct RunOutcome {
  LmModel<float> model;
  TrainResult log;
  std::optional<EvalReport> valid;  // final validation report
};

inline RunOutcome run_experiment(const RunConfig& cfg, const Corpora& corpora, const LmDims& dims,
                                 QuantSpec quant, std::uint64_t seed,
                                 const EpochCallback& on_epoch = {}) {
  RunOutcome out;
  out.model = init_model<float>(dims, quant, cfg.model.quantize_io, seed);
  out.log = train(out.model, corpora.train, corpora.valid, cfg.schedule, on_epoch);
  if (!corpora.valid.empty()) {
    if (!out.log.epochs.empty() && out.log.epochs.back().valid) {
      out.valid = out.log.epochs.back().valid;
    } else {
      out.valid = evaluate_ppw(out.model, corpora.valid, cfg.schedule.eval_window);
    }
  }
  return out;
}

}  // namespace lprnn
