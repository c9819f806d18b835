#pragma once

// Neuron-increase transform: pick comparatively small layers, scale their
// output width by a factor, and re-plumb the next layer's input width.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "lprnn/accounting.hpp"
#include "lprnn/model_spec.hpp"

namespace lprnn {

struct WidenPlan {
  std::vector<std::size_t> selected;  // 1-based layer indices, ascending
  double factor = 1.0;
  // Single-hidden-layer models skip layer-by-layer evaluation and widen
  // their one hidden layer directly.
  bool bypassed_selection = false;
  // No layer qualified for selection.
  bool no_candidates = false;

  bool empty() const noexcept { return selected.empty(); }
  bool contains(std::size_t index) const {
    return std::binary_search(selected.begin(), selected.end(), index);
  }
};

inline std::size_t widened_width(std::size_t width, double factor) {
  return static_cast<std::size_t>(std::round(static_cast<double>(width) * factor));
}

inline void validate_plan(const ModelSpec& spec, const WidenPlan& plan) {
  if (plan.empty()) return;
  if (!(plan.factor > 1.0) || !std::isfinite(plan.factor)) {
    throw ConfigError("widen factor must be > 1, got " + std::to_string(plan.factor));
  }
  for (std::size_t idx : plan.selected) {
    const LayerSpec& l = spec.layer(idx);
    if (l.kind == LayerKind::kOutput) {
      throw ConfigError("layer " + std::to_string(idx) + " is the output layer and cannot be widened");
    }
  }
  if (!std::is_sorted(plan.selected.begin(), plan.selected.end()) ||
      std::adjacent_find(plan.selected.begin(), plan.selected.end()) != plan.selected.end()) {
    throw ConfigError("widen plan indices must be strictly ascending");
  }
}

/// Manually chosen layers (e.g. the first, second and fifth layers).
inline WidenPlan manual_plan(const ModelSpec& spec, std::vector<std::size_t> indices, double factor) {
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  WidenPlan plan{std::move(indices), factor, false, false};
  validate_plan(spec, plan);
  return plan;
}

inline ModelSpec apply_widening(const ModelSpec& spec, const WidenPlan& plan) {
  spec.validate();
  validate_plan(spec, plan);
  ModelSpec out = spec;
  for (std::size_t idx : plan.selected) {
    LayerSpec& l = out.layers[idx - 1];
    l.out_dim = widened_width(l.out_dim, plan.factor);
    if (l.out_dim < 1) throw ConfigError("widening layer " + std::to_string(idx) + " left width < 1");
  }
  for (std::size_t i = 1; i < out.layers.size(); ++i) {
    out.layers[i].in_dim = out.layers[i - 1].downstream_width();
  }
  out.validate();
  return out;
}

/// Relative model-size increase (bits) of `plan` applied to `spec`.
inline double projected_size_increase(const ModelSpec& spec, const WidenPlan& plan) {
  const SizeReport before = model_size(spec);
  const SizeReport after = model_size(apply_widening(spec, plan));
  return (static_cast<double>(after.total_bits) - static_cast<double>(before.total_bits)) /
         static_cast<double>(before.total_bits);
}

/// Greedy selection: fully-connected layers in ascending parameter count
/// (lower index first on ties) are added while the projected size increase,
/// at the layers' assigned bit-widths and including the growth of the next
/// layer's input side, stays within `budget_fraction`. Selection stops at the
/// first layer that would exceed the budget, so a larger budget never
/// selects fewer layers. Recurrent, embedding and output layers are never
/// candidates.
inline WidenPlan select_layers(const ModelSpec& spec, double budget_fraction, double factor) {
  spec.validate();
  if (!(budget_fraction >= 0.0) || !std::isfinite(budget_fraction)) {
    throw ConfigError("widen budget must be a finite value >= 0");
  }
  if (!(factor > 1.0) || !std::isfinite(factor)) {
    throw ConfigError("widen factor must be > 1, got " + std::to_string(factor));
  }
  WidenPlan plan{{}, factor, false, false};
  if (budget_fraction == 0.0) return plan;

  std::vector<std::size_t> hidden;
  for (const LayerSpec& l : spec.layers) {
    if (l.kind != LayerKind::kEmbedding && l.kind != LayerKind::kOutput) hidden.push_back(l.index);
  }
  if (hidden.size() == 1) {
    plan.selected = hidden;
    plan.bypassed_selection = true;
    return plan;
  }

  std::vector<const LayerSpec*> candidates;
  for (const LayerSpec& l : spec.layers) {
    if (l.kind == LayerKind::kFullyConnected) candidates.push_back(&l);
  }
  if (candidates.empty()) {
    plan.no_candidates = true;
    return plan;
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const LayerSpec* a, const LayerSpec* b) {
    return layer_params(*a).total() < layer_params(*b).total();
  });

  for (const LayerSpec* c : candidates) {
    WidenPlan trial = plan;
    trial.selected.push_back(c->index);
    std::sort(trial.selected.begin(), trial.selected.end());
    if (projected_size_increase(spec, trial) > budget_fraction) break;
    plan = std::move(trial);
  }
  return plan;
}

}  // namespace lprnn
