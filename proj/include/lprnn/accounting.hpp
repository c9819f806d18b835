#pragma once

// Model-size, runtime-memory and compute accounting.
//
// Parameter counts per layer kind:
//   fully-connected, output : in*out weights + out biases
//   lstm (per direction)    : (in + H) * 4H weights + 4H biases
//   embedding               : in*out weights (in = vocabulary), no biases
// All totals are exact integers; ratios are exact fractions.

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "lprnn/model_spec.hpp"

namespace lprnn {

/// Exact non-negative fraction kept in lowest terms.
struct Ratio {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  static Ratio of(std::uint64_t n, std::uint64_t d) {
    if (d == 0) return {0, 1};
    const std::uint64_t g = std::gcd(n, d);
    return {n / g, d / g};
  }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Ratio&, const Ratio&) = default;
};

struct LayerParams {
  std::uint64_t weights = 0;
  std::uint64_t biases = 0;
  std::uint64_t total() const { return weights + biases; }
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

inline LayerParams layer_params(const LayerSpec& l) {
  const std::uint64_t in = l.in_dim;
  const std::uint64_t out = l.out_dim;
  switch (l.kind) {
    case LayerKind::kFullyConnected:
    case LayerKind::kOutput:
      return {in * out, out};
    case LayerKind::kEmbedding:
      return {in * out, 0};
    case LayerKind::kLstm:
    case LayerKind::kBidirectionalLstm: {
      const std::uint64_t dirs = l.directions();
      return {dirs * (in + out) * 4 * out, dirs * 4 * out};
    }
  }
  return {};
}

struct LayerSize {
  std::size_t index = 0;
  std::string name;
  LayerParams params;
  int weight_bits = 0;
  int bias_bits = 0;
  std::uint64_t bits = 0;
};

struct SizeReport {
  std::vector<LayerSize> layers;
  std::uint64_t total_params = 0;
  std::uint64_t total_bits = 0;
  std::uint64_t baseline_bits = 0;  // same spec with every value at 32 bits
  Ratio ratio;
};

inline SizeReport model_size(const ModelSpec& spec) {
  spec.validate();
  SizeReport r;
  for (const LayerSpec& l : spec.layers) {
    LayerSize ls{l.index, l.name, layer_params(l), l.weight_bits, l.effective_bias_bits(), 0};
    ls.bits = ls.params.weights * static_cast<std::uint64_t>(l.weight_bits) +
              ls.params.biases * static_cast<std::uint64_t>(l.effective_bias_bits());
    r.total_params += ls.params.total();
    r.total_bits += ls.bits;
    r.layers.push_back(std::move(ls));
  }
  r.baseline_bits = r.total_params * kFullPrecisionBits;
  r.ratio = Ratio::of(r.total_bits, r.baseline_bits);
  return r;
}

struct LayerMemory {
  std::size_t index = 0;
  std::string name;
  std::uint64_t elements = 0;
  int activation_bits = 0;
  std::uint64_t bits = 0;
};

struct MemoryReport {
  std::vector<LayerMemory> layers;
  std::uint64_t total_elements = 0;
  std::uint64_t total_bits = 0;
  std::uint64_t baseline_bits = 0;
  Ratio ratio;
};

/// Activation footprint: out_dim x batch x timesteps per layer (doubled for
/// bidirectional layers), at each layer's activation bit-width.
inline MemoryReport runtime_memory(const ModelSpec& spec, std::size_t batch, std::size_t timesteps) {
  spec.validate();
  if (batch < 1 || timesteps < 1) throw ConfigError("runtime_memory: batch and timesteps must be >= 1");
  MemoryReport r;
  for (const LayerSpec& l : spec.layers) {
    LayerMemory lm{l.index, l.name, 0, l.activation_bits, 0};
    lm.elements = static_cast<std::uint64_t>(l.downstream_width()) * batch * timesteps;
    lm.bits = lm.elements * static_cast<std::uint64_t>(l.activation_bits);
    r.total_elements += lm.elements;
    r.total_bits += lm.bits;
    r.layers.push_back(std::move(lm));
  }
  r.baseline_bits = r.total_elements * kFullPrecisionBits;
  r.ratio = Ratio::of(r.total_bits, r.baseline_bits);
  return r;
}

struct LayerCompute {
  std::size_t index = 0;
  std::string name;
  std::uint64_t macs = 0;  // per timestep
};

struct ComputeReport {
  std::vector<LayerCompute> layers;
  std::uint64_t total_macs = 0;
};

inline std::uint64_t layer_macs(const LayerSpec& l) {
  const std::uint64_t in = l.in_dim;
  const std::uint64_t out = l.out_dim;
  switch (l.kind) {
    case LayerKind::kFullyConnected:
    case LayerKind::kOutput:
      return in * out;
    case LayerKind::kEmbedding:
      return 0;  // table lookup
    case LayerKind::kLstm:
    case LayerKind::kBidirectionalLstm:
      return l.directions() * (in + out) * 4 * out;
  }
  return 0;
}

inline ComputeReport compute_ops(const ModelSpec& spec) {
  spec.validate();
  ComputeReport r;
  for (const LayerSpec& l : spec.layers) {
    r.layers.push_back({l.index, l.name, layer_macs(l)});
    r.total_macs += r.layers.back().macs;
  }
  return r;
}

struct Delta {
  std::uint64_t baseline = 0;
  std::uint64_t variant = 0;
  double relative_pct = 0.0;  // (variant - baseline) / baseline
  double points_pct = 0.0;    // (variant - baseline) / reference, in percentage points
};

inline Delta make_delta(std::uint64_t baseline, std::uint64_t variant, std::uint64_t reference) {
  const double diff = static_cast<double>(variant) - static_cast<double>(baseline);
  return {baseline, variant,
          baseline ? 100.0 * diff / static_cast<double>(baseline) : 0.0,
          reference ? 100.0 * diff / static_cast<double>(reference) : 0.0};
}

struct CompareReport {
  SizeReport baseline_size, variant_size;
  MemoryReport baseline_memory, variant_memory;
  ComputeReport baseline_compute, variant_compute;
  Delta size, memory, compute;
};

/// Variant versus baseline. The points form expresses the change as a share of
/// the baseline's all-32-bit footprint.
inline CompareReport compare(const ModelSpec& baseline, const ModelSpec& variant,
                             std::size_t batch, std::size_t timesteps) {
  CompareReport r;
  r.baseline_size = model_size(baseline);
  r.variant_size = model_size(variant);
  r.baseline_memory = runtime_memory(baseline, batch, timesteps);
  r.variant_memory = runtime_memory(variant, batch, timesteps);
  r.baseline_compute = compute_ops(baseline);
  r.variant_compute = compute_ops(variant);
  r.size = make_delta(r.baseline_size.total_bits, r.variant_size.total_bits,
                      r.baseline_size.baseline_bits);
  r.memory = make_delta(r.baseline_memory.total_bits, r.variant_memory.total_bits,
                        r.baseline_memory.baseline_bits);
  r.compute = make_delta(r.baseline_compute.total_macs, r.variant_compute.total_macs,
                         r.baseline_compute.total_macs);
  return r;
}

}  // namespace lprnn
