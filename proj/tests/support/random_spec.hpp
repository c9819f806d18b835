#pragma once

// Random, chain-consistent model specs for widening property checks.

#include <string>

#include "lprnn/model_spec.hpp"
#include "lprnn/tensor.hpp"

namespace support {

inline lprnn::ModelSpec random_spec(lprnn::SeededRng& rng) {
  using lprnn::LayerKind;
  static const int kBits[] = {1, 2, 4, 8, 16, 32};
  lprnn::ModelSpec s;
  s.name = "random";
  const std::size_t hidden = 1 + rng.next_u64() % 6;
  const bool embed = rng.next_u64() % 3 == 0;
  std::size_t width = 1 + rng.next_u64() % 300;
  auto push = [&](LayerKind kind, std::size_t out) {
    lprnn::LayerSpec l;
    l.index = s.layers.size() + 1;
    l.name = "l" + std::to_string(l.index);
    l.kind = kind;
    l.in_dim = width;
    l.out_dim = out;
    l.weight_bits = kBits[rng.next_u64() % 6];
    l.activation_bits = kBits[rng.next_u64() % 6];
    s.layers.push_back(l);
    width = l.downstream_width();
  };
  if (embed) push(LayerKind::kEmbedding, 1 + rng.next_u64() % 64);
  for (std::size_t i = 0; i < hidden; ++i) {
    const auto r = rng.next_u64() % 5;
    push(r == 0 ? LayerKind::kLstm : r == 1 ? LayerKind::kBidirectionalLstm : LayerKind::kFullyConnected,
         1 + rng.next_u64() % 256);
  }
  push(LayerKind::kOutput, 1 + rng.next_u64() % 64);
  return s;
}

inline bool chain_consistent(const lprnn::ModelSpec& s) {
  for (std::size_t i = 1; i < s.layers.size(); ++i) {
    if (s.layers[i].in_dim != s.layers[i - 1].downstream_width()) return false;
  }
  return true;
}

}  // namespace support
