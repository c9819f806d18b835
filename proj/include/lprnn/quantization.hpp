#pragma once

// k-bit uniform quantizers with straight-through-estimator backward rules.
//
// Weights go through a tanh rescale onto the symmetric grid in [-1, 1];
// activations are clipped to their range and rounded onto the grid.
// Bit-width 32 is the identity on every path.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "lprnn/errors.hpp"
#include "lprnn/tensor.hpp"

namespace lprnn {

inline constexpr int kFullPrecisionBits = 32;
inline constexpr std::array<int, 6> kAllowedBits = {1, 2, 4, 8, 16, 32};

constexpr bool is_allowed_bits(int bits) noexcept {
  return std::find(kAllowedBits.begin(), kAllowedBits.end(), bits) != kAllowedBits.end();
}

inline void require_allowed_bits(int bits, const char* field) {
  if (!is_allowed_bits(bits)) {
    throw QuantizationError(std::string(field) + ": bit-width " + std::to_string(bits) +
                            " not in {1,2,4,8,16,32}");
  }
}

struct QuantSpec {
  int weight_bits = kFullPrecisionBits;
  int activation_bits = kFullPrecisionBits;

  static QuantSpec full_precision() { return {}; }

  void validate() const {
    require_allowed_bits(weight_bits, "weight_bits");
    require_allowed_bits(activation_bits, "activation_bits");
  }
  bool weights_quantized() const noexcept { return weight_bits != kFullPrecisionBits; }
  bool activations_quantized() const noexcept {
    return activation_bits != kFullPrecisionBits;
  }
  friend bool operator==(const QuantSpec&, const QuantSpec&) = default;
};

/// Number of steps on the k-bit grid, 2^k - 1.
constexpr std::uint32_t grid_steps(int bits) noexcept {
  return static_cast<std::uint32_t>((std::uint64_t{1} << bits) - 1);
}

enum class ActivationRange { kUnit, kSymmetric };

/// Affine decode of a grid code: value = scale * code + offset.
struct GridAffine {
  double scale = 1.0;
  double offset = 0.0;

  static GridAffine unit(int bits) { return {1.0 / grid_steps(bits), 0.0}; }
  static GridAffine symmetric(int bits) { return {2.0 / grid_steps(bits), -1.0}; }
  static GridAffine for_range(ActivationRange r, int bits) {
    return r == ActivationRange::kUnit ? unit(bits) : symmetric(bits);
  }

  /// Every quantizer output and every unpacked value goes through this one
  /// expression, which is what makes pack/unpack exact.
  template <typename Scalar>
  Scalar decode(std::uint32_t code) const {
    return static_cast<Scalar>(static_cast<double>(code) * scale + offset);
  }
};

namespace detail {
inline void require_unit_bits(int bits) {
  if (bits < 1 || bits > 16) {
    throw QuantizationError("quantizer bit-width " + std::to_string(bits) +
                            " outside 1..16");
  }
}

/// round(u * (2^k - 1)) with ties away from zero; u is clamped to [0, 1].
inline std::uint32_t unit_code(double u, int bits) {
  u = std::clamp(u, 0.0, 1.0);
  return static_cast<std::uint32_t>(std::round(u * grid_steps(bits)));
}
}  // namespace detail

/// Grid index of the unit-interval quantizer.
inline std::uint32_t quantize_unit_code(double x, int bits) {
  detail::require_unit_bits(bits);
  if (!(x >= 0.0 && x <= 1.0)) {
    throw QuantizationError("quantize_unit: input " + std::to_string(x) +
                            " outside [0, 1]; clip first");
  }
  return detail::unit_code(x, bits);
}

/// round(x (2^k-1)) / (2^k-1), ties rounded half away from zero.
template <typename Scalar>
Scalar quantize_unit(Scalar x, int bits) {
  const std::uint32_t code = quantize_unit_code(static_cast<double>(x), bits);
  return GridAffine::unit(bits).decode<Scalar>(code);
}

template <typename Scalar>
struct WeightQuantization {
  Tensor<Scalar> values;  // on the symmetric k-bit grid, or the input when k = 32
  Scalar max_tanh = Scalar(0);  // max |tanh(w)|, held constant by the backward pass
};

template <typename Scalar>
WeightQuantization<Scalar> quantize_weights(const Tensor<Scalar>& w, int bits) {
  require_allowed_bits(bits, "weight_bits");
  if (bits == kFullPrecisionBits) return {w, Scalar(0)};

  Scalar max_tanh(0);
  for (Scalar v : w.values()) max_tanh = std::max(max_tanh, std::abs(std::tanh(v)));

  WeightQuantization<Scalar> out{Tensor<Scalar>(w.rows(), w.cols()), max_tanh};
  if (max_tanh == Scalar(0)) return out;  // all-zero input maps to all zeros

  const GridAffine grid = GridAffine::symmetric(bits);
  const double denom = 2.0 * static_cast<double>(max_tanh);
  auto src = w.values();
  auto dst = out.values.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double u = static_cast<double>(std::tanh(src[i])) / denom + 0.5;
    dst[i] = grid.decode<Scalar>(detail::unit_code(u, bits));
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> quantize_activations(const Tensor<Scalar>& a, int bits, ActivationRange range) {
  require_allowed_bits(bits, "activation_bits");
  if (bits == kFullPrecisionBits) return a;
  const GridAffine grid = GridAffine::for_range(range, bits);
  Tensor<Scalar> out(a.rows(), a.cols());
  auto src = a.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double x = static_cast<double>(src[i]);
    const double u = range == ActivationRange::kUnit ? x : (x + 1.0) * 0.5;
    dst[i] = grid.decode<Scalar>(detail::unit_code(u, bits));
  }
  return out;
}

enum class SteKind { kWeight, kActivationUnit, kActivationSymmetric };

/// Straight-through estimator: the rounding step has derivative 1.
///  - weights: d wq / d w = sech^2(w) / max_tanh
///  - activations: pass-through inside the representable range, 0 where clipped
/// An all-zero weight tensor (max_tanh == 0) uses max_tanh = 1 so training can
/// leave the degenerate point.
template <typename Scalar>
Tensor<Scalar> ste_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& pre_quant,
                            SteKind kind, Scalar max_tanh, int bits) {
  detail::require_same_shape("ste_backward", grad_out.rows(), grad_out.cols(),
                             pre_quant.rows(), pre_quant.cols());
  require_allowed_bits(bits, "ste bits");
  if (bits == kFullPrecisionBits) return grad_out;

  Tensor<Scalar> out = grad_out;
  auto g = out.values();
  auto x = pre_quant.values();
  switch (kind) {
    case SteKind::kWeight: {
      const Scalar m = max_tanh == Scalar(0) ? Scalar(1) : max_tanh;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Scalar t = std::tanh(x[i]);
        g[i] *= (Scalar(1) - t * t) / m;
      }
      break;
    }
    case SteKind::kActivationUnit:
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(x[i] >= Scalar(0) && x[i] <= Scalar(1))) g[i] = Scalar(0);
      }
      break;
    case SteKind::kActivationSymmetric:
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(x[i] >= Scalar(-1) && x[i] <= Scalar(1))) g[i] = Scalar(0);
      }
      break;
  }
  return out;
}

}  // namespace lprnn
