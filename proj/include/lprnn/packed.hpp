#pragma once

// Bit-packed storage for grid-valued tensors and the integer-accumulated GEMM
// that runs directly on packed codes.
//
// Layout: row-major element order, codes packed least-significant-bit first
// within each byte, every row padded up to a byte boundary. Bit-widths
// 1/2/4/8/16 use exact-width codes; 32-bit tensors are stored as raw
// little-endian IEEE-754 binary32.

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "lprnn/errors.hpp"
#include "lprnn/quantization.hpp"
#include "lprnn/tensor.hpp"

namespace lprnn {

struct PackedTensor {
  int bits = kFullPrecisionBits;
  std::size_t rows = 0;
  std::size_t cols = 0;
  double scale = 1.0;
  double offset = 0.0;
  std::vector<std::uint8_t> bytes;

  bool raw() const noexcept { return bits == kFullPrecisionBits; }

  static std::size_t row_stride(std::size_t cols, int bits) {
    return (cols * static_cast<std::size_t>(bits) + 7) / 8;
  }
  std::size_t row_stride() const { return row_stride(cols, bits); }
  std::size_t expected_bytes() const { return rows * row_stride(); }

  GridAffine grid() const { return {scale, offset}; }

  std::uint32_t code(std::size_t r, std::size_t c) const {
    const std::uint8_t* row = bytes.data() + r * row_stride();
    const std::size_t bit = c * static_cast<std::size_t>(bits);
    if (bits >= 8) {
      std::uint32_t v = 0;
      for (int b = 0; b < bits / 8; ++b) {
        v |= static_cast<std::uint32_t>(row[bit / 8 + b]) << (8 * b);
      }
      return v;
    }
    return (row[bit / 8] >> (bit % 8)) & grid_steps(bits);
  }

  void set_code(std::size_t r, std::size_t c, std::uint32_t v) {
    std::uint8_t* row = bytes.data() + r * row_stride();
    const std::size_t bit = c * static_cast<std::size_t>(bits);
    if (bits >= 8) {
      for (int b = 0; b < bits / 8; ++b) {
        row[bit / 8 + b] = static_cast<std::uint8_t>(v >> (8 * b));
      }
      return;
    }
    row[bit / 8] = static_cast<std::uint8_t>(row[bit / 8] | (v << (bit % 8)));
  }

  /// Structural checks: allowed width, payload length, zero padding bits.
  void validate() const {
    if (!is_allowed_bits(bits)) {
      throw QuantizationError("packed tensor: bad bit-width " + std::to_string(bits));
    }
    if (bytes.size() != expected_bytes()) {
      throw QuantizationError("packed tensor: payload of " + std::to_string(bytes.size()) +
                              " bytes, expected " + std::to_string(expected_bytes()));
    }
    const std::size_t used_bits = cols * static_cast<std::size_t>(bits);
    if (raw() || used_bits % 8 == 0) return;
    const auto pad_mask = static_cast<std::uint8_t>(0xFFu << (used_bits % 8));
    for (std::size_t r = 0; r < rows; ++r) {
      if (bytes[r * row_stride() + row_stride() - 1] & pad_mask) {
        throw QuantizationError("packed tensor: nonzero padding bits in row " +
                                std::to_string(r));
      }
    }
  }
};

/// Packs a tensor whose entries all sit on the k-bit grid described by
/// `grid`. Off-grid entries are an encoding error.
template <typename Scalar>
PackedTensor pack(const Tensor<Scalar>& wq, int bits, GridAffine grid) {
  require_allowed_bits(bits, "pack bits");
  PackedTensor p;
  p.bits = bits;
  p.rows = wq.rows();
  p.cols = wq.cols();
  if (bits == kFullPrecisionBits) {
    p.scale = 1.0;
    p.offset = 0.0;
    p.bytes.resize(p.expected_bytes());
    std::size_t at = 0;
    for (Scalar v : wq.values()) {
      const auto f = static_cast<float>(v);
      if (static_cast<Scalar>(f) != v && !std::isnan(v)) {
        throw QuantizationError("pack: value not representable as 32-bit float");
      }
      const auto u = std::bit_cast<std::uint32_t>(f);
      for (int b = 0; b < 4; ++b) p.bytes[at++] = static_cast<std::uint8_t>(u >> (8 * b));
    }
    return p;
  }

  p.scale = grid.scale;
  p.offset = grid.offset;
  p.bytes.assign(p.expected_bytes(), 0);
  const std::uint32_t max_code = grid_steps(bits);
  for (std::size_t r = 0; r < p.rows; ++r) {
    for (std::size_t c = 0; c < p.cols; ++c) {
      const Scalar v = wq(r, c);
      const double idx = std::round((static_cast<double>(v) - grid.offset) / grid.scale);
      if (!(idx >= 0.0 && idx <= max_code) ||
          grid.decode<Scalar>(static_cast<std::uint32_t>(idx)) != v) {
        throw QuantizationError("pack: entry (" + std::to_string(r) + "," +
                                std::to_string(c) + ") = " + std::to_string(v) +
                                " is not on the " + std::to_string(bits) + "-bit grid");
      }
      p.set_code(r, c, static_cast<std::uint32_t>(idx));
    }
  }
  return p;
}

/// Weight-grid packing: scale 2/(2^k-1), offset -1.
template <typename Scalar>
PackedTensor pack(const Tensor<Scalar>& wq, int bits) {
  return pack(wq, bits, bits == kFullPrecisionBits ? GridAffine{} : GridAffine::symmetric(bits));
}

/// Packs raw integer codes directly (used to build GEMM operands).
inline PackedTensor pack_codes(std::size_t rows, std::size_t cols, int bits,
                               const std::vector<std::uint32_t>& codes, GridAffine grid) {
  require_allowed_bits(bits, "pack bits");
  if (bits == kFullPrecisionBits) throw QuantizationError("pack_codes: 32-bit has no codes");
  if (codes.size() != rows * cols) throw ShapeError("pack_codes: code count mismatch");
  PackedTensor p{bits, rows, cols, grid.scale, grid.offset, {}};
  p.bytes.assign(p.expected_bytes(), 0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::uint32_t v = codes[r * cols + c];
      if (v > grid_steps(bits)) {
        throw QuantizationError("pack_codes: code " + std::to_string(v) + " >= 2^" +
                                std::to_string(bits));
      }
      p.set_code(r, c, v);
    }
  }
  return p;
}

template <typename Scalar = float>
Tensor<Scalar> unpack(const PackedTensor& p) {
  p.validate();
  Tensor<Scalar> out(p.rows, p.cols);
  if (p.raw()) {
    std::size_t at = 0;
    for (auto& v : out.values()) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(p.bytes[at++]) << (8 * b);
      v = static_cast<Scalar>(std::bit_cast<float>(u));
    }
    return out;
  }
  const GridAffine grid = p.grid();
  for (std::size_t r = 0; r < p.rows; ++r) {
    for (std::size_t c = 0; c < p.cols; ++c) out(r, c) = grid.decode<Scalar>(p.code(r, c));
  }
  return out;
}

struct AccumulatorBound {
  std::size_t inner = 0;
  int a_bits = 0;
  int b_bits = 0;
  long double worst_case = 0;  // inner * (2^ka - 1) * (2^kb - 1)
  bool fits = false;

  std::string describe() const {
    return "inner=" + std::to_string(inner) + " k_a=" + std::to_string(a_bits) +
           " k_b=" + std::to_string(b_bits) + " worst-case |sum|=" +
           std::to_string(static_cast<double>(worst_case)) + " vs int64 max " +
           std::to_string(std::numeric_limits<std::int64_t>::max());
  }
};

inline AccumulatorBound accumulator_bound(std::size_t inner, int a_bits, int b_bits) {
  AccumulatorBound b{inner, a_bits, b_bits, 0, false};
  b.worst_case = static_cast<long double>(inner) * grid_steps(a_bits) * grid_steps(b_bits);
  b.fits = b.worst_case <= static_cast<long double>(std::numeric_limits<std::int64_t>::max());
  return b;
}

/// Product of two packed code matrices. The code products are accumulated
/// exactly in int64, then the affine decode is applied once per output:
///   sum_k (sa*a + oa)(sb*b + ob)
///     = sa*sb*sum(a*b) + sa*ob*rowsum(a) + oa*sb*colsum(b) + n*oa*ob
template <typename Scalar = float>
Tensor<Scalar> quantized_matmul(const PackedTensor& a, const PackedTensor& b) {
  if (a.raw() || b.raw()) {
    throw QuantizationError("quantized_matmul: operands must be packed codes, not 32-bit raw");
  }
  if (a.cols != b.rows) {
    throw ShapeError("quantized_matmul: inner dimensions differ, " +
                     Tensor<Scalar>::shape_string(a.rows, a.cols) + " * " +
                     Tensor<Scalar>::shape_string(b.rows, b.cols));
  }
  a.validate();
  b.validate();
  const AccumulatorBound bound = accumulator_bound(a.cols, a.bits, b.bits);
  if (!bound.fits) {
    throw QuantizationError("quantized_matmul: accumulator overflow risk, " + bound.describe());
  }

  const std::size_t n = a.cols;
  std::vector<std::int64_t> ac(a.rows * n), bc(n * b.cols);
  for (std::size_t r = 0; r < a.rows; ++r)
    for (std::size_t k = 0; k < n; ++k) ac[r * n + k] = a.code(r, k);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t c = 0; c < b.cols; ++c) bc[k * b.cols + c] = b.code(k, c);

  std::vector<std::int64_t> row_sum(a.rows, 0), col_sum(b.cols, 0);
  for (std::size_t r = 0; r < a.rows; ++r)
    for (std::size_t k = 0; k < n; ++k) row_sum[r] += ac[r * n + k];
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t c = 0; c < b.cols; ++c) col_sum[c] += bc[k * b.cols + c];

  std::vector<std::int64_t> acc(b.cols);
  Tensor<Scalar> out(a.rows, b.cols);
  const long double ss = static_cast<long double>(a.scale) * b.scale;
  const long double so = static_cast<long double>(a.scale) * b.offset;
  const long double os = static_cast<long double>(a.offset) * b.scale;
  const long double oo = static_cast<long double>(n) * a.offset * b.offset;
  for (std::size_t r = 0; r < a.rows; ++r) {
    std::fill(acc.begin(), acc.end(), 0);
    for (std::size_t k = 0; k < n; ++k) {
      const std::int64_t av = ac[r * n + k];
      if (av == 0) continue;
      const std::int64_t* brow = bc.data() + k * b.cols;
      for (std::size_t c = 0; c < b.cols; ++c) acc[c] += av * brow[c];
    }
    for (std::size_t c = 0; c < b.cols; ++c) {
      const long double v = ss * acc[c] + so * row_sum[r] + os * col_sum[c] + oo;
      out(r, c) = static_cast<Scalar>(v);
    }
  }
  return out;
}

}  // namespace lprnn
