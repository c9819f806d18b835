#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lprnn/packed.hpp"

using lprnn::GridAffine;
using lprnn::PackedTensor;
using lprnn::Tensor;

namespace {

// Real-arithmetic oracle on the unpacked values, plus the magnitude sum used
// to scale the tolerance when the dot product cancels.
struct Oracle {
  std::vector<long double> value;
  std::vector<long double> magnitude;
};

template <typename Scalar>
Oracle oracle_product(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  Oracle o{std::vector<long double>(a.rows() * b.cols()), std::vector<long double>(a.rows() * b.cols())};
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0, m = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) {
        const long double p = static_cast<long double>(a(i, k)) * b(k, j);
        s += p;
        m += std::fabs(p);
      }
      o.value[i * b.cols() + j] = s;
      o.magnitude[i * b.cols() + j] = m;
    }
  return o;
}

PackedTensor random_codes(lprnn::SeededRng& rng, std::size_t rows, std::size_t cols, int bits,
                          GridAffine grid) {
  std::vector<std::uint32_t> codes(rows * cols);
  for (auto& c : codes) c = static_cast<std::uint32_t>(rng.next_u64() % (lprnn::grid_steps(bits) + 1));
  return lprnn::pack_codes(rows, cols, bits, codes, grid);
}

}  // namespace

TEST(Pack, TwoBitCodesLayoutLsbFirst) {
  const auto p = lprnn::pack_codes(1, 4, 2, {0, 1, 2, 3}, GridAffine::symmetric(2));
  ASSERT_EQ(p.bytes.size(), 1u);
  EXPECT_EQ(p.bytes[0], 0xE4);
}

TEST(Pack, TwoBitWeightGridPacksToSameByte) {
  const GridAffine g = GridAffine::symmetric(2);
  const Tensor<float> wq{{g.decode<float>(0), g.decode<float>(1), g.decode<float>(2), g.decode<float>(3)}};
  const auto p = lprnn::pack(wq, 2);
  EXPECT_EQ(p.bytes, (std::vector<std::uint8_t>{0xE4}));
  EXPECT_EQ(lprnn::unpack(p), wq);
}

TEST(Pack, FullPrecisionStoredRawLittleEndian) {
  const Tensor<float> w{{1.0f, -2.5f}};
  const auto p = lprnn::pack(w, 32);
  EXPECT_TRUE(p.raw());
  ASSERT_EQ(p.bytes.size(), 8u);
  // 1.0f = 0x3F800000
  EXPECT_EQ(p.bytes[0], 0x00);
  EXPECT_EQ(p.bytes[3], 0x3F);
  EXPECT_EQ(lprnn::unpack(p), w);
}

TEST(Pack, RowsArePaddedToBytes) {
  const auto p = lprnn::pack_codes(3, 3, 2, std::vector<std::uint32_t>(9, 3), GridAffine::symmetric(2));
  EXPECT_EQ(p.row_stride(), 1u);
  EXPECT_EQ(p.bytes.size(), 3u);
  for (auto b : p.bytes) EXPECT_EQ(b, 0x3F);
  EXPECT_NO_THROW(p.validate());
}

TEST(Pack, SixteenBitCodesAreLittleEndian) {
  const auto p = lprnn::pack_codes(1, 1, 16, {0xABCD}, GridAffine::symmetric(16));
  EXPECT_EQ(p.bytes, (std::vector<std::uint8_t>{0xCD, 0xAB}));
  EXPECT_EQ(p.code(0, 0), 0xABCDu);
}

TEST(Pack, OffGridValueIsAnEncodingError) {
  const Tensor<float> w{{0.1f}};
  EXPECT_THROW(lprnn::pack(w, 2), lprnn::QuantizationError);
  const Tensor<float> out_of_range{{3.0f}};
  EXPECT_THROW(lprnn::pack(out_of_range, 4), lprnn::QuantizationError);
}

TEST(Pack, CodeTooLargeRejected) {
  EXPECT_THROW(lprnn::pack_codes(1, 1, 2, {4}, GridAffine::symmetric(2)), lprnn::QuantizationError);
}

TEST(Pack, NonzeroPaddingDetected) {
  auto p = lprnn::pack_codes(1, 3, 2, {1, 2, 3}, GridAffine::symmetric(2));
  p.bytes[0] |= 0xC0;
  EXPECT_THROW(p.validate(), lprnn::QuantizationError);
}

TEST(Pack, RoundTripRandomQuantizedWeights) {
  lprnn::SeededRng rng(31);
  for (int k : {1, 2, 4, 8, 16}) {
    Tensor<float> w(13, 11);
    rng.fill_uniform(w, -1.0, 1.0);
    const auto q = lprnn::quantize_weights(w, k);
    const auto p = lprnn::pack(q.values, k);
    EXPECT_EQ(lprnn::unpack(p), q.values) << "k=" << k;
    EXPECT_EQ(lprnn::unpack<double>(p).cast<float>(), q.values) << "k=" << k;
  }
}

TEST(Pack, RoundTripActivationGrids) {
  lprnn::SeededRng rng(32);
  for (int k : {1, 2, 4, 8, 16}) {
    for (auto range : {lprnn::ActivationRange::kUnit, lprnn::ActivationRange::kSymmetric}) {
      Tensor<float> a(5, 9);
      rng.fill_uniform(a, -1.5, 1.5);
      const auto q = lprnn::quantize_activations(a, k, range);
      const auto p = lprnn::pack(q, k, GridAffine::for_range(range, k));
      EXPECT_EQ(lprnn::unpack(p), q);
    }
  }
}

TEST(QuantizedMatmul, OneByOneHandExample) {
  const auto a = lprnn::pack_codes(1, 1, 2, {3}, GridAffine::symmetric(2));
  const auto b = lprnn::pack_codes(1, 1, 2, {3}, GridAffine::symmetric(2));
  EXPECT_EQ(lprnn::quantized_matmul(a, b)(0, 0), 1.0f);
}

TEST(QuantizedMatmul, AllZeroCodesAreAllMinusOne) {
  const auto a = lprnn::pack_codes(3, 5, 4, std::vector<std::uint32_t>(15, 0), GridAffine::symmetric(4));
  const auto b = lprnn::pack_codes(5, 2, 4, std::vector<std::uint32_t>(10, 0), GridAffine::symmetric(4));
  const auto got = lprnn::quantized_matmul(a, b);
  for (float v : got.values()) EXPECT_EQ(v, 5.0f);
  const auto want = lprnn::matmul(lprnn::unpack(a), lprnn::unpack(b));
  EXPECT_EQ(got, want);
}

TEST(QuantizedMatmul, Random8x8FourBitMatchesOracle) {
  lprnn::SeededRng rng(77);
  const auto a = random_codes(rng, 8, 8, 4, GridAffine::symmetric(4));
  const auto b = random_codes(rng, 8, 8, 4, GridAffine::symmetric(4));
  const auto got = lprnn::quantized_matmul(a, b);
  const auto o = oracle_product(lprnn::unpack(a), lprnn::unpack(b));
  for (std::size_t i = 0; i < got.size(); ++i) {
    const long double scale = std::max(std::fabs(o.value[i]), o.magnitude[i]);
    EXPECT_LE(std::fabs(got[i] - o.value[i]), 1e-6L * scale) << i;
  }
}

TEST(QuantizedMatmul, MixedGridsAndWidthsMatchOracleInDouble) {
  lprnn::SeededRng rng(78);
  for (int trial = 0; trial < 50; ++trial) {
    const int ka = std::vector<int>{1, 2, 4, 8, 16}[trial % 5];
    const int kb = std::vector<int>{2, 4, 8}[trial % 3];
    const std::size_t m = 1 + rng.next_u64() % 9, n = 1 + rng.next_u64() % 17, p = 1 + rng.next_u64() % 6;
    const auto a = random_codes(rng, m, n, ka, GridAffine::unit(ka));
    const auto b = random_codes(rng, n, p, kb, GridAffine::symmetric(kb));
    const auto got = lprnn::quantized_matmul<double>(a, b);
    const auto o = oracle_product(lprnn::unpack<double>(a), lprnn::unpack<double>(b));
    for (std::size_t i = 0; i < got.size(); ++i) {
      const long double scale = std::max(std::fabs(o.value[i]), o.magnitude[i]);
      EXPECT_LE(std::fabs(got[i] - o.value[i]), 1e-12L * scale);
    }
  }
}

TEST(QuantizedMatmul, ShapeAndRawOperandErrors) {
  const auto a = lprnn::pack_codes(2, 3, 2, std::vector<std::uint32_t>(6, 1), GridAffine::symmetric(2));
  const auto b = lprnn::pack_codes(2, 2, 2, std::vector<std::uint32_t>(4, 1), GridAffine::symmetric(2));
  EXPECT_THROW(lprnn::quantized_matmul(a, b), lprnn::ShapeError);
  const auto raw = lprnn::pack(Tensor<float>(3, 1), 32);
  EXPECT_THROW(lprnn::quantized_matmul(a, raw), lprnn::QuantizationError);
}

TEST(QuantizedMatmul, AccumulatorBoundReportsOverflowRisk) {
  EXPECT_TRUE(lprnn::accumulator_bound(1u << 20, 16, 16).fits);
  const auto bound = lprnn::accumulator_bound(std::size_t{1} << 32, 16, 16);
  EXPECT_FALSE(bound.fits);
  EXPECT_NE(bound.describe().find("inner=4294967296"), std::string::npos);
}
