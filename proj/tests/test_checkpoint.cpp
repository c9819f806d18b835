#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "lprnn/accounting.hpp"
#include "lprnn/checkpoint.hpp"
#include "lprnn/training.hpp"

using lprnn::LmModel;
using lprnn::QuantSpec;

namespace {

lprnn::Vocab char_vocab(std::size_t n) {
  std::vector<std::string> toks;
  for (std::size_t i = 0; i < n; ++i) toks.emplace_back(1, static_cast<char>(33 + i));
  return lprnn::Vocab::from_tokens(lprnn::VocabMode::kChar, toks);
}

lprnn::TokenStream stream_for(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  lprnn::SeededRng rng(seed);
  lprnn::TokenStream s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = static_cast<int>((i % 11 == 0 ? rng.next_u64() : i * 3) % vocab);
  return s;
}

LmModel<float> trained(QuantSpec q, bool quantize_io = true, std::size_t hidden = 12) {
  auto m = lprnn::init_model<float>({20, 6, hidden}, q, quantize_io, 5);
  lprnn::TrainSchedule s;
  s.batch = 2;
  s.seqlen = 8;
  s.epochs = 1;
  lprnn::train(m, stream_for(300, 20, 1), {}, s);
  return m;
}

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

}  // namespace

TEST(Checkpoint, RoundTripEvalIsBitIdentical) {
  const auto valid = stream_for(200, 20, 2);
  for (QuantSpec q : {QuantSpec{32, 32}, QuantSpec{4, 4}, QuantSpec{2, 8}, QuantSpec{1, 32}, QuantSpec{16, 2}}) {
    for (bool io : {true, false}) {
      const auto m = trained(q, io);
      const auto ck = lprnn::decode_checkpoint(lprnn::encode_checkpoint(m, char_vocab(20)));
      const auto before = lprnn::evaluate_ppw(m, valid, 32);
      const auto after = lprnn::evaluate_ppw(ck.model, valid, 32);
      EXPECT_EQ(before.ppw, after.ppw) << q.weight_bits << "/" << q.activation_bits << " io=" << io;
      EXPECT_EQ(before.mean_nll, after.mean_nll);
      EXPECT_EQ(ck.model.quant, q);
      EXPECT_EQ(ck.model.frozen, q.weight_bits != 32);
      EXPECT_EQ(ck.vocab, char_vocab(20));
    }
  }
}

TEST(Checkpoint, FrozenModelRoundTripsAgain) {
  const auto m = trained({4, 4});
  const auto once = lprnn::encode_checkpoint(m, char_vocab(20));
  const auto ck = lprnn::decode_checkpoint(once);
  EXPECT_EQ(lprnn::encode_checkpoint(ck.model, ck.vocab), once);
}

TEST(Checkpoint, FullPrecisionRoundTripRestoresExactWeights) {
  const auto m = trained({32, 32});
  const auto ck = lprnn::decode_checkpoint(lprnn::encode_checkpoint(m, char_vocab(20)));
  EXPECT_EQ(ck.model.embedding, m.embedding);
  EXPECT_EQ(ck.model.lstm.weight, m.lstm.weight);
  EXPECT_EQ(ck.model.lstm.bias, m.lstm.bias);
  EXPECT_EQ(ck.model.projection, m.projection);
  EXPECT_EQ(ck.model.projection_bias, m.projection_bias);
  EXPECT_FALSE(ck.model.frozen);
}

// Payload bytes agree with the size accounting once per-row padding is
// added back.
TEST(Checkpoint, PayloadMatchesAccounting) {
  for (int k : {1, 2, 4, 8, 16, 32}) {
    const auto m = lprnn::init_model<float>({77, 32, 30}, {k, 32}, true, 1);
    const auto ck = lprnn::decode_checkpoint(lprnn::encode_checkpoint(m, char_vocab(77)));
    std::uint64_t exact_bits = 0;
    for (const auto& r : ck.records) {
      EXPECT_EQ(r.payload_bytes, r.rows * ceil_div(r.cols * static_cast<std::uint64_t>(r.bits), 8)) << r.name;
      exact_bits += r.rows * r.cols * static_cast<std::uint64_t>(r.bits);
    }
    EXPECT_EQ(exact_bits, lprnn::model_size(lprnn::lm_model_spec(77, 32, 30, {k, 32})).total_bits) << k;
  }
}

TEST(Checkpoint, FourBitPayloadIsAnEighthOfFullPrecision) {
  const auto full = lprnn::decode_checkpoint(
      lprnn::encode_checkpoint(lprnn::init_model<float>({77, 32, 128}, {32, 32}, true, 1), char_vocab(77)));
  const auto four = lprnn::decode_checkpoint(
      lprnn::encode_checkpoint(lprnn::init_model<float>({77, 32, 128}, {4, 4}, true, 1), char_vocab(77)));
  const double ratio = static_cast<double>(four.payload_bytes()) / static_cast<double>(full.payload_bytes());
  EXPECT_NEAR(ratio, 0.125, 0.01);
}

TEST(Checkpoint, CorruptionDetected) {
  const auto bytes = lprnn::encode_checkpoint(trained({4, 2}), char_vocab(20));
  const auto decode = [](std::vector<std::uint8_t> b) { return lprnn::decode_checkpoint(b); };

  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{40}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(decode(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<long>(cut))),
                 lprnn::CorruptCheckpoint)
        << "truncated at " << cut;
  }
  for (std::size_t pos = 0; pos < bytes.size(); pos += 7) {
    auto b = bytes;
    b[pos] ^= 0x10;
    EXPECT_THROW(decode(b), lprnn::CorruptCheckpoint) << "flipped byte " << pos;
  }
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode(magic), lprnn::CorruptCheckpoint);
  auto version = bytes;
  version[6] = 2;
  EXPECT_THROW(decode(version), lprnn::CorruptCheckpoint);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode(trailing), lprnn::CorruptCheckpoint);
}

TEST(Checkpoint, ZeroEpochsStoresTheInitialisedModel) {
  auto m = lprnn::init_model<float>({20, 6, 12}, {32, 32}, true, 42);
  lprnn::TrainSchedule s;
  s.epochs = 0;
  lprnn::train(m, stream_for(300, 20, 1), {}, s);
  EXPECT_EQ(lprnn::encode_checkpoint(m, char_vocab(20)),
            lprnn::encode_checkpoint(lprnn::init_model<float>({20, 6, 12}, {32, 32}, true, 42), char_vocab(20)));
}

TEST(Checkpoint, SameSeedSameBytes) {
  EXPECT_EQ(lprnn::encode_checkpoint(trained({4, 4}), char_vocab(20)),
            lprnn::encode_checkpoint(trained({4, 4}), char_vocab(20)));
}

TEST(Checkpoint, FileRoundTripAndMissingFile) {
  const auto dir = std::filesystem::temp_directory_path() / "lprnn_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "m.lprnn").string();
  const auto m = trained({8, 8});
  lprnn::save_checkpoint(m, char_vocab(20), path);
  const auto ck = lprnn::load_checkpoint(path);
  EXPECT_EQ(lprnn::encode_checkpoint(ck.model, ck.vocab), lprnn::encode_checkpoint(m, char_vocab(20)));
  EXPECT_THROW(lprnn::load_checkpoint((dir / "absent.lprnn").string()), lprnn::DataError);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, VocabularyMustMatchModel) {
  EXPECT_THROW(lprnn::encode_checkpoint(trained({4, 4}), char_vocab(19)), lprnn::ConfigError);
}
