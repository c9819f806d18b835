#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "lprnn/corpus.hpp"
#include "lprnn/tensor.hpp"

using lprnn::Vocab;
using lprnn::VocabMode;

TEST(BuildVocab, FrequencyThenLexicographicOrder) {
  const Vocab v = lprnn::build_vocab("a b a", VocabMode::kWord);
  EXPECT_EQ(v.size(), 4u);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"a", "<eos>", "b", "<unk>"}));
  EXPECT_EQ(v.id("a"), 0);
  EXPECT_EQ(v.id("zzz"), v.unk_id());
}

TEST(BuildVocab, TruncatesToMaxSize) {
  // 12000 distinct words with distinct frequencies, PTB-style lines.
  std::string text;
  for (int w = 0; w < 12000; ++w) {
    const int reps = w < 11000 ? 3 : 1;
    for (int r = 0; r < reps; ++r) text += "w" + std::to_string(w) + (w % 10 == 9 ? "\n" : " ");
  }
  const Vocab v = lprnn::build_vocab(text, VocabMode::kWord, 10000);
  EXPECT_EQ(v.size(), 10000u);
  EXPECT_GE(v.unk_id(), 0);
  EXPECT_GE(v.eos_id(), 0);
  EXPECT_EQ(v.id("w11999"), v.unk_id());
}

TEST(BuildVocab, PreexistingUnkIsKeptVerbatim) {
  const Vocab v = lprnn::build_vocab("the <unk> cat\nthe <unk> dog\n", VocabMode::kWord);
  const auto ids = v.encode("the <unk> bird\n");
  EXPECT_EQ(ids[1], v.unk_id());
  EXPECT_EQ(ids[2], v.unk_id());
  // "the" and "<unk>" both appear twice, <eos> twice: lexicographic tie-break.
  EXPECT_EQ(v.token(0), "<eos>");
  EXPECT_EQ(v.token(1), "<unk>");
  EXPECT_EQ(v.token(2), "the");
}

TEST(BuildVocab, CharModeOneIdPerByte) {
  EXPECT_EQ(lprnn::build_vocab("ab", VocabMode::kChar).size(), 2u);
  const Vocab v = lprnn::build_vocab("hello\n", VocabMode::kChar);
  EXPECT_EQ(v.size(), 5u);
  EXPECT_EQ(v.token(0), "l");
  EXPECT_THROW(v.id("z"), lprnn::DataError);
}

TEST(BuildVocab, EmptyTextIsADataError) {
  EXPECT_THROW(lprnn::build_vocab("", VocabMode::kWord), lprnn::DataError);
  EXPECT_THROW(lprnn::build_vocab("", VocabMode::kChar), lprnn::DataError);
  EXPECT_THROW(lprnn::build_vocab("   \n", VocabMode::kChar).id("x"), lprnn::DataError);
}

TEST(BuildVocab, Deterministic) {
  const std::string text = "x y z y x w\nq r y\n";
  EXPECT_EQ(lprnn::build_vocab(text, VocabMode::kWord, 5), lprnn::build_vocab(text, VocabMode::kWord, 5));
}

TEST(Encode, RoundTripUpToUnk) {
  const std::string text = "the cat sat\non the mat\n";
  const Vocab v = lprnn::build_vocab(text, VocabMode::kWord);
  EXPECT_EQ(v.decode(v.encode(text)), text);
  const Vocab small = lprnn::build_vocab(text, VocabMode::kWord, 4);
  EXPECT_EQ(small.decode(small.encode("the dog\n")), "the <unk>\n");

  const std::string raw = "Snow fell. 42!\n\tEnd";
  const Vocab c = lprnn::build_vocab(raw, VocabMode::kChar);
  EXPECT_EQ(c.decode(c.encode(raw)), raw);
}

TEST(Encode, FromTokensRestoresTheSameVocab) {
  const Vocab v = lprnn::build_vocab("a b c a\n", VocabMode::kWord);
  EXPECT_EQ(Vocab::from_tokens(VocabMode::kWord, v.tokens()), v);
  EXPECT_THROW(Vocab::from_tokens(VocabMode::kWord, {"a", "b"}), lprnn::DataError);
  EXPECT_THROW(Vocab::from_tokens(VocabMode::kChar, {"a", "a"}), lprnn::DataError);
}

TEST(Batchify, TenTokensTwoLanesTwoSteps) {
  const lprnn::TokenStream s{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const auto b = lprnn::batchify(s, 2, 2);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[0].inputs.ids, (std::vector<int>{0, 1, 5, 6}));
  EXPECT_EQ(b[0].targets.ids, (std::vector<int>{1, 2, 6, 7}));
  EXPECT_EQ(b[1].inputs.ids, (std::vector<int>{2, 3, 7, 8}));
  EXPECT_EQ(b[1].targets.ids, (std::vector<int>{3, 4, 8, 9}));
}

TEST(Batchify, SingleWindowCoversTheStream) {
  const lprnn::TokenStream s{4, 8, 15, 16, 23, 42};
  const auto b = lprnn::batchify(s, 1, s.size() - 1);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0].inputs.ids, (std::vector<int>{4, 8, 15, 16, 23}));
  EXPECT_EQ(b[0].targets.ids, (std::vector<int>{8, 15, 16, 23, 42}));
}

TEST(Batchify, TooShortAndBadParams) {
  const lprnn::TokenStream s{1, 2, 3, 4};
  EXPECT_THROW(lprnn::batchify(s, 2, 2), lprnn::DataError);
  EXPECT_THROW(lprnn::batchify(s, 1, 4), lprnn::DataError);
  EXPECT_THROW(lprnn::batchify(s, 0, 1), lprnn::ConfigError);
  EXPECT_THROW(lprnn::batchify(s, 1, 0), lprnn::ConfigError);
}

TEST(Batchify, DeterministicAndIterable) {
  lprnn::TokenStream s(257);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<int>((i * 31) % 17);
  const auto a = lprnn::batchify(s, 3, 7);
  const auto b = lprnn::batchify(s, 3, 7);
  std::size_t n = 0;
  for (const auto& w : a) {
    EXPECT_EQ(w.inputs.ids, b[n].inputs.ids);
    EXPECT_EQ(w.targets.ids, b[n].targets.ids);
    ++n;
  }
  EXPECT_EQ(n, a.size());
}

TEST(Batchify, TargetIsNextTokenInTheSameLane) {
  lprnn::SeededRng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t batch = 1 + rng.next_u64() % 6, seqlen = 1 + rng.next_u64() % 9;
    const std::size_t n = batch * (seqlen + 1) + 1 + rng.next_u64() % 200;
    lprnn::TokenStream s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = static_cast<int>(i);  // ids encode positions
    const auto bs = lprnn::batchify(s, batch, seqlen);
    const std::size_t lane = n / batch;
    EXPECT_EQ(bs.size(), (lane - 1) / seqlen);
    for (const auto& w : bs) {
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t t = 0; t < seqlen; ++t) {
          const int in = w.inputs.at(r, t);
          EXPECT_EQ(w.targets.at(r, t), in + 1);
          EXPECT_EQ(static_cast<std::size_t>(in) / lane, r);
          EXPECT_EQ(static_cast<std::size_t>(in + 1) / lane, r);
        }
      }
    }
  }
}
