#include <gtest/gtest.h>

#include <algorithm>

#include "lprnn/config.hpp"
#include "lprnn/widening.hpp"
#include "support/random_spec.hpp"

using lprnn::LayerKind;
using lprnn::LayerSpec;
using lprnn::ModelSpec;

namespace {

ModelSpec deepspeech() {
  return lprnn::load_arch_config(LPRNN_SOURCE_DIR "/configs/deepspeech.reconstruction.ini").spec;
}

// Size increase recomputed from the per-layer bit totals.
double size_increase(const ModelSpec& before, const ModelSpec& after) {
  const auto a = lprnn::model_size(before), b = lprnn::model_size(after);
  return (static_cast<double>(b.total_bits) - static_cast<double>(a.total_bits)) /
         static_cast<double>(a.total_bits);
}

}  // namespace

TEST(ApplyWidening, ThreeHundredByOneAndAHalf) {
  const ModelSpec s = lprnn::lm_model_spec(10000, 200, 300, {4, 4});
  const ModelSpec w = lprnn::apply_widening(s, lprnn::manual_plan(s, {2}, 1.5));
  EXPECT_EQ(w.layers[1].out_dim, 450u);
  EXPECT_EQ(w.layers[2].in_dim, 450u);
  EXPECT_EQ(w.layers[0], s.layers[0]);
}

TEST(ApplyWidening, FcRechainsNextInput) {
  ModelSpec s;
  s.layers = {{1, "a", LayerKind::kFullyConnected, 10, 2048, 4, 32, std::nullopt},
              {2, "b", LayerKind::kFullyConnected, 2048, 100, 4, 32, std::nullopt},
              {3, "out", LayerKind::kOutput, 100, 5, 32, 32, std::nullopt}};
  const ModelSpec w = lprnn::apply_widening(s, lprnn::manual_plan(s, {1}, 1.25));
  EXPECT_EQ(w.layers[0].out_dim, 2560u);
  EXPECT_EQ(w.layers[1].in_dim, 2560u);
  EXPECT_EQ(w.layers[1].out_dim, 100u);
}

TEST(ApplyWidening, BidirectionalFeedsTwiceItsWidth) {
  ModelSpec s;
  s.layers = {{1, "r", LayerKind::kBidirectionalLstm, 10, 8, 32, 32, std::nullopt},
              {2, "out", LayerKind::kOutput, 16, 5, 32, 32, std::nullopt}};
  const ModelSpec w = lprnn::apply_widening(s, lprnn::manual_plan(s, {1}, 1.5));
  EXPECT_EQ(w.layers[1].in_dim, 24u);
}

TEST(ApplyWidening, RoundsHalfAwayFromZero) {
  EXPECT_EQ(lprnn::widened_width(5, 1.5), 8u);    // 7.5
  EXPECT_EQ(lprnn::widened_width(3, 1.5), 5u);    // 4.5
  EXPECT_EQ(lprnn::widened_width(300, 1000.0 / 300.0), 1000u);
}

TEST(ApplyWidening, InvalidPlansRejected) {
  const ModelSpec s = deepspeech();
  EXPECT_THROW(lprnn::manual_plan(s, {6}, 1.25), lprnn::ConfigError);
  EXPECT_THROW(lprnn::manual_plan(s, {7}, 1.25), lprnn::ConfigError);
  EXPECT_THROW(lprnn::manual_plan(s, {1}, 1.0), lprnn::ConfigError);
  EXPECT_THROW(lprnn::manual_plan(s, {1}, 0.5), lprnn::ConfigError);
}

TEST(SelectLayers, ZeroBudgetSelectsNothing) {
  const ModelSpec s = deepspeech();
  const auto plan = lprnn::select_layers(s, 0.0, 1.25);
  EXPECT_TRUE(plan.empty());
  EXPECT_EQ(lprnn::apply_widening(s, plan), s);
}

TEST(SelectLayers, SingleHiddenLayerBypassesSelection) {
  const ModelSpec s = lprnn::lm_model_spec(77, 32, 64, {4, 4});
  const auto plan = lprnn::select_layers(s, 0.02, 1.5);
  EXPECT_TRUE(plan.bypassed_selection);
  EXPECT_EQ(plan.selected, (std::vector<std::size_t>{2}));
  EXPECT_EQ(plan.factor, 1.5);
  EXPECT_EQ(lprnn::apply_widening(s, plan).layers[1].out_dim, 96u);
}

TEST(SelectLayers, DeepSpeechPicksFirstSecondAndFifth) {
  const auto plan = lprnn::select_layers(deepspeech(), 0.02, 1.25);
  EXPECT_EQ(plan.selected, (std::vector<std::size_t>{1, 2, 5}));
  EXPECT_FALSE(plan.bypassed_selection);
}

TEST(SelectLayers, NoFullyConnectedCandidates) {
  ModelSpec s;
  s.layers = {{1, "r1", LayerKind::kLstm, 10, 8, 32, 32, std::nullopt},
              {2, "r2", LayerKind::kLstm, 8, 8, 32, 32, std::nullopt},
              {3, "out", LayerKind::kOutput, 8, 5, 32, 32, std::nullopt}};
  const auto plan = lprnn::select_layers(s, 0.5, 1.25);
  EXPECT_TRUE(plan.empty());
  EXPECT_TRUE(plan.no_candidates);
}

TEST(WideningProperties, RandomSpecsAndPlans) {
  lprnn::SeededRng rng(2718);
  for (int trial = 0; trial < 1000; ++trial) {
    const ModelSpec s = support::random_spec(rng);
    ASSERT_NO_THROW(s.validate());
    EXPECT_EQ(lprnn::apply_widening(s, lprnn::WidenPlan{}), s);

    std::vector<std::size_t> pick;
    for (const auto& l : s.layers) {
      if (l.kind != LayerKind::kOutput && rng.next_u64() % 2) pick.push_back(l.index);
    }
    const double factor = 1.0 + 0.05 * static_cast<double>(1 + rng.next_u64() % 60);
    const ModelSpec w = lprnn::apply_widening(s, lprnn::manual_plan(s, pick, factor));
    EXPECT_TRUE(support::chain_consistent(w));
    for (std::size_t i = 0; i < s.layers.size(); ++i) {
      const bool selected = std::find(pick.begin(), pick.end(), i + 1) != pick.end();
      if (selected) {
        EXPECT_EQ(w.layers[i].out_dim, lprnn::widened_width(s.layers[i].out_dim, factor));
      } else {
        EXPECT_EQ(w.layers[i].out_dim, s.layers[i].out_dim);
      }
    }

    const double budget = 0.5 * rng.next_unit();
    const auto plan = lprnn::select_layers(s, budget, factor);
    for (std::size_t idx : plan.selected) EXPECT_NE(s.layer(idx).kind, LayerKind::kOutput);
    if (!plan.bypassed_selection) {
      for (std::size_t idx : plan.selected) EXPECT_EQ(s.layer(idx).kind, LayerKind::kFullyConnected);
      EXPECT_LE(size_increase(s, lprnn::apply_widening(s, plan)), budget);
      const auto bigger = lprnn::select_layers(s, budget * 1.5 + 0.01, factor);
      EXPECT_TRUE(std::includes(bigger.selected.begin(), bigger.selected.end(), plan.selected.begin(),
                                plan.selected.end()));
    }
  }
}
