#include <gtest/gtest.h>

#include "latent_gauge/harness.hpp"
#include "latent_gauge/sensitivity.hpp"
#include "latent_gauge/simulate.hpp"

using namespace latent_gauge;

namespace {

PromptGridConfig grid(double task, double prompt, double resid, std::uint64_t seed = 1) {
  PromptGridConfig c;
  c.share_task = task;
  c.share_prompt = prompt;
  c.share_residual = resid;
  c.seed = seed;
  return c;
}

ScorePanel transform(const ScorePanel& panel, double a, double b) {
  std::vector<ScoreRecord> recs = panel.records();
  for (auto& r : recs) r.augmentation = a + b * *r.augmentation;
  return ScorePanel(recs);
}

}  // namespace

TEST(PromptRankMatrix, DuplicatedPromptIsOne) {
  std::vector<ScoreRecord> recs;
  for (int t = 0; t < 20; ++t)
    for (const char* p : {"A", "B"})
      recs.push_back({"t" + std::to_string(t), "o", "m", p, static_cast<double>((t * 37) % 23), std::nullopt, 1.0});
  const auto m = prompt_rank_matrix(ScorePanel(recs), "m");
  EXPECT_DOUBLE_EQ(*m.at(0, 1), 1.0);
  EXPECT_EQ(m.n_shared[1], 20u);
}

TEST(PromptRankMatrix, InversePromptStronglyNegative) {
  auto c = grid(0.75, 0.05, 0.20);
  c.inverse_prompts = {"D"};
  const auto g = simulate_prompt_grid(c);
  const auto m = prompt_rank_matrix(g.panel, "sim");
  const auto d = m.index_of("D");
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LT(*m.at(i, d), -0.6);
    EXPECT_GT(*m.at(i, d), -0.9);
  }
}

TEST(PromptRankMatrix, IndependentMockPromptsNearZero) {
  // The mock's base score depends on (task, prompt), so prompts are independent.
  MockProvider provider(MockOptions{4});
  std::vector<ScoreRecord> recs;
  for (int t = 0; t < 2000; ++t)
    for (const char* p : {"A", "B", "C"}) {
      const auto id = "t" + std::to_string(t);
      const auto s = parse_response(provider.complete({"m", "", 0.0, id, p}), ResponseSchema::augmentation_0_100);
      recs.push_back({id, "o", "m", p, s.augmentation, s.substitution, 1.0});
    }
  const auto m = prompt_rank_matrix(ScorePanel(recs), "m");
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j) EXPECT_LT(std::abs(*m.at(i, j)), 3.0 / std::sqrt(2000.0));
}

TEST(DetectAndInvert, NoNegativePromptsIsIdentity) {
  const auto g = simulate_prompt_grid(grid(0.6, 0.1, 0.3));
  const auto m = prompt_rank_matrix(g.panel, "sim");
  const auto r = detect_and_invert(m, g.panel);
  EXPECT_TRUE(r.inverted.empty());
  EXPECT_EQ(panel_to_csv(r.panel), panel_to_csv(g.panel));
}

TEST(DetectAndInvert, SingleInversePromptFlipsSignExactly) {
  auto c = grid(0.75, 0.05, 0.20, 3);
  c.inverse_prompts = {"D"};
  const auto g = simulate_prompt_grid(c);
  const auto before = prompt_rank_matrix(g.panel, "sim");
  const auto r = detect_and_invert(before, g.panel);
  ASSERT_EQ(r.inverted, (std::vector<std::string>{"D"}));
  const auto after = prompt_rank_matrix(r.panel, "sim");
  const auto d = after.index_of("D");
  EXPECT_NEAR(*after.at(0, d), -*before.at(0, d), 1e-12);
  for (std::size_t i = 0; i < after.size(); ++i)
    for (std::size_t j = 0; j < after.size(); ++j) EXPECT_GT(*after.at(i, j), 0.0);
}

TEST(DetectAndInvert, TwoMutuallyNegativePromptsInvertLaterId) {
  std::vector<ScoreRecord> recs;
  for (int t = 0; t < 30; ++t) {
    recs.push_back({"t" + std::to_string(t), "o", "m", "P1", 1.0 * t, std::nullopt, 1.0});
    recs.push_back({"t" + std::to_string(t), "o", "m", "P2", 90.0 - 2.0 * t, std::nullopt, 1.0});
  }
  const ScorePanel panel(recs);
  const auto r = detect_and_invert(prompt_rank_matrix(panel, "m"), panel);
  EXPECT_EQ(r.inverted, (std::vector<std::string>{"P2"}));
}

TEST(DetectAndInvert, PolarityFlagForcesInversion) {
  const auto g = simulate_prompt_grid(grid(0.6, 0.1, 0.3));
  const auto m = prompt_rank_matrix(g.panel, "sim");
  // Flagging a direct prompt inverse makes it the negative one; nothing else flips.
  EXPECT_THROW((void)detect_and_invert(m, g.panel, {{"B", Polarity::inverse}}), ValidationError);
  auto c = grid(0.75, 0.05, 0.2);
  c.inverse_prompts = {"C"};
  const auto g2 = simulate_prompt_grid(c);
  const auto r = detect_and_invert(prompt_rank_matrix(g2.panel, "sim"), g2.panel, {{"C", Polarity::inverse}});
  EXPECT_EQ(r.inverted, (std::vector<std::string>{"C"}));
}

TEST(DetectAndInvert, AmbiguousPatternDemandsManualFlags) {
  PromptRankMatrix m;
  m.rater_id = "m";
  m.prompt_ids = {"A", "B", "C"};
  m.entries = {1.0, -0.5, 0.5, -0.5, 1.0, 0.5, 0.5, 0.5, 1.0};
  m.n_shared.assign(9, 10);
  const ScorePanel panel({{"t", "o", "m", "A", 1.0, std::nullopt, 1.0}});
  try {
    (void)detect_and_invert(m, panel);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("manually"), std::string::npos);
  }
  std::vector<std::optional<double>> with_gap = m.entries;
  with_gap[1] = with_gap[3] = std::nullopt;
  m.entries = with_gap;
  EXPECT_THROW((void)detect_and_invert(m, panel), ValidationError);
}

TEST(DetectAndInvert, Involution) {
  auto c = grid(0.75, 0.05, 0.20, 9);
  c.inverse_prompts = {"B"};
  const auto g = simulate_prompt_grid(c);
  const auto twice = invert_prompts(invert_prompts(g.panel, "sim", {"B"}, ScoreField::augmentation), "sim", {"B"},
                                    ScoreField::augmentation);
  for (std::size_t i = 0; i < g.panel.size(); ++i)
    EXPECT_NEAR(*twice.records()[i].augmentation, *g.panel.records()[i].augmentation, 1e-12);
  const auto once = detect_and_invert(prompt_rank_matrix(g.panel, "sim"), g.panel);
  const auto again = detect_and_invert(prompt_rank_matrix(once.panel, "sim"), once.panel);
  EXPECT_TRUE(again.inverted.empty());
}

TEST(VarianceDecomposition, ConstantWithinTaskIsAllTask) {
  const auto g = simulate_prompt_grid(grid(1.0, 0.0, 0.0));
  const auto v = variance_decomposition(g.panel, "sim");
  EXPECT_EQ(v.share_task, 1.0);
  EXPECT_EQ(v.share_prompt, 0.0);
  EXPECT_EQ(v.share_residual, 0.0);
}

TEST(VarianceDecomposition, PureNoise) {
  const auto g = simulate_prompt_grid(grid(0.0, 0.0, 1.0, 5));
  const auto v = variance_decomposition(g.panel, "sim");
  EXPECT_NEAR(v.share_task, 0.0, 0.02);
  EXPECT_NEAR(v.share_prompt, 0.0, 0.02);
  EXPECT_NEAR(v.share_task + v.share_prompt + v.share_residual, 1.0, 1e-9);
}

TEST(VarianceDecomposition, PlantedSharesRecoveredAcrossSeeds) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto g = simulate_prompt_grid(grid(0.14, 0.22, 0.64, seed));
    const auto v = variance_decomposition(g.panel, "sim");
    EXPECT_NEAR(v.share_task, 0.14, 0.03) << seed;
    EXPECT_NEAR(v.share_prompt, 0.22, 0.03) << seed;
    EXPECT_NEAR(v.share_residual, 0.64, 0.03) << seed;
    EXPECT_EQ(v.n_tasks, 1000u);
    EXPECT_EQ(v.n_prompts, 4u);
  }
}

TEST(VarianceDecomposition, ShiftAndScaleInvariance) {
  const auto g = simulate_prompt_grid(grid(0.3, 0.2, 0.5, 2));
  const auto v = variance_decomposition(g.panel, "sim");
  const auto half = transform(g.panel, 0.0, 0.5);
  const auto k = variance_decomposition(half, "sim");
  const auto s = variance_decomposition(transform(half, 7.0, 1.0), "sim");
  EXPECT_NEAR(k.share_task, s.share_task, 1e-9);
  EXPECT_NEAR(k.share_prompt, s.share_prompt, 1e-9);
  EXPECT_NEAR(v.share_task, k.share_task, 1e-9);
  EXPECT_NEAR(v.share_prompt, k.share_prompt, 1e-9);
  EXPECT_NEAR(v.var_task * 0.25, k.var_task, 1e-9);
}

TEST(VarianceDecomposition, MissingCellsAndErrors) {
  auto c = grid(0.3, 0.2, 0.5);
  c.n_tasks = 100;
  const auto g = simulate_prompt_grid(c);
  auto recs = g.panel.records();
  std::vector<ScoreRecord> few(recs.begin() + 1, recs.end());  // 1 of 400 missing
  const auto v = variance_decomposition(ScorePanel(few), "sim");
  EXPECT_EQ(v.n_imputed, 1u);
  EXPECT_FALSE(v.flags.empty());
  std::vector<ScoreRecord> many;
  for (std::size_t i = 0; i < recs.size(); ++i)
    if (i % 10 != 0) many.push_back(recs[i]);  // 10% missing
  EXPECT_THROW((void)variance_decomposition(ScorePanel(many), "sim"), ValidationError);
  std::vector<ScoreRecord> one_prompt;
  for (const auto& r : recs)
    if (r.prompt_id == "A") one_prompt.push_back(r);
  EXPECT_THROW((void)variance_decomposition(ScorePanel(one_prompt), "sim"), ValidationError);
}

TEST(VarianceDecomposition, NegativeComponentTruncatedAndFlagged) {
  // Prompt means identical by construction, residual dominates: the prompt MoM estimate goes negative.
  std::vector<ScoreRecord> recs;
  const double pattern[4][3] = {{10, 20, 30}, {20, 30, 10}, {30, 10, 20}, {15, 25, 20}};
  for (int t = 0; t < 4; ++t)
    for (int p = 0; p < 3; ++p)
      recs.push_back({"t" + std::to_string(t), "o", "m", std::string(1, static_cast<char>('A' + p)), pattern[t][p],
                      std::nullopt, 1.0});
  const auto v = variance_decomposition(ScorePanel(recs), "m");
  EXPECT_GE(v.share_prompt, 0.0);
  EXPECT_GE(v.share_task, 0.0);
  EXPECT_NEAR(v.share_task + v.share_prompt + v.share_residual, 1.0, 1e-9);
  EXPECT_FALSE(v.flags.empty());
}
