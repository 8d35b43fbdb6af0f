#include <gtest/gtest.h>

#include <random>

#include "latent_gauge/aggregate.hpp"

using namespace latent_gauge;

namespace {

ScoreRecord rec(std::string task, std::string occ, double score, double weight, std::string rater = "m",
                std::string prompt = "A") {
  return {std::move(task), std::move(occ), std::move(rater), std::move(prompt), score, 100.0 - score, weight};
}

ScorePanel random_panel(std::uint64_t seed, std::size_t n_occ, std::size_t tasks_per) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> score(0.0, 100.0), weight(0.1, 5.0);
  std::vector<ScoreRecord> recs;
  for (std::size_t o = 0; o < n_occ; ++o)
    for (std::size_t t = 0; t < tasks_per; ++t)
      recs.push_back(rec("t" + std::to_string(o) + "_" + std::to_string(t), "o" + std::to_string(o), score(rng), weight(rng)));
  return ScorePanel(recs);
}

}  // namespace

TEST(Aggregate, WeightedMeanExamples) {
  const ScorePanel panel({rec("t1", "eq", 40, 1), rec("t2", "eq", 60, 1), rec("t3", "w", 40, 1), rec("t4", "w", 60, 3),
                          rec("t5", "single", 83, 7)});
  const auto agg = aggregate_occupations(panel, ScoreField::augmentation);
  const auto v = index_values(agg, "m", "A");
  EXPECT_DOUBLE_EQ(v.at("eq"), 50.0);
  EXPECT_DOUBLE_EQ(v.at("w"), 55.0);
  EXPECT_DOUBLE_EQ(v.at("single"), 83.0);
  EXPECT_DOUBLE_EQ(index_values(agg, "m", "A").size(), 3u);
  const auto sub = index_values(aggregate_occupations(panel, ScoreField::substitution), "m", "A");
  EXPECT_DOUBLE_EQ(sub.at("w"), 45.0);
}

TEST(Aggregate, ZeroWeightOccupationExcludedAndListed) {
  const ScorePanel panel({rec("t1", "ok", 40, 1), rec("t2", "ok2", 60, 1), rec("t3", "zero", 10, 0), rec("t4", "zero", 20, 0)});
  const auto agg = aggregate_occupations(panel, ScoreField::augmentation);
  ASSERT_EQ(agg.excluded.size(), 1u);
  EXPECT_EQ(agg.excluded[0].occupation_code, "zero");
  EXPECT_EQ(agg.indices.size(), 2u);
}

TEST(Aggregate, SparseOccupationsFlagged) {
  const ScorePanel panel({rec("t1", "a", 40, 1), rec("t2", "a", 60, 1), rec("t3", "b", 10, 1)});
  const auto agg = aggregate_occupations(panel, ScoreField::augmentation, {2});
  for (const auto& i : agg.indices) EXPECT_EQ(i.sparse, i.occupation_code == "b");
}

TEST(Aggregate, InvariantsOnRandomPanels) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto panel = random_panel(seed, 25, 1 + seed % 7);
    const auto agg = aggregate_occupations(panel, ScoreField::augmentation);
    std::map<std::string, std::pair<double, double>> range;
    for (const auto& r : panel.records()) {
      auto [it, fresh] = range.try_emplace(r.occupation_code, *r.augmentation, *r.augmentation);
      it->second.first = std::min(it->second.first, *r.augmentation);
      it->second.second = std::max(it->second.second, *r.augmentation);
    }
    double sum = 0.0, sumsq = 0.0;
    for (const auto& i : agg.indices) {
      EXPECT_GE(i.value_raw, range[i.occupation_code].first - 1e-12);
      EXPECT_LE(i.value_raw, range[i.occupation_code].second + 1e-12);
      sum += i.value_std;
      sumsq += i.value_std * i.value_std;
    }
    const double n = static_cast<double>(agg.indices.size());
    EXPECT_NEAR(sum / n, 0.0, 1e-9);
    EXPECT_NEAR(sumsq / n - (sum / n) * (sum / n), 1.0, 1e-9);

    // Weight scale equivariance.
    std::vector<ScoreRecord> scaled = panel.records();
    for (auto& r : scaled) r.weight *= 3.7;
    const auto agg2 = aggregate_occupations(ScorePanel(scaled), ScoreField::augmentation);
    for (std::size_t i = 0; i < agg.indices.size(); ++i)
      EXPECT_NEAR(agg.indices[i].value_raw, agg2.indices[i].value_raw, 1e-12);
  }
}

TEST(Aggregate, MonotoneInSingleTaskScores) {
  const auto panel = random_panel(99, 20, 5);
  const auto check = check_aggregation_monotonicity(panel, ScoreField::augmentation, 100);
  EXPECT_EQ(check.probes, 100u);
  EXPECT_EQ(check.violations, 0u);
  EXPECT_FALSE(check.negative_weights);
}

TEST(Standardize, ClosedFormAndErrors) {
  const std::vector<double> x{1, 2, 3};
  const auto z = standardize(x);
  const double s = std::sqrt(2.0 / 3.0);
  EXPECT_NEAR(z[0], -1.0 / s, 1e-12);
  EXPECT_NEAR(z[0], -1.2247, 1e-4);
  EXPECT_EQ(z[1], 0.0);
  EXPECT_NEAR(z[2], 1.0 / s, 1e-12);
  const std::vector<double> c{5, 5, 5};
  try {
    (void)standardize(c);
    FAIL();
  } catch (const DegenerateError& e) {
    EXPECT_NE(std::string(e.what()).find("zero variance"), std::string::npos);
  }
  EXPECT_THROW((void)standardize(std::vector<double>{1.0}), DegenerateError);
}

TEST(Standardize, LevelShiftAffineAndIdempotent) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(50, 20);
  std::vector<double> x(500), shifted(500), affine(500), flipped(500);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = nd(rng);
    shifted[i] = x[i] + 8.6;
    affine[i] = -3.0 + 2.5 * x[i];
    flipped[i] = 7.0 - 0.5 * x[i];
  }
  const auto z = standardize(x), zs = standardize(shifted), za = standardize(affine), zf = standardize(flipped);
  const auto zz = standardize(z);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(z[i], zs[i], 1e-12);
    EXPECT_NEAR(z[i], za[i], 1e-12);
    EXPECT_NEAR(z[i], -zf[i], 1e-12);
    EXPECT_NEAR(z[i], zz[i], 1e-12);
  }
}
