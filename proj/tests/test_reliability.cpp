#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "latent_gauge/harness.hpp"
#include "latent_gauge/reliability.hpp"

using namespace latent_gauge;

namespace {

using Vec = std::vector<double>;

// Independent oracles.

double pearson_single_pass(const Vec& a, const Vec& b) {
  const double n = static_cast<double>(a.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sx += a[i];
    sy += b[i];
    sxx += a[i] * a[i];
    syy += b[i] * b[i];
    sxy += a[i] * b[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

// Rank = 1 + (#smaller) + (#equal - 1) / 2, counted directly.
Vec brute_ranks(const Vec& x) {
  Vec r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double y : x) {
      less += y < x[i];
      equal += y == x[i];
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

double kendall_brute(const Vec& a, const Vec& b) {
  long long conc = 0, disc = 0, ta = 0, tb = 0, n0 = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      ++n0;
      const double da = a[i] - a[j], db = b[i] - b[j];
      if (da == 0) ++ta;
      if (db == 0) ++tb;
      if (da * db > 0) ++conc;
      if (da * db < 0) ++disc;
    }
  return static_cast<double>(conc - disc) / std::sqrt(static_cast<double>(n0 - ta) * static_cast<double>(n0 - tb));
}

// Pairwise-disagreement form: within-unit ordered pairs over all ordered
// value pairs in the pooled data.
double alpha_brute(Vec a, Vec b, bool mean_adjusted) {
  if (mean_adjusted) {
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
    ma /= static_cast<double>(a.size());
    mb /= static_cast<double>(b.size());
    for (auto& x : a) x -= ma;
    for (auto& x : b) x -= mb;
  }
  Vec all = a;
  all.insert(all.end(), b.begin(), b.end());
  const double N = static_cast<double>(all.size());
  double within = 0;
  for (std::size_t u = 0; u < a.size(); ++u) within += 2 * (a[u] - b[u]) * (a[u] - b[u]);
  double between = 0;
  for (double x : all)
    for (double y : all) between += (x - y) * (x - y);
  const double d_o = within / N;
  const double d_e = between / (N * (N - 1));
  return 1.0 - d_o / d_e;
}

ScorePanel mock_panel(const MockOptions& opt, const std::vector<std::string>& models, std::size_t n_tasks) {
  MockProvider provider(opt);
  std::vector<ScoreRecord> recs;
  for (const auto& m : models)
    for (std::size_t t = 0; t < n_tasks; ++t) {
      const auto id = "t" + std::to_string(t);
      const auto s = parse_response(provider.complete({m, "", 0.0, id, "A"}), ResponseSchema::augmentation_0_100);
      recs.push_back({id, "o" + std::to_string(t % 40), m, "A", s.augmentation, s.substitution, 1.0});
    }
  return ScorePanel(recs);
}

}  // namespace

TEST(Pearson, Examples) {
  const Vec a{1, 2, 3, 4}, b{2, 1, 4, 3};
  EXPECT_DOUBLE_EQ(pearson(a, a), 1.0);
  EXPECT_DOUBLE_EQ(pearson(Vec{1, 2, 3}, Vec{3, 2, 1}), -1.0);
  EXPECT_NEAR(pearson(a, b), pearson_single_pass(a, b), 1e-15);
  EXPECT_NEAR(pearson(a, b), 0.6, 1e-15);
  try {
    (void)pearson(Vec{1, 1, 1}, Vec{1, 2, 3});
    FAIL();
  } catch (const DegenerateError& e) {
    EXPECT_NE(std::string(e.what()).find("undefined correlation"), std::string::npos);
  }
  EXPECT_THROW((void)pearson(Vec{1, 2}, Vec{1, 2}), DegenerateError);
}

TEST(Spearman, Examples) {
  const Vec a{1, 1, 2}, b{1, 2, 3};
  EXPECT_NEAR(spearman(a, b), pearson_single_pass(brute_ranks(a), brute_ranks(b)), 1e-12);
  EXPECT_NEAR(spearman(a, b), std::sqrt(3.0) / 2.0, 1e-12);
  Vec x{0.3, 1.7, -2.0, 5.5, 4.0}, ex(x.size()), rev(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) ex[i] = std::exp(x[i]), rev[i] = -x[i];
  EXPECT_DOUBLE_EQ(spearman(x, ex), 1.0);
  EXPECT_DOUBLE_EQ(spearman(x, rev), -1.0);
}

TEST(Spearman, EqualsPearsonOnRanksOnRandomTiedData) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> d(0, 9);
  for (int rep = 0; rep < 200; ++rep) {
    Vec a(40), b(40);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = d(rng), b[i] = d(rng) + a[i] / 2;
    const auto ra = brute_ranks(a), rb = brute_ranks(b);
    EXPECT_NEAR(spearman(a, b), pearson(ra, rb), 1e-12);
    EXPECT_EQ(stats::average_ranks(a), ra);
  }
}

TEST(Kendall, Examples) {
  EXPECT_DOUBLE_EQ(kendall_tau_b(Vec{1, 2, 3, 4}, Vec{10, 20, 30, 40}), 1.0);
  const Vec a{1, 2, 2, 3}, b{1, 3, 2, 4};
  EXPECT_NEAR(kendall_tau_b(a, b), kendall_brute(a, b), 1e-15);
  EXPECT_NEAR(kendall_tau_b(a, b), 5.0 / std::sqrt(30.0), 1e-15);
  EXPECT_THROW((void)kendall_tau_b(Vec{1, 1, 1}, Vec{1, 2, 3}), DegenerateError);
}

TEST(Kendall, MatchesBruteForceOnRandomPanels) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = 3 + rng() % 300;
    const int levels = 2 + static_cast<int>(rng() % 50);
    std::uniform_int_distribution<int> d(0, levels);
    Vec a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = d(rng), b[i] = d(rng);
    a[0] = 0, a[1] = 1, b[0] = 0, b[1] = 1;  // avoid the all-tied degenerate case
    EXPECT_NEAR(kendall_tau_b(a, b), kendall_brute(a, b), 1e-12) << "n=" << n;
  }
}

TEST(Kendall, IndependentLargeSampleNearZero) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> nd;
  const std::size_t n = 20000;
  Vec a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = nd(rng), b[i] = nd(rng);
  EXPECT_LT(std::abs(kendall_tau_b(a, b)), 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Krippendorff, IdenticalAndOffset) {
  const Vec a{10, 20, 35, 50, 80};
  EXPECT_DOUBLE_EQ(krippendorff_alpha(a, a, AlphaVariant::raw).alpha, 1.0);
  EXPECT_DOUBLE_EQ(krippendorff_alpha(a, a, AlphaVariant::mean_adjusted).alpha, 1.0);
  Vec b = a;
  for (auto& x : b) x += 8.6;
  EXPECT_EQ(krippendorff_alpha(a, b, AlphaVariant::mean_adjusted).alpha, 1.0);
  EXPECT_LT(krippendorff_alpha(a, b, AlphaVariant::raw).alpha, 1.0);
}

TEST(Krippendorff, ToyPanelMatchesPairwiseOracle) {
  const Vec a{1, 2, 3, 4}, b{1, 3, 3, 5};
  EXPECT_NEAR(krippendorff_alpha(a, b, AlphaVariant::raw).alpha, alpha_brute(a, b, false), 1e-12);
  EXPECT_NEAR(krippendorff_alpha(a, b, AlphaVariant::mean_adjusted).alpha, alpha_brute(a, b, true), 1e-12);
}

TEST(Krippendorff, RandomPanelsMatchOracleAndShiftInvariance) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd(50, 15);
  for (int rep = 0; rep < 60; ++rep) {
    const std::size_t n = 2 + rng() % 200;
    Vec a(n), b(n), c(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = nd(rng), b[i] = 0.7 * a[i] + 0.3 * nd(rng), c[i] = b[i] + 12.5;
    EXPECT_NEAR(krippendorff_alpha(a, b, AlphaVariant::raw).alpha, alpha_brute(a, b, false), 1e-9);
    EXPECT_NEAR(krippendorff_alpha(a, b, AlphaVariant::mean_adjusted).alpha, alpha_brute(a, b, true), 1e-9);
    EXPECT_NEAR(krippendorff_alpha(a, c, AlphaVariant::mean_adjusted).alpha,
                krippendorff_alpha(a, b, AlphaVariant::mean_adjusted).alpha, 1e-9);
    EXPECT_LT(krippendorff_alpha(a, c, AlphaVariant::raw).alpha, krippendorff_alpha(a, b, AlphaVariant::raw).alpha);
  }
}

TEST(Krippendorff, AllValuesIdenticalIsFlaggedOne) {
  const auto r = krippendorff_alpha(Vec{4, 4, 4}, Vec{4, 4, 4}, AlphaVariant::raw);
  EXPECT_EQ(r.alpha, 1.0);
  EXPECT_TRUE(r.degenerate);
}

TEST(BlandAltman, Examples) {
  const Vec a{5, 6, 7};
  const auto same = bland_altman(a, a);
  EXPECT_EQ(same.mean_bias, 0.0);
  EXPECT_EQ(same.loa_low, 0.0);
  EXPECT_EQ(same.loa_high, 0.0);
  const auto r = bland_altman(Vec{0, 0, 0}, Vec{1, 2, 3});
  EXPECT_DOUBLE_EQ(r.mean_bias, 2.0);
  EXPECT_NEAR(r.loa_low, 0.04, 1e-12);
  EXPECT_NEAR(r.loa_high, 3.96, 1e-12);
}

TEST(BlandAltman, MockPanelHalfWidthNear35) {
  MockOptions opt{31};
  opt.offsets["sonnet"] = 8.6;
  // Independent rater noise of 17.9 / sqrt(2) each gives a difference sd of 17.9.
  opt.noise_sd = {{"haiku", 17.9 / std::sqrt(2.0)}, {"sonnet", 17.9 / std::sqrt(2.0)}};
  const auto panel = mock_panel(opt, {"haiku", "sonnet"}, 4000);
  const auto pairs = paired_units(panel, "haiku", "sonnet", ReliabilityLevel::task, ScoreField::augmentation);
  const auto [a, b] = split(pairs);
  const auto ba = bland_altman(a, b);
  const double half = (ba.loa_high - ba.loa_low) / 2.0;
  // Clamping at 0 and 100 trims the tails a little, so allow a few points.
  EXPECT_NEAR(half, 1.96 * 17.9, 3.0);
  EXPECT_NEAR(ba.mean_bias, 8.6, 1.5);
}

TEST(ReliabilityReport, InvariantsAndAffineInvariance) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(50, 10);
  Vec a(300), b(300), a2(300), b2(300);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = nd(rng);
    b[i] = a[i] + nd(rng) - 45;
    a2[i] = 3 + 2 * a[i];
    b2[i] = 3 + 2 * b[i];
  }
  const auto r = compute_reliability(a, b);
  const auto r2 = compute_reliability(a2, b2);
  for (double c : {r.pearson_r, r.spearman_rho, r.kendall_tau_b}) {
    EXPECT_GE(c, -1.0);
    EXPECT_LE(c, 1.0);
  }
  EXPECT_LE(r.alpha_raw, 1.0);
  EXPECT_LE(r.loa_low, r.mean_bias);
  EXPECT_LE(r.mean_bias, r.loa_high);
  EXPECT_NEAR(r.pearson_r, r2.pearson_r, 1e-12);
  EXPECT_NEAR(r.spearman_rho, r2.spearman_rho, 1e-12);
  EXPECT_NEAR(r.kendall_tau_b, r2.kendall_tau_b, 1e-12);
  EXPECT_EQ(r.n_pairs, 300u);
}

TEST(ReliabilityMatrix, IdenticalRatersAllOnes) {
  std::vector<ScoreRecord> recs;
  for (int t = 0; t < 30; ++t)
    for (const char* m : {"x", "y"})
      recs.push_back({"t" + std::to_string(t), "o" + std::to_string(t % 6), m, "A", 3.0 * t, 100 - 3.0 * t, 1.0});
  const ScorePanel panel(recs);
  for (auto level : {ReliabilityLevel::task, ReliabilityLevel::occupation}) {
    const auto m = reliability_matrix(panel, level, ScoreField::augmentation);
    ASSERT_EQ(m.pairs.size(), 1u);
    EXPECT_NEAR(m.pairs[0].report.pearson_r, 1.0, 1e-12);
    EXPECT_NEAR(m.pairs[0].report.spearman_rho, 1.0, 1e-12);
    EXPECT_NEAR(m.pairs[0].report.kendall_tau_b, 1.0, 1e-12);
    EXPECT_NEAR(m.pairs[0].report.alpha_raw, 1.0, 1e-12);
  }
}

TEST(ReliabilityMatrix, OffsetsAndFamilyPattern) {
  MockOptions opt{17};
  opt.offsets = {{"haiku", 0.0}, {"sonnet", 8.6}, {"other", -4.0}};
  opt.noise_sd = {{"haiku", 6.0}, {"sonnet", 6.0}, {"other", 6.0}};
  opt.family = {{"haiku", "fam1"}, {"sonnet", "fam1"}, {"other", "fam2"}};
  opt.family_noise_sd = {{"fam1", 8.0}, {"fam2", 8.0}};
  const auto panel = mock_panel(opt, {"haiku", "sonnet", "other"}, 3000);
  const auto m = reliability_matrix(panel, ReliabilityLevel::task, ScoreField::augmentation);
  ASSERT_EQ(m.pairs.size(), 3u);
  std::map<std::string, ReliabilityReport> by;
  for (const auto& p : m.pairs) by[p.rater_a + "-" + p.rater_b] = p.report;
  // Pairs are ordered by rater id: haiku < other < sonnet.
  EXPECT_NEAR(by.at("haiku-sonnet").mean_bias, 8.6, 1.0);
  EXPECT_NEAR(by.at("haiku-other").mean_bias, -4.0, 1.0);
  EXPECT_NEAR(by.at("other-sonnet").mean_bias, 12.6, 1.0);
  EXPECT_GT(by.at("haiku-sonnet").pearson_r, by.at("haiku-other").pearson_r);
  EXPECT_GT(by.at("haiku-sonnet").pearson_r, by.at("other-sonnet").pearson_r);
  const auto occ = reliability_matrix(panel, ReliabilityLevel::occupation, ScoreField::augmentation);
  EXPECT_EQ(occ.pairs.size(), 3u);
  EXPECT_EQ(occ.pairs[0].report.n_pairs, 40u);
}

TEST(ReliabilityMatrix, TooFewSharedUnitsSkippedWithNote) {
  std::vector<ScoreRecord> recs;
  for (int t = 0; t < 10; ++t) recs.push_back({"t" + std::to_string(t), "o", "x", "A", 1.0 * t, 0.0, 1.0});
  recs.push_back({"t0", "o", "y", "A", 5.0, 0.0, 1.0});
  recs.push_back({"t1", "o", "y", "A", 6.0, 0.0, 1.0});
  const auto m = reliability_matrix(ScorePanel(recs), ReliabilityLevel::task, ScoreField::augmentation);
  EXPECT_TRUE(m.pairs.empty());
  ASSERT_EQ(m.notes.size(), 1u);
}

TEST(Overlap, IdenticalReversedAndPerturbed) {
  std::map<std::string, double> a, rev, pert;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0, 4);
  for (int i = 0; i < 30; ++i) {
    const auto code = "o" + std::to_string(100 + i);
    a[code] = i;
    rev[code] = -i;
    pert[code] = i + nd(rng);
  }
  auto o = top_bottom_overlap(a, a, 10);
  EXPECT_EQ(o.top, 1.0);
  EXPECT_EQ(o.bottom, 1.0);
  o = top_bottom_overlap(a, rev, 10);
  EXPECT_EQ(o.top, 0.0);
  EXPECT_EQ(o.bottom, 0.0);
  // Direct set computation: top-10 of a are i >= 20; bottom-10 are i < 10.
  std::vector<std::pair<double, std::string>> sorted;
  for (const auto& [k, v] : pert) sorted.emplace_back(v, k);
  std::sort(sorted.begin(), sorted.end());
  int top = 0, bottom = 0;
  for (int i = 0; i < 10; ++i) {
    bottom += a.at(sorted[static_cast<std::size_t>(i)].second) < 10;
    top += a.at(sorted[sorted.size() - 1 - static_cast<std::size_t>(i)].second) >= 20;
  }
  o = top_bottom_overlap(a, pert, 10);
  EXPECT_DOUBLE_EQ(o.top, top / 10.0);
  EXPECT_DOUBLE_EQ(o.bottom, bottom / 10.0);
  EXPECT_THROW((void)top_bottom_overlap(a, a, 0), ValidationError);
  EXPECT_THROW((void)top_bottom_overlap(a, a, 15), ValidationError);
}
