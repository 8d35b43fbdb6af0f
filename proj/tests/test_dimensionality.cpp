#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "latent_gauge/dimensionality.hpp"

using namespace latent_gauge;

namespace {

using Columns = std::vector<std::vector<double>>;

IndexTable make_table(const Columns& cols) {
  std::vector<std::string> occ, names;
  for (std::size_t i = 0; i < cols[0].size(); ++i) occ.push_back("o" + std::to_string(i));
  std::vector<std::vector<std::optional<double>>> data;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    names.push_back("idx" + std::to_string(j));
    data.emplace_back(cols[j].begin(), cols[j].end());
  }
  return IndexTable(occ, names, data);
}

double r_single_pass(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sx += a[i], sy += b[i], sxx += a[i] * a[i], syy += b[i] * b[i], sxy += a[i] * b[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

// Eigenvalues of a symmetric 3x3 matrix from the trigonometric solution of
// its characteristic polynomial, descending.
std::array<double, 3> eig3(const double a[3][3]) {
  const double p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
  const double q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
  const double p2 = (a[0][0] - q) * (a[0][0] - q) + (a[1][1] - q) * (a[1][1] - q) + (a[2][2] - q) * (a[2][2] - q) + 2 * p1;
  const double p = std::sqrt(p2 / 6.0);
  double b[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) b[i][j] = (a[i][j] - (i == j ? q : 0.0)) / p;
  const double det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0]) +
                     b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
  const double r = std::clamp(det / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double e1 = q + 2 * p * std::cos(phi);
  const double e3 = q + 2 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  return {e1, 3 * q - e1 - e3, e3};
}

void check_contracts(const PcaResult& p) {
  const auto k = static_cast<Eigen::Index>(p.eigenvalues.size());
  double sum = 0.0, share_sum = 0.0;
  for (std::size_t i = 0; i < p.eigenvalues.size(); ++i) {
    EXPECT_GE(p.eigenvalues[i], -1e-10);
    if (i) EXPECT_LE(p.eigenvalues[i], p.eigenvalues[i - 1]);
    sum += p.eigenvalues[i];
    share_sum += p.variance_shares[i];
  }
  EXPECT_NEAR(sum, static_cast<double>(k), 1e-9);
  EXPECT_NEAR(share_sum, 1.0, 1e-9);
  const Eigen::MatrixXd gram = p.loadings.transpose() * p.loadings;
  EXPECT_LT((gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff(), 1e-8);
  Eigen::VectorXd ev(k);
  for (Eigen::Index i = 0; i < k; ++i) ev(i) = p.eigenvalues[static_cast<std::size_t>(i)];
  const Eigen::MatrixXd rec = p.loadings * ev.asDiagonal() * p.loadings.transpose();
  EXPECT_LT((rec - p.correlation).cwiseAbs().maxCoeff(), 1e-8);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    p.loadings.col(c).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(p.loadings(arg, c), 0.0);
  }
}

}  // namespace

TEST(Correlation, DuplicatedColumnAndBounds) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  Columns cols(3, std::vector<double>(200));
  for (std::size_t i = 0; i < 200; ++i) cols[0][i] = nd(rng), cols[1][i] = cols[0][i], cols[2][i] = nd(rng) + cols[0][i];
  const auto m = correlation_matrix(make_table(cols));
  EXPECT_NEAR(*m.at(0, 1), 1.0, 1e-12);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(*m.at(i, i), 1.0);
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(*m.at(i, j), *m.at(j, i));
      EXPECT_LE(std::abs(*m.at(i, j)), 1.0);
    }
  }
  EXPECT_NEAR(*m.at(0, 2), r_single_pass(cols[0], cols[2]), 1e-12);
}

TEST(Correlation, IndependentColumnsNearZero) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  Columns cols(2, std::vector<double>(10000));
  for (auto& c : cols)
    for (auto& x : c) x = nd(rng);
  EXPECT_LT(std::abs(*correlation_matrix(make_table(cols)).at(0, 1)), 0.05);
}

TEST(Correlation, PairwiseVersusListwiseMissing) {
  std::vector<std::vector<std::optional<double>>> cols{
      {1, 2, 3, 4, std::nullopt, 6}, {2, 1, 4, 3, 5, 7}, {std::nullopt, std::nullopt, std::nullopt, 1, 2, 3}};
  const IndexTable t({"a", "b", "c", "d", "e", "f"}, {"x", "y", "z"}, cols);
  const auto pw = correlation_matrix(t, MissingPolicy::pairwise_complete);
  EXPECT_EQ(pw.n_at(0, 1), 5u);
  EXPECT_FALSE(pw.at(0, 2).has_value());  // only 2 shared rows
  EXPECT_THROW((void)correlation_matrix(t, MissingPolicy::listwise), ValidationError);
  const IndexTable few({"a", "b", "c"}, {"x", "y"}, {{1, 2, std::nullopt}, {1, 2, 3}});
  EXPECT_THROW((void)correlation_matrix(few), ValidationError);
}

TEST(Pca, PerfectlyCorrelatedPair) {
  std::vector<double> x{1, 4, 2, 8, 5, 7}, y;
  for (double v : x) y.push_back(3 * v - 1);
  const auto p = pca(make_table({x, y}));
  EXPECT_NEAR(p.variance_shares[0], 1.0, 1e-12);
  EXPECT_NEAR(p.variance_shares[1], 0.0, 1e-12);
  check_contracts(p);
}

TEST(Pca, IndependentColumnsAreIsotropic) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  const int k = 5;
  Columns cols(k, std::vector<double>(100000));
  for (auto& c : cols)
    for (auto& x : c) x = nd(rng);
  const auto p = pca(make_table(cols));
  for (double s : p.variance_shares) EXPECT_NEAR(s, 1.0 / k, 0.01);
  check_contracts(p);
}

TEST(Pca, ThreeColumnTwoFactorMatchesCharacteristicPolynomial) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  Columns cols(3, std::vector<double>(400));
  for (std::size_t i = 0; i < 400; ++i) {
    const double f1 = nd(rng), f2 = nd(rng);
    cols[0][i] = f1 + 0.3 * nd(rng);
    cols[1][i] = f1 + 0.6 * f2 + 0.3 * nd(rng);
    cols[2][i] = f2 + 0.3 * nd(rng);
  }
  double r[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r[i][j] = i == j ? 1.0 : r_single_pass(cols[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)]);
  const auto expected = eig3(r);
  const auto p = pca(make_table(cols));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p.eigenvalues[i], expected[i], 1e-8);
  check_contracts(p);
  EXPECT_GT(p.variance_shares[0] + p.variance_shares[1], 0.9);
}

TEST(Pca, ListwiseDeletionAndDeterminism) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::vector<std::vector<std::optional<double>>> cols(4, std::vector<std::optional<double>>(60));
  std::vector<std::string> occ;
  for (std::size_t i = 0; i < 60; ++i) {
    occ.push_back("o" + std::to_string(i));
    const double f = nd(rng);
    for (std::size_t j = 0; j < 4; ++j) cols[j][i] = f + nd(rng);
  }
  cols[2][7].reset();
  cols[3][9].reset();
  const IndexTable t(occ, {"a", "b", "c", "d"}, cols);
  const auto p1 = pca(t), p2 = pca(t);
  EXPECT_EQ(p1.n_obs_used, 58u);
  EXPECT_EQ(p1.n_obs_dropped, 2u);
  EXPECT_EQ(p1.eigenvalues, p2.eigenvalues);
  EXPECT_TRUE(p1.loadings == p2.loadings);
  check_contracts(p1);
}

TEST(Pca, Errors) {
  EXPECT_THROW((void)pca(make_table({{1, 2, 3, 4}})), ValidationError);
  EXPECT_THROW((void)pca(make_table({{1, 2, 3}, {3, 1, 2}, {2, 2, 1}})), ValidationError);  // n <= k
}
