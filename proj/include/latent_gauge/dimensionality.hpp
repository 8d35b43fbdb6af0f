#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latent_gauge/error.hpp"
#include "latent_gauge/panel.hpp"
#include "latent_gauge/reliability.hpp"

namespace latent_gauge {

enum class MissingPolicy { pairwise_complete, listwise };

struct CorrelationMatrix {
  std::vector<std::string> names;
  // Row-major k x k; nullopt where a pair has fewer than 3 complete rows.
  std::vector<std::optional<double>> entries;
  std::vector<std::size_t> n_complete;  // rows used per entry
  MissingPolicy policy = MissingPolicy::pairwise_complete;

  [[nodiscard]] std::size_t size() const noexcept { return names.size(); }
  [[nodiscard]] std::optional<double> at(std::size_t i, std::size_t j) const { return entries[i * size() + j]; }
  [[nodiscard]] std::size_t n_at(std::size_t i, std::size_t j) const { return n_complete[i * size() + j]; }
};

namespace detail {

inline std::vector<std::size_t> complete_rows(const IndexTable& table) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    bool ok = true;
    for (std::size_t j = 0; j < table.n_columns() && ok; ++j) ok = table.column(j)[i].has_value();
    if (ok) rows.push_back(i);
  }
  return rows;
}

}  // namespace detail

inline CorrelationMatrix correlation_matrix(const IndexTable& table,
                                            MissingPolicy policy = MissingPolicy::pairwise_complete) {
  const std::size_t k = table.n_columns();
  for (std::size_t j = 0; j < k; ++j)
    if (table.non_missing(j) < 3)
      throw ValidationError("correlation_matrix: column '" + table.names()[j] + "' has fewer than 3 values");

  CorrelationMatrix m;
  m.names = table.names();
  m.policy = policy;
  m.entries.assign(k * k, std::nullopt);
  m.n_complete.assign(k * k, 0);

  std::vector<std::size_t> listwise_rows;
  if (policy == MissingPolicy::listwise) {
    listwise_rows = detail::complete_rows(table);
    if (listwise_rows.size() < 3)
      throw ValidationError("correlation_matrix: fewer than 3 listwise-complete rows");
  }

  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      std::vector<double> x, y;
      const auto& ci = table.column(i);
      const auto& cj = table.column(j);
      if (policy == MissingPolicy::listwise) {
        for (auto r : listwise_rows) {
          x.push_back(*ci[r]);
          y.push_back(*cj[r]);
        }
      } else {
        for (std::size_t r = 0; r < table.n_rows(); ++r) {
          if (ci[r] && cj[r]) {
            x.push_back(*ci[r]);
            y.push_back(*cj[r]);
          }
        }
      }
      m.n_complete[i * k + j] = m.n_complete[j * k + i] = x.size();
      if (x.size() < 3) continue;
      std::optional<double> r;
      try {
        r = i == j ? 1.0 : pearson(x, y);
      } catch (const DegenerateError&) {
        r = std::nullopt;
      }
      if (i == j && stats::variance_pop(x) == 0.0) r = std::nullopt;
      m.entries[i * k + j] = m.entries[j * k + i] = r;
    }
  }
  return m;
}

struct PcaResult {
  std::vector<std::string> names;
  std::vector<double> eigenvalues;      // descending
  std::vector<double> variance_shares;  // eigenvalue / trace
  Eigen::MatrixXd loadings;             // index x component, orthonormal columns
  Eigen::MatrixXd correlation;          // listwise correlation matrix decomposed
  std::size_t n_obs_used = 0;
  std::size_t n_obs_dropped = 0;  // rows removed by listwise deletion
};

// Eigen-decomposition of the listwise-complete correlation matrix. Within
// each component the loading of largest magnitude is made positive.
inline PcaResult pca(const IndexTable& table) {
  const std::size_t k = table.n_columns();
  if (k < 2) throw ValidationError("pca: need at least 2 index columns");
  const auto rows = detail::complete_rows(table);
  if (rows.size() <= k)
    throw ValidationError("pca: " + std::to_string(rows.size()) + " listwise-complete rows, need more than " +
                          std::to_string(k));

  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd z(n, static_cast<Eigen::Index>(k));
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> col;
    col.reserve(rows.size());
    for (auto r : rows) col.push_back(*table.column(j)[r]);
    const double m = stats::mean(col);
    const double sd = std::sqrt(stats::sum_sq_dev(col, m) / static_cast<double>(col.size()));
    if (!(sd > 0.0)) throw DegenerateError("pca: column '" + table.names()[j] + "' is constant");
    for (Eigen::Index i = 0; i < n; ++i) z(i, static_cast<Eigen::Index>(j)) = (col[static_cast<std::size_t>(i)] - m) / sd;
  }
  Eigen::MatrixXd corr = (z.transpose() * z) / static_cast<double>(n);
  // Exact unit diagonal and symmetry.
  for (Eigen::Index i = 0; i < corr.rows(); ++i) {
    corr(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < corr.cols(); ++j) {
      const double v = std::clamp(0.5 * (corr(i, j) + corr(j, i)), -1.0, 1.0);
      corr(i, j) = corr(j, i) = v;
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(corr);
  if (solver.info() != Eigen::Success) throw Error("pca: eigensolver did not converge");
  const Eigen::VectorXd evals = solver.eigenvalues();  // ascending
  const Eigen::MatrixXd evecs = solver.eigenvectors();

  PcaResult out;
  out.names = table.names();
  out.n_obs_used = rows.size();
  out.n_obs_dropped = table.n_rows() - rows.size();
  out.correlation = corr;
  out.loadings.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  double trace = 0.0;
  for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(k); ++c) {
    const Eigen::Index src = static_cast<Eigen::Index>(k) - 1 - c;
    double ev = evals(src);
    if (ev < 0.0 && ev > -1e-10) ev = 0.0;  // rank-deficient input
    out.eigenvalues.push_back(ev);
    trace += ev;
    Eigen::VectorXd v = evecs.col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    out.loadings.col(c) = v;
  }
  for (double ev : out.eigenvalues) out.variance_shares.push_back(ev / trace);
  return out;
}

}  // namespace latent_gauge
