#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latent_gauge/aggregate.hpp"
#include "latent_gauge/detail/csv.hpp"
#include "latent_gauge/detail/format.hpp"
#include "latent_gauge/error.hpp"
#include "latent_gauge/stats.hpp"

namespace latent_gauge {

// Named numeric columns of equal length plus optional cluster labels.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<std::string> names, std::vector<std::vector<double>> columns,
          std::vector<std::string> cluster_id = {})
      : names_(std::move(names)), columns_(std::move(columns)), cluster_id_(std::move(cluster_id)) {
    if (names_.size() != columns_.size()) throw ValidationError("dataset: name/column count mismatch");
    if (std::set<std::string>(names_.begin(), names_.end()).size() != names_.size())
      throw ValidationError("dataset: duplicate column names");
    n_ = columns_.empty() ? cluster_id_.size() : columns_.front().size();
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      if (columns_[j].size() != n_) throw ValidationError("dataset: column '" + names_[j] + "' has wrong length");
      if (!stats::all_finite(columns_[j]))
        throw ValidationError("dataset: column '" + names_[j] + "' has missing or non-finite values");
    }
    if (!cluster_id_.empty() && cluster_id_.size() != n_) throw ValidationError("dataset: cluster_id has wrong length");
  }

  [[nodiscard]] std::size_t n_rows() const noexcept { return n_; }
  [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }
  [[nodiscard]] const std::vector<std::string>& cluster_id() const noexcept { return cluster_id_; }
  [[nodiscard]] bool has(std::string_view name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
  }
  [[nodiscard]] const std::vector<double>& column(std::string_view name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw ValidationError("dataset: no column '" + std::string(name) + "'");
    return columns_[static_cast<std::size_t>(it - names_.begin())];
  }

  [[nodiscard]] Dataset with_column(std::string name, std::vector<double> values) const {
    auto names = names_;
    auto cols = columns_;
    auto it = std::find(names.begin(), names.end(), name);
    if (it != names.end()) {
      cols[static_cast<std::size_t>(it - names.begin())] = std::move(values);
    } else {
      names.push_back(std::move(name));
      cols.push_back(std::move(values));
    }
    return {std::move(names), std::move(cols), cluster_id_};
  }

  [[nodiscard]] Dataset with_clusters(std::vector<std::string> clusters) const {
    return {names_, columns_, std::move(clusters)};
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<double>> columns_;
  std::vector<std::string> cluster_id_;
  std::size_t n_ = 0;
};

// Every column numeric except `cluster_column` (kept as labels) and any
// column listed in `ignore`.
inline Dataset parse_dataset_csv(const std::string& text, const std::string& cluster_column = {},
                                 const std::set<std::string>& ignore = {}) {
  auto rows = detail::parse_csv(text);
  if (rows.empty()) throw ValidationError("dataset: empty file");
  const auto& header = rows.front().cells;
  std::vector<std::string> names;
  std::vector<std::size_t> idx;
  std::optional<std::size_t> cluster_idx;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto name = detail::trim(header[i]);
    if (!cluster_column.empty() && name == cluster_column) cluster_idx = i;
    else if (!ignore.contains(name)) {
      names.push_back(name);
      idx.push_back(i);
    }
  }
  if (!cluster_column.empty() && !cluster_idx)
    throw ValidationError("dataset: cluster column '" + cluster_column + "' not found");
  std::vector<std::vector<double>> cols(names.size());
  std::vector<std::string> clusters;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r].cells;
    if (cells.size() != header.size())
      throw ValidationError("dataset: row " + std::to_string(r) + " has " + std::to_string(cells.size()) + " cells");
    for (std::size_t j = 0; j < idx.size(); ++j) {
      auto v = detail::parse_double(cells[idx[j]]);
      if (!v) throw ValidationError("dataset: row " + std::to_string(r) + ", column '" + names[j] + "': '" +
                                    cells[idx[j]] + "' is not numeric");
      cols[j].push_back(*v);
    }
    if (cluster_idx) clusters.push_back(cells[*cluster_idx]);
  }
  return {std::move(names), std::move(cols), std::move(clusters)};
}

inline Dataset load_dataset(const std::string& path, const std::string& cluster_column = {},
                            const std::set<std::string>& ignore = {}) {
  try {
    return parse_dataset_csv(detail::read_file(path), cluster_column, ignore);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

// Standardizes `name` in place: pooled over all rows, or within each value of
// `group_column` when given (e.g. separately per period).
inline Dataset standardize_column(const Dataset& data, const std::string& name, const std::string& group_column = {}) {
  const auto& x = data.column(name);
  if (group_column.empty()) {
    auto z = standardize(x);
    return data.with_column(name, std::move(z));
  }
  const auto& g = data.column(group_column);
  std::map<double, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < g.size(); ++i) groups[g[i]].push_back(i);
  std::vector<double> out(x.size());
  for (const auto& [key, rows] : groups) {
    std::vector<double> sub;
    for (auto r : rows) sub.push_back(x[r]);
    auto z = standardize(sub);
    for (std::size_t k = 0; k < rows.size(); ++k) out[rows[k]] = z[k];
  }
  return data.with_column(name, std::move(out));
}

enum class Estimator { ols, tsls, oriv };

inline std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::ols: return "ols";
    case Estimator::tsls: return "tsls";
    case Estimator::oriv: return "oriv";
  }
  return "?";
}

inline const std::string kIntercept = "(intercept)";

struct RegressionResult {
  Estimator estimator = Estimator::ols;
  std::vector<std::string> names;
  std::vector<double> coefficients;
  std::vector<double> std_errors;
  double r_squared = 0.0;
  std::optional<double> first_stage_f;  // present for tsls and oriv only
  bool weak_instrument = false;         // first-stage F below 10
  std::size_t n_obs = 0;
  std::size_t n_clusters = 0;  // 0 when standard errors are homoskedastic
  Eigen::VectorXd residuals;

  [[nodiscard]] std::size_t position(std::string_view name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ValidationError("regression result: no coefficient '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - names.begin());
  }
  [[nodiscard]] double coef(std::string_view name) const { return coefficients[position(name)]; }
  [[nodiscard]] double se(std::string_view name) const { return std_errors[position(name)]; }
};

struct RegressionOptions {
  bool intercept = true;
  bool cluster = true;  // cluster-robust SEs whenever the dataset carries cluster ids
};

namespace detail {

inline Eigen::MatrixXd design(const Dataset& data, const std::vector<std::string>& names, bool intercept,
                              std::vector<std::string>& labels) {
  const auto n = static_cast<Eigen::Index>(data.n_rows());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(names.size() + (intercept ? 1 : 0)));
  Eigen::Index c = 0;
  if (intercept) {
    x.col(c++).setOnes();
    labels.push_back(kIntercept);
  }
  for (const auto& name : names) {
    const auto& col = data.column(name);
    x.col(c++) = Eigen::Map<const Eigen::VectorXd>(col.data(), n);
    labels.push_back(name);
  }
  return x;
}

inline Eigen::VectorXd vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct LeastSquares {
  Eigen::VectorXd beta;
  Eigen::MatrixXd xtx_inv;  // (X'X)^-1
  double ssr = 0.0;
  Eigen::VectorXd fitted;
};

// Column-pivoted Householder QR. Rank deficiency names the columns the
// pivoting left beyond the numerical rank.
inline Eigen::ColPivHouseholderQR<Eigen::MatrixXd> checked_qr(const Eigen::MatrixXd& x,
                                                              const std::vector<std::string>& labels,
                                                              const std::string& context) {
  if (x.rows() <= x.cols())
    throw RankDeficientError(context + ": " + std::to_string(x.rows()) + " observations for " +
                             std::to_string(x.cols()) + " columns");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < x.cols()) {
    std::string cols;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index i = qr.rank(); i < x.cols(); ++i) {
      if (!cols.empty()) cols += ", ";
      cols += labels[static_cast<std::size_t>(perm(i))];
    }
    throw RankDeficientError(context + ": design matrix is rank deficient; collinear column(s): " + cols);
  }
  return qr;
}

inline LeastSquares least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  const std::vector<std::string>& labels, const std::string& context) {
  auto qr = checked_qr(x, labels, context);
  LeastSquares ls;
  ls.beta = qr.solve(y);
  ls.fitted = x * ls.beta;
  ls.ssr = (y - ls.fitted).squaredNorm();
  const auto k = x.cols();
  Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
  Eigen::MatrixXd rinv = r.template triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  Eigen::MatrixXd inner = rinv * rinv.transpose();
  const auto& p = qr.colsPermutation();
  ls.xtx_inv = p * inner * p.transpose();
  return ls;
}

// Homoskedastic or cluster-robust (CR1 small-sample scaling) covariance.
inline Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const Eigen::VectorXd& resid,
                                  const Eigen::MatrixXd& bread, const std::vector<std::string>& clusters,
                                  std::size_t& n_clusters) {
  const auto n = static_cast<double>(x.rows());
  const auto k = static_cast<double>(x.cols());
  if (clusters.empty()) {
    n_clusters = 0;
    return bread * (resid.squaredNorm() / (n - k));
  }
  std::map<std::string, Eigen::VectorXd> scores;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    auto [it, inserted] = scores.try_emplace(clusters[static_cast<std::size_t>(i)], Eigen::VectorXd::Zero(x.cols()));
    it->second += x.row(i).transpose() * resid(i);
  }
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(x.cols(), x.cols());
  for (const auto& [_, s] : scores) meat += s * s.transpose();
  n_clusters = scores.size();
  const double g = static_cast<double>(n_clusters);
  if (g < 2) throw DegenerateError("cluster-robust covariance needs at least 2 clusters");
  const double c = g / (g - 1.0) * (n - 1.0) / (n - k);
  return c * bread * meat * bread;
}

inline double centered_tss(const Eigen::VectorXd& y) {
  const double m = y.mean();
  return (y.array() - m).square().sum();
}

}  // namespace detail

// Least squares; homoskedastic SEs, or cluster-robust when the dataset has
// cluster ids and options.cluster is set.
inline RegressionResult ols(const Dataset& data, const std::string& outcome, const std::vector<std::string>& regressors,
                            RegressionOptions options = {}) {
  std::vector<std::string> labels;
  const Eigen::MatrixXd x = detail::design(data, regressors, options.intercept, labels);
  const Eigen::VectorXd y = detail::vec(data.column(outcome));
  const auto ls = detail::least_squares(x, y, labels, "ols");
  RegressionResult r;
  r.estimator = Estimator::ols;
  r.names = labels;
  r.n_obs = data.n_rows();
  r.residuals = y - ls.fitted;
  const std::vector<std::string> none;
  const auto cov = detail::covariance(x, r.residuals, ls.xtx_inv, options.cluster ? data.cluster_id() : none,
                                      r.n_clusters);
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    r.coefficients.push_back(ls.beta(i));
    r.std_errors.push_back(std::sqrt(std::max(0.0, cov(i, i))));
  }
  const double tss = options.intercept ? detail::centered_tss(y) : y.squaredNorm();
  if (!(tss > 0.0)) throw DegenerateError("ols: outcome '" + outcome + "' has no variation");
  r.r_squared = std::clamp(1.0 - ls.ssr / tss, 0.0, 1.0);
  return r;
}

// Joint F statistic of the excluded instruments in the first stage of one
// endogenous regressor (homoskedastic form).
inline double first_stage_f(const Dataset& data, const std::string& endogenous, const std::vector<std::string>& instruments,
                            const std::vector<std::string>& exogenous, bool intercept = true) {
  std::vector<std::string> lr, lu;
  const Eigen::VectorXd x = detail::vec(data.column(endogenous));
  auto unrestricted_names = exogenous;
  unrestricted_names.insert(unrestricted_names.end(), instruments.begin(), instruments.end());
  const auto zu = detail::design(data, unrestricted_names, intercept, lu);
  const auto fu = detail::least_squares(zu, x, lu, "first stage for '" + endogenous + "'");
  double ssr_r = 0.0;
  if (exogenous.empty() && !intercept) {
    ssr_r = x.squaredNorm();
  } else {
    const auto zr = detail::design(data, exogenous, intercept, lr);
    ssr_r = detail::least_squares(zr, x, lr, "restricted first stage").ssr;
  }
  const double q = static_cast<double>(instruments.size());
  const double dof = static_cast<double>(zu.rows() - zu.cols());
  if (!(fu.ssr > 0.0)) return std::numeric_limits<double>::infinity();
  return ((ssr_r - fu.ssr) / q) / (fu.ssr / dof);
}

// Two-stage least squares. Coefficients are ordered intercept, exogenous,
// endogenous.
inline RegressionResult tsls(const Dataset& data, const std::string& outcome, const std::vector<std::string>& endogenous,
                             const std::vector<std::string>& instruments, const std::vector<std::string>& exogenous,
                             RegressionOptions options = {}) {
  if (endogenous.empty()) throw ValidationError("tsls: no endogenous regressor");
  if (instruments.size() < endogenous.size())
    throw ValidationError("tsls: fewer excluded instruments than endogenous regressors");
  std::vector<std::string> xl, zl;
  auto x_names = exogenous;
  x_names.insert(x_names.end(), endogenous.begin(), endogenous.end());
  auto z_names = exogenous;
  z_names.insert(z_names.end(), instruments.begin(), instruments.end());
  const Eigen::MatrixXd x = detail::design(data, x_names, options.intercept, xl);
  const Eigen::MatrixXd z = detail::design(data, z_names, options.intercept, zl);
  const Eigen::VectorXd y = detail::vec(data.column(outcome));

  auto zqr = detail::checked_qr(z, zl, "tsls first stage");
  const Eigen::MatrixXd xhat = z * zqr.solve(x);
  const auto second = detail::least_squares(xhat, y, xl, "tsls second stage");

  RegressionResult r;
  r.estimator = Estimator::tsls;
  r.names = xl;
  r.n_obs = data.n_rows();
  r.residuals = y - x * second.beta;
  const std::vector<std::string> none;
  const auto cov = detail::covariance(xhat, r.residuals, second.xtx_inv, options.cluster ? data.cluster_id() : none,
                                      r.n_clusters);
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    r.coefficients.push_back(second.beta(i));
    r.std_errors.push_back(std::sqrt(std::max(0.0, cov(i, i))));
  }
  // Structural residuals: may be negative, unlike the OLS R^2.
  const double tss = detail::centered_tss(y);
  r.r_squared = tss > 0.0 ? 1.0 - r.residuals.squaredNorm() / tss : 0.0;
  double f = std::numeric_limits<double>::infinity();
  for (const auto& e : endogenous) f = std::min(f, first_stage_f(data, e, instruments, exogenous, options.intercept));
  r.first_stage_f = f;
  r.weak_instrument = f < 10.0;
  return r;
}

// Obviously-related IV: the N rows are stacked twice. The regressor is
// measure_a in copy 1 and measure_b in copy 2, the excluded instrument is the
// other measure, each copy has its own intercept, and standard errors are
// clustered by original row (or by the dataset's clusters when present).
// The slope is reported under the name of measure_a.
inline RegressionResult oriv(const Dataset& data, const std::string& outcome, const std::string& measure_a,
                             const std::string& measure_b, const std::vector<std::string>& exogenous = {}) {
  const std::size_t n = data.n_rows();
  const auto& a = data.column(measure_a);
  const auto& b = data.column(measure_b);
  const auto& y = data.column(outcome);
  auto stack = [n](const std::vector<double>& first, const std::vector<double>& second) {
    std::vector<double> out;
    out.reserve(2 * n);
    out.insert(out.end(), first.begin(), first.end());
    out.insert(out.end(), second.begin(), second.end());
    return out;
  };
  const std::string x_name = measure_a;
  const std::string z_name = "instrument(" + measure_b + "|" + measure_a + ")";
  const std::string y_name = "outcome(" + outcome + ")";
  std::vector<std::string> names{y_name, x_name, z_name, "copy_1", "copy_2"};
  std::vector<std::vector<double>> cols{stack(y, y), stack(a, b), stack(b, a)};
  std::vector<double> d1(2 * n, 0.0), d2(2 * n, 0.0);
  std::fill(d1.begin(), d1.begin() + static_cast<std::ptrdiff_t>(n), 1.0);
  std::fill(d2.begin() + static_cast<std::ptrdiff_t>(n), d2.end(), 1.0);
  cols.push_back(std::move(d1));
  cols.push_back(std::move(d2));
  std::vector<std::string> exog{"copy_1", "copy_2"};
  for (const auto& e : exogenous) {
    if (e == measure_a || e == measure_b || e == outcome) throw ValidationError("oriv: control '" + e + "' is a measure or the outcome");
    const auto& c = data.column(e);
    names.push_back(e);
    cols.push_back(stack(c, c));
    exog.push_back(e);
  }
  std::vector<std::string> clusters(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    clusters[i] = clusters[i + n] = data.cluster_id().empty() ? std::to_string(i) : data.cluster_id()[i];
  }
  const Dataset stacked(std::move(names), std::move(cols), std::move(clusters));
  auto r = tsls(stacked, y_name, {x_name}, {z_name}, exog, RegressionOptions{.intercept = false, .cluster = true});
  r.estimator = Estimator::oriv;
  r.n_obs = n;
  return r;
}

struct AttenuationEstimate {
  double lambda_hat = 1.0;
  double var_diff = 0.0;     // Var(A - B)
  double var_primary = 0.0;  // Var(A)
  [[nodiscard]] double correction() const { return 1.0 / lambda_hat; }
};

// lambda = 1 - Var(A - B) / (2 Var(A)), valid when the two measurement
// errors are independent. Sample variances; the ratio does not depend on the
// divisor.
inline AttenuationEstimate attenuation_factor(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("attenuation_factor: series lengths differ");
  if (a.size() < 3) throw DegenerateError("attenuation_factor: need at least 3 pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  AttenuationEstimate e;
  e.var_primary = stats::variance_sample(a);
  if (!(e.var_primary > 0.0)) throw DegenerateError("attenuation_factor: primary measure has zero variance");
  e.var_diff = stats::variance_sample(d);
  e.lambda_hat = 1.0 - e.var_diff / (2.0 * e.var_primary);
  if (!(e.lambda_hat > 0.0)) throw DegenerateError("attenuation_factor: noise dominates signal (lambda <= 0)");
  return e;
}

struct HorseRaceBlock {
  std::string label;
  std::vector<std::string> regressors;
};

struct HorseRaceRow {
  std::string label;
  std::vector<std::string> regressors;  // cumulative, controls included
  double r_squared = 0.0;
  double delta_r_squared = 0.0;  // vs controls-only model
};

// Progressive R^2: controls only, then each block added cumulatively.
inline std::vector<HorseRaceRow> horse_race(const Dataset& data, const std::string& outcome,
                                            const std::vector<std::string>& controls,
                                            const std::vector<HorseRaceBlock>& blocks) {
  std::vector<HorseRaceRow> rows;
  auto fit = [&](const std::string& label, const std::vector<std::string>& regs) {
    try {
      return ols(data, outcome, regs, RegressionOptions{.intercept = true, .cluster = false}).r_squared;
    } catch (const RankDeficientError& e) {
      throw RankDeficientError("horse race step '" + label + "': " + e.what());
    }
  };
  const double base = fit("controls only", controls);
  rows.push_back({"controls only", controls, base, 0.0});
  auto regs = controls;
  std::string label;
  for (const auto& block : blocks) {
    for (const auto& r : block.regressors)
      if (std::find(regs.begin(), regs.end(), r) == regs.end()) regs.push_back(r);
    label = block.label.empty() ? "+ block " + std::to_string(rows.size()) : block.label;
    const double r2 = fit(label, regs);
    rows.push_back({label, regs, r2, r2 - base});
  }
  return rows;
}

}  // namespace latent_gauge
