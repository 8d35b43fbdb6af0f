#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "latent_gauge/aggregate.hpp"
#include "latent_gauge/error.hpp"
#include "latent_gauge/panel.hpp"
#include "latent_gauge/stats.hpp"

namespace latent_gauge {

// One unit scored by two raters.
struct PairedScores {
  std::string unit_id;
  double a = 0.0;
  double b = 0.0;
};

namespace detail {

inline void check_pair_sizes(std::span<const double> a, std::span<const double> b, std::size_t min_n,
                             const char* what) {
  if (a.size() != b.size()) throw ValidationError(std::string(what) + ": series lengths differ");
  if (a.size() < min_n)
    throw DegenerateError(std::string(what) + ": need at least " + std::to_string(min_n) + " pairs, got " +
                          std::to_string(a.size()));
  if (!stats::all_finite(a) || !stats::all_finite(b)) throw ValidationError(std::string(what) + ": non-finite value");
}

inline double clamp_unit(double r) { return std::clamp(r, -1.0, 1.0); }

}  // namespace detail

inline std::pair<std::vector<double>, std::vector<double>> split(std::span<const PairedScores> pairs) {
  std::pair<std::vector<double>, std::vector<double>> out;
  out.first.reserve(pairs.size());
  out.second.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.first.push_back(p.a);
    out.second.push_back(p.b);
  }
  return out;
}

// Product-moment correlation from centered sums.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  detail::check_pair_sizes(a, b, 3, "pearson");
  const double ma = stats::mean(a);
  const double mb = stats::mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw DegenerateError("undefined correlation: constant series");
  return detail::clamp_unit(sab / std::sqrt(saa * sbb));
}

// Pearson correlation of average ranks.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  detail::check_pair_sizes(a, b, 3, "spearman");
  const auto ra = stats::average_ranks(a);
  const auto rb = stats::average_ranks(b);
  return pearson(ra, rb);
}

struct KendallCounts {
  std::int64_t n_pairs = 0;    // n(n-1)/2
  std::int64_t ties_a = 0;     // pairs tied on a
  std::int64_t ties_b = 0;     // pairs tied on b
  std::int64_t ties_both = 0;  // pairs tied on both
  std::int64_t discordant = 0;

  // concordant - discordant
  [[nodiscard]] std::int64_t score() const { return n_pairs - ties_a - ties_b + ties_both - 2 * discordant; }
};

namespace detail {

inline std::int64_t tied_pairs_in_runs(std::span<const std::size_t> order, auto&& equal) {
  std::int64_t total = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && equal(order[i], order[j])) ++j;
    const auto t = static_cast<std::int64_t>(j - i);
    total += t * (t - 1) / 2;
    i = j;
  }
  return total;
}

// Bottom-up merge sort of `keys` (values of b in the current order), counting
// strict inversions.
inline std::int64_t count_inversions(std::vector<double>& keys) {
  const std::size_t n = keys.size();
  std::vector<double> buf(n);
  std::int64_t inversions = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n);
      const std::size_t hi = std::min(lo + 2 * width, n);
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (keys[j] < keys[i]) {
          inversions += static_cast<std::int64_t>(mid - i);
          buf[k++] = keys[j++];
        } else {
          buf[k++] = keys[i++];
        }
      }
      while (i < mid) buf[k++] = keys[i++];
      while (j < hi) buf[k++] = keys[j++];
    }
    std::swap(keys, buf);
  }
  return inversions;
}

}  // namespace detail

// Knight's O(n log n) concordance count.
inline KendallCounts kendall_counts(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  KendallCounts c;
  c.n_pairs = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - (n > 0 ? 1 : 0)) / 2;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return a[i] < a[j] || (a[i] == a[j] && b[i] < b[j]);
  });
  c.ties_a = detail::tied_pairs_in_runs(order, [&](std::size_t i, std::size_t j) { return a[i] == a[j]; });
  c.ties_both = detail::tied_pairs_in_runs(
      order, [&](std::size_t i, std::size_t j) { return a[i] == a[j] && b[i] == b[j]; });
  std::vector<double> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = b[order[i]];
  c.discordant = detail::count_inversions(keys);
  // keys is now sorted ascending.
  std::int64_t ties_b = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && keys[j] == keys[i]) ++j;
    const auto t = static_cast<std::int64_t>(j - i);
    ties_b += t * (t - 1) / 2;
    i = j;
  }
  c.ties_b = ties_b;
  return c;
}

inline double tau_b_from_counts(const KendallCounts& c) {
  if (c.ties_a >= c.n_pairs || c.ties_b >= c.n_pairs)
    throw DegenerateError("kendall tau-b undefined: all pairs tied on one side");
  const double denom = std::sqrt(static_cast<double>(c.n_pairs - c.ties_a)) *
                       std::sqrt(static_cast<double>(c.n_pairs - c.ties_b));
  return detail::clamp_unit(static_cast<double>(c.score()) / denom);
}

// Tie-corrected Kendall rank correlation.
inline double kendall_tau_b(std::span<const double> a, std::span<const double> b) {
  detail::check_pair_sizes(a, b, 3, "kendall_tau_b");
  return tau_b_from_counts(kendall_counts(a, b));
}

enum class AlphaVariant { raw, mean_adjusted };

struct AlphaResult {
  double alpha = 1.0;
  double observed_disagreement = 0.0;
  double expected_disagreement = 0.0;
  bool degenerate = false;  // no expected disagreement; alpha defined as 1
};

// Krippendorff's alpha for two raters with the interval metric, built from
// the coincidence matrix of pairable values. The mean-adjusted variant first
// removes each rater's own mean.
inline AlphaResult krippendorff_alpha(std::span<const double> a, std::span<const double> b,
                                      AlphaVariant variant = AlphaVariant::raw) {
  detail::check_pair_sizes(a, b, 2, "krippendorff_alpha");
  std::vector<double> va(a.begin(), a.end());
  std::vector<double> vb(b.begin(), b.end());
  if (variant == AlphaVariant::mean_adjusted) {
    const double ma = stats::mean(va);
    const double mb = stats::mean(vb);
    for (auto& v : va) v -= ma;
    for (auto& v : vb) v -= mb;
  }

  // Distinct values and their coincidence counts. Each unit contributes the
  // ordered pairs (a,b) and (b,a) with weight 1/(m_u - 1) = 1.
  std::vector<double> values;
  values.reserve(2 * va.size());
  values.insert(values.end(), va.begin(), va.end());
  values.insert(values.end(), vb.begin(), vb.end());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  auto index_of = [&](double v) {
    return static_cast<std::size_t>(std::lower_bound(values.begin(), values.end(), v) - values.begin());
  };
  std::map<std::pair<std::size_t, std::size_t>, double> coincidence;
  for (std::size_t u = 0; u < va.size(); ++u) {
    const auto c = index_of(va[u]);
    const auto k = index_of(vb[u]);
    coincidence[{c, k}] += 1.0;
    coincidence[{k, c}] += 1.0;
  }
  std::vector<double> marginal(values.size(), 0.0);
  for (const auto& [ck, o] : coincidence) marginal[ck.first] += o;
  const double n = 2.0 * static_cast<double>(va.size());

  double observed = 0.0;
  for (const auto& [ck, o] : coincidence) {
    const double d = values[ck.first] - values[ck.second];
    observed += o * d * d;
  }
  observed /= n;

  // sum_c sum_k n_c n_k (c - k)^2 = 2 n sum_c n_c (c - m)^2 - 2 (sum_c n_c (c - m))^2
  double m = 0.0;
  for (std::size_t c = 0; c < values.size(); ++c) m += marginal[c] * values[c];
  m /= n;
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t c = 0; c < values.size(); ++c) {
    const double d = values[c] - m;
    s1 += marginal[c] * d;
    s2 += marginal[c] * d * d;
  }
  const double expected = (2.0 * n * s2 - 2.0 * s1 * s1) / (n * (n - 1.0));

  AlphaResult r;
  r.observed_disagreement = observed;
  r.expected_disagreement = expected;
  if (!(expected > 0.0)) {
    r.degenerate = true;
    r.alpha = 1.0;
    return r;
  }
  r.alpha = 1.0 - observed / expected;
  return r;
}

struct BlandAltman {
  double mean_bias = 0.0;  // mean of b - a
  double loa_low = 0.0;
  double loa_high = 0.0;
  double sd_diff = 0.0;  // sample sd of b - a
};

inline BlandAltman bland_altman(std::span<const double> a, std::span<const double> b) {
  detail::check_pair_sizes(a, b, 3, "bland_altman");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = b[i] - a[i];
  BlandAltman r;
  r.mean_bias = stats::mean(d);
  r.sd_diff = std::sqrt(stats::variance_sample(d));
  r.loa_low = r.mean_bias - 1.96 * r.sd_diff;
  r.loa_high = r.mean_bias + 1.96 * r.sd_diff;
  return r;
}

inline double mean_abs_diff(std::span<const double> a, std::span<const double> b) {
  detail::check_pair_sizes(a, b, 1, "mean_abs_diff");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(b[i] - a[i]);
  return s / static_cast<double>(a.size());
}

struct ReliabilityReport {
  double pearson_r = 0.0;
  double spearman_rho = 0.0;
  double kendall_tau_b = 0.0;
  double alpha_raw = 0.0;
  double alpha_mean_adjusted = 0.0;
  double mean_abs_diff = 0.0;
  double mean_bias = 0.0;  // rater b minus rater a
  double loa_low = 0.0;
  double loa_high = 0.0;
  std::size_t n_pairs = 0;
  bool alpha_degenerate = false;
};

// Full agreement battery for one rater pair. Throws DegenerateError when any
// statistic is undefined.
inline ReliabilityReport compute_reliability(std::span<const double> a, std::span<const double> b) {
  ReliabilityReport r;
  r.n_pairs = a.size();
  r.pearson_r = pearson(a, b);
  r.spearman_rho = spearman(a, b);
  r.kendall_tau_b = kendall_tau_b(a, b);
  const auto raw = krippendorff_alpha(a, b, AlphaVariant::raw);
  const auto adj = krippendorff_alpha(a, b, AlphaVariant::mean_adjusted);
  r.alpha_raw = raw.alpha;
  r.alpha_mean_adjusted = adj.alpha;
  r.alpha_degenerate = raw.degenerate || adj.degenerate;
  r.mean_abs_diff = mean_abs_diff(a, b);
  const auto ba = bland_altman(a, b);
  r.mean_bias = ba.mean_bias;
  r.loa_low = ba.loa_low;
  r.loa_high = ba.loa_high;
  return r;
}

inline ReliabilityReport compute_reliability(std::span<const PairedScores> pairs) {
  const auto [a, b] = split(pairs);
  return compute_reliability(a, b);
}

enum class ReliabilityLevel { task, occupation };

inline std::string_view to_string(ReliabilityLevel l) { return l == ReliabilityLevel::task ? "task" : "occupation"; }

struct RaterPairReport {
  std::string rater_a;
  std::string rater_b;
  ReliabilityLevel level = ReliabilityLevel::task;
  ReliabilityReport report;
};

struct ReliabilityMatrix {
  std::vector<RaterPairReport> pairs;
  std::vector<std::string> notes;  // skipped pairs and why
};

// Units shared by two raters. Task level pairs on (task_id, prompt_id);
// occupation level pairs on (occupation_code, prompt_id) after weighted
// aggregation.
inline std::vector<PairedScores> paired_units(const ScorePanel& panel, std::string_view rater_a,
                                              std::string_view rater_b, ReliabilityLevel level, ScoreField field) {
  std::map<std::pair<std::string, std::string>, double> ua, ub;
  if (level == ReliabilityLevel::task) {
    for (const auto& r : panel.records()) {
      auto v = r.get(field);
      if (!v) continue;
      if (r.rater_id == rater_a) ua[{r.task_id, r.prompt_id}] = *v;
      if (r.rater_id == rater_b) ub[{r.task_id, r.prompt_id}] = *v;
    }
  } else {
    const auto agg = aggregate_occupations(panel, field);
    for (const auto& idx : agg.indices) {
      if (idx.rater_id == rater_a) ua[{idx.occupation_code, idx.prompt_id}] = idx.value_raw;
      if (idx.rater_id == rater_b) ub[{idx.occupation_code, idx.prompt_id}] = idx.value_raw;
    }
  }
  std::vector<PairedScores> out;
  for (const auto& [key, va] : ua) {
    auto it = ub.find(key);
    if (it == ub.end()) continue;
    out.push_back({key.first + (key.second.empty() ? "" : "|" + key.second), va, it->second});
  }
  return out;
}

inline ReliabilityMatrix reliability_matrix(const ScorePanel& panel, ReliabilityLevel level,
                                            ScoreField field = ScoreField::augmentation) {
  ReliabilityMatrix m;
  const auto raters = panel.raters();
  if (raters.size() < 2) {
    m.notes.push_back("fewer than 2 raters in panel; no pairs to compare");
    return m;
  }
  for (std::size_t i = 0; i < raters.size(); ++i) {
    for (std::size_t j = i + 1; j < raters.size(); ++j) {
      const auto pairs = paired_units(panel, raters[i], raters[j], level, field);
      const std::string label = raters[i] + " vs " + raters[j];
      if (pairs.size() < 3) {
        m.notes.push_back(label + ": skipped, only " + std::to_string(pairs.size()) + " shared units");
        continue;
      }
      try {
        m.pairs.push_back({raters[i], raters[j], level, compute_reliability(pairs)});
      } catch (const DegenerateError& e) {
        m.notes.push_back(label + ": skipped, " + e.what());
      }
    }
  }
  return m;
}

struct Overlap {
  double top = 0.0;
  double bottom = 0.0;
};

// Fraction of shared members among the k highest and the k lowest entities.
// Ties are ordered by code so the selection is deterministic.
inline Overlap top_bottom_overlap(const std::map<std::string, double>& index_a,
                                  const std::map<std::string, double>& index_b, int k) {
  if (k <= 0) throw ValidationError("top_bottom_overlap: k must be positive");
  if (index_a.size() != index_b.size() ||
      !std::equal(index_a.begin(), index_a.end(), index_b.begin(),
                  [](const auto& x, const auto& y) { return x.first == y.first; }))
    throw ValidationError("top_bottom_overlap: indices cover different occupations");
  const auto n = index_a.size();
  if (2 * static_cast<std::size_t>(k) >= n)
    throw ValidationError("top_bottom_overlap: k must be below n/2");

  auto ranked = [](const std::map<std::string, double>& idx) {
    std::vector<std::pair<std::string, double>> v(idx.begin(), idx.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
    return v;
  };
  const auto ra = ranked(index_a);
  const auto rb = ranked(index_b);
  auto overlap = [&](bool top) {
    std::set<std::string> sa, sb;
    for (int i = 0; i < k; ++i) {
      const std::size_t pos = top ? static_cast<std::size_t>(i) : n - 1 - static_cast<std::size_t>(i);
      sa.insert(ra[pos].first);
      sb.insert(rb[pos].first);
    }
    std::vector<std::string> common;
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(common));
    return static_cast<double>(common.size()) / k;
  };
  return {overlap(true), overlap(false)};
}

}  // namespace latent_gauge
