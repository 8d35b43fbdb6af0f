#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "latent_gauge/error.hpp"
#include "latent_gauge/panel.hpp"
#include "latent_gauge/reliability.hpp"

namespace latent_gauge {

enum class Polarity { direct, inverse };

// Spearman correlations between prompt variants of one rater, over shared tasks.
struct PromptRankMatrix {
  std::string rater_id;
  std::vector<std::string> prompt_ids;         // sorted
  std::vector<std::optional<double>> entries;  // row-major
  std::vector<std::size_t> n_shared;

  [[nodiscard]] std::size_t size() const noexcept { return prompt_ids.size(); }
  [[nodiscard]] std::optional<double> at(std::size_t i, std::size_t j) const { return entries[i * size() + j]; }
  [[nodiscard]] std::size_t index_of(std::string_view id) const {
    auto it = std::find(prompt_ids.begin(), prompt_ids.end(), id);
    if (it == prompt_ids.end()) throw ValidationError("prompt matrix: no prompt '" + std::string(id) + "'");
    return static_cast<std::size_t>(it - prompt_ids.begin());
  }
  [[nodiscard]] bool complete() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.has_value(); });
  }
};

namespace detail {

// task_id -> score for each prompt of one rater.
inline std::map<std::string, std::map<std::string, double>> prompt_columns(const ScorePanel& panel,
                                                                          std::string_view rater, ScoreField field) {
  std::map<std::string, std::map<std::string, double>> cols;
  for (const auto& r : panel.records()) {
    if (r.rater_id != rater) continue;
    if (auto v = r.get(field)) cols[r.prompt_id][r.task_id] = *v;
  }
  return cols;
}

}  // namespace detail

inline PromptRankMatrix prompt_rank_matrix(const ScorePanel& panel, std::string_view rater,
                                           ScoreField field = ScoreField::augmentation) {
  const auto cols = detail::prompt_columns(panel, rater, field);
  PromptRankMatrix m;
  m.rater_id = std::string(rater);
  for (const auto& [p, _] : cols) m.prompt_ids.push_back(p);
  const std::size_t k = m.prompt_ids.size();
  if (k < 2) throw ValidationError("prompt_rank_matrix: rater '" + std::string(rater) + "' has fewer than 2 prompts");
  m.entries.assign(k * k, std::nullopt);
  m.n_shared.assign(k * k, 0);
  bool any = false;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      const auto& ci = cols.at(m.prompt_ids[i]);
      const auto& cj = cols.at(m.prompt_ids[j]);
      std::vector<double> x, y;
      for (const auto& [task, v] : ci) {
        if (auto it = cj.find(task); it != cj.end()) {
          x.push_back(v);
          y.push_back(it->second);
        }
      }
      m.n_shared[i * k + j] = m.n_shared[j * k + i] = x.size();
      if (x.size() < 3) continue;
      std::optional<double> rho;
      if (i == j) {
        rho = 1.0;
      } else {
        try {
          rho = spearman(x, y);
          any = true;
        } catch (const DegenerateError&) {
        }
      }
      m.entries[i * k + j] = m.entries[j * k + i] = rho;
    }
  }
  if (!any) throw ValidationError("prompt_rank_matrix: no prompt pair shares 3 or more tasks");
  return m;
}

// Maps x -> 100 - x for the given prompts of one rater.
inline ScorePanel invert_prompts(const ScorePanel& panel, std::string_view rater,
                                 const std::vector<std::string>& prompts, ScoreField field) {
  std::vector<ScoreRecord> records = panel.records();
  for (auto& r : records) {
    if (r.rater_id != rater) continue;
    if (std::find(prompts.begin(), prompts.end(), r.prompt_id) == prompts.end()) continue;
    if (auto v = r.get(field)) r.set(field, 100.0 - *v);
  }
  return ScorePanel(std::move(records), panel.metadata());
}

struct InversionResult {
  ScorePanel panel;
  std::vector<std::string> inverted;  // in the order they were inverted
  PromptRankMatrix matrix;            // recomputed-equivalent matrix after inversion
};

namespace detail {

inline std::vector<double> row_values(const PromptRankMatrix& m, std::size_t i) {
  std::vector<double> out;
  for (std::size_t j = 0; j < m.size(); ++j)
    if (j != i)
      if (auto v = m.at(i, j)) out.push_back(*v);
  return out;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline void flip(PromptRankMatrix& m, std::size_t i) {
  for (std::size_t j = 0; j < m.size(); ++j) {
    if (j == i) continue;
    if (auto& e = m.entries[i * m.size() + j]) *e = -*e;
    if (auto& e = m.entries[j * m.size() + i]) *e = -*e;
  }
}

}  // namespace detail

// Inverts prompts flagged inverse, then greedily inverts the prompt with the
// most negative median correlation (ties: lexicographically later id) until
// no median is negative. A prompt whose correlations split evenly between
// signs cannot be oriented automatically and raises an error.
inline InversionResult detect_and_invert(const PromptRankMatrix& matrix, const ScorePanel& panel,
                                         const std::map<std::string, Polarity>& polarity = {},
                                         ScoreField field = ScoreField::augmentation) {
  if (!matrix.complete()) throw ValidationError("detect_and_invert: prompt rank matrix has missing entries");
  PromptRankMatrix m = matrix;
  std::vector<std::string> inverted;
  std::set<std::size_t> done;
  for (std::size_t i = 0; i < m.size(); ++i) {
    auto it = polarity.find(m.prompt_ids[i]);
    if (it != polarity.end() && it->second == Polarity::inverse) {
      detail::flip(m, i);
      inverted.push_back(m.prompt_ids[i]);
      done.insert(i);
    }
  }
  while (true) {
    std::optional<std::size_t> pick;
    double worst = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (done.contains(i)) continue;
      const double med = detail::median(detail::row_values(m, i));
      if (med < 0.0 && (!pick || med <= worst)) {
        pick = i;
        worst = med;
      }
    }
    if (!pick) break;
    detail::flip(m, *pick);
    inverted.push_back(m.prompt_ids[*pick]);
    done.insert(*pick);
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto row = detail::row_values(m, i);
    const auto neg = std::count_if(row.begin(), row.end(), [](double v) { return v < 0.0; });
    const auto pos = std::count_if(row.begin(), row.end(), [](double v) { return v > 0.0; });
    if (detail::median(row) < 0.0 || (neg > 0 && neg == pos))
      throw ValidationError("detect_and_invert: polarity of prompt '" + m.prompt_ids[i] +
                            "' is ambiguous; set polarity flags manually");
  }
  std::vector<std::string> sorted_inv = inverted;
  std::sort(sorted_inv.begin(), sorted_inv.end());
  return {inverted.empty() ? panel : invert_prompts(panel, matrix.rater_id, sorted_inv, field), inverted, m};
}

struct VarianceDecomposition {
  double share_task = 0.0;
  double share_prompt = 0.0;
  double share_residual = 0.0;
  double var_task = 0.0;
  double var_prompt = 0.0;
  double var_residual = 0.0;
  std::size_t n_tasks = 0;
  std::size_t n_prompts = 0;
  std::size_t n_imputed = 0;       // missing cells filled additively
  std::vector<std::string> flags;  // truncations and imputations
};

// Fully crossed two-way random-effects decomposition (one observation per
// task x prompt cell) by expected mean squares.
inline VarianceDecomposition variance_decomposition(const ScorePanel& panel, std::string_view rater,
                                                    ScoreField field = ScoreField::augmentation) {
  const auto cols = detail::prompt_columns(panel, rater, field);
  if (cols.size() < 2) throw ValidationError("variance_decomposition: need at least 2 prompts");
  std::vector<std::string> tasks;
  {
    std::set<std::string> s;
    for (const auto& [p, c] : cols)
      for (const auto& [t, _] : c) s.insert(t);
    tasks.assign(s.begin(), s.end());
  }
  if (tasks.size() < 2) throw ValidationError("variance_decomposition: need at least 2 tasks");
  const std::size_t nt = tasks.size();
  const std::size_t np = cols.size();

  std::vector<std::optional<double>> grid(nt * np);
  std::size_t missing = 0;
  {
    std::size_t p = 0;
    for (const auto& [pid, c] : cols) {
      for (std::size_t t = 0; t < nt; ++t) {
        auto it = c.find(tasks[t]);
        if (it != c.end()) grid[t * np + p] = it->second;
        else ++missing;
      }
      ++p;
    }
  }
  VarianceDecomposition out;
  out.n_tasks = nt;
  out.n_prompts = np;
  const double missing_rate = static_cast<double>(missing) / static_cast<double>(nt * np);
  if (missing_rate > 0.05)
    throw ValidationError("variance_decomposition: " + std::to_string(missing) + " of " + std::to_string(nt * np) +
                          " task x prompt cells missing (more than 5%)");

  std::vector<double> y(nt * np);
  if (missing > 0) {
    // Additive fill from observed margins: task mean + prompt mean - grand mean.
    std::vector<double> ts(nt, 0.0), tc(nt, 0.0), ps(np, 0.0), pc(np, 0.0);
    double gs = 0.0, gc = 0.0;
    for (std::size_t t = 0; t < nt; ++t)
      for (std::size_t p = 0; p < np; ++p)
        if (const auto& v = grid[t * np + p]) {
          ts[t] += *v, tc[t] += 1;
          ps[p] += *v, pc[p] += 1;
          gs += *v, gc += 1;
        }
    const double g = gs / gc;
    for (std::size_t t = 0; t < nt; ++t)
      for (std::size_t p = 0; p < np; ++p) {
        const auto& v = grid[t * np + p];
        const double tm = tc[t] > 0 ? ts[t] / tc[t] : g;
        const double pm = pc[p] > 0 ? ps[p] / pc[p] : g;
        y[t * np + p] = v ? *v : tm + pm - g;
      }
    out.n_imputed = missing;
    out.flags.push_back(std::to_string(missing) + " missing cells mean-imputed");
  } else {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = *grid[i];
  }

  std::vector<double> tmean(nt, 0.0), pmean(np, 0.0);
  double grand = 0.0;
  for (std::size_t t = 0; t < nt; ++t)
    for (std::size_t p = 0; p < np; ++p) {
      tmean[t] += y[t * np + p];
      pmean[p] += y[t * np + p];
    }
  for (auto& v : tmean) v /= static_cast<double>(np);
  for (auto& v : pmean) v /= static_cast<double>(nt);
  for (double v : tmean) grand += v;
  grand /= static_cast<double>(nt);

  double ss_task = 0.0, ss_prompt = 0.0, ss_res = 0.0;
  for (std::size_t t = 0; t < nt; ++t) ss_task += (tmean[t] - grand) * (tmean[t] - grand);
  ss_task *= static_cast<double>(np);
  for (std::size_t p = 0; p < np; ++p) ss_prompt += (pmean[p] - grand) * (pmean[p] - grand);
  ss_prompt *= static_cast<double>(nt);
  for (std::size_t t = 0; t < nt; ++t)
    for (std::size_t p = 0; p < np; ++p) {
      const double e = y[t * np + p] - tmean[t] - pmean[p] + grand;
      ss_res += e * e;
    }
  const double ms_task = ss_task / static_cast<double>(nt - 1);
  const double ms_prompt = ss_prompt / static_cast<double>(np - 1);
  const double ms_res = ss_res / static_cast<double>((nt - 1) * (np - 1));

  // Sums of squares at rounding level (e.g. an exactly additive grid) are zero.
  const double scale = ss_task + ss_prompt + ss_res;
  auto cleaned = [&](double ss, double ms) { return ss <= 1e-24 * scale ? 0.0 : ms; };
  const double var_res = cleaned(ss_res, ms_res);
  double var_task = (cleaned(ss_task, ms_task) - var_res) / static_cast<double>(np);
  double var_prompt = (cleaned(ss_prompt, ms_prompt) - var_res) / static_cast<double>(nt);
  if (var_task < 0.0) {
    out.flags.push_back("negative task variance component truncated to 0");
    var_task = 0.0;
  }
  if (var_prompt < 0.0) {
    out.flags.push_back("negative prompt variance component truncated to 0");
    var_prompt = 0.0;
  }
  const double total = var_task + var_prompt + var_res;
  if (!(total > 0.0)) throw DegenerateError("variance_decomposition: grid has no variance");
  out.var_task = var_task;
  out.var_prompt = var_prompt;
  out.var_residual = var_res;
  out.share_task = var_task / total;
  out.share_prompt = var_prompt / total;
  out.share_residual = var_res / total;
  return out;
}

}  // namespace latent_gauge
