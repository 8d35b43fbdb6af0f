#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "latent_gauge/error.hpp"
#include "latent_gauge/panel.hpp"
#include "latent_gauge/stats.hpp"

namespace latent_gauge {

struct OccupationIndex {
  std::string occupation_code;
  std::string rater_id;
  std::string prompt_id;
  double value_raw = 0.0;  // importance-weighted mean of task scores
  double value_std = 0.0;  // z-score within (rater_id, prompt_id)
  std::size_t n_tasks = 0;
  double weight_sum = 0.0;
  bool sparse = false;  // fewer than min_tasks contributing tasks
};

struct ExcludedOccupation {
  std::string occupation_code;
  std::string rater_id;
  std::string prompt_id;
  std::string reason;
};

struct Aggregation {
  std::vector<OccupationIndex> indices;  // sorted by (rater, prompt, occupation)
  std::vector<ExcludedOccupation> excluded;
  // Groups whose z-scores could not be formed (fewer than 2 occupations or
  // constant values); their value_std is left at 0.
  std::vector<std::string> unstandardized_groups;
};

struct AggregateOptions {
  std::size_t min_tasks = 1;
};

// z_i = (x_i - mean) / sd with the population (1/n) sd, so the output has
// exactly unit population variance.
inline std::vector<double> standardize(std::span<const double> x) {
  if (x.size() < 2) throw DegenerateError("standardize needs at least 2 values");
  if (!stats::all_finite(x)) throw DegenerateError("standardize: non-finite input");
  const double m = stats::mean(x);
  const double sd = std::sqrt(stats::sum_sq_dev(x, m) / static_cast<double>(x.size()));
  if (!(sd > 0.0) || sd <= 1e-14 * std::max(1.0, std::abs(m))) throw DegenerateError("standardize: zero variance");
  std::vector<double> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - m) / sd;
  return z;
}

// Importance-weighted occupation means, one per (occupation, rater, prompt).
inline Aggregation aggregate_occupations(const ScorePanel& panel, ScoreField field, AggregateOptions options = {}) {
  struct Acc {
    double wsum = 0.0;
    double wx = 0.0;
    std::size_t n = 0;
  };
  using Key = std::tuple<std::string, std::string, std::string>;  // rater, prompt, occupation
  std::map<Key, Acc> acc;
  for (const auto& r : panel.records()) {
    auto v = r.get(field);
    if (!v) continue;
    auto& a = acc[{r.rater_id, r.prompt_id, r.occupation_code}];
    a.wsum += r.weight;
    a.wx += r.weight * *v;
    a.n += 1;
  }

  Aggregation out;
  for (const auto& [key, a] : acc) {
    const auto& [rater, prompt, occ] = key;
    if (!(a.wsum > 0.0)) {
      out.excluded.push_back({occ, rater, prompt, "all task weights are zero"});
      continue;
    }
    OccupationIndex idx;
    idx.occupation_code = occ;
    idx.rater_id = rater;
    idx.prompt_id = prompt;
    idx.value_raw = a.wx / a.wsum;
    idx.n_tasks = a.n;
    idx.weight_sum = a.wsum;
    idx.sparse = a.n < options.min_tasks;
    out.indices.push_back(std::move(idx));
  }

  // Standardize within each (rater, prompt) group; indices are grouped
  // contiguously because the map is ordered by rater then prompt.
  std::size_t begin = 0;
  while (begin < out.indices.size()) {
    std::size_t end = begin + 1;
    while (end < out.indices.size() && out.indices[end].rater_id == out.indices[begin].rater_id &&
           out.indices[end].prompt_id == out.indices[begin].prompt_id)
      ++end;
    std::vector<double> raw;
    for (std::size_t i = begin; i < end; ++i) raw.push_back(out.indices[i].value_raw);
    try {
      auto z = standardize(raw);
      for (std::size_t i = begin; i < end; ++i) out.indices[i].value_std = z[i - begin];
    } catch (const DegenerateError&) {
      out.unstandardized_groups.push_back(out.indices[begin].rater_id + "/" + out.indices[begin].prompt_id);
    }
    begin = end;
  }
  return out;
}

// occupation -> value for one (rater, prompt) group.
inline std::map<std::string, double> index_values(const Aggregation& agg, std::string_view rater,
                                                  std::string_view prompt, bool standardized = false) {
  std::map<std::string, double> out;
  for (const auto& idx : agg.indices)
    if (idx.rater_id == rater && idx.prompt_id == prompt)
      out[idx.occupation_code] = standardized ? idx.value_std : idx.value_raw;
  return out;
}

struct MonotonicityCheck {
  std::size_t probes = 0;
  std::size_t violations = 0;
  bool negative_weights = false;
};

// Raises single task scores one at a time (by `bump` points, or lowers them
// when near the ceiling) and confirms the owning occupation's weighted mean
// moves in the same direction or stays put.
inline MonotonicityCheck check_aggregation_monotonicity(const ScorePanel& panel, ScoreField field,
                                                        std::size_t max_probes = 50, double bump = 1.0) {
  MonotonicityCheck out;
  const auto& records = panel.records();
  for (const auto& r : records) out.negative_weights |= r.weight < 0.0;
  const auto base = aggregate_occupations(panel, field);
  std::map<std::tuple<std::string, std::string, std::string>, double> before;
  for (const auto& idx : base.indices) before[{idx.rater_id, idx.prompt_id, idx.occupation_code}] = idx.value_raw;

  const std::size_t stride = std::max<std::size_t>(1, records.size() / std::max<std::size_t>(1, max_probes));
  for (std::size_t i = 0; i < records.size() && out.probes < max_probes; i += stride) {
    const auto v = records[i].get(field);
    if (!v) continue;
    const double delta = *v + bump <= 100.0 ? bump : -bump;
    auto changed = records;
    changed[i].set(field, *v + delta);
    const auto after = aggregate_occupations(ScorePanel(std::move(changed)), field);
    const auto key = std::make_tuple(records[i].rater_id, records[i].prompt_id, records[i].occupation_code);
    auto it = before.find(key);
    if (it == before.end()) continue;
    for (const auto& idx : after.indices) {
      if (idx.rater_id != records[i].rater_id || idx.prompt_id != records[i].prompt_id ||
          idx.occupation_code != records[i].occupation_code)
        continue;
      const double moved = idx.value_raw - it->second;
      if (delta > 0 ? moved < 0.0 : moved > 0.0) ++out.violations;
    }
    ++out.probes;
  }
  return out;
}

}  // namespace latent_gauge
