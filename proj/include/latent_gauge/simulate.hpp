#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "latent_gauge/detail/format.hpp"
#include "latent_gauge/econometrics.hpp"
#include "latent_gauge/error.hpp"
#include "latent_gauge/panel.hpp"
#include "latent_gauge/random.hpp"
#include "latent_gauge/sensitivity.hpp"
#include "latent_gauge/stats.hpp"

namespace latent_gauge {

enum class NoiseFamily { gaussian };

struct SimConfig {
  std::size_t n = 1000;
  double beta = 0.10;
  double lambda_true = 0.8;  // Var(H*) / (Var(H*) + Var(eta)) for every measure
  NoiseFamily noise_family = NoiseFamily::gaussian;
  std::vector<double> level_offsets{0.0, 0.0};  // one per measure; its size sets the measure count
  std::uint64_t seed = 1;
  double outcome_noise_sd = 0.1;
  double noise_correlation = 0.0;  // equicorrelation of measurement errors, in [0, 1)
  double score_center = 0.0;       // measure = center + scale * (H* + eta) + offset
  double score_scale = 1.0;

  void validate() const {
    if (n < 10) throw ValidationError("simulate: n must be at least 10");
    if (!(lambda_true > 0.0 && lambda_true <= 1.0)) throw ValidationError("simulate: lambda must lie in (0, 1]");
    if (level_offsets.empty()) throw ValidationError("simulate: need at least one measure");
    if (!(noise_correlation >= 0.0 && noise_correlation < 1.0))
      throw ValidationError("simulate: noise correlation must lie in [0, 1)");
    if (!(outcome_noise_sd >= 0.0)) throw ValidationError("simulate: outcome noise sd must be >= 0");
    if (!(score_scale > 0.0)) throw ValidationError("simulate: score scale must be positive");
  }
};

struct SimPanel {
  std::vector<double> latent;
  std::vector<std::string> measure_names;  // measure_a, measure_b, ...
  std::vector<std::vector<double>> measures;
  std::vector<double> outcome;
  std::vector<double> realized_lambda;  // sample Var(H*) / Var(H* + eta) per measure
  double noise_variance = 0.0;          // planted Var(eta), latent units

  [[nodiscard]] Dataset to_dataset() const {
    std::vector<std::string> names{"latent"};
    std::vector<std::vector<double>> cols{latent};
    for (std::size_t m = 0; m < measures.size(); ++m) {
      names.push_back(measure_names[m]);
      cols.push_back(measures[m]);
    }
    names.push_back("y");
    cols.push_back(outcome);
    return {std::move(names), std::move(cols)};
  }
};

inline std::string measure_name(std::size_t m) {
  return m < 26 ? std::string("measure_") + static_cast<char>('a' + m) : "measure_" + std::to_string(m);
}

// H* ~ N(0, 1); each measure adds independent Gaussian noise (plus an
// optional shared component) scaled so the reliability ratio is lambda_true;
// Y = beta H* + eps. Each column draws from its own stream.
inline SimPanel simulate_measurement(const SimConfig& config) {
  config.validate();
  const std::size_t n = config.n;
  const std::size_t k = config.level_offsets.size();
  SimPanel out;
  out.noise_variance = (1.0 - config.lambda_true) / config.lambda_true;
  const double noise_sd = std::sqrt(out.noise_variance);

  Stream latent_rng(config.seed, streams::latent);
  out.latent.resize(n);
  for (auto& h : out.latent) h = latent_rng.normal();

  std::vector<double> shared(n, 0.0);
  if (config.noise_correlation > 0.0) {
    Stream s(config.seed, streams::noise_shared);
    for (auto& v : shared) v = s.normal();
  }
  const double w_shared = std::sqrt(config.noise_correlation);
  const double w_own = std::sqrt(1.0 - config.noise_correlation);

  for (std::size_t m = 0; m < k; ++m) {
    Stream s(config.seed, m == 0 ? streams::noise_a : m == 1 ? streams::noise_b : streams::measure_extra + m);
    std::vector<double> x(n);
    std::vector<double> h_plus_eta(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double eta = noise_sd * (w_shared * shared[i] + w_own * s.normal());
      h_plus_eta[i] = out.latent[i] + eta;
      x[i] = config.score_center + config.score_scale * h_plus_eta[i] + config.level_offsets[m];
    }
    out.measure_names.push_back(measure_name(m));
    out.realized_lambda.push_back(stats::variance_pop(out.latent) / stats::variance_pop(h_plus_eta));
    out.measures.push_back(std::move(x));
  }

  Stream eps(config.seed, streams::outcome);
  out.outcome.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.outcome[i] = config.beta * out.latent[i] + config.outcome_noise_sd * eps.normal();
  return out;
}

inline std::string sim_panel_to_csv(const SimPanel& sim) {
  std::string out = "unit_id,latent";
  for (const auto& m : sim.measure_names) out += "," + m;
  out += ",y\n";
  for (std::size_t i = 0; i < sim.latent.size(); ++i) {
    out += "u" + std::to_string(i) + "," + detail::format_roundtrip(sim.latent[i]);
    for (const auto& m : sim.measures) out += "," + detail::format_roundtrip(m[i]);
    out += "," + detail::format_roundtrip(sim.outcome[i]) + "\n";
  }
  return out;
}

namespace detail {

// Draws `count` normals and rescales them to mean 0 and sample variance
// exactly `variance`.
inline std::vector<double> planted_effects(Stream& rng, std::size_t count, double variance) {
  std::vector<double> v(count, 0.0);
  if (variance <= 0.0 || count < 2) return v;
  for (auto& x : v) x = rng.normal();
  const double m = stats::mean(v);
  for (auto& x : v) x -= m;
  const double s2 = stats::sum_sq_dev(v, 0.0) / static_cast<double>(count - 1);
  const double f = std::sqrt(variance / s2);
  for (auto& x : v) x *= f;
  return v;
}

inline double clip_score(double s, std::size_t& clipped) {
  if (s < 0.0 || s > 100.0) {
    ++clipped;
    return std::clamp(s, 0.0, 100.0);
  }
  return s;
}

}  // namespace detail

struct PromptGridConfig {
  std::size_t n_tasks = 1000;
  std::size_t n_prompts = 4;
  double share_task = 0.14;
  double share_prompt = 0.22;
  double share_residual = 0.64;
  std::uint64_t seed = 1;
  double center = 50.0;
  double scale = 15.0;  // score sd before clipping
  std::string rater_id = "sim";
  std::vector<std::string> inverse_prompts;  // scored as 100 - x
  std::size_t tasks_per_occupation = 10;
};

struct PromptGrid {
  ScorePanel panel;
  double clipped_fraction = 0.0;
  std::vector<std::string> warnings;
};

inline std::string prompt_label(std::size_t p) {
  return p < 26 ? std::string(1, static_cast<char>('A' + p)) : "P" + std::to_string(p);
}

// score(t, p) = center + scale * (u_t + v_p + e_tp), clipped to [0, 100].
// Task and prompt effects are planted with exact sample variances; the
// residual is drawn i.i.d.
inline PromptGrid simulate_prompt_grid(const PromptGridConfig& config) {
  const double total = config.share_task + config.share_prompt + config.share_residual;
  if (config.share_task < 0.0 || config.share_prompt < 0.0 || config.share_residual < 0.0 ||
      std::abs(total - 1.0) > 1e-9)
    throw ValidationError("simulate_prompt_grid: planted shares must be non-negative and sum to 1");
  if (config.n_tasks < 2 || config.n_prompts < 1) throw ValidationError("simulate_prompt_grid: grid too small");

  Stream task_rng(config.seed, streams::task_effect);
  Stream prompt_rng(config.seed, streams::prompt_effect);
  Stream cell_rng(config.seed, streams::cell_noise);
  const auto u = detail::planted_effects(task_rng, config.n_tasks, config.share_task);
  const auto v = detail::planted_effects(prompt_rng, config.n_prompts, config.share_prompt);
  const double res_sd = std::sqrt(config.share_residual);

  std::vector<ScoreRecord> records;
  records.reserve(config.n_tasks * config.n_prompts);
  std::size_t clipped = 0;
  const std::size_t per_occ = std::max<std::size_t>(1, config.tasks_per_occupation);
  for (std::size_t t = 0; t < config.n_tasks; ++t) {
    char task_id[32], occ[32];
    std::snprintf(task_id, sizeof task_id, "t%05zu", t);
    std::snprintf(occ, sizeof occ, "occ%04zu", t / per_occ);
    for (std::size_t p = 0; p < config.n_prompts; ++p) {
      const std::string pid = prompt_label(p);
      const double e = res_sd > 0.0 ? res_sd * cell_rng.normal() : 0.0;
      double s = detail::clip_score(config.center + config.scale * (u[t] + v[p] + e), clipped);
      if (std::find(config.inverse_prompts.begin(), config.inverse_prompts.end(), pid) != config.inverse_prompts.end())
        s = 100.0 - s;
      ScoreRecord r;
      r.task_id = task_id;
      r.occupation_code = occ;
      r.rater_id = config.rater_id;
      r.prompt_id = pid;
      r.augmentation = s;
      r.weight = 1.0;
      records.push_back(std::move(r));
    }
  }
  PromptGrid out{ScorePanel(std::move(records), {{"source", "simulate_prompt_grid"}}), 0.0, {}};
  out.clipped_fraction = static_cast<double>(clipped) / static_cast<double>(config.n_tasks * config.n_prompts);
  if (out.clipped_fraction > 0.01) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.2f%% of cells clipped to [0, 100]", 100.0 * out.clipped_fraction);
    out.warnings.emplace_back(buf);
  }
  return out;
}

struct SimRater {
  std::string name;
  double offset = 0.0;    // level shift in score points
  double noise_sd = 0.35;  // latent units
};

struct SimPrompt {
  std::string id;
  Polarity polarity = Polarity::direct;
  double shift = 0.0;  // latent units
};

struct StudyConfig {
  std::size_t n_occupations = 60;
  std::size_t tasks_per_occupation = 8;
  std::vector<SimRater> raters{{"model_a", 0.0, 0.35}, {"model_b", 8.6, 0.35}};
  // The first prompt is scored by every rater, the rest by the first rater only.
  std::vector<SimPrompt> prompts{{"A", Polarity::direct, 0.0},
                                 {"B", Polarity::direct, 0.3},
                                 {"C", Polarity::direct, -0.2},
                                 {"D", Polarity::inverse, 0.1}};
  double occupation_sd = 1.0;
  double task_sd = 0.6;
  double center = 50.0;
  double scale = 15.0;
  std::size_t n_external_indices = 4;
  std::uint64_t seed = 1;
};

struct Study {
  ScorePanel panel;
  IndexTable indices;
  double clipped_fraction = 0.0;
};

// A full synthetic scoring study: tasks nested in occupations, several raters
// and prompt variants, and external indices loading on an augmentation and a
// substitution factor.
inline Study simulate_study(const StudyConfig& config) {
  if (config.n_occupations < 3 || config.tasks_per_occupation < 1 || config.raters.empty() || config.prompts.empty())
    throw ValidationError("simulate_study: invalid study shape");
  Stream occ_rng(config.seed, streams::occupation);
  Stream task_rng(config.seed, streams::task_effect);
  std::vector<double> occ_aug(config.n_occupations), occ_sub(config.n_occupations);
  for (std::size_t o = 0; o < config.n_occupations; ++o) {
    occ_aug[o] = config.occupation_sd * occ_rng.normal();
    occ_sub[o] = config.occupation_sd * (-0.3 * occ_aug[o] / config.occupation_sd + std::sqrt(0.91) * occ_rng.normal());
  }
  std::vector<ScoreRecord> records;
  std::size_t clipped = 0, cells = 0;
  std::vector<Stream> rater_rngs;
  for (std::size_t r = 0; r < config.raters.size(); ++r) rater_rngs.emplace_back(config.seed, streams::rater_base + r);

  for (std::size_t o = 0; o < config.n_occupations; ++o) {
    char occ[32];
    std::snprintf(occ, sizeof occ, "%02zu-%04zu", 11 + o % 40, 1000 + o);
    for (std::size_t k = 0; k < config.tasks_per_occupation; ++k) {
      char tid[32];
      std::snprintf(tid, sizeof tid, "task%05zu", o * config.tasks_per_occupation + k);
      const double h = occ_aug[o] + config.task_sd * task_rng.normal();
      const double s_lat = occ_sub[o] + config.task_sd * task_rng.normal();
      const double weight = 1.0 + std::floor(4.0 * task_rng.uniform() * 100.0) / 100.0;
      for (std::size_t r = 0; r < config.raters.size(); ++r) {
        const auto& rater = config.raters[r];
        for (std::size_t p = 0; p < config.prompts.size(); ++p) {
          if (p > 0 && r > 0) continue;
          const auto& prompt = config.prompts[p];
          const double sign = prompt.polarity == Polarity::inverse ? -1.0 : 1.0;
          const double eta = rater.noise_sd * rater_rngs[r].normal();
          const double aug = config.center + config.scale * (sign * h + prompt.shift + eta) + rater.offset;
          ScoreRecord rec;
          rec.task_id = tid;
          rec.occupation_code = occ;
          rec.rater_id = rater.name;
          rec.prompt_id = prompt.id;
          rec.weight = weight;
          rec.augmentation = detail::clip_score(aug, clipped);
          ++cells;
          if (p == 0) {
            const double sub = config.center + config.scale * (s_lat + rater.noise_sd * rater_rngs[r].normal()) + rater.offset;
            rec.substitution = detail::clip_score(sub, clipped);
            ++cells;
          }
          records.push_back(std::move(rec));
        }
      }
    }
  }

  std::vector<std::string> occs;
  for (std::size_t o = 0; o < config.n_occupations; ++o) {
    char occ[32];
    std::snprintf(occ, sizeof occ, "%02zu-%04zu", 11 + o % 40, 1000 + o);
    occs.emplace_back(occ);
  }
  std::vector<std::string> names;
  std::vector<std::vector<std::optional<double>>> cols;
  for (std::size_t j = 0; j < config.n_external_indices; ++j) {
    Stream rng(config.seed, streams::index_base + j);
    const bool aug = j % 2 == 0;
    names.push_back((aug ? "ext_aug_" : "ext_sub_") + std::to_string(j / 2 + 1));
    std::vector<std::optional<double>> col;
    for (std::size_t o = 0; o < config.n_occupations; ++o) {
      const double f = aug ? occ_aug[o] : occ_sub[o];
      col.push_back((0.8 - 0.1 * static_cast<double>(j / 2)) * f + 0.5 * rng.normal());
    }
    cols.push_back(std::move(col));
  }
  Study out{ScorePanel(std::move(records), {{"source", "simulate_study"}}),
            IndexTable(std::move(occs), std::move(names), std::move(cols)), 0.0};
  out.clipped_fraction = cells ? static_cast<double>(clipped) / static_cast<double>(cells) : 0.0;
  return out;
}

}  // namespace latent_gauge
