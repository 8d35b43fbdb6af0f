#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "latent_gauge/aggregate.hpp"
#include "latent_gauge/detail/csv.hpp"
#include "latent_gauge/detail/format.hpp"
#include "latent_gauge/dimensionality.hpp"
#include "latent_gauge/econometrics.hpp"
#include "latent_gauge/harness.hpp"
#include "latent_gauge/panel.hpp"
#include "latent_gauge/reliability.hpp"
#include "latent_gauge/report.hpp"
#include "latent_gauge/sensitivity.hpp"

namespace latent_gauge {

// ---------------------------------------------------------------------------
// Config: flat "key = value" lines, '#' starts a comment. Relative paths are
// resolved against the config file's directory.

struct PipelineConfig {
  std::string panel;
  ScoreField field = ScoreField::augmentation;
  std::string rater_a, rater_b;
  std::string reference_prompt;
  std::vector<std::string> templates;       // built-in template ids to lint
  std::vector<std::string> template_files;  // template text files to lint
  std::string sensitivity_rater;
  std::vector<std::string> inverse_prompts;
  std::string indices;
  std::string data;
  std::string outcome = "y";
  std::string measure_a, measure_b;
  std::vector<std::string> controls;
  std::string cluster;
  std::vector<std::string> ignore_columns{"unit_id"};
  std::string standardize_within;
  std::string horserace_blocks;
  double alpha_threshold = 0.7;
  double rho_threshold = 0.7;
  double convergent_threshold = 0.5;
  std::size_t min_tasks = 1;
  int overlap_k = 10;
};

class ConfigError : public ValidationError {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : ValidationError(join(problems)), problems_(std::move(problems)) {}
  [[nodiscard]] const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string s = "invalid pipeline config (" + std::to_string(p.size()) + " problem(s)):";
    for (const auto& x : p) s += "\n  " + x;
    return s;
  }
  std::vector<std::string> problems_;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

}  // namespace detail

// Parses and validates a config; every problem is collected before throwing.
inline PipelineConfig parse_pipeline_config(const std::string& text, const std::string& base_dir = {}) {
  PipelineConfig c;
  std::vector<std::string> problems;
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    const auto key = detail::trim(line.substr(0, eq));
    if (kv.contains(key)) problems.push_back("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    kv[key] = detail::trim(line.substr(eq + 1));
  }

  auto path = [&](const std::string& v) {
    if (v.empty() || base_dir.empty() || std::filesystem::path(v).is_absolute()) return v;
    return (std::filesystem::path(base_dir) / v).lexically_normal().string();
  };
  auto number = [&](const std::string& key, double& dst, double lo, double hi) {
    auto v = detail::parse_double(kv[key]);
    if (!v || *v < lo || *v > hi)
      problems.push_back(key + ": '" + kv[key] + "' must be a number in [" + detail::format_sig6(lo) + ", " +
                         detail::format_sig6(hi) + "]");
    else dst = *v;
  };
  static const std::set<std::string> known{
      "panel",          "field",           "rater_a",          "rater_b",          "reference_prompt",
      "templates",      "template_files",  "sensitivity_rater", "inverse_prompts", "indices",
      "data",           "outcome",         "measure_a",        "measure_b",        "controls",
      "cluster",        "ignore_columns",  "standardize_within", "horserace_blocks", "alpha_threshold",
      "rho_threshold",  "convergent_threshold", "min_tasks",   "overlap_k"};
  for (const auto& [k, v] : kv) {
    if (!known.contains(k)) {
      problems.push_back("unknown key '" + k + "'");
      continue;
    }
    if (k == "panel") c.panel = path(v);
    else if (k == "field") {
      if (v == "augmentation" || v == "substitution") c.field = parse_score_field(v);
      else problems.push_back("field: '" + v + "' must be augmentation or substitution");
    } else if (k == "rater_a") c.rater_a = v;
    else if (k == "rater_b") c.rater_b = v;
    else if (k == "reference_prompt") c.reference_prompt = v;
    else if (k == "templates") {
      c.templates = detail::split_list(v);
      for (const auto& id : c.templates) {
        try {
          (void)builtin_template(id);
        } catch (const ValidationError& e) {
          problems.push_back(std::string("templates: ") + e.what());
        }
      }
    } else if (k == "template_files") {
      for (const auto& f : detail::split_list(v)) c.template_files.push_back(path(f));
    } else if (k == "sensitivity_rater") c.sensitivity_rater = v;
    else if (k == "inverse_prompts") c.inverse_prompts = detail::split_list(v);
    else if (k == "indices") c.indices = path(v);
    else if (k == "data") c.data = path(v);
    else if (k == "outcome") c.outcome = v;
    else if (k == "measure_a") c.measure_a = v;
    else if (k == "measure_b") c.measure_b = v;
    else if (k == "controls") c.controls = detail::split_list(v);
    else if (k == "cluster") c.cluster = v;
    else if (k == "ignore_columns") c.ignore_columns = detail::split_list(v);
    else if (k == "standardize_within") c.standardize_within = v;
    else if (k == "horserace_blocks") c.horserace_blocks = path(v);
    else if (k == "alpha_threshold") number(k, c.alpha_threshold, -1.0, 1.0);
    else if (k == "rho_threshold") number(k, c.rho_threshold, -1.0, 1.0);
    else if (k == "convergent_threshold") number(k, c.convergent_threshold, -1.0, 1.0);
    else if (k == "min_tasks") {
      double d = 1;
      number(k, d, 1, 1e9);
      c.min_tasks = static_cast<std::size_t>(d);
    } else if (k == "overlap_k") {
      double d = 10;
      number(k, d, 1, 1e6);
      c.overlap_k = static_cast<int>(d);
    }
  }
  if (c.panel.empty()) problems.push_back("panel: required key missing");
  auto must_exist = [&](const std::string& key, const std::string& p) {
    if (!p.empty() && !std::filesystem::exists(p)) problems.push_back(key + ": file not found: " + p);
  };
  must_exist("panel", c.panel);
  must_exist("indices", c.indices);
  must_exist("data", c.data);
  must_exist("horserace_blocks", c.horserace_blocks);
  for (const auto& f : c.template_files) must_exist("template_files", f);
  if (!c.data.empty() && (c.measure_a.empty() || c.measure_b.empty()))
    problems.push_back("data: measure_a and measure_b are required when data is given");
  if (!c.rater_a.empty() && c.rater_a == c.rater_b) problems.push_back("rater_b: must differ from rater_a");
  if (!problems.empty()) throw ConfigError(problems);
  return c;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
  return parse_pipeline_config(detail::read_file(path), std::filesystem::path(path).parent_path().string());
}

// ---------------------------------------------------------------------------
// JSON views of module results.

inline Json to_json(const ReliabilityReport& r) {
  return Json{{"pearson_r", r.pearson_r},
              {"spearman_rho", r.spearman_rho},
              {"kendall_tau_b", r.kendall_tau_b},
              {"alpha_raw", r.alpha_raw},
              {"alpha_mean_adjusted", r.alpha_mean_adjusted},
              {"alpha_degenerate", r.alpha_degenerate},
              {"mean_abs_diff", r.mean_abs_diff},
              {"mean_bias", r.mean_bias},
              {"loa_low", r.loa_low},
              {"loa_high", r.loa_high},
              {"n_pairs", r.n_pairs}};
}

inline Json to_json(const ReliabilityMatrix& m) {
  Json pairs = Json::array();
  for (const auto& p : m.pairs) {
    Json j = to_json(p.report);
    j["rater_a"] = p.rater_a;
    j["rater_b"] = p.rater_b;
    j["level"] = std::string(to_string(p.level));
    pairs.push_back(std::move(j));
  }
  return Json{{"pairs", pairs}, {"notes", m.notes}};
}

inline Json to_json(const Aggregation& agg) {
  Json rows = Json::array();
  for (const auto& i : agg.indices)
    rows.push_back(Json{{"occupation_code", i.occupation_code}, {"rater_id", i.rater_id}, {"prompt_id", i.prompt_id},
                        {"value_raw", i.value_raw}, {"value_std", i.value_std}, {"n_tasks", i.n_tasks},
                        {"weight_sum", i.weight_sum}, {"sparse", i.sparse}});
  Json excluded = Json::array();
  for (const auto& e : agg.excluded)
    excluded.push_back(Json{{"occupation_code", e.occupation_code}, {"rater_id", e.rater_id},
                            {"prompt_id", e.prompt_id}, {"reason", e.reason}});
  return Json{{"indices", rows}, {"excluded", excluded}, {"unstandardized_groups", agg.unstandardized_groups}};
}

inline Json to_json(const CorrelationMatrix& m) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.size(); ++i) {
    Json row = Json::array();
    for (std::size_t j = 0; j < m.size(); ++j) row.push_back(m.at(i, j) ? Json(*m.at(i, j)) : Json(nullptr));
    rows.push_back(row);
  }
  return Json{{"names", m.names},
              {"policy", m.policy == MissingPolicy::listwise ? "listwise" : "pairwise_complete"},
              {"matrix", rows}};
}

inline Json to_json(const PcaResult& p) {
  Json loadings = Json::array();
  for (Eigen::Index i = 0; i < p.loadings.rows(); ++i) {
    Json row{{"index", p.names[static_cast<std::size_t>(i)]}};
    for (Eigen::Index c = 0; c < p.loadings.cols(); ++c) row["pc" + std::to_string(c + 1)] = p.loadings(i, c);
    loadings.push_back(row);
  }
  return Json{{"eigenvalues", p.eigenvalues}, {"variance_shares", p.variance_shares}, {"loadings", loadings},
              {"n_obs_used", p.n_obs_used}, {"n_obs_dropped", p.n_obs_dropped}};
}

inline Json to_json(const PromptRankMatrix& m) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.size(); ++i) {
    Json row = Json::array();
    for (std::size_t j = 0; j < m.size(); ++j) row.push_back(m.at(i, j) ? Json(*m.at(i, j)) : Json(nullptr));
    rows.push_back(row);
  }
  return Json{{"rater_id", m.rater_id}, {"prompt_ids", m.prompt_ids}, {"spearman", rows}};
}

inline Json to_json(const VarianceDecomposition& v) {
  return Json{{"design", "two-way crossed random effects (task x prompt), method of moments"},
              {"share_task", v.share_task},
              {"share_prompt", v.share_prompt},
              {"share_residual", v.share_residual},
              {"var_task", v.var_task},
              {"var_prompt", v.var_prompt},
              {"var_residual", v.var_residual},
              {"n_tasks", v.n_tasks},
              {"n_prompts", v.n_prompts},
              {"n_imputed", v.n_imputed},
              {"flags", v.flags}};
}

inline Json to_json(const RegressionResult& r) {
  Json coefs = Json::array();
  for (std::size_t i = 0; i < r.names.size(); ++i)
    coefs.push_back(Json{{"name", r.names[i]}, {"estimate", r.coefficients[i]}, {"std_error", r.std_errors[i]}});
  Json j{{"estimator", std::string(to_string(r.estimator))},
         {"coefficients", coefs},
         {"r_squared", r.r_squared},
         {"n_obs", r.n_obs},
         {"n_clusters", r.n_clusters},
         {"se_type", r.n_clusters > 0 ? "cluster_robust" : "homoskedastic"}};
  if (r.first_stage_f) {
    j["first_stage_f"] = *r.first_stage_f;
    j["weak_instrument"] = r.weak_instrument;
  }
  return j;
}

inline Json to_json(const std::vector<HorseRaceRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows)
    out.push_back(Json{{"model", r.label}, {"regressors", r.regressors}, {"r_squared", r.r_squared},
                       {"delta_r_squared", r.delta_r_squared}});
  return out;
}

inline std::vector<HorseRaceBlock> parse_horserace_blocks(const Json& j, std::string& outcome,
                                                          std::vector<std::string>& controls) {
  if (!j.is_object() || !j.contains("blocks") || !j["blocks"].is_array())
    throw ValidationError("horse race blocks: expected an object with a 'blocks' array");
  if (j.contains("outcome")) outcome = j["outcome"].get<std::string>();
  if (j.contains("controls")) controls = j["controls"].get<std::vector<std::string>>();
  std::vector<HorseRaceBlock> blocks;
  for (const auto& b : j["blocks"]) {
    HorseRaceBlock block;
    if (b.is_array()) {
      block.regressors = b.get<std::vector<std::string>>();
    } else {
      block.label = b.value("label", "");
      block.regressors = b.at("regressors").get<std::vector<std::string>>();
    }
    if (block.label.empty()) {
      block.label = "+";
      for (std::size_t i = 0; i < block.regressors.size(); ++i) block.label += (i ? " + " : " ") + block.regressors[i];
    }
    blocks.push_back(std::move(block));
  }
  return blocks;
}

// ---------------------------------------------------------------------------
// Pipeline.

class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  [[nodiscard]] const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct PipelineOutcome {
  Json report;
  int exit_code = 0;  // 0 when no checklist item or section failed
};

namespace detail {

inline Json check_item(int item, std::string name, std::string status, std::string detail) {
  return Json{{"item", item}, {"name", std::move(name)}, {"status", std::move(status)}, {"detail", std::move(detail)}};
}

template <typename F>
auto stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

inline std::string fmt(double v) { return format_sig6(v); }

}  // namespace detail

inline PipelineOutcome run_pipeline(const PipelineConfig& cfg) {
  Json report;
  report["report"] = "validity";
  report["schema_version"] = 1;
  Json checklist = Json::array();
  Json conditions = Json::object();

  // Ingest.
  const ScorePanel panel = detail::stage("ingest", [&] { return load_panel(cfg.panel); });
  const auto raters = panel.raters();
  std::string ra = cfg.rater_a, rb = cfg.rater_b;
  if (ra.empty() && !raters.empty()) ra = raters[0];
  if (rb.empty()) {
    for (const auto& r : raters)
      if (r != ra) {
        rb = r;
        break;
      }
  }
  for (const auto& r : {ra, rb})
    if (!r.empty() && std::find(raters.begin(), raters.end(), r) == raters.end())
      throw StageError("ingest", "rater '" + r + "' not present in panel");
  const bool two_raters = !rb.empty();

  std::string ref_prompt = cfg.reference_prompt;
  if (ref_prompt.empty()) {
    // First prompt (sorted) scored by both primary raters, else by rater a.
    for (const auto& p : panel.prompts()) {
      const bool a = !panel.select(ra, p).empty();
      const bool b = !two_raters || !panel.select(rb, p).empty();
      if (a && b) {
        ref_prompt = p;
        break;
      }
    }
    if (ref_prompt.empty()) ref_prompt = panel.prompts().front();
  }
  report["inputs"] = Json{{"panel", cfg.panel},
                          {"n_records", panel.size()},
                          {"raters", raters},
                          {"prompts", panel.prompts()},
                          {"n_occupations", panel.occupations().size()},
                          {"field", std::string(to_string(cfg.field))},
                          {"rater_a", ra},
                          {"rater_b", rb},
                          {"reference_prompt", ref_prompt},
                          {"degenerate_occupations", panel.degenerate_occupations()},
                          {"metadata", panel.metadata()}};

  // Item 1: semantic-only prompts.
  {
    std::vector<std::pair<std::string, std::string>> texts;
    auto ids = cfg.templates;
    if (ids.empty() && cfg.template_files.empty()) {
      for (const auto& p : panel.prompts())
        for (const auto& t : builtin_templates())
          if (t.prompt_id() == p) ids.push_back(p);
    }
    for (const auto& id : ids) texts.emplace_back(id, builtin_template(id).text());
    for (const auto& f : cfg.template_files) texts.emplace_back(f, detail::read_file(f));
    Json offending = Json::array();
    for (const auto& [name, text] : texts) {
      auto hits = lint_template(text);
      if (!hits.empty()) offending.push_back(Json{{"template", name}, {"terms", hits}});
    }
    std::string status = texts.empty() ? "warn" : offending.empty() ? "pass" : "warn";
    std::string det = texts.empty() ? "no templates available to lint"
                      : offending.empty()
                          ? std::to_string(texts.size()) + " template(s) reference no labor-market outcomes"
                          : std::to_string(offending.size()) + " template(s) mention outcome terms";
    std::vector<std::string> linted;
    for (const auto& t : texts) linted.push_back(t.first);
    conditions["condition1_lint"] = Json{{"status", status}, {"templates", linted}, {"offending_terms", offending}};
    checklist.push_back(detail::check_item(1, "prompts reference only semantic content", status, det));
  }

  // Aggregation and the monotonicity condition.
  const Aggregation agg = detail::stage("aggregate", [&] {
    return aggregate_occupations(panel, cfg.field, AggregateOptions{cfg.min_tasks});
  });
  {
    const auto mono = detail::stage("aggregate", [&] { return check_aggregation_monotonicity(panel, cfg.field); });
    const bool ok = mono.violations == 0 && !mono.negative_weights;
    conditions["condition3_monotonicity"] =
        Json{{"status", ok ? "pass" : "fail"}, {"probes", mono.probes}, {"violations", mono.violations},
             {"detail", "single-task score increases never lower the occupation's weighted mean"}};
    Json sparse = Json::array();
    for (const auto& i : agg.indices)
      if (i.sparse) sparse.push_back(i.occupation_code + "/" + i.rater_id + "/" + i.prompt_id);
    report["aggregation"] = to_json(agg);
    report["aggregation"]["sparse"] = sparse;
    report["aggregation"]["min_tasks"] = cfg.min_tasks;
  }

  // Reliability.
  Json reliability = Json::object();
  std::optional<ReliabilityReport> task_primary, occ_primary;
  {
    const auto task_m = detail::stage("reliability", [&] { return reliability_matrix(panel, ReliabilityLevel::task, cfg.field); });
    const auto occ_m =
        detail::stage("reliability", [&] { return reliability_matrix(panel, ReliabilityLevel::occupation, cfg.field); });
    reliability["task_level"] = to_json(task_m);
    reliability["occupation_level"] = to_json(occ_m);
    for (const auto& p : task_m.pairs)
      if ((p.rater_a == ra && p.rater_b == rb) || (p.rater_a == rb && p.rater_b == ra)) task_primary = p.report;
    for (const auto& p : occ_m.pairs)
      if ((p.rater_a == ra && p.rater_b == rb) || (p.rater_a == rb && p.rater_b == ra)) occ_primary = p.report;
    reliability["top_bottom_overlap"] = nullptr;
    if (two_raters) {
      const auto ia = index_values(agg, ra, ref_prompt);
      const auto ib = index_values(agg, rb, ref_prompt);
      std::map<std::string, double> ca, cb;
      for (const auto& [k, v] : ia)
        if (ib.contains(k)) ca[k] = v, cb[k] = ib.at(k);
      const int k = std::min<int>(cfg.overlap_k, static_cast<int>((ca.size() - 1) / 2));
      if (ca.size() >= 3 && k >= 1) {
        const auto ov = top_bottom_overlap(ca, cb, k);
        reliability["top_bottom_overlap"] = Json{{"k", k}, {"top", ov.top}, {"bottom", ov.bottom}, {"n", ca.size()}};
      }
    }
  }
  report["reliability"] = reliability;

  // Item 2 and condition 4.
  {
    const bool evaluable = two_raters && task_primary.has_value();
    checklist.push_back(detail::check_item(
        2, "at least two rater models", evaluable ? "pass" : "fail",
        evaluable ? "raters '" + ra + "' and '" + rb + "' share " + std::to_string(task_primary->n_pairs) + " units"
                  : "a second rater sharing at least 3 units is required"));
    if (!evaluable || !occ_primary) {
      conditions["condition4_invariance"] =
          Json{{"status", "not_evaluable"}, {"detail", "model invariance needs two raters scoring shared occupations"}};
    } else {
      const bool ok = occ_primary->spearman_rho >= cfg.rho_threshold;
      conditions["condition4_invariance"] = Json{{"status", ok ? "pass" : "warn"},
                                                 {"spearman_occupation", occ_primary->spearman_rho},
                                                 {"pearson_occupation", occ_primary->pearson_r},
                                                 {"alpha_mean_adjusted_task", task_primary->alpha_mean_adjusted},
                                                 {"alpha_raw_task", task_primary->alpha_raw},
                                                 {"rho_threshold", cfg.rho_threshold},
                                                 {"alpha_threshold", cfg.alpha_threshold}};
    }
    // Item 3.
    if (!evaluable) {
      checklist.push_back(detail::check_item(3, "report Spearman rho and Krippendorff alpha", "fail",
                                             "not evaluable: fewer than two raters"));
    } else {
      const bool ok = task_primary->alpha_mean_adjusted >= cfg.alpha_threshold;
      checklist.push_back(detail::check_item(
          3, "report Spearman rho and Krippendorff alpha", ok ? "pass" : "fail",
          "rho = " + detail::fmt(task_primary->spearman_rho) + ", alpha (mean-adjusted) = " +
              detail::fmt(task_primary->alpha_mean_adjusted) + ", alpha (raw) = " + detail::fmt(task_primary->alpha_raw) +
              "; threshold " + detail::fmt(cfg.alpha_threshold)));
    }
  }

  // Item 4: standardization.
  {
    const bool ok = agg.unstandardized_groups.empty();
    std::string det = "occupation indices standardized to mean 0, population variance 1 per rater and prompt";
    if (two_raters && task_primary)
      det += "; level bias " + rb + " - " + ra + " = " + detail::fmt(task_primary->mean_bias) + " points removed";
    if (!ok) det += "; groups not standardizable: " + std::to_string(agg.unstandardized_groups.size());
    checklist.push_back(detail::check_item(4, "standardize scores before regression", ok ? "pass" : "warn", det));
  }

  // PCA and external validation.
  {
    Json dim = Json::object();
    if (cfg.indices.empty()) {
      dim["status"] = "skipped";
      conditions["condition2_convergent"] = Json{{"status", "skipped"}, {"detail", "skipped: no external index provided"}};
      checklist.push_back(detail::check_item(7, "validate externally", "warn", "skipped: no external index provided"));
    } else {
      detail::stage("pca", [&] {
        IndexTable table = load_index_table(cfg.indices);
        const std::vector<std::string> external = table.names();
        const std::string own = "lg_" + ra;
        table = table.with_column(own, index_values(agg, ra, ref_prompt));
        const auto corr = correlation_matrix(table, MissingPolicy::pairwise_complete);
        dim["correlation"] = to_json(corr);
        const auto own_idx = table.index_of(own);
        std::optional<std::pair<std::string, double>> best;
        for (std::size_t j = 0; j < external.size(); ++j)
          if (auto r = corr.at(own_idx, j); r && (!best || *r > best->second)) best = {external[j], *r};
        try {
          dim["pca"] = to_json(pca(table));
          dim["status"] = "pass";
        } catch (const Error& e) {
          dim["pca"] = nullptr;
          dim["status"] = "warn";
          dim["pca_error"] = e.what();
        }
        if (!best) {
          conditions["condition2_convergent"] =
              Json{{"status", "warn"}, {"detail", "index does not overlap any external index"}};
          checklist.push_back(detail::check_item(7, "validate externally", "warn", "no overlapping external index"));
        } else {
          const bool ok = best->second >= cfg.convergent_threshold;
          conditions["condition2_convergent"] = Json{{"status", ok ? "pass" : "warn"},
                                                     {"strongest_correlate", best->first},
                                                     {"r", best->second},
                                                     {"threshold", cfg.convergent_threshold}};
          checklist.push_back(detail::check_item(7, "validate externally", ok ? "pass" : "warn",
                                                 "strongest external correlate " + best->first + " (r = " +
                                                     detail::fmt(best->second) + ")"));
        }
        return 0;
      });
    }
    report["dimensionality"] = dim;
  }

  // Prompt sensitivity.
  {
    Json sens = Json::object();
    const std::string srater = cfg.sensitivity_rater.empty() ? ra : cfg.sensitivity_rater;
    std::set<std::string> prompts;
    for (const auto& r : panel.select(srater))
      if (r.get(cfg.field)) prompts.insert(r.prompt_id);
    sens["rater_id"] = srater;
    if (prompts.size() < 2) {
      sens["status"] = "skipped";
      checklist.push_back(detail::check_item(6, "report prompt sensitivity", "warn",
                                             "rater '" + srater + "' has fewer than 2 prompt variants"));
    } else {
      detail::stage("sensitivity", [&] {
        const auto before = prompt_rank_matrix(panel, srater, cfg.field);
        std::map<std::string, Polarity> pol;
        for (const auto& p : cfg.inverse_prompts) pol[p] = Polarity::inverse;
        sens["rank_matrix_before"] = to_json(before);
        if (before.complete()) {
          const auto inv = detect_and_invert(before, panel, pol, cfg.field);
          sens["inverted_prompts"] = inv.inverted;
          sens["rank_matrix_after"] = to_json(prompt_rank_matrix(inv.panel, srater, cfg.field));
          sens["decomposition"] = to_json(variance_decomposition(inv.panel, srater, cfg.field));
        } else {
          sens["inverted_prompts"] = Json::array();
          sens["decomposition"] = to_json(variance_decomposition(panel, srater, cfg.field));
        }
        return 0;
      });
      const bool enough = prompts.size() >= 3;
      sens["status"] = enough ? "pass" : "warn";
      const auto& d = sens["decomposition"];
      checklist.push_back(detail::check_item(
          6, "report prompt sensitivity", enough ? "pass" : "warn",
          std::to_string(prompts.size()) + " prompt variants; variance shares task/prompt/residual = " +
              detail::fmt(d["share_task"].get<double>()) + "/" + detail::fmt(d["share_prompt"].get<double>()) + "/" +
              detail::fmt(d["share_residual"].get<double>())));
    }
    report["sensitivity"] = sens;
  }

  // Econometrics.
  {
    Json econ = Json::object();
    if (cfg.data.empty()) {
      econ["status"] = "skipped";
      checklist.push_back(detail::check_item(
          5, "use ORIV with two model scores", "warn",
          two_raters ? "two raters available but no outcome data supplied; ORIV not run" : "no outcome data supplied"));
    } else {
      detail::stage("econometrics", [&] {
        std::set<std::string> ignore(cfg.ignore_columns.begin(), cfg.ignore_columns.end());
        Dataset data = load_dataset(cfg.data, cfg.cluster, ignore);
        const auto att = attenuation_factor(data.column(cfg.measure_a), data.column(cfg.measure_b));
        data = standardize_column(data, cfg.measure_a, cfg.standardize_within);
        data = standardize_column(data, cfg.measure_b, cfg.standardize_within);
        auto regs_a = cfg.controls;
        regs_a.push_back(cfg.measure_a);
        auto regs_b = cfg.controls;
        regs_b.push_back(cfg.measure_b);
        const auto ols_a = ols(data, cfg.outcome, regs_a);
        const auto ols_b = ols(data, cfg.outcome, regs_b);
        const auto iv = oriv(data, cfg.outcome, cfg.measure_a, cfg.measure_b, cfg.controls);
        econ["standardization"] = cfg.standardize_within.empty() ? "pooled" : "within " + cfg.standardize_within;
        econ["attenuation"] = Json{{"lambda_hat", att.lambda_hat},
                                   {"var_diff", att.var_diff},
                                   {"var_primary", att.var_primary},
                                   {"correction_factor", att.correction()}};
        econ["ols_a"] = to_json(ols_a);
        econ["ols_b"] = to_json(ols_b);
        econ["oriv"] = to_json(iv);
        const double b_ols = ols_a.coef(cfg.measure_a);
        const double b_iv = iv.coef(cfg.measure_a);
        econ["oriv_over_ols"] = b_ols != 0.0 ? Json(b_iv / b_ols) : Json(nullptr);
        econ["horse_race"] = Json::array();
        if (!cfg.horserace_blocks.empty()) {
          std::string outcome = cfg.outcome;
          std::vector<std::string> controls = cfg.controls;
          const auto blocks =
              parse_horserace_blocks(Json::parse(detail::read_file(cfg.horserace_blocks)), outcome, controls);
          econ["horse_race"] = to_json(horse_race(data, outcome, controls, blocks));
        }
        const bool strong = !iv.weak_instrument;
        econ["status"] = strong ? "pass" : "warn";
        checklist.push_back(detail::check_item(
            5, "use ORIV with two model scores", strong ? "pass" : "warn",
            "ORIV slope " + detail::fmt(b_iv) + " vs OLS " + detail::fmt(b_ols) + ", first-stage F = " +
                detail::fmt(*iv.first_stage_f) + ", lambda_hat = " + detail::fmt(att.lambda_hat)));
        return 0;
      });
    }
    report["econometrics"] = econ;
  }

  std::sort(checklist.begin(), checklist.end(),
            [](const Json& a, const Json& b) { return a["item"].get<int>() < b["item"].get<int>(); });
  report["checklist"] = checklist;
  report["conditions"] = conditions;

  bool any_fail = false, any_warn = false;
  for (const auto& c : checklist) {
    any_fail |= c["status"] == "fail";
    any_warn |= c["status"] == "warn";
  }
  for (const auto& [k, c] : conditions.items()) any_fail |= c["status"] == "fail";
  report["overall_status"] = any_fail ? "fail" : any_warn ? "warn" : "pass";
  return {report, any_fail ? 1 : 0};
}

}  // namespace latent_gauge
