// latent-gauge: command-line front end for the measurement pipeline.
//
// Exit codes: 0 success, 1 report has a failing section, 2 usage or
// validation error, 3 any other runtime error.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "latent_gauge.hpp"
#include "latent_gauge/http_provider.hpp"

namespace lg = latent_gauge;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "json";
};

void emit(const Globals& g, const std::string& text) {
  if (g.out.empty() || g.out == "-") {
    std::fwrite(text.data(), 1, text.size(), stdout);
  } else {
    if (auto parent = fs::path(g.out).parent_path(); !parent.empty()) fs::create_directories(parent);
    lg::detail::write_file(g.out, text);
  }
}

void emit_report(const Globals& g, const lg::Json& report, const std::string& title) {
  emit(g, lg::render_report(report, lg::parse_report_format(g.format), title));
}

// Sibling path: "out/pca.json" + "_loadings.csv" -> "out/pca_loadings.csv".
std::string sibling(const std::string& out, const std::string& suffix) {
  const fs::path p(out);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

lg::PromptTemplate resolve_template(const std::string& id_or_path, const std::string& polarity,
                                    const std::string& schema) {
  if (!fs::exists(id_or_path)) return lg::builtin_template(id_or_path);
  const auto pol = polarity == "inverse" ? lg::Polarity::inverse : lg::Polarity::direct;
  auto sch = lg::ResponseSchema::augmentation_0_100;
  if (schema == "substitution_0_100") sch = lg::ResponseSchema::substitution_0_100;
  else if (schema == "single_0_100") sch = lg::ResponseSchema::single_0_100;
  return lg::PromptTemplate(fs::path(id_or_path).stem().string(), lg::detail::read_file(id_or_path), pol, sch);
}

std::string aggregation_csv(const lg::Aggregation& agg) {
  std::string out = "occupation_code,rater_id,prompt_id,value_raw,value_std,n_tasks,weight_sum,sparse\n";
  for (const auto& i : agg.indices) {
    out += lg::detail::csv_escape(i.occupation_code) + ',' + lg::detail::csv_escape(i.rater_id) + ',' +
           lg::detail::csv_escape(i.prompt_id) + ',' + lg::detail::format_roundtrip(i.value_raw) + ',' +
           lg::detail::format_roundtrip(i.value_std) + ',' + std::to_string(i.n_tasks) + ',' +
           lg::detail::format_roundtrip(i.weight_sum) + ',' + (i.sparse ? "true" : "false") + '\n';
  }
  return out;
}

// Wide table: one column per (rater, prompt), standardized values.
lg::IndexTable aggregation_table(const lg::Aggregation& agg) {
  std::set<std::string> occs;
  std::set<std::pair<std::string, std::string>> groups;
  for (const auto& i : agg.indices) {
    occs.insert(i.occupation_code);
    groups.emplace(i.rater_id, i.prompt_id);
  }
  std::vector<std::string> codes(occs.begin(), occs.end()), names;
  std::vector<std::vector<std::optional<double>>> cols;
  for (const auto& [r, p] : groups) {
    names.push_back(r + "_" + p);
    const auto values = lg::index_values(agg, r, p);
    auto& col = cols.emplace_back();
    for (const auto& c : codes) {
      auto it = values.find(c);
      col.push_back(it == values.end() ? std::nullopt : std::optional<double>(it->second));
    }
  }
  return lg::IndexTable(codes, names, cols);
}

std::string loadings_csv(const lg::PcaResult& p) {
  std::string out = "index";
  for (Eigen::Index c = 0; c < p.loadings.cols(); ++c) out += ",pc" + std::to_string(c + 1);
  out += '\n';
  for (Eigen::Index i = 0; i < p.loadings.rows(); ++i) {
    out += lg::detail::csv_escape(p.names[static_cast<std::size_t>(i)]);
    for (Eigen::Index c = 0; c < p.loadings.cols(); ++c) out += ',' + lg::detail::format_roundtrip(p.loadings(i, c));
    out += '\n';
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-gauge: treat model-generated scores as noisy measurements of latent variables"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out", g.out, "Output path (stdout when omitted)");
  app.add_option("--format", g.format, "Report format")->check(CLI::IsMember({"json", "markdown"}))->capture_default_str();
  auto fallthrough = [&](CLI::App* sub) {
    sub->fallthrough();
    return sub;
  };

  // score
  std::string tasks_path, template_id = "A", model, cache_dir, endpoint, manifest, polarity = "direct",
                          schema = "augmentation_0_100";
  int parallel = 4, retries = 3, backoff_ms = 500;
  bool mock = false;
  double offset = 0.0, noise_sd = 0.0;
  auto* score = fallthrough(app.add_subcommand("score", "Score tasks with one template and one model"));
  score->add_option("--tasks", tasks_path, "Task CSV (task_id, occupation_code, weight, task_text)")->required();
  score->add_option("--template", template_id, "Built-in template id (A-D) or template file")->capture_default_str();
  score->add_option("--polarity", polarity, "Polarity of a template file")->check(CLI::IsMember({"direct", "inverse"}));
  score->add_option("--schema", schema, "Response schema of a template file")
      ->check(CLI::IsMember({"augmentation_0_100", "substitution_0_100", "single_0_100"}));
  score->add_option("--model", model, "Model name (rater id)")->required();
  score->add_option("--parallel", parallel, "Requests in flight")->capture_default_str();
  score->add_option("--retries", retries, "Retries per task")->capture_default_str();
  score->add_option("--backoff-ms", backoff_ms, "Base retry delay")->capture_default_str();
  score->add_option("--cache", cache_dir, "Response cache directory");
  score->add_option("--endpoint", endpoint, "HTTP endpoint of a real provider");
  score->add_option("--manifest", manifest, "Failure manifest path (default: <out>_failures.csv)");
  score->add_flag("--mock", mock, "Use the deterministic mock provider");
  score->add_option("--offset", offset, "Mock level offset in score points");
  score->add_option("--noise-sd", noise_sd, "Mock rater-specific noise sd in score points");

  // aggregate
  std::string panel_path, field = "augmentation", table_out;
  std::size_t min_tasks = 1;
  auto* aggregate = fallthrough(app.add_subcommand("aggregate", "Weighted occupation indices"));
  aggregate->add_option("--panel", panel_path, "Score panel (csv or jsonl)")->required();
  aggregate->add_option("--field", field, "Score field")->check(CLI::IsMember({"augmentation", "substitution"}));
  aggregate->add_option("--min-tasks", min_tasks, "Flag occupations with fewer tasks as sparse");
  aggregate->add_option("--index-table", table_out, "Also write a wide index table (one column per rater/prompt)");

  // reliability
  std::string level = "task";
  auto* reliability = fallthrough(app.add_subcommand("reliability", "Inter-rater agreement for every rater pair"));
  reliability->add_option("--panel", panel_path, "Score panel")->required();
  reliability->add_option("--level", level, "task or occupation")->check(CLI::IsMember({"task", "occupation"}));
  reliability->add_option("--field", field, "Score field")->check(CLI::IsMember({"augmentation", "substitution"}));

  // pca
  std::string indices_path, loadings_out;
  auto* pca_cmd = fallthrough(app.add_subcommand("pca", "Correlation matrix and principal components of indices"));
  pca_cmd->add_option("--indices", indices_path, "Index table CSV")->required();
  pca_cmd->add_option("--loadings", loadings_out, "Loadings CSV (default: <out>_loadings.csv)");

  // prompts
  std::string rater;
  std::vector<std::string> inverse;
  auto* prompts = fallthrough(app.add_subcommand("prompts", "Prompt sensitivity and variance decomposition"));
  prompts->add_option("--panel", panel_path, "Score panel")->required();
  prompts->add_option("--rater", rater, "Rater whose prompt variants are compared")->required();
  prompts->add_option("--field", field, "Score field")->check(CLI::IsMember({"augmentation", "substitution"}));
  prompts->add_option("--inverse", inverse, "Prompts known to be inverse-polarity")->delimiter(',');

  // oriv
  std::string data_path, outcome = "y", measure_a, measure_b, cluster, within;
  std::vector<std::string> controls, ignore{"unit_id"};
  auto* oriv_cmd = fallthrough(app.add_subcommand("oriv", "OLS and ORIV regressions on two noisy measures"));
  oriv_cmd->add_option("--data", data_path, "Dataset CSV")->required();
  oriv_cmd->add_option("--outcome", outcome, "Outcome column")->capture_default_str();
  oriv_cmd->add_option("--measure-a", measure_a, "First measure")->required();
  oriv_cmd->add_option("--measure-b", measure_b, "Second measure")->required();
  oriv_cmd->add_option("--controls", controls, "Control columns")->delimiter(',');
  oriv_cmd->add_option("--cluster", cluster, "Cluster column for robust standard errors");
  oriv_cmd->add_option("--within", within, "Standardize measures within groups of this column");
  oriv_cmd->add_option("--ignore", ignore, "Non-numeric columns to skip")->delimiter(',');

  // horserace
  std::string blocks_path;
  auto* horserace = fallthrough(app.add_subcommand("horserace", "Progressive R-squared across regressor blocks"));
  horserace->add_option("--data", data_path, "Dataset CSV")->required();
  horserace->add_option("--blocks", blocks_path, "Blocks JSON {outcome, controls, blocks:[{label, regressors}]}")
      ->required();
  horserace->add_option("--cluster", cluster, "Cluster column");
  horserace->add_option("--ignore", ignore, "Non-numeric columns to skip")->delimiter(',');

  // simulate
  lg::SimConfig sim;
  std::string panel_out, indices_out;
  std::size_t n_occ = 60, tasks_per_occ = 8;
  auto* simulate = fallthrough(app.add_subcommand("simulate", "Synthetic data with known latent truth"));
  simulate->add_option("--n", sim.n, "Units")->capture_default_str();
  simulate->add_option("--beta", sim.beta, "True slope on the latent variable")->capture_default_str();
  simulate->add_option("--lambda", sim.lambda_true, "Reliability of each measure")->capture_default_str();
  simulate->add_option("--offsets", sim.level_offsets, "Level offset per measure")->delimiter(',');
  simulate->add_option("--noise-correlation", sim.noise_correlation, "Correlation between measurement errors");
  simulate->add_option("--outcome-sd", sim.outcome_noise_sd, "Outcome noise sd")->capture_default_str();
  simulate->add_option("--panel-out", panel_out, "Also write a synthetic score panel");
  simulate->add_option("--indices-out", indices_out, "Also write synthetic external indices");
  simulate->add_option("--occupations", n_occ, "Occupations in the synthetic panel")->capture_default_str();
  simulate->add_option("--tasks-per-occupation", tasks_per_occ, "Tasks per occupation")->capture_default_str();

  // report
  std::string config_path;
  auto* report = fallthrough(app.add_subcommand("report", "Run the full validity pipeline from a config file"));
  report->add_option("--config", config_path, "Pipeline config (key = value)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*score) {
      const auto tasks = lg::load_tasks(tasks_path);
      const auto tmpl = resolve_template(template_id, polarity, schema);
      lg::ProviderConfig cfg;
      cfg.model_name = model;
      cfg.max_parallel = parallel;
      cfg.max_retries = retries;
      cfg.cache_dir = cache_dir;
      cfg.backoff_base_ms = backoff_ms;
      std::unique_ptr<lg::Provider> provider;
      if (mock) {
        lg::MockOptions opt;
        opt.seed = g.seed;
        opt.offsets[model] = offset;
        opt.noise_sd[model] = noise_sd;
        provider = std::make_unique<lg::MockProvider>(opt);
        cfg.provider_name = "mock";
      } else {
        if (endpoint.empty()) throw lg::ValidationError("score: --endpoint is required unless --mock is given");
        provider = std::make_unique<lg::HttpProvider>(endpoint);
        cfg.provider_name = "http";
        cfg.endpoint = endpoint;
      }
      const auto run = lg::score_tasks(tasks, tmpl, cfg, *provider, {g.seed});
      std::string fail = "task_id,attempts,last_error\n";
      for (const auto& f : run.failures)
        fail += lg::detail::csv_escape(f.task_id) + ',' + std::to_string(f.attempts) + ',' +
                lg::detail::csv_escape(f.last_error) + '\n';
      const std::string manifest_path =
          !manifest.empty() ? manifest : (g.out.empty() || g.out == "-") ? "" : sibling(g.out, "_failures.csv");
      if (!manifest_path.empty()) lg::detail::write_file(manifest_path, fail);
      std::fprintf(stderr, "scored %zu of %zu tasks (%zu provider calls, %zu cache hits, %zu failures)\n",
                   run.records.size(), tasks.size(), run.provider_calls, run.cache_hits, run.failures.size());
      if (run.records.empty()) throw lg::Error("score: no task was scored");
      emit(g, lg::panel_to_csv(run.panel({{"provider", cfg.provider_name}, {"model", model}, {"template", tmpl.prompt_id()}})));
      return 0;
    }
    if (*aggregate) {
      const auto panel = lg::load_panel(panel_path);
      const auto agg = lg::aggregate_occupations(panel, lg::parse_score_field(field), {min_tasks});
      if (!table_out.empty()) lg::detail::write_file(table_out, lg::index_table_to_csv(aggregation_table(agg)));
      for (const auto& e : agg.excluded)
        std::fprintf(stderr, "excluded %s/%s/%s: %s\n", e.occupation_code.c_str(), e.rater_id.c_str(),
                     e.prompt_id.c_str(), e.reason.c_str());
      emit(g, aggregation_csv(agg));
      return 0;
    }
    if (*reliability) {
      const auto panel = lg::load_panel(panel_path);
      const auto lvl = level == "task" ? lg::ReliabilityLevel::task : lg::ReliabilityLevel::occupation;
      lg::Json rep = lg::to_json(lg::reliability_matrix(panel, lvl, lg::parse_score_field(field)));
      rep["level"] = level;
      rep["field"] = field;
      emit_report(g, rep, "Reliability");
      return 0;
    }
    if (*pca_cmd) {
      const auto table = lg::load_index_table(indices_path);
      const auto result = lg::pca(table);
      lg::Json rep = lg::to_json(result);
      rep["correlation"] = lg::to_json(lg::correlation_matrix(table, lg::MissingPolicy::pairwise_complete));
      emit_report(g, rep, "Principal components");
      const std::string lpath = !loadings_out.empty() ? loadings_out
                                : (g.out.empty() || g.out == "-") ? ""
                                                                  : sibling(g.out, "_loadings.csv");
      if (!lpath.empty()) lg::detail::write_file(lpath, loadings_csv(result));
      return 0;
    }
    if (*prompts) {
      const auto panel = lg::load_panel(panel_path);
      const auto f = lg::parse_score_field(field);
      const auto before = lg::prompt_rank_matrix(panel, rater, f);
      std::map<std::string, lg::Polarity> pol;
      for (const auto& p : inverse) pol[p] = lg::Polarity::inverse;
      const auto inv = lg::detect_and_invert(before, panel, pol, f);
      lg::Json rep{{"rater_id", rater},
                   {"rank_matrix_before", lg::to_json(before)},
                   {"inverted_prompts", inv.inverted},
                   {"rank_matrix_after", lg::to_json(inv.matrix)},
                   {"decomposition", lg::to_json(lg::variance_decomposition(inv.panel, rater, f))}};
      emit_report(g, rep, "Prompt sensitivity");
      return 0;
    }
    if (*oriv_cmd) {
      std::set<std::string> ign(ignore.begin(), ignore.end());
      if (!within.empty()) ign.erase(within);
      auto data = lg::load_dataset(data_path, cluster, ign);
      const auto att = lg::attenuation_factor(data.column(measure_a), data.column(measure_b));
      data = lg::standardize_column(data, measure_a, within);
      data = lg::standardize_column(data, measure_b, within);
      auto ra = controls, rb = controls;
      ra.push_back(measure_a);
      rb.push_back(measure_b);
      const auto ols_a = lg::ols(data, outcome, ra);
      const auto ols_b = lg::ols(data, outcome, rb);
      const auto iv = lg::oriv(data, outcome, measure_a, measure_b, controls);
      lg::Json rep{{"outcome", outcome},
                   {"standardization", within.empty() ? "pooled" : "within " + within},
                   {"attenuation", {{"lambda_hat", att.lambda_hat}, {"var_diff", att.var_diff},
                                    {"var_primary", att.var_primary}, {"correction_factor", att.correction()}}},
                   {"ols_a", lg::to_json(ols_a)},
                   {"ols_b", lg::to_json(ols_b)},
                   {"oriv", lg::to_json(iv)},
                   {"oriv_over_ols", iv.coef(measure_a) / ols_a.coef(measure_a)}};
      emit_report(g, rep, "Regression");
      return 0;
    }
    if (*horserace) {
      const auto data = lg::load_dataset(data_path, cluster, std::set<std::string>(ignore.begin(), ignore.end()));
      std::string y = "y";
      std::vector<std::string> ctrl;
      const auto blocks = lg::parse_horserace_blocks(lg::Json::parse(lg::detail::read_file(blocks_path)), y, ctrl);
      lg::Json rep{{"outcome", y}, {"controls", ctrl}, {"models", lg::to_json(lg::horse_race(data, y, ctrl, blocks))}};
      emit_report(g, rep, "Horse race");
      return 0;
    }
    if (*simulate) {
      sim.seed = g.seed;
      if (sim.level_offsets.size() < 2) sim.level_offsets.resize(2, 0.0);
      emit(g, lg::sim_panel_to_csv(lg::simulate_measurement(sim)));
      if (!panel_out.empty() || !indices_out.empty()) {
        lg::StudyConfig sc;
        sc.seed = g.seed;
        sc.n_occupations = n_occ;
        sc.tasks_per_occupation = tasks_per_occ;
        const auto study = lg::simulate_study(sc);
        if (!panel_out.empty()) lg::write_panel(study.panel, panel_out, lg::panel_format_from_path(panel_out));
        if (!indices_out.empty()) lg::detail::write_file(indices_out, lg::index_table_to_csv(study.indices));
      }
      return 0;
    }
    if (*report) {
      lg::PipelineConfig cfg;
      try {
        cfg = lg::load_pipeline_config(config_path);
      } catch (const lg::ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
      }
      const auto outcome_ = lg::run_pipeline(cfg);
      emit_report(g, outcome_.report, "Validity report");
      std::fprintf(stderr, "overall status: %s\n", outcome_.report["overall_status"].get<std::string>().c_str());
      return outcome_.exit_code;
    }
  } catch (const lg::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
