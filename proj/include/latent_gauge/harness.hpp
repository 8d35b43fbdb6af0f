#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "latent_gauge/detail/csv.hpp"
#include "latent_gauge/detail/format.hpp"
#include "latent_gauge/error.hpp"
#include "latent_gauge/panel.hpp"
#include "latent_gauge/random.hpp"
#include "latent_gauge/sensitivity.hpp"

namespace latent_gauge {

enum class ResponseSchema { augmentation_0_100, substitution_0_100, single_0_100 };

inline std::string_view to_string(ResponseSchema s) {
  switch (s) {
    case ResponseSchema::augmentation_0_100: return "augmentation_0_100";
    case ResponseSchema::substitution_0_100: return "substitution_0_100";
    case ResponseSchema::single_0_100: return "single_0_100";
  }
  return "?";
}

inline constexpr std::string_view kTaskPlaceholder = "{{task}}";

class PromptTemplate {
 public:
  PromptTemplate(std::string prompt_id, std::string template_text, Polarity polarity, ResponseSchema schema)
      : prompt_id_(std::move(prompt_id)), text_(std::move(template_text)), polarity_(polarity), schema_(schema) {
    std::size_t count = 0;
    for (auto pos = text_.find(kTaskPlaceholder); pos != std::string::npos;
         pos = text_.find(kTaskPlaceholder, pos + kTaskPlaceholder.size()))
      ++count;
    if (count != 1)
      throw ValidationError("template '" + prompt_id_ + "' must contain exactly one {{task}} placeholder, found " +
                            std::to_string(count));
  }

  [[nodiscard]] const std::string& prompt_id() const noexcept { return prompt_id_; }
  [[nodiscard]] const std::string& text() const noexcept { return text_; }
  [[nodiscard]] Polarity polarity() const noexcept { return polarity_; }
  [[nodiscard]] ResponseSchema schema() const noexcept { return schema_; }

 private:
  std::string prompt_id_;
  std::string text_;
  Polarity polarity_;
  ResponseSchema schema_;
};

// The four shipped framings: A baseline augmentation (also elicits
// substitution), B behavioral productivity gain, C counterfactual value
// change, D resistance to AI (inverse construct).
inline const std::vector<PromptTemplate>& builtin_templates() {
  static const std::vector<PromptTemplate> templates{
      {"A",
       "You are rating a single occupational task.\n"
       "Task: {{task}}\n\n"
       "1. Augmentation: to what extent could a generative AI system assist a person carrying out this task, "
       "acting as a complementary tool while the person stays in charge? (0 = not at all, 100 = in every part)\n"
       "2. Substitution: to what extent could a generative AI system carry out this task entirely on its own, "
       "with no person involved? (0 = not at all, 100 = completely)\n\n"
       "Answer with JSON only: {\"augmentation\": <0-100>, \"substitution\": <0-100>}",
       Polarity::direct, ResponseSchema::augmentation_0_100},
      {"B",
       "Consider a skilled worker performing the following task with access to a modern generative AI assistant.\n"
       "Task: {{task}}\n\n"
       "How large is the gain in output per hour the worker would achieve by using the assistant, compared with "
       "working without it? (0 = no gain, 100 = the largest gain imaginable)\n\n"
       "Answer with JSON only: {\"score\": <0-100>}",
       Polarity::direct, ResponseSchema::single_0_100},
      {"C",
       "Imagine two versions of the same workplace: one where generative AI tools are available and one where "
       "they never existed.\nTask: {{task}}\n\n"
       "How much more valuable is a person's contribution to this task in the first version than in the second? "
       "(0 = no difference, 100 = vastly more valuable)\n\n"
       "Answer with JSON only: {\"score\": <0-100>}",
       Polarity::direct, ResponseSchema::single_0_100},
      {"D",
       "Task: {{task}}\n\n"
       "How resistant is this task to any involvement of generative AI, meaning the work depends on abilities "
       "such systems cannot contribute to? (0 = not resistant at all, 100 = completely resistant)\n\n"
       "Answer with JSON only: {\"score\": <0-100>}",
       Polarity::inverse, ResponseSchema::single_0_100},
  };
  return templates;
}

inline const PromptTemplate& builtin_template(std::string_view id) {
  for (const auto& t : builtin_templates())
    if (t.prompt_id() == id) return t;
  throw ValidationError("no built-in template '" + std::string(id) + "' (available: A, B, C, D)");
}

inline std::string render_prompt(const PromptTemplate& tmpl, std::string_view task_text) {
  if (detail::trim(task_text).empty()) throw ValidationError("render_prompt: empty task text");
  std::string out = tmpl.text();
  const auto pos = out.find(kTaskPlaceholder);
  out.replace(pos, kTaskPlaceholder.size(), task_text);
  return out;
}

// Outcome vocabulary a scoring prompt must not mention; a word matches when
// it starts with one of these stems.
inline const std::vector<std::string>& outcome_wordlist() {
  static const std::vector<std::string> words{"wage", "salar", "employment", "earning"};
  return words;
}

// Returns the offending words (lowercased, deduplicated, in order of first
// appearance); empty means the template passes.
inline std::vector<std::string> lint_template(std::string_view text) {
  std::vector<std::string> hits;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    for (const auto& stem : outcome_wordlist()) {
      if (word.starts_with(stem) && std::find(hits.begin(), hits.end(), word) == hits.end()) hits.push_back(word);
    }
    word.clear();
  };
  for (char c : text) {
    if (std::isalpha(static_cast<unsigned char>(c))) word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    else flush();
  }
  flush();
  return hits;
}

inline std::vector<std::string> lint_template(const PromptTemplate& tmpl) { return lint_template(tmpl.text()); }

struct ParsedScores {
  std::optional<double> augmentation;
  std::optional<double> substitution;
};

namespace detail {

inline std::vector<std::string> schema_keys(ResponseSchema s) {
  switch (s) {
    case ResponseSchema::augmentation_0_100: return {"augmentation", "substitution"};
    case ResponseSchema::substitution_0_100: return {"substitution"};
    case ResponseSchema::single_0_100: return {"score"};
  }
  return {};
}

// Candidate JSON objects in order of their opening brace.
inline std::vector<nlohmann::json> json_objects_in(std::string_view body) {
  std::vector<nlohmann::json> out;
  for (std::size_t start = body.find('{'); start != std::string_view::npos; start = body.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escape = false;
    for (std::size_t i = start; i < body.size(); ++i) {
      const char c = body[i];
      if (in_string) {
        if (escape) escape = false;
        else if (c == '\\') escape = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        auto parsed = nlohmann::json::parse(body.substr(start, i - start + 1), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) out.push_back(std::move(parsed));
        break;
      }
    }
  }
  return out;
}

}  // namespace detail

// Extracts the first well-formed JSON object carrying the schema's keys and
// validates each value to [0, 100]. Surrounding prose is ignored.
inline ParsedScores parse_response(std::string_view body, ResponseSchema schema) {
  const auto keys = detail::schema_keys(schema);
  const auto objects = detail::json_objects_in(body);
  if (objects.empty()) throw ParseError(ParseError::Kind::no_json, "no JSON object found in response");
  const nlohmann::json* chosen = nullptr;
  for (const auto& obj : objects) {
    if (std::all_of(keys.begin(), keys.end(), [&](const std::string& k) { return obj.contains(k); })) {
      chosen = &obj;
      break;
    }
  }
  if (!chosen) {
    std::string missing;
    for (const auto& k : keys)
      if (!objects.front().contains(k)) missing += (missing.empty() ? "" : ", ") + k;
    throw ParseError(ParseError::Kind::missing_key, "response JSON lacks key(s): " + missing);
  }
  auto value = [&](const std::string& k) {
    const auto& v = (*chosen)[k];
    if (!v.is_number()) throw ParseError(ParseError::Kind::not_numeric, "value of '" + k + "' is not a number");
    const double x = v.get<double>();
    if (!std::isfinite(x) || x < 0.0 || x > 100.0)
      throw ParseError(ParseError::Kind::out_of_range,
                       "value of '" + k + "' = " + detail::format_roundtrip(x) + " outside [0, 100]");
    return x;
  };
  ParsedScores out;
  switch (schema) {
    case ResponseSchema::augmentation_0_100:
      out.augmentation = value("augmentation");
      out.substitution = value("substitution");
      break;
    case ResponseSchema::substitution_0_100:
      out.substitution = value("substitution");
      break;
    case ResponseSchema::single_0_100:
      out.augmentation = value("score");
      break;
  }
  return out;
}

struct ProviderConfig {
  std::string provider_name = "mock";
  std::string model_name;
  std::string endpoint;
  int max_parallel = 4;
  int max_retries = 3;
  std::string cache_dir;  // empty disables caching
  double temperature = 0.0;
  int backoff_base_ms = 500;  // delay before retry k is base * 2^(k-1) * (1 + jitter)

  void validate() const {
    if (model_name.empty()) throw ValidationError("provider config: model_name is empty");
    if (max_parallel < 1) throw ValidationError("provider config: max_parallel must be >= 1");
    if (max_retries < 0) throw ValidationError("provider config: max_retries must be >= 0");
    if (backoff_base_ms < 0) throw ValidationError("provider config: backoff must be >= 0");
  }
};

struct RawResponse {
  std::string task_id;
  std::string rater_id;
  std::string prompt_id;
  std::string body;
  int attempt = 1;
};

struct ProviderRequest {
  std::string model;
  std::string prompt;
  double temperature = 0.0;
  std::string task_id;  // routing metadata; not sent to real endpoints
  std::string prompt_id;
};

// Transport-level failure (network, HTTP status); retried like parse errors.
class ProviderError : public Error {
 public:
  using Error::Error;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string complete(const ProviderRequest& request) = 0;
};

struct MockOptions {
  std::uint64_t seed = 0;
  std::map<std::string, double> offsets;   // model_name -> level shift (points)
  std::map<std::string, double> noise_sd;  // model_name -> rater-specific noise sd (points)
  std::set<std::string> garbage_tasks;     // tasks answered with unparseable text
  std::set<std::string> inverse_prompts;   // prompts answered as 100 - base
  // Models mapped to the same family share a noise draw of family_noise_sd
  // points per (task, prompt), so within-family pairs agree more closely.
  std::map<std::string, std::string> family;
  std::map<std::string, double> family_noise_sd;
};

namespace detail {

inline std::uint64_t field_hash(std::initializer_list<std::string_view> fields, std::uint64_t seed) {
  std::uint64_t h = fnv1a64("latent-gauge", splitmix64(seed));
  for (auto f : fields) {
    const std::string len = std::to_string(f.size()) + ":";
    h = fnv1a64(len, h);
    h = fnv1a64(f, h);
  }
  return h;
}

inline double round2(double x) { return std::round(x * 100.0) / 100.0; }

}  // namespace detail

// Deterministic fake model answer. The base score depends only on
// (task, prompt, seed), so raters differ exactly by their offset plus their
// own optional noise; results are clamped to [0, 100].
inline std::string mock_provider(std::string_view task_id, std::string_view prompt_id, std::string_view model_name,
                                 std::uint64_t seed, double offset = 0.0, double noise_sd = 0.0,
                                 bool inverse = false, double shared_shift = 0.0) {
  Stream base_rng(detail::field_hash({task_id, prompt_id}, seed), 0);
  Stream sub_rng(detail::field_hash({task_id, prompt_id, "substitution"}, seed), 0);
  Stream noise_rng(detail::field_hash({task_id, prompt_id, model_name}, seed), 0);
  double aug = detail::round2(std::clamp(50.0 + 15.0 * base_rng.normal(), 0.0, 100.0));
  if (inverse) aug = 100.0 - aug;
  double sub = detail::round2(std::clamp(40.0 + 15.0 * sub_rng.normal(), 0.0, 100.0));
  if (noise_sd > 0.0) {
    aug += detail::round2(noise_sd * noise_rng.normal());
    sub += detail::round2(noise_sd * noise_rng.normal());
  }
  aug += detail::round2(shared_shift);
  aug = std::clamp(aug + offset, 0.0, 100.0);
  sub = std::clamp(sub + offset, 0.0, 100.0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "{\"augmentation\": %.2f, \"substitution\": %.2f, \"score\": %.2f}", aug, sub, aug);
  return buf;
}

class MockProvider : public Provider {
 public:
  explicit MockProvider(MockOptions options = {}) : options_(std::move(options)) {}

  std::string complete(const ProviderRequest& request) override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    if (options_.garbage_tasks.contains(request.task_id)) return "I'm sorry, I can't rate that task.";
    auto lookup = [&](const std::map<std::string, double>& m) {
      auto it = m.find(request.model);
      return it == m.end() ? 0.0 : it->second;
    };
    double shared = 0.0;
    if (auto fam = options_.family.find(request.model); fam != options_.family.end()) {
      auto sd = options_.family_noise_sd.find(fam->second);
      if (sd != options_.family_noise_sd.end() && sd->second > 0.0) {
        Stream rng(detail::field_hash({request.task_id, request.prompt_id, "family", fam->second}, options_.seed), 0);
        shared = sd->second * rng.normal();
      }
    }
    return mock_provider(request.task_id, request.prompt_id, request.model, options_.seed, lookup(options_.offsets),
                         lookup(options_.noise_sd), options_.inverse_prompts.contains(request.prompt_id), shared);
  }

  [[nodiscard]] std::size_t calls() const noexcept { return calls_.load(); }

 private:
  MockOptions options_;
  std::atomic<std::size_t> calls_{0};
};

struct TaskSpec {
  std::string task_id;
  std::string occupation_code;
  double weight = 1.0;
  std::string text;
};

// CSV with columns task_id, occupation_code, weight, task_text.
inline std::vector<TaskSpec> parse_tasks_csv(const std::string& text) {
  auto rows = detail::parse_csv(text);
  if (rows.empty()) throw ValidationError("tasks csv: missing header");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].cells.size(); ++i) col[detail::trim(rows[0].cells[i])] = i;
  for (const char* c : {"task_id", "occupation_code", "weight", "task_text"})
    if (!col.contains(c)) throw ValidationError(std::string("tasks csv: missing column '") + c + "'");
  std::vector<TaskSpec> tasks;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r].cells;
    if (cells.size() != rows[0].cells.size())
      throw ValidationError("tasks csv: row " + std::to_string(r) + " has the wrong number of cells");
    TaskSpec t{cells[col["task_id"]], cells[col["occupation_code"]], 0.0, cells[col["task_text"]]};
    auto w = detail::parse_double(cells[col["weight"]]);
    if (!w || *w < 0.0 || !std::isfinite(*w))
      throw ValidationError("tasks csv: row " + std::to_string(r) + ": invalid weight '" + cells[col["weight"]] + "'");
    t.weight = *w;
    if (!seen.insert(t.task_id).second) throw ValidationError("tasks csv: duplicate task_id '" + t.task_id + "'");
    tasks.push_back(std::move(t));
  }
  return tasks;
}

inline std::vector<TaskSpec> load_tasks(const std::string& path) {
  try {
    return parse_tasks_csv(detail::read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

// Cache key over (model, prompt id, task id, template text).
inline std::string cache_key(std::string_view model, std::string_view prompt_id, std::string_view task_id,
                             std::string_view template_text) {
  const auto h1 = detail::field_hash({model, prompt_id, task_id, template_text}, 0x1234);
  const auto h2 = detail::field_hash({model, prompt_id, task_id, template_text}, 0xABCD);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(h1),
                static_cast<unsigned long long>(h2));
  return buf;
}

// One file per key holding the raw response body verbatim.
class ResponseCache {
 public:
  explicit ResponseCache(std::string dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
  }

  [[nodiscard]] bool enabled() const noexcept { return !dir_.empty(); }

  [[nodiscard]] std::optional<std::string> get(const std::string& key) const {
    if (!enabled()) return std::nullopt;
    const auto path = std::filesystem::path(dir_) / (key + ".txt");
    if (!std::filesystem::exists(path)) return std::nullopt;
    return detail::read_file(path.string());
  }

  void put(const std::string& key, const std::string& body) const {
    if (!enabled()) return;
    const auto path = std::filesystem::path(dir_) / (key + ".txt");
    const auto tmp = std::filesystem::path(dir_) /
                     (key + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())));
    detail::write_file(tmp.string(), body);
    std::filesystem::rename(tmp, path);
  }

 private:
  std::string dir_;
};

struct FailureEntry {
  std::string task_id;
  int attempts = 0;
  std::string last_error;
};

struct ScoringRun {
  std::vector<ScoreRecord> records;  // sorted by task_id
  std::vector<FailureEntry> failures;
  std::vector<RawResponse> responses;  // accepted response per scored task
  std::size_t provider_calls = 0;
  std::size_t cache_hits = 0;

  [[nodiscard]] ScorePanel panel(std::map<std::string, std::string> metadata = {}) const {
    return ScorePanel(records, std::move(metadata));
  }
};

struct ScoringOptions {
  std::uint64_t jitter_seed = 0;
};

// Scores every task with one template and one model. Up to max_parallel
// requests are in flight; results are assembled by task_id, so the output
// does not depend on completion order. A cached body is reused without
// calling the provider; only bodies that parse are cached.
inline ScoringRun score_tasks(const std::vector<TaskSpec>& tasks, const PromptTemplate& tmpl,
                              const ProviderConfig& config, Provider& provider, ScoringOptions options = {}) {
  config.validate();
  {
    std::set<std::string> ids;
    for (const auto& t : tasks)
      if (!ids.insert(t.task_id).second) throw ValidationError("score_tasks: duplicate task_id '" + t.task_id + "'");
  }
  const ResponseCache cache(config.cache_dir);
  struct Slot {
    std::optional<ScoreRecord> record;
    std::optional<RawResponse> response;
    std::optional<FailureEntry> failure;
  };
  std::vector<Slot> slots(tasks.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> calls{0};
  std::atomic<std::size_t> hits{0};

  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
      const auto& task = tasks[i];
      Slot& slot = slots[i];
      const auto key = cache_key(config.model_name, tmpl.prompt_id(), task.task_id, tmpl.text());
      auto make_record = [&](const ParsedScores& s) {
        return ScoreRecord{task.task_id,  task.occupation_code, config.model_name, tmpl.prompt_id(),
                           s.augmentation, s.substitution,       task.weight};
      };
      if (auto cached = cache.get(key)) {
        try {
          slot.record = make_record(parse_response(*cached, tmpl.schema()));
          slot.response = RawResponse{task.task_id, config.model_name, tmpl.prompt_id(), *cached, 0};
          hits.fetch_add(1);
          continue;
        } catch (const ParseError&) {
          // stale or corrupt entry: fall through to the provider
        }
      }
      Stream jitter(options.jitter_seed ^ detail::field_hash({task.task_id}, 7), 0);
      std::string last_error;
      int attempt = 1;
      for (; attempt <= config.max_retries + 1; ++attempt) {
        if (attempt > 1 && config.backoff_base_ms > 0) {
          const double ms = config.backoff_base_ms * std::pow(2.0, attempt - 2) * (1.0 + jitter.uniform());
          std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
        }
        try {
          calls.fetch_add(1);
          const std::string body = provider.complete(
              {config.model_name, render_prompt(tmpl, task.text), config.temperature, task.task_id, tmpl.prompt_id()});
          slot.record = make_record(parse_response(body, tmpl.schema()));
          slot.response = RawResponse{task.task_id, config.model_name, tmpl.prompt_id(), body, attempt};
          cache.put(key, body);
          break;
        } catch (const ParseError& e) {
          last_error = std::string("parse: ") + e.what();
        } catch (const ProviderError& e) {
          last_error = std::string("provider: ") + e.what();
        } catch (const ValidationError& e) {
          last_error = std::string("task: ") + e.what();
          attempt = config.max_retries + 1;
        }
      }
      if (!slot.record) slot.failure = FailureEntry{task.task_id, std::min(attempt, config.max_retries + 1), last_error};
    }
  };

  const auto n_workers = static_cast<std::size_t>(
      std::max(1, std::min<int>(config.max_parallel, static_cast<int>(std::max<std::size_t>(1, tasks.size())))));
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 1; w < n_workers; ++w) workers.emplace_back(work);
    work();
  }

  ScoringRun run;
  run.provider_calls = calls.load();
  run.cache_hits = hits.load();
  std::vector<std::size_t> order(tasks.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return tasks[a].task_id < tasks[b].task_id; });
  for (auto i : order) {
    if (slots[i].record) run.records.push_back(std::move(*slots[i].record));
    if (slots[i].response) run.responses.push_back(std::move(*slots[i].response));
    if (slots[i].failure) run.failures.push_back(std::move(*slots[i].failure));
  }
  return run;
}

}  // namespace latent_gauge
