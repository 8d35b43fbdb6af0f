#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "latent_gauge/detail/csv.hpp"
#include "latent_gauge/detail/format.hpp"
#include "latent_gauge/error.hpp"

namespace latent_gauge {

enum class ScoreField { augmentation, substitution };

inline std::string_view to_string(ScoreField f) {
  return f == ScoreField::augmentation ? "augmentation" : "substitution";
}

inline ScoreField parse_score_field(std::string_view s) {
  if (s == "augmentation") return ScoreField::augmentation;
  if (s == "substitution") return ScoreField::substitution;
  throw ValidationError("unknown score field '" + std::string(s) + "' (expected augmentation or substitution)");
}

// One model answer for one task under one prompt. A prompt may elicit only
// one of the two scores, so each is optional; at least one is present.
struct ScoreRecord {
  std::string task_id;
  std::string occupation_code;
  std::string rater_id;
  std::string prompt_id;
  std::optional<double> augmentation;
  std::optional<double> substitution;
  double weight = 1.0;

  [[nodiscard]] std::optional<double> get(ScoreField f) const {
    return f == ScoreField::augmentation ? augmentation : substitution;
  }
  void set(ScoreField f, double v) {
    (f == ScoreField::augmentation ? augmentation : substitution) = v;
  }
  [[nodiscard]] auto key() const { return std::tie(task_id, rater_id, prompt_id); }

  friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

inline constexpr std::string_view kPanelColumns[] = {"task_id",      "occupation_code", "rater_id", "prompt_id",
                                                     "augmentation", "substitution",    "weight"};

// Returns an empty string when the record satisfies every range invariant,
// otherwise a description of the first violation.
inline std::string check_record(const ScoreRecord& r) {
  auto score_ok = [](std::optional<double> v) { return !v || (std::isfinite(*v) && *v >= 0.0 && *v <= 100.0); };
  if (r.task_id.empty()) return "task_id is empty";
  if (r.rater_id.empty()) return "rater_id is empty";
  if (!r.augmentation && !r.substitution) return "neither augmentation nor substitution present";
  if (!score_ok(r.augmentation))
    return "augmentation = " + detail::format_roundtrip(*r.augmentation) + " outside [0, 100]";
  if (!score_ok(r.substitution))
    return "substitution = " + detail::format_roundtrip(*r.substitution) + " outside [0, 100]";
  if (!std::isfinite(r.weight) || r.weight < 0.0) return "weight = " + detail::format_roundtrip(r.weight) + " must be finite and >= 0";
  return {};
}

// Validated, immutable collection of score records.
class ScorePanel {
 public:
  ScorePanel() = default;

  // `row_labels`, when given, names each record's source row for error messages.
  explicit ScorePanel(std::vector<ScoreRecord> records, std::map<std::string, std::string> metadata = {},
                      const std::vector<std::string>& row_labels = {})
      : records_(std::move(records)), metadata_(std::move(metadata)) {
    auto label = [&](std::size_t i) {
      return i < row_labels.size() ? row_labels[i] : "record " + std::to_string(i + 1);
    };
    if (records_.empty()) throw ValidationError("score panel is empty");
    std::vector<std::string> problems;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      if (auto msg = check_record(records_[i]); !msg.empty()) problems.push_back(label(i) + ": " + msg);
    }
    if (!problems.empty()) throw ValidationError(summarize("rejected", problems));
    std::map<std::tuple<std::string, std::string, std::string>, std::size_t> seen;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      auto [it, inserted] = seen.emplace(std::make_tuple(r.task_id, r.rater_id, r.prompt_id), i);
      if (!inserted) {
        problems.push_back("duplicate key (task_id=" + r.task_id + ", rater_id=" + r.rater_id +
                           ", prompt_id=" + r.prompt_id + ") in " + label(it->second) + " and " + label(i));
      }
    }
    if (!problems.empty()) throw ValidationError(summarize("duplicate", problems));
  }

  [[nodiscard]] const std::vector<ScoreRecord>& records() const noexcept { return records_; }
  [[nodiscard]] const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }
  [[nodiscard]] std::size_t size() const noexcept { return records_.size(); }

  [[nodiscard]] std::vector<std::string> raters() const { return distinct(&ScoreRecord::rater_id); }
  [[nodiscard]] std::vector<std::string> prompts() const { return distinct(&ScoreRecord::prompt_id); }
  [[nodiscard]] std::vector<std::string> occupations() const { return distinct(&ScoreRecord::occupation_code); }

  // Occupations with no record of positive weight.
  [[nodiscard]] std::vector<std::string> degenerate_occupations() const {
    std::map<std::string, bool> has_weight;
    for (const auto& r : records_) has_weight[r.occupation_code] |= r.weight > 0.0;
    std::vector<std::string> out;
    for (const auto& [code, ok] : has_weight)
      if (!ok) out.push_back(code);
    return out;
  }

  // Records for one rater (and optionally one prompt), as a plain vector.
  [[nodiscard]] std::vector<ScoreRecord> select(std::string_view rater,
                                                std::optional<std::string_view> prompt = std::nullopt) const {
    std::vector<ScoreRecord> out;
    for (const auto& r : records_)
      if (r.rater_id == rater && (!prompt || r.prompt_id == *prompt)) out.push_back(r);
    return out;
  }

 private:
  static std::string summarize(std::string_view what, const std::vector<std::string>& problems) {
    std::string msg = std::to_string(problems.size()) + " row(s) " + std::string(what) + ":";
    const std::size_t shown = std::min<std::size_t>(problems.size(), 20);
    for (std::size_t i = 0; i < shown; ++i) msg += "\n  " + problems[i];
    if (shown < problems.size()) msg += "\n  ... (" + std::to_string(problems.size() - shown) + " more)";
    return msg;
  }

  [[nodiscard]] std::vector<std::string> distinct(std::string ScoreRecord::*member) const {
    std::set<std::string> s;
    for (const auto& r : records_) s.insert(r.*member);
    return {s.begin(), s.end()};
  }

  std::vector<ScoreRecord> records_;
  std::map<std::string, std::string> metadata_;
};

enum class PanelFormat { csv, jsonl };

inline PanelFormat panel_format_from_path(std::string_view path) {
  return path.ends_with(".jsonl") ? PanelFormat::jsonl : PanelFormat::csv;
}

namespace detail {

inline std::optional<double> parse_score_cell(const std::string& cell, std::string_view field,
                                              const std::string& where) {
  if (trim(cell).empty()) return std::nullopt;
  auto v = parse_double(cell);
  if (!v) throw ValidationError(where + ": " + std::string(field) + " = '" + cell + "' is not a number");
  return v;
}

inline ScorePanel load_panel_csv(const std::string& text) {
  std::map<std::string, std::string> metadata;
  // Leading "# key: value" lines carry metadata.
  std::string_view body = text;
  std::size_t skipped_lines = 0;
  while (body.starts_with("#")) {
    auto eol = body.find('\n');
    std::string line(body.substr(1, eol == std::string_view::npos ? std::string_view::npos : eol - 1));
    if (auto colon = line.find(':'); colon != std::string::npos)
      metadata[trim(line.substr(0, colon))] = trim(line.substr(colon + 1));
    ++skipped_lines;
    body = eol == std::string_view::npos ? std::string_view{} : body.substr(eol + 1);
  }
  auto rows = parse_csv(body);
  if (rows.empty()) throw ValidationError("panel csv: missing header row");
  const auto& header = rows.front().cells;
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto name = trim(header[i]);
    if (std::find(std::begin(kPanelColumns), std::end(kPanelColumns), name) == std::end(kPanelColumns))
      throw ValidationError("panel csv: unknown column '" + name + "'");
    if (!col.emplace(name, i).second) throw ValidationError("panel csv: duplicate column '" + name + "'");
  }
  for (auto name : kPanelColumns)
    if (!col.contains(std::string(name))) throw ValidationError("panel csv: missing column '" + std::string(name) + "'");

  std::vector<ScoreRecord> records;
  std::vector<std::string> labels;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r].cells;
    const std::string where = "row " + std::to_string(r) + " (line " + std::to_string(rows[r].line + skipped_lines) + ")";
    if (cells.size() != header.size())
      throw ValidationError(where + ": expected " + std::to_string(header.size()) + " cells, found " +
                            std::to_string(cells.size()));
    ScoreRecord rec;
    rec.task_id = cells[col["task_id"]];
    rec.occupation_code = cells[col["occupation_code"]];
    rec.rater_id = cells[col["rater_id"]];
    rec.prompt_id = cells[col["prompt_id"]];
    rec.augmentation = parse_score_cell(cells[col["augmentation"]], "augmentation", where);
    rec.substitution = parse_score_cell(cells[col["substitution"]], "substitution", where);
    auto w = parse_score_cell(cells[col["weight"]], "weight", where);
    if (!w) throw ValidationError(where + ": weight is missing");
    rec.weight = *w;
    records.push_back(std::move(rec));
    labels.push_back(where);
  }
  return ScorePanel(std::move(records), std::move(metadata), labels);
}

inline ScorePanel load_panel_jsonl(const std::string& text) {
  std::vector<ScoreRecord> records;
  std::vector<std::string> labels;
  std::map<std::string, std::string> metadata;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto eol = text.find('\n', pos);
    std::string line = text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
    pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(where + ": invalid JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw ValidationError(where + ": expected a JSON object");
    if (obj.size() == 1 && obj.contains("metadata")) {
      for (auto& [k, v] : obj["metadata"].items()) metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
      continue;
    }
    for (auto& [k, v] : obj.items()) {
      if (std::find(std::begin(kPanelColumns), std::end(kPanelColumns), k) == std::end(kPanelColumns))
        throw ValidationError(where + ": unknown field '" + k + "'");
    }
    for (auto name : kPanelColumns)
      if (!obj.contains(std::string(name)))
        throw ValidationError(where + ": missing field '" + std::string(name) + "'");
    auto str = [&](const char* k) {
      const auto& v = obj[k];
      if (!v.is_string()) throw ValidationError(where + ": field '" + k + "' must be a string");
      return v.get<std::string>();
    };
    auto num = [&](const char* k) -> std::optional<double> {
      const auto& v = obj[k];
      if (v.is_null()) return std::nullopt;
      if (!v.is_number()) throw ValidationError(where + ": field '" + k + "' must be a number or null");
      return v.get<double>();
    };
    ScoreRecord rec{str("task_id"), str("occupation_code"), str("rater_id"), str("prompt_id"),
                    num("augmentation"), num("substitution"), 0.0};
    auto w = num("weight");
    if (!w) throw ValidationError(where + ": weight is missing");
    rec.weight = *w;
    records.push_back(std::move(rec));
    labels.push_back(where);
  }
  return ScorePanel(std::move(records), std::move(metadata), labels);
}

}  // namespace detail

inline ScorePanel load_panel(const std::string& path, PanelFormat format) {
  const std::string text = detail::read_file(path);
  try {
    return format == PanelFormat::csv ? detail::load_panel_csv(text) : detail::load_panel_jsonl(text);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline ScorePanel load_panel(const std::string& path) { return load_panel(path, panel_format_from_path(path)); }

// Scores are written in shortest round-trip form, so load(write(p)) == p.
inline std::string panel_to_csv(const ScorePanel& panel) {
  std::string out;
  for (const auto& [k, v] : panel.metadata()) out += "# " + k + ": " + v + "\n";
  out += "task_id,occupation_code,rater_id,prompt_id,augmentation,substitution,weight\n";
  auto opt = [](std::optional<double> v) { return v ? detail::format_roundtrip(*v) : std::string(); };
  for (const auto& r : panel.records()) {
    out += detail::csv_escape(r.task_id) + ',' + detail::csv_escape(r.occupation_code) + ',' +
           detail::csv_escape(r.rater_id) + ',' + detail::csv_escape(r.prompt_id) + ',' + opt(r.augmentation) + ',' +
           opt(r.substitution) + ',' + detail::format_roundtrip(r.weight) + '\n';
  }
  return out;
}

inline std::string panel_to_jsonl(const ScorePanel& panel) {
  std::string out;
  if (!panel.metadata().empty()) out += nlohmann::json{{"metadata", panel.metadata()}}.dump() + "\n";
  for (const auto& r : panel.records()) {
    nlohmann::ordered_json j;
    j["task_id"] = r.task_id;
    j["occupation_code"] = r.occupation_code;
    j["rater_id"] = r.rater_id;
    j["prompt_id"] = r.prompt_id;
    j["augmentation"] = r.augmentation ? nlohmann::ordered_json(*r.augmentation) : nlohmann::ordered_json(nullptr);
    j["substitution"] = r.substitution ? nlohmann::ordered_json(*r.substitution) : nlohmann::ordered_json(nullptr);
    j["weight"] = r.weight;
    out += j.dump() + "\n";
  }
  return out;
}

inline void write_panel(const ScorePanel& panel, const std::string& path, PanelFormat format) {
  detail::write_file(path, format == PanelFormat::csv ? panel_to_csv(panel) : panel_to_jsonl(panel));
}

// Occupation-by-index table of external (or derived) measures. Cells may be
// missing; missing is never read as zero.
class IndexTable {
 public:
  IndexTable() = default;
  IndexTable(std::vector<std::string> occupations, std::vector<std::string> names,
             std::vector<std::vector<std::optional<double>>> columns)
      : occupations_(std::move(occupations)), names_(std::move(names)), columns_(std::move(columns)) {
    if (names_.size() != columns_.size()) throw ValidationError("index table: column count mismatch");
    std::set<std::string> unique(names_.begin(), names_.end());
    if (unique.size() != names_.size()) throw ValidationError("index table: duplicate column names");
    for (const auto& c : columns_)
      if (c.size() != occupations_.size()) throw ValidationError("index table: ragged column");
  }

  [[nodiscard]] const std::vector<std::string>& occupations() const noexcept { return occupations_; }
  [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }
  [[nodiscard]] std::size_t n_rows() const noexcept { return occupations_.size(); }
  [[nodiscard]] std::size_t n_columns() const noexcept { return names_.size(); }
  [[nodiscard]] const std::vector<std::optional<double>>& column(std::size_t j) const { return columns_.at(j); }
  [[nodiscard]] const std::vector<std::optional<double>>& column(std::string_view name) const {
    return columns_.at(index_of(name));
  }
  [[nodiscard]] std::size_t index_of(std::string_view name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw ValidationError("index table: no column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - names_.begin());
  }
  [[nodiscard]] std::size_t non_missing(std::size_t j) const {
    return static_cast<std::size_t>(
        std::count_if(columns_.at(j).begin(), columns_.at(j).end(), [](const auto& v) { return v.has_value(); }));
  }

  // Left join of `values` (keyed by occupation) as a new column.
  [[nodiscard]] IndexTable with_column(std::string name, const std::map<std::string, double>& values) const {
    auto names = names_;
    auto cols = columns_;
    names.push_back(std::move(name));
    std::vector<std::optional<double>> col;
    col.reserve(occupations_.size());
    for (const auto& occ : occupations_) {
      auto it = values.find(occ);
      col.push_back(it == values.end() ? std::nullopt : std::optional<double>(it->second));
    }
    cols.push_back(std::move(col));
    return {occupations_, std::move(names), std::move(cols)};
  }

 private:
  std::vector<std::string> occupations_;
  std::vector<std::string> names_;
  std::vector<std::vector<std::optional<double>>> columns_;
};

inline IndexTable parse_index_table(const std::string& text) {
  auto rows = detail::parse_csv(text);
  if (rows.empty()) throw ValidationError("index table: empty file");
  const auto& header = rows.front().cells;
  std::optional<std::size_t> occ_col;
  std::vector<std::size_t> value_cols;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto name = detail::trim(header[i]);
    if (name == "occupation_code") {
      occ_col = i;
    } else {
      value_cols.push_back(i);
      names.push_back(name);
    }
  }
  if (!occ_col) throw ValidationError("index table: no occupation_code column");
  if (value_cols.empty()) throw ValidationError("index table: no index columns");
  std::vector<std::string> occupations;
  std::vector<std::vector<std::optional<double>>> columns(value_cols.size());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r].cells;
    if (cells.size() != header.size())
      throw ValidationError("index table: row " + std::to_string(r) + " has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(header.size()));
    occupations.push_back(cells[*occ_col]);
    for (std::size_t j = 0; j < value_cols.size(); ++j) {
      const auto& cell = cells[value_cols[j]];
      if (detail::trim(cell).empty()) {
        columns[j].push_back(std::nullopt);
        continue;
      }
      auto v = detail::parse_double(cell);
      if (!v || !std::isfinite(*v))
        throw ValidationError("index table: row " + std::to_string(r) + ", column '" + names[j] + "': '" + cell +
                              "' is not numeric");
      columns[j].push_back(*v);
    }
  }
  return {std::move(occupations), std::move(names), std::move(columns)};
}

inline IndexTable load_index_table(const std::string& path) {
  try {
    return parse_index_table(detail::read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline std::string index_table_to_csv(const IndexTable& table) {
  std::string out = "occupation_code";
  for (const auto& n : table.names()) out += ',' + detail::csv_escape(n);
  out += '\n';
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    out += detail::csv_escape(table.occupations()[i]);
    for (std::size_t j = 0; j < table.n_columns(); ++j) {
      out += ',';
      if (const auto& v = table.column(j)[i]) out += detail::format_roundtrip(*v);
    }
    out += '\n';
  }
  return out;
}

}  // namespace latent_gauge
