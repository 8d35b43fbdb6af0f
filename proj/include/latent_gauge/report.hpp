#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "latent_gauge/detail/csv.hpp"
#include "latent_gauge/detail/format.hpp"

namespace latent_gauge {

using Json = nlohmann::json;  // std::map-backed: keys serialize in sorted order

enum class ReportFormat { json, markdown };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::json;
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  throw ValidationError("unknown report format '" + std::string(s) + "' (expected json or markdown)");
}

namespace detail {

// Replaces every non-finite number by null and records its JSON pointer.
inline void scrub_non_finite(Json& node, const std::string& path, std::vector<std::string>& warnings) {
  if (node.is_number_float() && !std::isfinite(node.get<double>())) {
    warnings.push_back("non-finite value at " + (path.empty() ? std::string("/") : path) + " serialized as null");
    node = nullptr;
  } else if (node.is_object()) {
    for (auto& [k, v] : node.items()) scrub_non_finite(v, path + "/" + k, warnings);
  } else if (node.is_array()) {
    for (std::size_t i = 0; i < node.size(); ++i) scrub_non_finite(node[i], path + "/" + std::to_string(i), warnings);
  }
}

inline std::string scalar_text(const Json& v) {
  if (v.is_null()) return "null";
  if (v.is_number_float()) return format_sig6(v.get<double>());
  if (v.is_number()) return v.dump();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

inline void dump_json(const Json& v, int indent, std::string& out) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string inner(static_cast<std::size_t>(indent + 1) * 2, ' ');
  if (v.is_object()) {
    if (v.empty()) {
      out += "{}";
      return;
    }
    out += "{\n";
    bool first = true;
    for (auto it = v.begin(); it != v.end(); ++it) {
      if (!first) out += ",\n";
      first = false;
      out += inner + Json(it.key()).dump() + ": ";
      dump_json(it.value(), indent + 1, out);
    }
    out += "\n" + pad + "}";
  } else if (v.is_array()) {
    if (v.empty()) {
      out += "[]";
      return;
    }
    out += "[\n";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ",\n";
      out += inner;
      dump_json(v[i], indent + 1, out);
    }
    out += "\n" + pad + "]";
  } else if (v.is_number_float()) {
    out += format_sig6(v.get<double>());
  } else {
    out += v.dump();
  }
}

inline bool is_flat_object(const Json& v) {
  if (!v.is_object()) return false;
  for (const auto& [k, x] : v.items())
    if (x.is_structured()) return false;
  return true;
}

inline std::string md_cell(std::string s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += "\\|";
    else if (c == '\n') out += ' ';
    else out += c;
  }
  return out;
}

inline void dump_markdown(const Json& v, int level, const std::string& title, std::string& out) {
  const std::string hashes(static_cast<std::size_t>(std::min(level, 6)), '#');
  if (v.is_object()) {
    out += hashes + " " + title + "\n\n";
    bool any_scalar = false;
    for (const auto& [k, x] : v.items()) {
      if (x.is_structured()) continue;
      out += "- **" + k + "**: " + md_cell(scalar_text(x)) + "\n";
      any_scalar = true;
    }
    if (any_scalar) out += "\n";
    for (const auto& [k, x] : v.items())
      if (x.is_structured()) dump_markdown(x, level + 1, k, out);
    return;
  }
  // Arrays.
  out += hashes + " " + title + "\n\n";
  if (v.empty()) {
    out += "_(empty)_\n\n";
    return;
  }
  bool table = std::all_of(v.begin(), v.end(), [](const Json& e) { return is_flat_object(e); });
  if (table) {
    std::vector<std::string> cols;
    for (const auto& e : v)
      for (const auto& [k, x] : e.items())
        if (std::find(cols.begin(), cols.end(), k) == cols.end()) cols.push_back(k);
    std::sort(cols.begin(), cols.end());
    out += "|";
    for (const auto& c : cols) out += " " + c + " |";
    out += "\n|";
    for (std::size_t i = 0; i < cols.size(); ++i) out += " --- |";
    out += "\n";
    for (const auto& e : v) {
      out += "|";
      for (const auto& c : cols) out += " " + (e.contains(c) ? md_cell(scalar_text(e[c])) : std::string()) + " |";
      out += "\n";
    }
    out += "\n";
    return;
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i].is_structured()) {
      dump_markdown(v[i], level + 1, title + " [" + std::to_string(i) + "]", out);
    } else {
      out += "- " + md_cell(scalar_text(v[i])) + "\n";
      if (i + 1 == v.size()) out += "\n";
    }
  }
}

}  // namespace detail

// Prepares a report for serialization: non-finite statistics become null and
// each one is listed under "serialization_warnings".
inline Json finalize_report(Json report) {
  std::vector<std::string> warnings;
  detail::scrub_non_finite(report, "", warnings);
  if (report.is_object()) report["serialization_warnings"] = warnings;
  return report;
}

inline std::string render_report(const Json& report, ReportFormat format, const std::string& title = "Report") {
  const Json clean = finalize_report(report);
  std::string out;
  if (format == ReportFormat::json) {
    detail::dump_json(clean, 0, out);
    out += "\n";
  } else {
    detail::dump_markdown(clean, 1, title, out);
  }
  return out;
}

inline void write_report(const Json& report, const std::string& path, ReportFormat format,
                         const std::string& title = "Report") {
  detail::write_file(path, render_report(report, format, title));
}

}  // namespace latent_gauge
