#include "cdistill/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>

#include "cdistill/error.hpp"

namespace cdistill {

using nlohmann::json;
using nlohmann::ordered_json;

DepthResult DepthResult::from_eval(std::size_t depth, const EvalReport& report) {
  DepthResult r;
  r.depth = depth;
  for (const auto& l : report.languages) r.accuracies.emplace_back(l.language, l.accuracy);
  r.reported_average = report.average;
  return r;
}

ordered_json to_json(const DepthResult& r) {
  ordered_json acc = ordered_json::object();
  for (const auto& [lang, a] : r.accuracies) acc[lang] = a;
  ordered_json j = {{"depth", r.depth}, {"accuracies", acc}};
  if (r.reported_average) j["average"] = *r.reported_average;
  return j;
}

DepthResult depth_result_from_json(const json& j) {
  DepthResult r;
  try {
    r.depth = j.at("depth").get<std::size_t>();
    // nlohmann::json sorts keys; languages come back in lexicographic order
    for (const auto& [lang, a] : j.at("accuracies").items()) r.accuracies.emplace_back(lang, a.get<double>());
    if (j.contains("average")) r.reported_average = j.at("average").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("malformed depth result: ") + e.what());
  }
  return r;
}

ReportTable build_report(const std::vector<DepthResult>& results) {
  if (results.empty()) throw Error(ErrorCode::InvalidConfig, "report needs at least one depth row");
  ReportTable table;
  for (const auto& [lang, _] : results.front().accuracies) table.languages.push_back(lang);
  if (table.languages.empty()) throw Error(ErrorCode::InconsistentColumns, "depth row without languages");
  const std::set<std::string> columns(table.languages.begin(), table.languages.end());
  if (columns.size() != table.languages.size()) {
    throw Error(ErrorCode::InconsistentColumns, "duplicate language column");
  }

  std::set<std::size_t> depths;
  for (const auto& r : results) {
    if (!depths.insert(r.depth).second) {
      throw Error(ErrorCode::InvalidConfig, "depth " + std::to_string(r.depth) + " appears twice");
    }
    std::set<std::string> seen;
    for (const auto& [lang, _] : r.accuracies) seen.insert(lang);
    if (seen != columns || r.accuracies.size() != columns.size()) {
      throw Error(ErrorCode::InconsistentColumns,
                  "depth " + std::to_string(r.depth) + " does not report the same languages as depth " +
                      std::to_string(results.front().depth));
    }
    ReportRow row;
    row.depth = r.depth;
    for (const auto& lang : table.languages) {
      auto it = std::find_if(r.accuracies.begin(), r.accuracies.end(),
                             [&](const auto& p) { return p.first == lang; });
      row.cells.push_back(it->second);
    }
    double sum = 0.0;
    for (double c : row.cells) sum += c;
    row.average = sum / static_cast<double>(row.cells.size());
    if (r.reported_average && std::abs(*r.reported_average - row.average) > 1e-12) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "depth %zu: reported AVG %.6f disagrees with cell mean %.6f; using %.6f",
                    r.depth, *r.reported_average, row.average, row.average);
      table.warnings.emplace_back(buf);
    }
    table.rows.push_back(std::move(row));
  }
  std::sort(table.rows.begin(), table.rows.end(), [](const ReportRow& a, const ReportRow& b) {
    return a.depth > b.depth;
  });
  return table;
}

std::string render_report(const ReportTable& table) {
  auto pad = [](std::string s, std::size_t width) {
    if (s.size() < width) s.insert(0, width - s.size(), ' ');
    return s;
  };
  std::size_t width = 6;
  for (const auto& l : table.languages) width = std::max(width, l.size() + 1);

  std::string out = pad("Layers", 6);
  for (const auto& l : table.languages) out += " " + pad(l, width);
  out += " " + pad("AVG", width) + "\n";
  char buf[32];
  for (const auto& row : table.rows) {
    out += pad(std::to_string(row.depth), 6);
    for (double c : row.cells) {
      std::snprintf(buf, sizeof buf, "%.1f", 100.0 * c);
      out += " " + pad(buf, width);
    }
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * row.average);
    out += " " + pad(buf, width) + "\n";
  }
  return out;
}

ordered_json to_json(const ReportTable& table) {
  ordered_json rows = ordered_json::array();
  for (const auto& row : table.rows) {
    ordered_json cells = ordered_json::object();
    for (std::size_t i = 0; i < table.languages.size(); ++i) cells[table.languages[i]] = row.cells[i];
    rows.push_back({{"depth", row.depth}, {"accuracies", cells}, {"average", row.average}});
  }
  return {{"languages", table.languages}, {"rows", rows}, {"warnings", table.warnings}};
}

ReportTable emit_report(const std::vector<DepthResult>& results, const std::filesystem::path& path,
                        std::ostream* warn) {
  ReportTable table = build_report(results);
  if (warn) {
    for (const auto& w : table.warnings) *warn << "warning: " << w << '\n';
  }
  std::ofstream text(path);
  if (!text) throw Error(ErrorCode::IoFailure, "cannot write '" + path.string() + "'");
  text << render_report(table);
  std::ofstream js(path.string() + ".json");
  if (!js) throw Error(ErrorCode::IoFailure, "cannot write '" + path.string() + ".json'");
  js << to_json(table).dump(2) << '\n';
  if (!text || !js) throw Error(ErrorCode::IoFailure, "write to '" + path.string() + "' failed");
  return table;
}

}  // namespace cdistill
