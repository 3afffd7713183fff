#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cdistill/training.hpp"

namespace cdistill {

// Zero-shot accuracies of one student depth.
struct DepthResult {
  std::size_t depth = 0;
  std::vector<std::pair<std::string, double>> accuracies;  // language -> [0, 1]
  std::optional<double> reported_average;

  static DepthResult from_eval(std::size_t depth, const EvalReport& report);
};

nlohmann::ordered_json to_json(const DepthResult& result);
DepthResult depth_result_from_json(const nlohmann::json& j);

struct ReportRow {
  std::size_t depth = 0;
  std::vector<double> cells;  // in ReportTable::languages order
  double average = 0.0;
};

struct ReportTable {
  std::vector<std::string> languages;
  std::vector<ReportRow> rows;  // decreasing depth
  std::vector<std::string> warnings;
};

// One row per depth, languages as columns, AVG recomputed from the cells.
// Throws InconsistentColumns when rows disagree on the language set and
// InvalidConfig for an empty or duplicated depth list.
ReportTable build_report(const std::vector<DepthResult>& results);

// Percentages with one decimal, AVG last.
std::string render_report(const ReportTable& table);
nlohmann::ordered_json to_json(const ReportTable& table);

// Writes render_report() to `path` and the JSON form next to it
// (`path` + ".json"). Warnings also go to `warn` when given.
ReportTable emit_report(const std::vector<DepthResult>& results, const std::filesystem::path& path,
                        std::ostream* warn = nullptr);

}  // namespace cdistill
