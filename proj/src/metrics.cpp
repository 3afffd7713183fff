#include "cdistill/metrics.hpp"

#include <json.hpp>

#include "cdistill/error.hpp"

namespace cdistill {

MetricsWriter::MetricsWriter(const std::filesystem::path& path, bool truncate)
    : path_(path), out_(path, truncate ? std::ios::trunc : std::ios::app) {
  if (!out_) throw Error(ErrorCode::IoFailure, "cannot open metrics file '" + path.string() + "'");
}

void MetricsWriter::write(const StepRecord& r) {
  nlohmann::ordered_json line = {{"stage", r.stage}, {"step", r.step}, {"lr", r.lr}, {"loss", r.loss}};
  out_ << line.dump() << '\n';
  out_.flush();
  if (!out_) throw Error(ErrorCode::IoFailure, "write to '" + path_.string() + "' failed");
}

StepObserver MetricsWriter::observer() {
  return [this](const StepRecord& r) { write(r); };
}

std::vector<StepRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open metrics file '" + path.string() + "'");
  std::vector<StepRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      records.push_back({j.at("stage").get<std::size_t>(), j.at("step").get<std::size_t>(), j.at("lr").get<double>(),
                         j.at("loss").get<double>()});
    } catch (const nlohmann::json::exception&) {
      // a torn final line from an interrupted run
      break;
    }
  }
  return records;
}

}  // namespace cdistill
