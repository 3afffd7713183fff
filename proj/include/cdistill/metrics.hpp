#pragma once

#include <filesystem>
#include <fstream>
#include <vector>

#include "cdistill/distill.hpp"

namespace cdistill {

// Appends one `{"stage":..,"step":..,"lr":..,"loss":..}` line per record and
// flushes it, so a crash loses at most the line being written.
class MetricsWriter {
 public:
  // `truncate` starts a fresh file; otherwise lines are appended.
  MetricsWriter(const std::filesystem::path& path, bool truncate);

  void write(const StepRecord& record);
  StepObserver observer();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

std::vector<StepRecord> read_metrics(const std::filesystem::path& path);

}  // namespace cdistill
