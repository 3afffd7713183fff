#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdistill/corpus.hpp"
#include "cdistill/model.hpp"
#include "cdistill/training.hpp"

namespace cdistill {

struct CascadeSettings {
  std::size_t start_depth = 12;
  std::size_t end_depth = 6;
  std::size_t steps_per_stage = 66'666;
  std::size_t warmup_steps = 6'666;
  // The first assistant warms up across all of its steps.
  bool first_stage_full_warmup = true;
};

struct FineTuneSettings {
  OptimizerConfig optimizer = OptimizerConfig::finetuning();
  std::size_t epochs = 3;
  std::string language = "xa";
  std::size_t train_examples = 2'000;
};

struct CorpusSettings {
  CorpusSpec spec = CorpusSpec::desk_default();
  // 0: exactly as many lines as the cascade consumes.
  std::size_t total_lines = 0;
  // Existing corpus file (`lang\ttext` lines); empty: generate from spec.
  std::string path;
};

struct EvalSettings {
  std::vector<std::string> languages = {"xa", "xb", "xc"};
  std::size_t examples_per_language = 300;
};

struct Seeds {
  std::uint64_t corpus = 1;
  std::uint64_t init = 2;
  std::uint64_t dropout = 3;
  std::uint64_t shuffle = 4;

  // Replaces every sub-seed with one derived from `seed`.
  void override_all(std::uint64_t seed);
};

// Everything a pipeline run depends on. Defaults carry the full-size
// hyperparameters; desk-scale runs override sizes and step counts.
struct RunConfig {
  ModelConfig model = [] {
    ModelConfig m;
    m.num_layers = 12;
    return m;
  }();
  CascadeSettings cascade;
  OptimizerConfig pretrain = OptimizerConfig::pretraining();
  FineTuneSettings finetune;
  CorpusSettings corpus;
  EvalSettings eval;
  Seeds seeds;
  std::string output_dir = "out";
  // Disables dropout everywhere.
  bool deterministic = false;

  // Throws InvalidConfig / InvalidSpec.
  void validate() const;
  std::size_t corpus_lines() const;
};

nlohmann::ordered_json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const RunConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

}  // namespace cdistill
