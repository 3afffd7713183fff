#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cdistill/config.hpp"
#include "cdistill/corpus.hpp"
#include "cdistill/distill.hpp"
#include "cdistill/report.hpp"

namespace cdistill {

// Everything derived deterministically from a RunConfig's corpus section.
struct PreparedData {
  std::vector<CorpusLine> lines;  // shuffled
  Vocabulary vocab;
  std::shared_ptr<const Batch> encoded;
};

PreparedData prepare_corpus(const RunConfig& config);

// Labeled data for fine-tuning (config.finetune.language) and evaluation
// (each of config.eval.languages). Train and eval draws use distinct seeds.
std::vector<LabeledLine> finetune_lines(const RunConfig& config);
std::vector<LabeledLine> eval_lines(const RunConfig& config, const std::string& language);

CascadePlan cascade_plan(const RunConfig& config);

// Output file names inside RunConfig::output_dir.
namespace paths {
std::filesystem::path corpus(const RunConfig& c);
std::filesystem::path vocab(const RunConfig& c);
std::filesystem::path metrics(const RunConfig& c);
std::filesystem::path teacher(const RunConfig& c);
std::filesystem::path stage_checkpoint(const RunConfig& c, std::size_t depth);
std::filesystem::path finetuned_encoder(const RunConfig& c, std::size_t depth);
std::filesystem::path head(const RunConfig& c, std::size_t depth);
std::filesystem::path eval_result(const RunConfig& c, std::size_t depth);
std::filesystem::path report(const RunConfig& c);
}  // namespace paths

// The command layer. Each validates the config and its inputs before
// creating anything under output_dir.

// Writes the corpus, the vocabulary, the fine-tuning set and one eval set
// per language.
void command_gen_corpus(const RunConfig& config);

// One cascade stage, chosen by the teacher's depth. Without a teacher path a
// random teacher of config.model's shape is drawn from seeds.init. Returns
// the student checkpoint path.
std::filesystem::path command_distill(const RunConfig& config, const std::optional<std::filesystem::path>& teacher);

// Every stage of the plan; returns the stage checkpoint paths in order.
std::vector<std::filesystem::path> command_cascade(const RunConfig& config,
                                                   const std::optional<std::filesystem::path>& teacher);

// Fine-tunes the encoder at `checkpoint` on `labeled` (generated from the
// config when absent). Writes the tuned encoder and its head.
void command_finetune(const RunConfig& config, const std::filesystem::path& checkpoint,
                      const std::optional<std::filesystem::path>& labeled);

// Zero-shot accuracy of encoder + head on each eval language (files
// `eval_dir/<lang>.tsv` when given, generated otherwise).
DepthResult command_eval(const RunConfig& config, const std::filesystem::path& encoder,
                         const std::filesystem::path& head, const std::optional<std::filesystem::path>& eval_dir);

ReportTable command_report(const RunConfig& config, const std::vector<std::filesystem::path>& eval_results);

// cascade, then finetune + eval at every student depth, then report.
ReportTable command_pipeline(const RunConfig& config, const std::optional<std::filesystem::path>& teacher);

}  // namespace cdistill
