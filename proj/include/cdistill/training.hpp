#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cdistill/batch.hpp"
#include "cdistill/model.hpp"
#include "cdistill/tensor.hpp"

namespace cdistill {

struct OptimizerConfig {
  double peak_lr = 1e-7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-9;
  double weight_decay = 0.0;
  std::size_t batch_size = 256;
  std::size_t micro_batch_size = 1;

  // Full-size distillation settings.
  static OptimizerConfig pretraining();
  // Full-size fine-tuning settings: lr 2e-5, eps 2e-7, batch 32.
  static OptimizerConfig finetuning();
  void validate() const;
};

enum class ScheduleMode {
  Standard,    // linear warmup to the peak, then linear decay to zero
  FullWarmup,  // linear warmup across every step
};

std::string_view to_string(ScheduleMode mode);
ScheduleMode schedule_mode_from_string(std::string_view name);

struct ScheduleConfig {
  std::size_t total_steps = 66'666;
  std::size_t warmup_steps = 6'666;
  ScheduleMode mode = ScheduleMode::Standard;

  static ScheduleConfig full_warmup(std::size_t total_steps);
  void validate() const;
};

// Learning rate at `step` in [0, total_steps]; throws StepOutOfRange.
double lr_at(const ScheduleConfig& schedule, double peak_lr, std::size_t step);

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::size_t step = 0;

  static AdamState for_parameters(const std::vector<Tensor>& params);
};

// Bias-corrected Adam update with explicit gradients (one buffer per param).
void adam_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads, AdamState& state,
               double lr, const OptimizerConfig& config);
// Same, reading each parameter's accumulated gradient (absent = zero).
void adam_step(std::vector<Tensor>& params, AdamState& state, double lr, const OptimizerConfig& config);

using LossFn = std::function<Tensor(const Batch&)>;

// Clears parameter gradients, then runs forward/backward over each
// micro-batch with the loss weighted by its share of the full batch, so the
// accumulated gradient is that of the full-batch mean loss. Returns that
// mean loss (pre-update).
double accumulate_gradients(std::vector<Tensor>& params, const LossFn& loss_fn, const std::vector<Batch>& micro_batches);

struct StepOutcome {
  double loss = 0.0;
  double lr = 0.0;
};

// accumulate_gradients + one adam_step at `lr`. The micro-batch rows must
// add up to config.batch_size.
StepOutcome accumulate_and_step(std::vector<Tensor>& params, const LossFn& loss_fn,
                                const std::vector<Batch>& micro_batches, AdamState& state,
                                const OptimizerConfig& config, double lr);

// Splits a batch into consecutive micro-batches of at most `micro_size` rows.
std::vector<Batch> split_micro_batches(const Batch& batch, std::size_t micro_size);

struct FineTuneConfig {
  OptimizerConfig optimizer = OptimizerConfig::finetuning();
  std::size_t epochs = 3;
  std::uint64_t head_seed = 0;
  std::uint64_t shuffle_seed = 0;
  std::uint64_t dropout_seed = 0;
  bool dropout = true;
};

struct FineTuneResult {
  ClassifierHead head;
  std::vector<double> loss_trace;  // one per optimizer step
};

// Trains `model` in place together with a freshly initialized 3-class head
// at a constant learning rate. Embeddings stay frozen.
FineTuneResult fine_tune(EncoderModel& model, const Batch& labeled, const FineTuneConfig& config);

// argmax over logits, eval mode, no gradient tracking.
std::vector<std::size_t> predict(const EncoderModel& model, const ClassifierHead& head, const Batch& batch);

struct LanguageAccuracy {
  std::string language;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
};

struct EvalReport {
  std::vector<LanguageAccuracy> languages;
  double average = 0.0;  // unweighted mean over languages
};

EvalReport zero_shot_eval(const EncoderModel& model, const ClassifierHead& head,
                          const std::vector<std::pair<std::string, Batch>>& eval_sets);

}  // namespace cdistill
