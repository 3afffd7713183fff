#include "cdistill/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cdistill/error.hpp"
#include "cdistill/ops.hpp"
#include "cdistill/seed.hpp"

namespace cdistill {

OptimizerConfig OptimizerConfig::pretraining() { return {}; }

OptimizerConfig OptimizerConfig::finetuning() {
  OptimizerConfig c;
  c.peak_lr = 2e-5;
  c.epsilon = 2e-7;
  c.batch_size = 32;
  c.micro_batch_size = 32;
  return c;
}

void OptimizerConfig::validate() const {
  if (!(peak_lr >= 0.0) || !std::isfinite(peak_lr)) throw Error(ErrorCode::InvalidConfig, "peak_lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "betas must lie in [0,1)");
  }
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidConfig, "epsilon must be > 0");
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::InvalidConfig, "weight_decay must be >= 0");
  if (batch_size == 0 || micro_batch_size == 0 || batch_size % micro_batch_size != 0) {
    throw Error(ErrorCode::InvalidConfig, "batch_size must be a positive multiple of micro_batch_size");
  }
}

std::string_view to_string(ScheduleMode mode) { return mode == ScheduleMode::FullWarmup ? "full_warmup" : "standard"; }

ScheduleMode schedule_mode_from_string(std::string_view name) {
  if (name == "standard") return ScheduleMode::Standard;
  if (name == "full_warmup") return ScheduleMode::FullWarmup;
  throw Error(ErrorCode::InvalidConfig, "unknown schedule mode '" + std::string(name) + "'");
}

ScheduleConfig ScheduleConfig::full_warmup(std::size_t total_steps) {
  return {total_steps, total_steps, ScheduleMode::FullWarmup};
}

void ScheduleConfig::validate() const {
  if (total_steps == 0) throw Error(ErrorCode::InvalidConfig, "schedule needs at least one step");
  if (warmup_steps > total_steps) throw Error(ErrorCode::InvalidConfig, "warmup_steps exceeds total_steps");
  if (mode == ScheduleMode::FullWarmup && warmup_steps != total_steps) {
    throw Error(ErrorCode::InvalidConfig, "full_warmup requires warmup_steps == total_steps");
  }
}

double lr_at(const ScheduleConfig& schedule, double peak_lr, std::size_t step) {
  schedule.validate();
  if (step > schedule.total_steps) {
    throw Error(ErrorCode::StepOutOfRange,
                "step " + std::to_string(step) + " > total " + std::to_string(schedule.total_steps));
  }
  const auto s = static_cast<double>(step);
  const auto total = static_cast<double>(schedule.total_steps);
  if (schedule.mode == ScheduleMode::FullWarmup) return peak_lr * (s / total);
  const auto warmup = static_cast<double>(schedule.warmup_steps);
  if (step <= schedule.warmup_steps) return schedule.warmup_steps == 0 ? peak_lr : peak_lr * (s / warmup);
  return peak_lr * ((total - s) / (total - warmup));
}

AdamState AdamState::for_parameters(const std::vector<Tensor>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.numel(), 0.0);
    s.second_moment.emplace_back(p.numel(), 0.0);
  }
  return s;
}

void adam_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads, AdamState& state,
               double lr, const OptimizerConfig& config) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].numel() || state.first_moment[i].size() != params[i].numel()) {
      throw Error(ErrorCode::ShapeMismatch, "adam_step: buffer size mismatch for parameter " + std::to_string(i));
    }
  }
  if (!(lr >= 0.0)) throw Error(ErrorCode::InvalidConfig, "adam_step: negative learning rate");

  ++state.step;
  const auto t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(config.beta1, t);
  const double bias2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t e = 0; e < p.size(); ++e) {
      double g = grads[i][e];
      if (config.weight_decay != 0.0) g += config.weight_decay * p[e];
      m[e] = config.beta1 * m[e] + (1.0 - config.beta1) * g;
      v[e] = config.beta2 * v[e] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[e] / bias1;
      const double v_hat = v[e] / bias2;
      p[e] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

void adam_step(std::vector<Tensor>& params, AdamState& state, double lr, const OptimizerConfig& config) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    if (p.has_grad()) {
      grads.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      grads.emplace_back(p.numel(), 0.0);
    }
  }
  adam_step(params, grads, state, lr, config);
}

double accumulate_gradients(std::vector<Tensor>& params, const LossFn& loss_fn, const std::vector<Batch>& micro_batches) {
  for (auto& p : params) p.zero_grad();
  std::size_t total_rows = 0;
  for (const auto& mb : micro_batches) total_rows += mb.batch_size;
  if (total_rows == 0) throw Error(ErrorCode::EmptyTensor, "no rows to accumulate over");

  double batch_loss = 0.0;
  for (const auto& mb : micro_batches) {
    if (mb.batch_size == 0) continue;
    Tensor loss = loss_fn(mb);
    const double value = loss.item();
    if (!std::isfinite(value)) throw Error(ErrorCode::NonFiniteLoss, "micro-batch loss is " + std::to_string(value));
    const double share = static_cast<double>(mb.batch_size) / static_cast<double>(total_rows);
    ops::scale(loss, share).backward();
    batch_loss += share * value;
  }
  return batch_loss;
}

StepOutcome accumulate_and_step(std::vector<Tensor>& params, const LossFn& loss_fn,
                                const std::vector<Batch>& micro_batches, AdamState& state,
                                const OptimizerConfig& config, double lr) {
  std::size_t rows = 0;
  for (const auto& mb : micro_batches) rows += mb.batch_size;
  if (rows != config.batch_size) {
    throw Error(ErrorCode::InvalidConfig, "micro-batches hold " + std::to_string(rows) + " rows, batch_size is " +
                                              std::to_string(config.batch_size));
  }
  StepOutcome out;
  out.loss = accumulate_gradients(params, loss_fn, micro_batches);
  out.lr = lr;
  adam_step(params, state, lr, config);
  return out;
}

std::vector<Batch> split_micro_batches(const Batch& batch, std::size_t micro_size) {
  if (micro_size == 0) throw Error(ErrorCode::InvalidConfig, "micro-batch size must be positive");
  std::vector<Batch> out;
  for (std::size_t begin = 0; begin < batch.batch_size; begin += micro_size) {
    out.push_back(batch.slice(begin, std::min(batch.batch_size, begin + micro_size)));
  }
  return out;
}

namespace {

void require_labels(const Batch& batch, std::size_t num_classes) {
  if (!batch.labels || batch.labels->size() != batch.batch_size) {
    throw Error(ErrorCode::LabelOutOfRange, "labeled data is missing labels");
  }
  for (auto label : *batch.labels) {
    if (label >= num_classes) {
      throw Error(ErrorCode::LabelOutOfRange,
                  "label " + std::to_string(label) + " outside [0," + std::to_string(num_classes) + ")");
    }
  }
}

}  // namespace

FineTuneResult fine_tune(EncoderModel& model, const Batch& labeled, const FineTuneConfig& config) {
  config.optimizer.validate();
  require_labels(labeled, kNumClasses);
  if (labeled.batch_size == 0) throw Error(ErrorCode::EmptyEvalSet, "no fine-tuning examples");

  FineTuneResult result;
  result.head = ClassifierHead::init_random(model.config().hidden_dim, kNumClasses, config.head_seed);
  model.set_embeddings_frozen(true);

  std::vector<Tensor> params = model.trainable_parameters();
  for (const auto& p : result.head.parameters()) params.push_back(p);
  AdamState state = AdamState::for_parameters(params);

  std::mt19937_64 shuffle_rng(config.shuffle_seed);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(labeled.batch_size);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const Batch shuffled = labeled.gather(order);

    for (std::size_t begin = 0; begin < shuffled.batch_size; begin += config.optimizer.batch_size) {
      const Batch batch = shuffled.slice(begin, std::min(shuffled.batch_size, begin + config.optimizer.batch_size));
      OptimizerConfig step_config = config.optimizer;
      step_config.batch_size = batch.batch_size;  // the final batch of an epoch may be short
      const std::uint64_t step_seed = derive_seed(config.dropout_seed, {step});
      std::size_t micro_index = 0;
      LossFn loss_fn = [&](const Batch& mb) {
        ForwardOptions opts{config.dropout, derive_seed(step_seed, {micro_index++})};
        return ops::cross_entropy(classify(model, result.head, mb, opts), *mb.labels);
      };
      auto outcome = accumulate_and_step(params, loss_fn, split_micro_batches(batch, config.optimizer.micro_batch_size),
                                         state, step_config, config.optimizer.peak_lr);
      result.loss_trace.push_back(outcome.loss);
      ++step;
    }
  }
  for (auto& p : params) p.zero_grad();
  return result;
}

std::vector<std::size_t> predict(const EncoderModel& model, const ClassifierHead& head, const Batch& batch) {
  NoGradGuard no_grad;
  constexpr std::size_t kChunk = 64;
  std::vector<std::size_t> out;
  out.reserve(batch.batch_size);
  for (std::size_t begin = 0; begin < batch.batch_size; begin += kChunk) {
    const Batch chunk = batch.slice(begin, std::min(batch.batch_size, begin + kChunk));
    Tensor logits = classify(model, head, chunk);
    const std::size_t classes = logits.dim(1);
    auto ld = logits.data();
    for (std::size_t r = 0; r < chunk.batch_size; ++r) {
      auto row = ld.subspan(r * classes, classes);
      out.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return out;
}

EvalReport zero_shot_eval(const EncoderModel& model, const ClassifierHead& head,
                          const std::vector<std::pair<std::string, Batch>>& eval_sets) {
  if (eval_sets.empty()) throw Error(ErrorCode::EmptyEvalSet, "no evaluation languages");
  EvalReport report;
  double sum = 0.0;
  for (const auto& [language, batch] : eval_sets) {
    if (batch.batch_size == 0) throw Error(ErrorCode::EmptyEvalSet, "evaluation set '" + language + "' is empty");
    require_labels(batch, head.num_classes());
    const auto predicted = predict(model, head, batch);
    LanguageAccuracy acc;
    acc.language = language;
    acc.total = batch.batch_size;
    for (std::size_t i = 0; i < predicted.size(); ++i) acc.correct += predicted[i] == (*batch.labels)[i] ? 1 : 0;
    acc.accuracy = static_cast<double>(acc.correct) / static_cast<double>(acc.total);
    sum += acc.accuracy;
    report.languages.push_back(acc);
  }
  report.average = sum / static_cast<double>(report.languages.size());
  return report;
}

}  // namespace cdistill
