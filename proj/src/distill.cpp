#include "cdistill/distill.hpp"

#include "cdistill/error.hpp"
#include "cdistill/ops.hpp"
#include "cdistill/seed.hpp"

namespace cdistill {

ScheduleConfig DistillStagePlan::schedule() const {
  if (schedule_mode == ScheduleMode::FullWarmup) return ScheduleConfig::full_warmup(steps);
  return {steps, warmup_steps, ScheduleMode::Standard};
}

void DistillStagePlan::validate() const {
  if (student_depth < 1) throw Error(ErrorCode::InvalidConfig, "student depth must be at least 1");
  if (teacher_depth != student_depth + 1) {
    throw Error(ErrorCode::DepthMismatch, "stage shrinks " + std::to_string(teacher_depth) + " -> " +
                                              std::to_string(student_depth) + "; only single-layer shrinks exist");
  }
  optimizer.validate();
  // a zero-step stage is just the top-layer initialization
  if (steps > 0) schedule().validate();
}

CascadePlan CascadePlan::build(std::size_t start_depth, std::size_t end_depth, std::size_t steps_per_stage,
                               const OptimizerConfig& optimizer, std::size_t warmup_steps,
                               bool full_warmup_first_stage) {
  if (end_depth < 1 || start_depth < end_depth) {
    throw Error(ErrorCode::InvalidConfig, "cascade must run from a deeper to a shallower (>= 1 layer) model");
  }
  CascadePlan plan;
  plan.start_depth = start_depth;
  plan.end_depth = end_depth;
  for (std::size_t depth = start_depth; depth > end_depth; --depth) {
    DistillStagePlan stage;
    stage.teacher_depth = depth;
    stage.student_depth = depth - 1;
    stage.steps = steps_per_stage;
    stage.optimizer = optimizer;
    if (full_warmup_first_stage && depth == start_depth) {
      stage.schedule_mode = ScheduleMode::FullWarmup;
      stage.warmup_steps = steps_per_stage;
    } else {
      stage.schedule_mode = ScheduleMode::Standard;
      stage.warmup_steps = warmup_steps;
    }
    plan.stages.push_back(stage);
  }
  plan.validate();
  return plan;
}

std::size_t CascadePlan::total_steps() const {
  std::size_t total = 0;
  for (const auto& s : stages) total += s.steps;
  return total;
}

void CascadePlan::validate() const {
  if (end_depth < 1 || start_depth < end_depth) throw Error(ErrorCode::InvalidConfig, "invalid cascade depths");
  if (stages.size() != start_depth - end_depth) {
    throw Error(ErrorCode::InvalidConfig, std::to_string(stages.size()) + " stages for " +
                                              std::to_string(start_depth) + " -> " + std::to_string(end_depth));
  }
  std::size_t depth = start_depth;
  for (const auto& s : stages) {
    s.validate();
    if (s.teacher_depth != depth) throw Error(ErrorCode::DepthMismatch, "cascade stages do not chain");
    depth = s.student_depth;
  }
}

EncoderModel top_layer_init(const EncoderModel& teacher) {
  if (teacher.num_layers() < 2) {
    throw Error(ErrorCode::TeacherTooShallow,
                "teacher has " + std::to_string(teacher.num_layers()) + " layer(s); the student would have none");
  }
  EncoderModel student = teacher.clone();
  std::vector<EncoderLayerWeights> lower;
  for (std::size_t i = 0; i + 1 < teacher.num_layers(); ++i) lower.push_back(teacher.layers()[i].clone());
  student.set_layers(std::move(lower));
  student.set_embeddings_frozen(true);
  return student;
}

namespace {

void require_same_batch(const ForwardTrace& teacher, const ForwardTrace& student) {
  if (teacher.batch_size != student.batch_size || teacher.seq_len != student.seq_len ||
      teacher.attention_mask != student.attention_mask) {
    throw Error(ErrorCode::ShapeMismatch, "teacher and student traces come from different batches");
  }
}

// Real tokens per sequence; every sequence must have one.
std::vector<std::size_t> real_tokens(const ForwardTrace& trace) {
  std::vector<std::size_t> counts(trace.batch_size, 0);
  for (std::size_t b = 0; b < trace.batch_size; ++b) {
    for (std::size_t t = 0; t < trace.seq_len; ++t) counts[b] += trace.attention_mask[b * trace.seq_len + t] ? 1 : 0;
    if (counts[b] == 0) throw Error(ErrorCode::AllMasked, "sequence " + std::to_string(b) + " is all padding");
  }
  return counts;
}

Tensor adjacent_average(const Tensor& lower, const Tensor& upper) {
  auto a = lower.data(), b = upper.data();
  std::vector<double> mid(a.size());
  for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = 0.5 * (a[i] + b[i]);
  return Tensor::from(lower.shape(), std::move(mid));
}

}  // namespace

Tensor attention_layer_loss(const ForwardTrace& teacher, const ForwardTrace& student, std::size_t j) {
  require_same_batch(teacher, student);
  if (teacher.num_heads != student.num_heads) {
    throw Error(ErrorCode::HeadCountMismatch,
                std::to_string(teacher.num_heads) + " teacher heads vs " + std::to_string(student.num_heads));
  }
  if (j < 1 || j > student.num_layers() || j + 1 > teacher.num_layers()) {
    throw Error(ErrorCode::LayerIndexOutOfRange, "attention layer " + std::to_string(j));
  }
  const Tensor& a_student = student.attentions[j - 1];
  const Tensor target = adjacent_average(teacher.attentions[j - 1], teacher.attentions[j]);
  if (target.shape() != a_student.shape()) {
    throw Error(ErrorCode::DimensionMismatch, "attention shapes " + shape_string(target.shape()) + " vs " +
                                                  shape_string(a_student.shape()));
  }

  // Per head: MSE over (query, key) pairs where both positions are real.
  // Averaging over heads and then over sequences gives each kept element of
  // sequence b the weight 1 / (H * B * n_b^2).
  const std::size_t B = student.batch_size, T = student.seq_len, H = student.num_heads;
  const auto counts = real_tokens(student);
  const auto& mask = student.attention_mask;
  std::vector<double> weights(a_student.numel(), 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    const double w = 1.0 / (static_cast<double>(H * B) * static_cast<double>(counts[b] * counts[b]));
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t q = 0; q < T; ++q) {
        if (!mask[b * T + q]) continue;
        for (std::size_t k = 0; k < T; ++k) {
          if (mask[b * T + k]) weights[((b * H + h) * T + q) * T + k] = w;
        }
      }
    }
  }
  return ops::weighted_squared_error(a_student, target, weights);
}

Tensor hidden_layer_loss(const ForwardTrace& teacher, const ForwardTrace& student, std::size_t k) {
  require_same_batch(teacher, student);
  if (k < 1 || k > student.hidden.size() || k + 1 > teacher.hidden.size()) {
    throw Error(ErrorCode::LayerIndexOutOfRange, "hidden output " + std::to_string(k));
  }
  const Tensor& h_student = student.hidden[k - 1];
  const Tensor target = adjacent_average(teacher.hidden[k - 1], teacher.hidden[k]);
  if (target.shape() != h_student.shape()) {
    throw Error(ErrorCode::DimensionMismatch,
                "hidden shapes " + shape_string(target.shape()) + " vs " + shape_string(h_student.shape()));
  }

  const std::size_t B = student.batch_size, T = student.seq_len, d = h_student.dim(2);
  const auto counts = real_tokens(student);
  std::vector<double> weights(h_student.numel(), 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    const double w = 1.0 / (static_cast<double>(B) * static_cast<double>(counts[b] * d));
    for (std::size_t t = 0; t < T; ++t) {
      if (!student.attention_mask[b * T + t]) continue;
      std::fill_n(weights.begin() + static_cast<std::ptrdiff_t>((b * T + t) * d), d, w);
    }
  }
  return ops::weighted_squared_error(h_student, target, weights);
}

Tensor total_distill_loss(const ForwardTrace& teacher, const ForwardTrace& student) {
  const std::size_t n = student.num_layers();
  if (n < 1 || teacher.num_layers() != n + 1 || teacher.hidden.size() != n + 2 || student.hidden.size() != n + 1) {
    throw Error(ErrorCode::DepthMismatch, "teacher depth " + std::to_string(teacher.num_layers()) +
                                              " must be student depth " + std::to_string(n) + " + 1");
  }
  Tensor total = attention_layer_loss(teacher, student, 1);
  for (std::size_t j = 2; j <= n; ++j) total = ops::add(total, attention_layer_loss(teacher, student, j));
  for (std::size_t k = 1; k <= n + 1; ++k) total = ops::add(total, hidden_layer_loss(teacher, student, k));
  return ops::scale(total, 1.0 / static_cast<double>(n));
}

StageResult run_stage(const DistillStagePlan& plan, const EncoderModel& teacher, BatchStream& stream,
                      std::uint64_t seed, const StageOptions& options) {
  plan.validate();
  if (teacher.num_layers() != plan.teacher_depth) {
    throw Error(ErrorCode::DepthMismatch, "teacher has " + std::to_string(teacher.num_layers()) +
                                              " layers, plan expects " + std::to_string(plan.teacher_depth));
  }
  if (stream.remaining() < plan.lines_needed()) {
    throw Error(ErrorCode::DataExhausted, "stage needs " + std::to_string(plan.lines_needed()) + " lines, stream has " +
                                              std::to_string(stream.remaining()));
  }

  StageResult result;
  result.stage_index = options.stage_index;
  result.corpus_begin = stream.position();
  result.student = top_layer_init(teacher);

  std::vector<Tensor> params = result.student.trainable_parameters();
  AdamState state = AdamState::for_parameters(params);
  const ScheduleConfig schedule = plan.schedule();

  for (std::size_t step = 0; step < plan.steps; ++step) {
    const Batch batch = stream.next(plan.optimizer.batch_size);
    const auto micro_batches = split_micro_batches(batch, plan.optimizer.micro_batch_size);
    // Optimizer step `step + 1` runs at the rate the schedule assigns to the
    // end of that step, so the last step of a full warmup reaches the peak.
    const double lr = lr_at(schedule, plan.optimizer.peak_lr, step + 1);
    std::size_t micro_index = 0;
    LossFn loss_fn = [&](const Batch& mb) {
      const std::uint64_t teacher_seed = derive_seed(seed, {step, micro_index, 0});
      const std::uint64_t student_seed = derive_seed(seed, {step, micro_index, 1});
      ++micro_index;
      ForwardTrace teacher_trace;
      {
        NoGradGuard no_grad;
        teacher_trace = teacher.forward(mb, {options.dropout, teacher_seed});
      }
      ForwardTrace student_trace = result.student.forward(mb, {options.dropout, student_seed});
      return total_distill_loss(teacher_trace, student_trace);
    };

    StepOutcome outcome;
    try {
      outcome = accumulate_and_step(params, loss_fn, micro_batches, state, plan.optimizer, lr);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonFiniteLoss || e.code() == ErrorCode::NonFinite) {
        throw Error(ErrorCode::NonFiniteLoss, "step " + std::to_string(step + 1) + ": " + e.what());
      }
      throw;
    }
    result.loss_trace.push_back(outcome.loss);
    if (options.observer) options.observer({options.stage_index, step + 1, outcome.lr, outcome.loss});
  }
  for (auto& p : params) p.zero_grad();
  result.corpus_end = stream.position();
  return result;
}

CascadeResult run_cascade(const CascadePlan& plan, const EncoderModel& teacher, std::shared_ptr<const Batch> corpus,
                          std::uint64_t seed, bool dropout, const StepObserver& observer) {
  plan.validate();
  if (teacher.num_layers() != plan.start_depth) {
    throw Error(ErrorCode::DepthMismatch, "teacher has " + std::to_string(teacher.num_layers()) +
                                              " layers, cascade starts at " + std::to_string(plan.start_depth));
  }
  std::size_t needed = 0;
  for (const auto& s : plan.stages) needed += s.lines_needed();
  const std::size_t available = corpus ? corpus->batch_size : 0;
  if (needed > available) {
    throw Error(ErrorCode::DataExhausted, "cascade needs " + std::to_string(needed) + " lines, corpus has " +
                                              std::to_string(available));
  }

  CascadeResult result;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    const auto& stage = plan.stages[i];
    const EncoderModel& current = i == 0 ? teacher : result.stages.back().student;
    BatchStream stream(corpus, offset, offset + stage.lines_needed());
    try {
      result.stages.push_back(run_stage(stage, current, stream, derive_seed(seed, {i}), {dropout, i, observer}));
    } catch (const Error& e) {
      throw Error(e.code(), "stage " + std::to_string(i) + " (" + std::to_string(stage.teacher_depth) + " -> " +
                                std::to_string(stage.student_depth) + "): " + e.what());
    }
    offset += stage.lines_needed();
    result.total_steps += stage.steps;
  }
  result.final_model = result.stages.empty() ? teacher.clone() : result.stages.back().student.clone();
  return result;
}

}  // namespace cdistill
