#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "cdistill/corpus.hpp"
#include "cdistill/model.hpp"
#include "cdistill/training.hpp"

namespace cdistill {

enum class LayerMapStrategy {
  // mean of teacher layers j and j+1 supervises student layer j
  AdjacentAverage,
};

struct LayerMapSpec {
  LayerMapStrategy strategy = LayerMapStrategy::AdjacentAverage;
  std::size_t student_depth = 0;

  std::size_t teacher_depth() const { return student_depth + 1; }
};

// One single-layer shrink: teacher_depth -> teacher_depth - 1.
struct DistillStagePlan {
  std::size_t teacher_depth = 12;
  std::size_t student_depth = 11;
  std::size_t steps = 66'666;
  OptimizerConfig optimizer = OptimizerConfig::pretraining();
  ScheduleMode schedule_mode = ScheduleMode::Standard;
  std::size_t warmup_steps = 6'666;

  LayerMapSpec layer_map() const { return {LayerMapStrategy::AdjacentAverage, student_depth}; }
  ScheduleConfig schedule() const;
  // Lines this stage consumes from the corpus.
  std::size_t lines_needed() const { return steps * optimizer.batch_size; }
  void validate() const;
};

struct CascadePlan {
  std::size_t start_depth = 12;
  std::size_t end_depth = 6;
  std::vector<DistillStagePlan> stages;

  // start_depth -> end_depth one layer at a time. When
  // `full_warmup_first_stage` is set the first stage warms up across all of
  // its steps instead of using `warmup_steps`.
  static CascadePlan build(std::size_t start_depth, std::size_t end_depth, std::size_t steps_per_stage,
                           const OptimizerConfig& optimizer, std::size_t warmup_steps,
                           bool full_warmup_first_stage);
  std::size_t total_steps() const;
  void validate() const;
};

// Student with the teacher's lowest num_layers-1 layers (deep copies) and a
// copy of its embeddings, frozen.
EncoderModel top_layer_init(const EncoderModel& teacher);

// Losses index layers from 1: attention layer j
// in [1, n], hidden output k in [1, n+1] for an n-layer student. Teacher
// tensors are treated as constants. Padded positions are left out, and the
// batch loss is the mean of the per-sequence losses.
Tensor attention_layer_loss(const ForwardTrace& teacher, const ForwardTrace& student, std::size_t j);
Tensor hidden_layer_loss(const ForwardTrace& teacher, const ForwardTrace& student, std::size_t k);
// (1/n) * (sum_j attention_layer_loss + sum_k hidden_layer_loss)
Tensor total_distill_loss(const ForwardTrace& teacher, const ForwardTrace& student);

struct StepRecord {
  std::size_t stage = 0;
  std::size_t step = 0;  // 1-based optimizer step within the stage
  double lr = 0.0;
  double loss = 0.0;
};

using StepObserver = std::function<void(const StepRecord&)>;

struct StageOptions {
  bool dropout = true;
  std::size_t stage_index = 0;
  StepObserver observer;
};

struct StageResult {
  EncoderModel student;
  std::vector<double> loss_trace;  // pre-update batch loss, one per step
  std::size_t stage_index = 0;
  std::size_t corpus_begin = 0;  // stream offsets this stage consumed
  std::size_t corpus_end = 0;
};

// top_layer_init(teacher) followed by plan.steps optimizer steps on
// total_distill_loss. Reads exactly plan.lines_needed() rows from `stream`.
StageResult run_stage(const DistillStagePlan& plan, const EncoderModel& teacher, BatchStream& stream,
                      std::uint64_t seed, const StageOptions& options = {});

struct CascadeResult {
  std::vector<StageResult> stages;
  EncoderModel final_model;
  std::size_t total_steps = 0;
};

// Runs every stage in order; stage i's student teaches stage i+1. Stage i
// reads its own contiguous slice of `corpus`, disjoint from the others.
CascadeResult run_cascade(const CascadePlan& plan, const EncoderModel& teacher, std::shared_ptr<const Batch> corpus,
                          std::uint64_t seed, bool dropout = true, const StepObserver& observer = {});

}  // namespace cdistill
