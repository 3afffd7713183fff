#pragma once

#include <filesystem>
#include <string>

#include "cdistill/config.hpp"

namespace cdistill::testing {

// A pipeline that runs end to end in about a second: 4 -> 2 layers.
inline RunConfig tiny_run_config(const std::filesystem::path& out) {
  RunConfig c;
  c.model.vocab_size = 128;
  c.model.hidden_dim = 16;
  c.model.num_layers = 4;
  c.model.num_heads = 2;
  c.model.ffn_dim = 32;
  c.model.max_seq_len = 16;
  c.model.dropout_rate = 0.1;
  c.cascade.start_depth = 4;
  c.cascade.end_depth = 2;
  c.cascade.steps_per_stage = 10;
  c.cascade.warmup_steps = 2;
  c.pretrain.peak_lr = 1e-3;
  c.pretrain.batch_size = 8;
  c.pretrain.micro_batch_size = 4;
  c.finetune.optimizer.peak_lr = 1e-3;
  c.finetune.optimizer.epsilon = 1e-8;
  c.finetune.optimizer.batch_size = 16;
  c.finetune.optimizer.micro_batch_size = 16;
  c.finetune.epochs = 1;
  c.finetune.train_examples = 64;
  c.eval.examples_per_language = 30;
  c.output_dir = out.string();
  return c;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cdistill_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace cdistill::testing
