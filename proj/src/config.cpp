#include "cdistill/config.hpp"

#include <fstream>
#include <set>

#include "cdistill/distill.hpp"
#include "cdistill/error.hpp"
#include "cdistill/seed.hpp"

namespace cdistill {

using nlohmann::json;
using nlohmann::ordered_json;

void Seeds::override_all(std::uint64_t seed) {
  corpus = derive_seed(seed, {1});
  init = derive_seed(seed, {2});
  dropout = derive_seed(seed, {3});
  shuffle = derive_seed(seed, {4});
}

std::size_t RunConfig::corpus_lines() const {
  if (corpus.total_lines != 0) return corpus.total_lines;
  const std::size_t stages = cascade.start_depth >= cascade.end_depth ? cascade.start_depth - cascade.end_depth : 0;
  return stages * cascade.steps_per_stage * pretrain.batch_size;
}

void RunConfig::validate() const {
  model.validate();
  if (model.max_seq_len < 2) throw Error(ErrorCode::InvalidConfig, "max_seq_len must be at least 2");
  if (model.vocab_size < Vocabulary::kNumSpecial + class_cue_words().size()) {
    throw Error(ErrorCode::InvalidConfig, "vocab_size too small for special and cue tokens");
  }
  if (model.num_layers != cascade.start_depth) {
    throw Error(ErrorCode::InvalidConfig, "model.num_layers (" + std::to_string(model.num_layers) +
                                              ") must equal cascade.start_depth (" +
                                              std::to_string(cascade.start_depth) + ")");
  }
  pretrain.validate();
  CascadePlan::build(cascade.start_depth, cascade.end_depth, cascade.steps_per_stage, pretrain, cascade.warmup_steps,
                     cascade.first_stage_full_warmup);
  finetune.optimizer.validate();
  if (finetune.train_examples == 0) throw Error(ErrorCode::InvalidConfig, "finetune.train_examples must be > 0");
  if (eval.examples_per_language == 0) throw Error(ErrorCode::InvalidConfig, "eval.examples_per_language must be > 0");
  if (eval.languages.empty()) throw Error(ErrorCode::InvalidConfig, "eval.languages is empty");
  corpus.spec.validate();
  std::set<std::string> known;
  for (const auto& l : corpus.spec.languages) known.insert(l.id);
  if (!known.count(finetune.language)) {
    throw Error(ErrorCode::InvalidConfig, "finetune.language '" + finetune.language + "' is not a corpus language");
  }
  for (const auto& l : eval.languages) {
    if (!known.count(l)) throw Error(ErrorCode::InvalidConfig, "eval language '" + l + "' is not a corpus language");
  }
  if (output_dir.empty()) throw Error(ErrorCode::InvalidConfig, "output_dir is empty");
}

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& section) {
  if (!obj.is_object()) throw Error(ErrorCode::InvalidConfig, "section '" + section + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!ok.count(it.key())) {
      throw Error(ErrorCode::InvalidConfig, "unknown key '" + it.key() + "' in section '" + section + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

ordered_json to_json(const OptimizerConfig& c) {
  return {{"peak_lr", c.peak_lr},           {"beta1", c.beta1},
          {"beta2", c.beta2},               {"epsilon", c.epsilon},
          {"weight_decay", c.weight_decay}, {"batch_size", c.batch_size},
          {"micro_batch_size", c.micro_batch_size}};
}

OptimizerConfig optimizer_from_json(const json& j, OptimizerConfig c, const std::string& section) {
  check_keys(j, {"peak_lr", "beta1", "beta2", "epsilon", "weight_decay", "batch_size", "micro_batch_size"}, section);
  read(j, "peak_lr", c.peak_lr);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "epsilon", c.epsilon);
  read(j, "weight_decay", c.weight_decay);
  read(j, "batch_size", c.batch_size);
  read(j, "micro_batch_size", c.micro_batch_size);
  return c;
}

ordered_json to_json(const CorpusSpec& s) {
  ordered_json langs = ordered_json::array();
  for (const auto& l : s.languages) {
    langs.push_back({{"id", l.id}, {"alphabet", l.alphabet}, {"size_bytes", l.size_bytes}});
  }
  return {{"languages", langs},
          {"min_words", s.min_words},
          {"max_words", s.max_words},
          {"min_word_length", s.min_word_length},
          {"max_word_length", s.max_word_length},
          {"anchor_ratio", s.anchor_ratio},
          {"anchor_large", s.anchor_large},
          {"anchor_small", s.anchor_small},
          {"allow_single_language", s.allow_single_language}};
}

CorpusSpec corpus_spec_from_json(const json& j, CorpusSpec s) {
  check_keys(j, {"languages", "min_words", "max_words", "min_word_length", "max_word_length", "anchor_ratio",
                 "anchor_large", "anchor_small", "allow_single_language"},
             "corpus.spec");
  if (j.contains("languages")) {
    s.languages.clear();
    for (const auto& l : j.at("languages")) {
      check_keys(l, {"id", "alphabet", "size_bytes"}, "corpus.spec.languages");
      SyntheticLanguage lang;
      read(l, "id", lang.id);
      read(l, "alphabet", lang.alphabet);
      read(l, "size_bytes", lang.size_bytes);
      s.languages.push_back(lang);
    }
  }
  read(j, "min_words", s.min_words);
  read(j, "max_words", s.max_words);
  read(j, "min_word_length", s.min_word_length);
  read(j, "max_word_length", s.max_word_length);
  read(j, "anchor_ratio", s.anchor_ratio);
  read(j, "anchor_large", s.anchor_large);
  read(j, "anchor_small", s.anchor_small);
  read(j, "allow_single_language", s.allow_single_language);
  return s;
}

}  // namespace

ordered_json to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"hidden_dim", c.hidden_dim},
          {"num_layers", c.num_layers},
          {"num_heads", c.num_heads},
          {"ffn_dim", c.ffn_dim},
          {"max_seq_len", c.max_seq_len},
          {"dropout_rate", c.dropout_rate},
          {"attention_capture", std::string(to_string(c.attention_capture))}};
}

ModelConfig model_config_from_json(const json& j) {
  try {
    check_keys(j, {"vocab_size", "hidden_dim", "num_layers", "num_heads", "ffn_dim", "max_seq_len", "dropout_rate",
                   "attention_capture"},
               "model");
    ModelConfig c;
    read(j, "vocab_size", c.vocab_size);
    read(j, "hidden_dim", c.hidden_dim);
    read(j, "num_layers", c.num_layers);
    read(j, "num_heads", c.num_heads);
    read(j, "ffn_dim", c.ffn_dim);
    read(j, "max_seq_len", c.max_seq_len);
    read(j, "dropout_rate", c.dropout_rate);
    if (j.contains("attention_capture")) {
      c.attention_capture = attention_capture_from_string(j.at("attention_capture").get<std::string>());
    }
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("model: ") + e.what());
  }
}

ordered_json to_json(const RunConfig& c) {
  return {
      {"model", to_json(c.model)},
      {"cascade",
       {{"start_depth", c.cascade.start_depth},
        {"end_depth", c.cascade.end_depth},
        {"steps_per_stage", c.cascade.steps_per_stage},
        {"warmup_steps", c.cascade.warmup_steps},
        {"first_stage_full_warmup", c.cascade.first_stage_full_warmup}}},
      {"pretrain", to_json(c.pretrain)},
      {"finetune",
       {{"optimizer", to_json(c.finetune.optimizer)},
        {"epochs", c.finetune.epochs},
        {"language", c.finetune.language},
        {"train_examples", c.finetune.train_examples}}},
      {"corpus", {{"spec", to_json(c.corpus.spec)}, {"total_lines", c.corpus.total_lines}, {"path", c.corpus.path}}},
      {"eval", {{"languages", c.eval.languages}, {"examples_per_language", c.eval.examples_per_language}}},
      {"seeds",
       {{"corpus", c.seeds.corpus}, {"init", c.seeds.init}, {"dropout", c.seeds.dropout}, {"shuffle", c.seeds.shuffle}}},
      {"output_dir", c.output_dir},
      {"deterministic", c.deterministic},
  };
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  try {
    check_keys(j, {"model", "cascade", "pretrain", "finetune", "corpus", "eval", "seeds", "output_dir", "deterministic"},
               "root");
    if (j.contains("model")) {
      // start from the run defaults rather than the bare ModelConfig defaults
      json merged = to_json(c.model);
      merged.update(j.at("model"));
      c.model = model_config_from_json(merged);
    }
    if (j.contains("cascade")) {
      const auto& s = j.at("cascade");
      check_keys(s, {"start_depth", "end_depth", "steps_per_stage", "warmup_steps", "first_stage_full_warmup"},
                 "cascade");
      read(s, "start_depth", c.cascade.start_depth);
      read(s, "end_depth", c.cascade.end_depth);
      read(s, "steps_per_stage", c.cascade.steps_per_stage);
      read(s, "warmup_steps", c.cascade.warmup_steps);
      read(s, "first_stage_full_warmup", c.cascade.first_stage_full_warmup);
    }
    if (j.contains("pretrain")) c.pretrain = optimizer_from_json(j.at("pretrain"), c.pretrain, "pretrain");
    if (j.contains("finetune")) {
      const auto& s = j.at("finetune");
      check_keys(s, {"optimizer", "epochs", "language", "train_examples"}, "finetune");
      if (s.contains("optimizer")) {
        c.finetune.optimizer = optimizer_from_json(s.at("optimizer"), c.finetune.optimizer, "finetune.optimizer");
      }
      read(s, "epochs", c.finetune.epochs);
      read(s, "language", c.finetune.language);
      read(s, "train_examples", c.finetune.train_examples);
    }
    if (j.contains("corpus")) {
      const auto& s = j.at("corpus");
      check_keys(s, {"spec", "total_lines", "path"}, "corpus");
      if (s.contains("spec")) c.corpus.spec = corpus_spec_from_json(s.at("spec"), c.corpus.spec);
      read(s, "total_lines", c.corpus.total_lines);
      read(s, "path", c.corpus.path);
    }
    if (j.contains("eval")) {
      const auto& s = j.at("eval");
      check_keys(s, {"languages", "examples_per_language"}, "eval");
      read(s, "languages", c.eval.languages);
      read(s, "examples_per_language", c.eval.examples_per_language);
    }
    if (j.contains("seeds")) {
      const auto& s = j.at("seeds");
      check_keys(s, {"corpus", "init", "dropout", "shuffle"}, "seeds");
      read(s, "corpus", c.seeds.corpus);
      read(s, "init", c.seeds.init);
      read(s, "dropout", c.seeds.dropout);
      read(s, "shuffle", c.seeds.shuffle);
    }
    read(j, "output_dir", c.output_dir);
    read(j, "deterministic", c.deterministic);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, "config '" + path.string() + "': " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write '" + path.string() + "'");
  out << to_json(config).dump(2) << '\n';
}

}  // namespace cdistill
