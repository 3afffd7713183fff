#include "cdistill/pipeline.hpp"

#include <fstream>
#include <iostream>

#include "cdistill/checkpoint.hpp"
#include "cdistill/error.hpp"
#include "cdistill/metrics.hpp"
#include "cdistill/seed.hpp"

namespace cdistill {

namespace fs = std::filesystem;

namespace paths {
fs::path corpus(const RunConfig& c) { return fs::path(c.output_dir) / "corpus.txt"; }
fs::path vocab(const RunConfig& c) { return fs::path(c.output_dir) / "vocab.txt"; }
fs::path metrics(const RunConfig& c) { return fs::path(c.output_dir) / "metrics.ndjson"; }
fs::path teacher(const RunConfig& c) { return fs::path(c.output_dir) / "teacher.ckpt"; }
fs::path stage_checkpoint(const RunConfig& c, std::size_t depth) {
  return fs::path(c.output_dir) / ("student_d" + std::to_string(depth) + ".ckpt");
}
fs::path finetuned_encoder(const RunConfig& c, std::size_t depth) {
  return fs::path(c.output_dir) / ("finetuned_d" + std::to_string(depth) + ".ckpt");
}
fs::path head(const RunConfig& c, std::size_t depth) {
  return fs::path(c.output_dir) / ("head_d" + std::to_string(depth) + ".ckpt");
}
fs::path eval_result(const RunConfig& c, std::size_t depth) {
  return fs::path(c.output_dir) / ("eval_d" + std::to_string(depth) + ".json");
}
fs::path report(const RunConfig& c) { return fs::path(c.output_dir) / "report.txt"; }
}  // namespace paths

namespace {

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) {
    throw Error(ErrorCode::InvalidConfig, std::string(what) + " '" + p.string() + "' does not exist");
  }
}

void make_output_dir(const RunConfig& c) {
  std::error_code ec;
  fs::create_directories(c.output_dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create '" + c.output_dir + "': " + ec.message());
}

std::size_t language_index(const RunConfig& c, const std::string& language) {
  const auto& langs = c.corpus.spec.languages;
  for (std::size_t i = 0; i < langs.size(); ++i) {
    if (langs[i].id == language) return i;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown language '" + language + "'");
}

bool use_dropout(const RunConfig& c) { return !c.deterministic && c.model.dropout_rate > 0.0; }

// Same shape apart from depth.
void check_compatible(const RunConfig& c, const ModelConfig& m, const fs::path& source) {
  ModelConfig expected = c.model;
  expected.num_layers = m.num_layers;
  if (!(expected == m)) {
    throw Error(ErrorCode::InvalidConfig, "checkpoint '" + source.string() + "' does not match the configured model");
  }
}

Vocabulary load_or_build_vocab(const RunConfig& c) {
  if (fs::is_regular_file(paths::vocab(c))) {
    std::ifstream in(paths::vocab(c));
    return Vocabulary::read(in, c.model.vocab_size);
  }
  return prepare_corpus(c).vocab;
}

template <typename Writer>
void write_text(const fs::path& p, Writer&& writer) {
  std::ofstream out(p);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write '" + p.string() + "'");
  writer(out);
  if (!out) throw Error(ErrorCode::IoFailure, "write to '" + p.string() + "' failed");
}

std::vector<LabeledLine> read_labeled_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open '" + p.string() + "'");
  return read_labeled(in);
}

}  // namespace

PreparedData prepare_corpus(const RunConfig& c) {
  PreparedData d;
  if (!c.corpus.path.empty()) {
    std::ifstream in(c.corpus.path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open corpus '" + c.corpus.path + "'");
    d.lines = read_corpus(in);
  } else {
    d.lines = generate_synthetic_corpus(c.corpus.spec, c.corpus_lines(), c.seeds.corpus);
  }
  d.lines = shuffle_lines(std::move(d.lines), c.seeds.shuffle);
  d.vocab = Vocabulary::build(d.lines, c.model.vocab_size, class_cue_words());
  d.encoded = std::make_shared<const Batch>(encode_lines(d.lines, d.vocab, c.model.max_seq_len));
  return d;
}

std::vector<LabeledLine> finetune_lines(const RunConfig& c) {
  const std::size_t i = language_index(c, c.finetune.language);
  return generate_labeled_task(c.corpus.spec, c.finetune.language, c.finetune.train_examples,
                               derive_seed(c.seeds.corpus, {2, i}));
}

std::vector<LabeledLine> eval_lines(const RunConfig& c, const std::string& language) {
  const std::size_t i = language_index(c, language);
  return generate_labeled_task(c.corpus.spec, language, c.eval.examples_per_language,
                               derive_seed(c.seeds.corpus, {3, i}));
}

CascadePlan cascade_plan(const RunConfig& c) {
  return CascadePlan::build(c.cascade.start_depth, c.cascade.end_depth, c.cascade.steps_per_stage, c.pretrain,
                            c.cascade.warmup_steps, c.cascade.first_stage_full_warmup);
}

void command_gen_corpus(const RunConfig& c) {
  c.validate();
  if (!c.corpus.path.empty()) require_file(c.corpus.path, "corpus");
  make_output_dir(c);
  PreparedData d = prepare_corpus(c);
  write_text(paths::corpus(c), [&](std::ostream& out) { write_corpus(out, d.lines); });
  write_text(paths::vocab(c), [&](std::ostream& out) { d.vocab.write(out); });
  const fs::path dir(c.output_dir);
  write_text(dir / ("finetune_" + c.finetune.language + ".tsv"),
             [&](std::ostream& out) { write_labeled(out, finetune_lines(c)); });
  for (const auto& lang : c.eval.languages) {
    write_text(dir / ("eval_" + lang + ".tsv"), [&](std::ostream& out) { write_labeled(out, eval_lines(c, lang)); });
  }
}

fs::path command_distill(const RunConfig& c, const std::optional<fs::path>& teacher_path) {
  c.validate();
  const CascadePlan plan = cascade_plan(c);
  std::size_t teacher_depth = c.model.num_layers;
  if (teacher_path) {
    require_file(*teacher_path, "teacher checkpoint");
    const auto manifest = read_checkpoint_manifest(*teacher_path);
    const ModelConfig m = model_config_from_json(manifest.at("model"));
    check_compatible(c, m, *teacher_path);
    teacher_depth = m.num_layers;
  }
  std::size_t index = plan.stages.size(), offset = 0;
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    if (plan.stages[i].teacher_depth == teacher_depth) {
      index = i;
      break;
    }
    offset += plan.stages[i].lines_needed();
  }
  if (index == plan.stages.size()) {
    throw Error(ErrorCode::InvalidConfig,
                "no cascade stage starts from a " + std::to_string(teacher_depth) + "-layer teacher");
  }
  if (!c.corpus.path.empty()) require_file(c.corpus.path, "corpus");

  make_output_dir(c);
  const EncoderModel teacher =
      teacher_path ? load_checkpoint(*teacher_path).model : EncoderModel::init_random(c.model, c.seeds.init);
  if (!teacher_path) save_checkpoint(teacher, paths::teacher(c));
  PreparedData d = prepare_corpus(c);
  write_text(paths::vocab(c), [&](std::ostream& out) { d.vocab.write(out); });

  const auto& stage = plan.stages[index];
  if (offset + stage.lines_needed() > d.encoded->batch_size) {
    throw Error(ErrorCode::DataExhausted, "stage " + std::to_string(index) + " needs corpus rows up to " +
                                              std::to_string(offset + stage.lines_needed()) + ", corpus has " +
                                              std::to_string(d.encoded->batch_size));
  }
  MetricsWriter metrics(fs::path(c.output_dir) / ("metrics_stage" + std::to_string(index) + ".ndjson"), true);
  BatchStream stream(d.encoded, offset, offset + stage.lines_needed());
  StageResult r = run_stage(stage, teacher, stream, derive_seed(c.seeds.dropout, {index}),
                            {use_dropout(c), index, metrics.observer()});
  const fs::path out = paths::stage_checkpoint(c, stage.student_depth);
  save_checkpoint(r.student, out, {index, stage.steps});
  return out;
}

std::vector<fs::path> command_cascade(const RunConfig& c, const std::optional<fs::path>& teacher_path) {
  c.validate();
  const CascadePlan plan = cascade_plan(c);
  if (teacher_path) {
    require_file(*teacher_path, "teacher checkpoint");
    const ModelConfig m = model_config_from_json(read_checkpoint_manifest(*teacher_path).at("model"));
    check_compatible(c, m, *teacher_path);
    if (m.num_layers != plan.start_depth) {
      throw Error(ErrorCode::InvalidConfig, "teacher has " + std::to_string(m.num_layers) +
                                                " layers, cascade starts at " + std::to_string(plan.start_depth));
    }
  }
  if (!c.corpus.path.empty()) require_file(c.corpus.path, "corpus");

  make_output_dir(c);
  const EncoderModel teacher =
      teacher_path ? load_checkpoint(*teacher_path).model : EncoderModel::init_random(c.model, c.seeds.init);
  if (!teacher_path) save_checkpoint(teacher, paths::teacher(c));
  PreparedData d = prepare_corpus(c);
  write_text(paths::vocab(c), [&](std::ostream& out) { d.vocab.write(out); });

  MetricsWriter metrics(paths::metrics(c), true);
  CascadeResult result = run_cascade(plan, teacher, d.encoded, c.seeds.dropout, use_dropout(c), metrics.observer());
  std::vector<fs::path> out;
  for (std::size_t i = 0; i < result.stages.size(); ++i) {
    const auto& stage = plan.stages[i];
    out.push_back(paths::stage_checkpoint(c, stage.student_depth));
    save_checkpoint(result.stages[i].student, out.back(), {i, stage.steps});
  }
  return out;
}

void command_finetune(const RunConfig& c, const fs::path& checkpoint, const std::optional<fs::path>& labeled) {
  c.validate();
  require_file(checkpoint, "encoder checkpoint");
  if (labeled) require_file(*labeled, "labeled data");
  const ModelConfig m = model_config_from_json(read_checkpoint_manifest(checkpoint).at("model"));
  check_compatible(c, m, checkpoint);

  make_output_dir(c);
  LoadedCheckpoint loaded = load_checkpoint(checkpoint);
  const auto lines = labeled ? read_labeled_file(*labeled) : finetune_lines(c);
  const Vocabulary vocab = load_or_build_vocab(c);
  const Batch data = encode_labeled(lines, vocab, c.model.max_seq_len);

  const std::size_t depth = loaded.model.num_layers();
  FineTuneConfig ft;
  ft.optimizer = c.finetune.optimizer;
  ft.epochs = c.finetune.epochs;
  ft.head_seed = derive_seed(c.seeds.init, {1, depth});
  ft.shuffle_seed = derive_seed(c.seeds.shuffle, {1, depth});
  ft.dropout_seed = derive_seed(c.seeds.dropout, {1, depth});
  ft.dropout = use_dropout(c);
  FineTuneResult r = fine_tune(loaded.model, data, ft);
  save_checkpoint(loaded.model, paths::finetuned_encoder(c, depth), loaded.info);
  save_head_checkpoint(r.head, paths::head(c, depth));
}

DepthResult command_eval(const RunConfig& c, const fs::path& encoder, const fs::path& head,
                         const std::optional<fs::path>& eval_dir) {
  c.validate();
  require_file(encoder, "encoder checkpoint");
  require_file(head, "head checkpoint");
  if (eval_dir) {
    for (const auto& lang : c.eval.languages) require_file(*eval_dir / ("eval_" + lang + ".tsv"), "eval set");
  }
  const ModelConfig m = model_config_from_json(read_checkpoint_manifest(encoder).at("model"));
  check_compatible(c, m, encoder);

  make_output_dir(c);
  const EncoderModel model = load_checkpoint(encoder).model;
  const ClassifierHead h = load_head_checkpoint(head);
  const Vocabulary vocab = load_or_build_vocab(c);
  std::vector<std::pair<std::string, Batch>> sets;
  for (const auto& lang : c.eval.languages) {
    const auto lines = eval_dir ? read_labeled_file(*eval_dir / ("eval_" + lang + ".tsv")) : eval_lines(c, lang);
    sets.emplace_back(lang, encode_labeled(lines, vocab, c.model.max_seq_len));
  }
  const DepthResult result = DepthResult::from_eval(model.num_layers(), zero_shot_eval(model, h, sets));
  write_text(paths::eval_result(c, result.depth), [&](std::ostream& out) { out << to_json(result).dump(2) << '\n'; });
  return result;
}

ReportTable command_report(const RunConfig& c, const std::vector<fs::path>& eval_results) {
  c.validate();
  if (eval_results.empty()) throw Error(ErrorCode::InvalidConfig, "report needs at least one eval result");
  std::vector<DepthResult> results;
  for (const auto& p : eval_results) {
    require_file(p, "eval result");
    std::ifstream in(p);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, "eval result '" + p.string() + "': " + e.what());
    }
    results.push_back(depth_result_from_json(j));
  }
  build_report(results);  // column checks before anything is written

  make_output_dir(c);
  return emit_report(results, paths::report(c), &std::cerr);
}

ReportTable command_pipeline(const RunConfig& c, const std::optional<fs::path>& teacher) {
  c.validate();
  const auto students = command_cascade(c, teacher);
  const CascadePlan plan = cascade_plan(c);
  std::vector<fs::path> evals;
  for (std::size_t i = 0; i < students.size(); ++i) {
    const std::size_t depth = plan.stages[i].student_depth;
    command_finetune(c, students[i], std::nullopt);
    command_eval(c, paths::finetuned_encoder(c, depth), paths::head(c, depth), std::nullopt);
    evals.push_back(paths::eval_result(c, depth));
  }
  return command_report(c, evals);
}

}  // namespace cdistill
