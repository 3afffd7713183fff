// Runs the end-to-end acceptance checks and prints one PASS/FAIL line per
// criterion. Exit status is nonzero when any selected criterion fails.
//
//   acceptance                 all criteria
//   acceptance --criterion 6   just one

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdistill/checkpoint.hpp"
#include "cdistill/config.hpp"
#include "cdistill/corpus.hpp"
#include "cdistill/distill.hpp"
#include "cdistill/pipeline.hpp"
#include "cdistill/report.hpp"
#include "cdistill/training.hpp"
#include "loss_oracle.hpp"
#include "numeric_support.hpp"
#include "tiny_config.hpp"

using namespace cdistill;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  auto x = a.data(), y = b.data();
  return std::equal(x.begin(), x.end(), y.begin());
}

bool embeddings_equal(const EncoderModel& a, const EncoderModel& b) {
  return bit_equal(a.token_embeddings(), b.token_embeddings()) &&
         bit_equal(a.position_embeddings(), b.position_embeddings()) &&
         bit_equal(a.embedding_norm().gain, b.embedding_norm().gain) &&
         bit_equal(a.embedding_norm().bias, b.embedding_norm().bias);
}

bool layer_equal(const EncoderLayerWeights& a, const EncoderLayerWeights& b) {
  auto x = a.named_parameters(""), y = b.named_parameters("");
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!bit_equal(x[i].second, y[i].second)) return false;
  }
  return true;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- 1: gradients --------------------------------------------------------------------

Verdict gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig m;
  m.vocab_size = 24;
  m.hidden_dim = 8;
  m.num_heads = 2;
  m.ffn_dim = 16;
  m.num_layers = 3;
  m.max_seq_len = 4;
  m.dropout_rate = 0.0;
  auto teacher = EncoderModel::init_random(m, 21);
  std::mt19937_64 rng(22);
  // Larger weights than the init scale so every term has a visible gradient.
  for (auto& [_, t] : teacher.named_parameters()) {
    Tensor handle = t;
    for (auto& v : handle.mutable_data()) v += std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
  }
  auto student = top_layer_init(teacher);
  std::vector<std::pair<std::string, Tensor>> trainable;
  for (auto& [name, t] : student.named_parameters()) {
    if (!t.requires_grad()) continue;
    Tensor handle = t;
    for (auto& v : handle.mutable_data()) v += std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
    trainable.emplace_back(name, t);
  }
  const Batch batch = testing::random_batch(3, 4, 24, rng, true);
  auto loss = [&] {
    ForwardTrace tt;
    {
      NoGradGuard guard;
      tt = teacher.forward(batch);
    }
    return total_distill_loss(tt, student.forward(batch));
  };
  const auto r = testing::check_gradients(loss, trainable, 1e-5);
  std::size_t teacher_grads = 0;
  for (auto& [_, t] : teacher.named_parameters()) teacher_grads += t.has_grad() ? 1 : 0;
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = r.max_relative_error <= 1e-6 && teacher_grads == 0 && secs <= 60.0 && r.checked > 0;
  v.detail = "max relative error " + fmt("%.2e", r.max_relative_error) + " (" + r.worst + ") over " +
             std::to_string(r.checked) + " student tensors; teacher tensors with gradient: " +
             std::to_string(teacher_grads) + "; " + fmt("%.1f", secs) + " s";
  return v;
}

// ---- 2: loop oracle ------------------------------------------------------------------

Verdict loss_oracle() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + trial % 3;
    auto tr = testing::random_traces(n, (trial / 3) % 2 == 1, rng);
    const double got = total_distill_loss(tr.teacher, tr.student).item();
    worst = std::max(worst, std::abs(got - testing::loop_oracle(tr.teacher, tr.student)));
  }
  return {worst <= 1e-10, "100 traces, n in {1,2,3}, half padded; max |diff| " + fmt("%.2e", worst)};
}

// ---- 3: initialization and the 12 -> 6 plan --------------------------------------------

Verdict init_fidelity() {
  ModelConfig m;
  m.vocab_size = 32;
  m.hidden_dim = 8;
  m.num_heads = 2;
  m.ffn_dim = 16;
  m.num_layers = 12;
  m.max_seq_len = 8;
  auto teacher = EncoderModel::init_random(m, 3);
  bool ok = true;
  std::string why;
  EncoderModel current = teacher;
  for (std::size_t depth = 12; depth > 6; --depth) {
    auto student = top_layer_init(current);
    if (student.num_layers() != depth - 1) ok = false, why = "wrong depth";
    for (std::size_t i = 0; i < student.num_layers(); ++i) {
      if (!layer_equal(student.layers()[i], teacher.layers()[i])) ok = false, why = "layer mismatch";
    }
    if (!embeddings_equal(student, teacher) || !student.embeddings_frozen()) ok = false, why = "embeddings";
    current = student;
  }
  // A deep copy: writing to the student leaves the teacher alone.
  auto student = top_layer_init(teacher);
  student.layers()[0].query_weight.mutable_data()[0] += 1.0;
  if (layer_equal(student.layers()[0], teacher.layers()[0])) ok = false, why = "layers alias the teacher";

  auto plan = CascadePlan::build(12, 6, 66'666, OptimizerConfig::pretraining(), 6'666, true);
  const bool plan_ok = plan.stages.size() == 6 && plan.total_steps() == 399'996 &&
                       plan.stages.front().teacher_depth == 12 && plan.stages.back().student_depth == 6;
  return {ok && plan_ok, "12->6 chain copies the lowest layers bit-exactly" + (ok ? std::string() : " [" + why + "]") +
                             "; plan " + std::to_string(plan.stages.size()) + " stages, " +
                             std::to_string(plan.total_steps()) + " steps"};
}

// ---- 4: schedule ---------------------------------------------------------------------------

Verdict schedule_exactness() {
  const double peak = 1e-7;
  ScheduleConfig standard;
  const auto full = ScheduleConfig::full_warmup(66'666);
  bool ok = lr_at(standard, peak, 0) == 0.0 && lr_at(standard, peak, 6'666) == peak &&
            lr_at(standard, peak, 66'666) == 0.0 && lr_at(full, peak, 66'666) == peak && lr_at(full, peak, 0) == 0.0;
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> step(0, 66'666);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t s = step(rng);
    const double x = static_cast<double>(s);
    const double want_std = s <= 6'666 ? peak * x / 6'666.0 : peak * (66'666.0 - x) / 60'000.0;
    const double want_full = peak * x / 66'666.0;
    for (auto [got, want] : {std::pair{lr_at(standard, peak, s), want_std}, std::pair{lr_at(full, peak, s), want_full}}) {
      if (want == 0.0) {
        if (got != 0.0) worst = 1.0;
      } else {
        worst = std::max(worst, std::abs(got - want) / want);
      }
    }
  }
  ok = ok && worst <= 1e-15;
  return {ok, "endpoints exact; 1000 random steps per mode, max relative error " + fmt("%.2e", worst)};
}

// ---- 5: sampling -------------------------------------------------------------------------

Verdict sampling_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  auto spec = CorpusSpec::desk_default();  // anchors xa / xc, target ratio 100
  const auto table = spec.language_table();
  const double ratio = table.entry("xa").smoothed / table.entry("xc").smoothed;
  const double ratio_err = std::abs(ratio / spec.anchor_ratio - 1.0);

  const auto lines = generate_synthetic_corpus(spec, 100'000, 5);
  std::map<std::string, double> counts;
  for (const auto& l : lines) counts[l.language] += 1.0;
  double l1 = 0.0;
  for (const auto& e : table.entries) l1 += std::abs(counts[e.language] / 100'000.0 - e.smoothed);
  const double secs = seconds_since(t0);
  return {ratio_err <= 1e-9 && l1 <= 0.01 && secs <= 10.0,
          "S " + fmt("%.6f", table.exponent) + ", P'(xa)/P'(xc) relative error " + fmt("%.2e", ratio_err) +
              "; 100,000 draws L1 " + fmt("%.4f", l1) + "; " + fmt("%.1f", secs) + " s"};
}

// ---- 6: desk cascade -------------------------------------------------------------------------

constexpr std::size_t kHeldOut = 256;

struct DeskRun {
  CorpusSpec spec = CorpusSpec::desk_default();
  Vocabulary vocab;
  std::shared_ptr<const Batch> corpus;
  EncoderModel teacher;
  CascadeResult result;
  double seconds = 0.0;
};

// 6 -> 3 layers, d=32, H=4, T=16, vocab 256, 300 steps per stage, no dropout.
const DeskRun& desk_run() {
  static std::optional<DeskRun> run;
  if (run) return *run;
  const auto t0 = std::chrono::steady_clock::now();
  run.emplace();
  ModelConfig m;
  m.vocab_size = 256;
  m.hidden_dim = 32;
  m.num_heads = 4;
  m.ffn_dim = 128;
  m.num_layers = 6;
  m.max_seq_len = 16;
  m.dropout_rate = 0.0;
  OptimizerConfig opt = OptimizerConfig::pretraining();
  opt.peak_lr = 2e-3;
  opt.batch_size = 8;
  opt.micro_batch_size = 8;
  const auto plan = CascadePlan::build(6, 3, 300, opt, 30, true);

  const auto lines =
      shuffle_lines(generate_synthetic_corpus(run->spec, plan.total_steps() * opt.batch_size + kHeldOut, 1), 4);
  run->vocab = Vocabulary::build(lines, m.vocab_size, class_cue_words());
  run->corpus = std::make_shared<const Batch>(encode_lines(lines, run->vocab, m.max_seq_len));
  run->teacher = EncoderModel::init_random(m, 2);
  run->result = run_cascade(plan, run->teacher, run->corpus, 3, false);
  run->seconds = seconds_since(t0);
  return *run;
}

Verdict desk_cascade() {
  const auto& run = desk_run();
  Verdict v;
  v.pass = run.seconds <= 600.0;
  std::string stages;
  for (const auto& s : run.result.stages) {
    double first = 0.0, last = 0.0;
    const auto& trace = s.loss_trace;
    for (std::size_t i = 0; i < 50; ++i) {
      first += trace[i];
      last += trace[trace.size() - 50 + i];
    }
    const double r = last / first;
    v.pass = v.pass && r <= 0.5;
    stages += (stages.empty() ? "" : ", ") + fmt("%.3f", r);
  }

  // Held-out rows were never streamed to any stage.
  const Batch held = run.corpus->slice(run.corpus->batch_size - kHeldOut, run.corpus->batch_size);
  const auto& stages_out = run.result.stages;
  const EncoderModel& direct = stages_out.size() >= 2 ? stages_out[stages_out.size() - 2].student : run.teacher;
  NoGradGuard no_grad;
  const auto tt = direct.forward(held);
  const auto st_final = run.result.final_model.forward(held);
  const auto st_init = top_layer_init(direct).forward(held);
  const double final_loss = total_distill_loss(tt, st_final).item();
  const double init_loss = total_distill_loss(tt, st_init).item();
  const double held_ratio = final_loss / init_loss;
  v.pass = v.pass && held_ratio <= 0.5;

  // The k=1 hidden term compares frozen embedding outputs and cannot move.
  const double n = static_cast<double>(run.result.final_model.num_layers());
  const double floor = hidden_layer_loss(tt, st_final, 1).item() / n;
  const double learnable = (final_loss - floor) / (init_loss - floor);
  v.detail = "last/first 50-step mean per stage [" + stages + "] (need <= 0.5); held-out final/init " +
             fmt("%.3f", held_ratio) + " (need <= 0.5); frozen-embedding term " + fmt("%.1f", 100.0 * floor / init_loss) +
             "% of held-out init, learnable part ratio " + fmt("%.3f", learnable) + "; " + fmt("%.1f", run.seconds) + " s";
  return v;
}

// ---- 7: fine-tune and zero-shot report ------------------------------------------------------

Verdict finetune_and_report() {
  const auto& run = desk_run();
  EncoderModel encoder = run.result.final_model.clone();
  bool embeddings_ok = embeddings_equal(encoder, run.teacher);

  FineTuneConfig cfg;
  cfg.optimizer.peak_lr = 1e-3;
  cfg.epochs = 10;
  cfg.dropout = false;
  cfg.head_seed = 7;
  cfg.shuffle_seed = 8;
  const Batch train = encode_labeled(generate_labeled_task(run.spec, "xa", 600, 5), run.vocab, 16);
  const auto tuned = fine_tune(encoder, train, cfg);
  embeddings_ok = embeddings_ok && embeddings_equal(encoder, run.teacher);

  std::vector<std::pair<std::string, Batch>> sets;
  std::uint64_t seed = 9;
  for (const char* lang : {"xa", "xb", "xc"}) {
    sets.emplace_back(lang, encode_labeled(generate_labeled_task(run.spec, lang, 300, seed++), run.vocab, 16));
  }
  const auto eval = zero_shot_eval(encoder, tuned.head, sets);
  const auto table = build_report({DepthResult::from_eval(encoder.num_layers(), eval)});
  const double mean = (eval.languages[0].accuracy + eval.languages[1].accuracy + eval.languages[2].accuracy) / 3.0;
  const double xa = eval.languages[0].accuracy;
  const bool avg_ok = eval.average == mean && table.rows.size() == 1 && table.rows[0].average == mean &&
                      table.languages == std::vector<std::string>{"xa", "xb", "xc"};

  std::string cells;
  for (const auto& l : eval.languages) cells += " " + l.language + "=" + fmt("%.3f", l.accuracy);
  return {xa >= 0.95 && avg_ok && embeddings_ok,
          "accuracy" + cells + ", AVG " + fmt("%.4f", eval.average) + (avg_ok ? " = exact mean" : " != mean") +
              "; embeddings " + (embeddings_ok ? "bit-unchanged" : "CHANGED")};
}

// ---- 8: persistence --------------------------------------------------------------------------

Verdict persistence() {
  const auto& run = desk_run();
  const auto dir = testing::scratch_dir("acceptance");
  const auto& model = run.result.final_model;
  save_checkpoint(model, dir / "final.ckpt", {run.result.stages.size(), run.result.total_steps});
  const auto loaded = load_checkpoint(dir / "final.ckpt");
  bool ckpt_ok = loaded.model.config() == model.config();
  auto a = model.named_parameters(), b = loaded.model.named_parameters();
  ckpt_ok = ckpt_ok && a.size() == b.size();
  for (std::size_t i = 0; ckpt_ok && i < a.size(); ++i) ckpt_ok = a[i].first == b[i].first && bit_equal(a[i].second, b[i].second);
  save_checkpoint(loaded.model, dir / "again.ckpt", loaded.info);
  ckpt_ok = ckpt_ok && slurp(dir / "final.ckpt") == slurp(dir / "again.ckpt");

  // Same RunConfig, same output directory, run twice; dropout on.
  const auto config = testing::tiny_run_config(dir / "pipeline");
  command_pipeline(config, std::nullopt);
  const std::string first = slurp(paths::metrics(config));
  command_pipeline(config, std::nullopt);
  const std::string second = slurp(paths::metrics(config));
  const bool metrics_ok = !first.empty() && first == second;
  return {ckpt_ok && metrics_ok, std::string("checkpoint round-trip ") + (ckpt_ok ? "value- and byte-identical" : "DIFFERS") +
                                     "; pipeline rerun metrics " +
                                     (metrics_ok ? "byte-identical (" + std::to_string(first.size()) + " bytes)" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::optional<int> only;
  app.add_option("--criterion", only, "Run a single criterion")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient correctness", gradient_correctness}, {"loss-oracle equivalence", loss_oracle},
      {"initialization fidelity", init_fidelity},     {"schedule exactness", schedule_exactness},
      {"sampling correctness", sampling_correctness}, {"desk-scale cascade", desk_cascade},
      {"fine-tune + zero-shot", finetune_and_report}, {"persistence", persistence},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && *only != static_cast<int>(i + 1)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    std::printf("criterion %zu %s: %s -- %s\n", i + 1, v.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
