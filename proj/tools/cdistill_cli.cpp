// cdistill: command-line front end for the cascade distillation pipeline.
//
//   cdistill [--config PATH] [--seed N] [--out DIR] [--deterministic] <command> ...
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime or
// numeric failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "cdistill/error.hpp"
#include "cdistill/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cdistill;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool deterministic = false;
};

RunConfig resolve(const GlobalOptions& g) {
  RunConfig c = g.config_path.empty() ? RunConfig{} : load_run_config(g.config_path);
  if (g.seed) c.seeds.override_all(*g.seed);
  if (!g.out.empty()) c.output_dir = g.out;
  if (g.deterministic) c.deterministic = true;
  return c;
}

std::optional<fs::path> optional_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascading teacher-assistant distillation for BERT-style encoders"};
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--config", g.config_path, "RunConfig JSON file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Derive every sub-seed from N");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--deterministic", g.deterministic, "Disable dropout");

  auto* gen = app.add_subcommand("gen-corpus", "Write corpus, vocabulary and labeled task files");

  std::string teacher;
  bool random_teacher = false;
  auto* distill = app.add_subcommand("distill", "Run the cascade stage that starts at the teacher's depth");
  auto* teacher_opt = distill->add_option("--teacher", teacher, "Teacher checkpoint");
  auto* random_opt = distill->add_flag("--random-teacher", random_teacher, "Draw a random teacher from the init seed");
  teacher_opt->excludes(random_opt);

  std::string cascade_teacher;
  auto* cascade = app.add_subcommand("cascade", "Run every stage of the cascade plan");
  cascade->add_option("--teacher", cascade_teacher, "Teacher checkpoint (default: random)");

  std::string checkpoint, labeled;
  auto* finetune = app.add_subcommand("finetune", "Fine-tune an encoder checkpoint with a classifier head");
  finetune->add_option("--checkpoint", checkpoint, "Encoder checkpoint")->required();
  finetune->add_option("--labeled", labeled, "Labeled data (lang<TAB>label<TAB>text)");

  std::string encoder, head, eval_dir;
  auto* eval = app.add_subcommand("eval", "Zero-shot accuracy per language");
  eval->add_option("--encoder", encoder, "Encoder checkpoint")->required();
  eval->add_option("--head", head, "Head checkpoint")->required();
  eval->add_option("--eval-dir", eval_dir, "Directory holding eval_<lang>.tsv files");

  std::vector<std::string> results;
  auto* report = app.add_subcommand("report", "Aggregate eval results into a per-depth table");
  report->add_option("results", results, "eval_d<depth>.json files")->required();

  std::string pipeline_teacher;
  auto* pipeline = app.add_subcommand("pipeline", "cascade, finetune and eval at each depth, then report");
  pipeline->add_option("--teacher", pipeline_teacher, "Teacher checkpoint (default: random)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const RunConfig config = resolve(g);
    if (gen->parsed()) {
      command_gen_corpus(config);
    } else if (distill->parsed()) {
      if (teacher.empty() && !random_teacher) {
        throw Error(ErrorCode::InvalidConfig, "distill needs --teacher PATH or --random-teacher");
      }
      std::cout << command_distill(config, optional_path(teacher)).string() << '\n';
    } else if (cascade->parsed()) {
      for (const auto& p : command_cascade(config, optional_path(cascade_teacher))) std::cout << p.string() << '\n';
    } else if (finetune->parsed()) {
      command_finetune(config, checkpoint, optional_path(labeled));
    } else if (eval->parsed()) {
      const DepthResult r = command_eval(config, encoder, head, optional_path(eval_dir));
      std::cout << render_report(build_report({r}));
    } else if (report->parsed()) {
      std::vector<fs::path> paths(results.begin(), results.end());
      std::cout << render_report(command_report(config, paths));
    } else if (pipeline->parsed()) {
      std::cout << render_report(command_pipeline(config, optional_path(pipeline_teacher)));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_validation_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
