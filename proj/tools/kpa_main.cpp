#include <cstdint>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kpa/error.hpp"
#include "kpa/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration file (JSON)")->required();
  cmd->add_option("--seed", args.seed, "override the run seed");
  cmd->add_option("--out", args.out_dir, "override the output directory");
}

kpa::RunConfig load_config(const CommonArgs& args) {
  kpa::RunConfig config = kpa::RunConfig::load(args.config_path);
  if (args.seed) config.seed = *args.seed;
  if (args.out_dir) config.paths.out_dir = *args.out_dir;
  return config;
}

void print_report_row(const std::string& label, const std::vector<kpa::EvalReport>& reports,
                      double kpa::EvalReport::* field) {
  std::cout << "  " << std::left << std::setw(20) << label;
  for (const auto& r : reports) std::cout << std::right << std::setw(14) << std::fixed << std::setprecision(6) << r.*field;
  std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kpa: knowledge-preference alignment pipeline (retrieve -> build-prefsets -> train -> eval)"};
  app.require_subcommand(1);

  CommonArgs retrieve_args;
  std::optional<int> k_override;
  auto* retrieve = app.add_subcommand("retrieve", "embed the KB and write K1/K2/K3 groups per question");
  add_common(retrieve, retrieve_args);
  retrieve->add_option("--k", k_override, "override the retrieval depth");

  CommonArgs prefsets_args;
  auto* prefsets = app.add_subcommand("build-prefsets", "construct style and knowledge preference sets");
  add_common(prefsets, prefsets_args);

  CommonArgs train_args;
  std::optional<double> lambda_override, lr_override;
  std::optional<int> epochs_override;
  bool resume = false;
  auto* train = app.add_subcommand("train", "fine-tune the reference model with the combined objective");
  add_common(train, train_args);
  train->add_option("--lambda", lambda_override, "override the alignment-loss coefficient");
  train->add_option("--lr", lr_override, "override the learning rate");
  train->add_option("--epochs", epochs_override, "override the epoch count");
  train->add_flag("--resume", resume, "continue from the latest checkpoint in the output directory");

  CommonArgs eval_args;
  std::optional<std::string> tokenizer_override, generations_override;
  std::vector<std::string> checkpoints;
  bool generate_in_place = false;
  auto* eval = app.add_subcommand("eval", "score generations against golden answers");
  add_common(eval, eval_args);
  eval->add_option("--tokenizer-mode", tokenizer_override, "whitespace or char");
  eval->add_option("--checkpoint", checkpoints, "checkpoint file(s) to evaluate (repeatable)");
  eval->add_option("--generations", generations_override, "generations file (JSONL {question_id, text})");
  eval->add_flag("--generate", generate_in_place, "decode answers with the checkpoint model");

  CLI11_PARSE(app, argc, argv);

  try {
    if (retrieve->parsed()) {
      kpa::RunConfig config = load_config(retrieve_args);
      if (k_override) config.retrieval.k = *k_override;
      config.validate();
      const auto result = kpa::cmd_retrieve(config);
      std::cout << "wrote " << result.questions << " knowledge-group records to " << result.groups_path << '\n';
    } else if (prefsets->parsed()) {
      const kpa::RunConfig config = load_config(prefsets_args);
      const auto result = kpa::cmd_build_prefsets(config);
      std::cout << "emitted " << result.summary.emitted << " preference sets (" << result.summary.failed
                << " failed) to " << result.sets_path << '\n';
      for (const auto& failure : result.summary.failures) std::cerr << "  failed: " << failure << '\n';
      if (result.summary.emitted == 0 && result.summary.failed > 0) return kExitRuntime;
    } else if (train->parsed()) {
      kpa::RunConfig config = load_config(train_args);
      if (lambda_override) config.train.lambda = *lambda_override;
      if (lr_override) config.train.learning_rate = *lr_override;
      if (epochs_override) config.train.epochs = *epochs_override;
      config.validate();
      const auto result = kpa::cmd_train(config, resume);
      const auto& report = result.report;
      std::cout << "trained on " << report.train_pairs << " pairs (" << report.holdout_pairs << " held out)\n";
      std::cout << "  initial: mean_l_ft=" << report.initial.mean_l_ft
                << " rank_agreement=" << report.initial.rank_agreement << '\n';
      for (std::size_t e = 0; e < report.epochs.size(); ++e) {
        const auto& s = report.epochs[e];
        std::cout << "  epoch " << (e + 1) << ": mean_l_ft=" << s.mean_l_ft << " mean_l_align=" << s.mean_l_align
                  << " mean_total=" << s.mean_total << " rank_agreement=" << s.rank_agreement << '\n';
      }
      std::cout << "report: " << result.report_path << '\n';
      for (const auto& p : result.checkpoint_paths) std::cout << "checkpoint: " << p << '\n';
    } else if (eval->parsed()) {
      kpa::RunConfig config = load_config(eval_args);
      if (tokenizer_override) config.eval.tokenizer_mode = *tokenizer_override;
      config.validate();
      kpa::EvalOptions options;
      options.checkpoints = checkpoints;
      options.generate_in_place = generate_in_place;
      if (generations_override) options.generations_path = *generations_override;
      const auto result = kpa::cmd_eval(config, options);

      std::vector<kpa::EvalReport> reports;
      std::cout << "evaluated " << result.entries.size() << " checkpoint(s):\n";
      std::cout << "  " << std::left << std::setw(20) << "metric";
      for (const auto& entry : result.entries) {
        reports.push_back(entry.report);
        std::cout << std::right << std::setw(14)
                  << std::filesystem::path(entry.checkpoint).filename().string().substr(0, 13);
      }
      std::cout << '\n';
      print_report_row("bleu_1", reports, &kpa::EvalReport::bleu_1);
      print_report_row("bleu_2", reports, &kpa::EvalReport::bleu_2);
      print_report_row("bleu_3", reports, &kpa::EvalReport::bleu_3);
      print_report_row("bleu_4", reports, &kpa::EvalReport::bleu_4);
      print_report_row("rouge_1", reports, &kpa::EvalReport::rouge_1);
      print_report_row("rouge_2", reports, &kpa::EvalReport::rouge_2);
      print_report_row("rouge_l", reports, &kpa::EvalReport::rouge_l);
      print_report_row("meteor_simplified", reports, &kpa::EvalReport::meteor_simplified);
      print_report_row("ppl", reports, &kpa::EvalReport::ppl);
      print_report_row("preference_score", reports, &kpa::EvalReport::preference_score);
      for (const auto& entry : result.entries) std::cout << "report: " << entry.report_path << '\n';
    }
  } catch (const kpa::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const kpa::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const kpa::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
