#pragma once

#include <string>
#include <vector>

#include "kpa/config.hpp"
#include "kpa/evalsuite.hpp"
#include "kpa/prefset.hpp"
#include "kpa/trainer.hpp"

namespace kpa {

// The four pipeline stages behind the CLI subcommands. Each stage reads
// its inputs, verifies upstream artifact hashes, writes its outputs under
// paths.out_dir and returns what the caller may want to summarize.

struct RetrieveResult {
  std::size_t questions = 0;
  std::string groups_path;
};
RetrieveResult cmd_retrieve(const RunConfig& config);

struct PrefsetsResult {
  BuildSummary summary;
  std::string sets_path;
};
PrefsetsResult cmd_build_prefsets(const RunConfig& config);

struct TrainResult {
  TrainReport report;
  std::vector<std::string> checkpoint_paths;
  std::string report_path;
};
TrainResult cmd_train(const RunConfig& config, bool resume = false);

struct EvalOptions {
  std::vector<std::string> checkpoints;  // explicit checkpoint files; default: every epoch checkpoint in out_dir
  std::string generations_path;          // overrides config.eval.generations_path
  bool generate_in_place = false;        // decode answers with the checkpoint model instead
};

struct EvalResult {
  struct Entry {
    std::string checkpoint;
    EvalReport report;
    std::string report_path;
  };
  std::vector<Entry> entries;
};
EvalResult cmd_eval(const RunConfig& config, const EvalOptions& options = {});

// Factory for configured generators; corruption stubs derive their streams
// from the run seed, endpoint generators read their key from the
// environment variable named in the spec.
std::unique_ptr<AnswerGenerator> make_generator(const GeneratorSpec& spec, std::uint64_t seed);

}  // namespace kpa
