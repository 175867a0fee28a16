#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kpa/data_io.hpp"
#include "kpa/objectives.hpp"
#include "kpa/prefset.hpp"
#include "kpa/retrieval.hpp"
#include "kpa/scoring_model.hpp"

namespace kpa {

struct TrainConfig {
  double lambda = 0.1;  // searched over {1, 0.1, 0.01, 0.001} in practice
  double learning_rate = 3e-4;
  int epochs = 3;
  int grad_accumulation = 8;
  int k = 3;
  std::uint64_t seed = 42;
  double holdout_fraction = 0.2;  // held-out QA pairs for rank agreement
  AdamWConfig optimizer;

  void validate() const;
  AdamWConfig optimizer_config() const;  // optimizer with learning_rate applied
};

// One optimization step over a QA pair and its preference sets.
struct StepResult {
  double l_ft = 0.0;
  std::optional<LossBreakdown> sps;
  std::optional<LossBreakdown> kps;
  double objective = 0.0;  // l_ft + sum of the sets' normalized align terms
  int sets_used = 0;
};

struct EpochStats {
  double mean_l_ft = 0.0;
  double mean_l_align = 0.0;
  double mean_total = 0.0;
  double rank_agreement = 0.0;      // exact-ordering agreement on held-out sets
  double pairwise_agreement = 0.0;  // fraction of correctly ordered pairs
};

struct TrainReport {
  EpochStats initial;  // forward-only pass before any update
  std::vector<EpochStats> epochs;
  std::size_t train_pairs = 0;
  std::size_t holdout_pairs = 0;
  std::size_t skipped_sets = 0;
  double wall_clock_seconds = 0.0;

  // Timing is diagnostic only and excluded from the determinism contract;
  // everything else must be bitwise identical across same-seed runs.
  nlohmann::json to_json(bool include_timing = true) const;
  std::string deterministic_digest() const;
};

// Hooks the pipeline uses to persist artifacts; tests usually leave these
// unset.
struct TrainSinks {
  std::function<void(int epoch)> checkpoint_writer;                  // called after each epoch
  std::function<void(const nlohmann::json& record)> step_log_writer;  // per-step LossBreakdown records
};

// Scores every candidate of both sets under the K1-augmented prompt,
// forms the combined objective per set, and accumulates gradients
// (lambda-scaled align gradient plus the ft term on the golden answer).
// Returns the losses; parameter updates happen in train() on the gradient
// accumulation schedule. Sets whose candidates fail tokenization are
// skipped with a warning.
StepResult train_step(ScoringModel& model, const QAPair& qa, const PreferenceSet* sps, const PreferenceSet* kps,
                      const PromptTemplate& tmpl, std::span<const std::string> k1_surfaces,
                      const TrainConfig& config);

// Seeded multi-epoch training loop with per-epoch held-out rank agreement
// and optional checkpoint/log sinks. start_epoch > 0 resumes a loaded
// checkpoint without re-initialization.
TrainReport train(ScoringModel& model, std::span<const QAPair> dataset, std::span<const PreferenceSet> preference_data,
                  std::span<const KnowledgeGroups> groups, const PromptTemplate& tmpl, const TrainConfig& config,
                  const TrainSinks& sinks = {}, int start_epoch = 0);

// Fraction of held-out sets whose model-score ordering matches the human
// ranks exactly, plus the pairwise variant.
struct RankAgreement {
  double exact = 0.0;
  double pairwise = 0.0;
};
RankAgreement rank_agreement(const ScoringModel& model, std::span<const PreferenceSet* const> sets,
                             std::span<const QAPair> dataset,
                             const std::map<std::string, std::vector<std::string>>& k1_by_question,
                             const PromptTemplate& tmpl);

}  // namespace kpa
