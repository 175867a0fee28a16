#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kpa/data_io.hpp"
#include "kpa/scoring_model.hpp"
#include "kpa/text.hpp"

namespace kpa {

struct MetricConfig {
  TokenizerMode tokenizer = TokenizerMode::Whitespace;
  bool bleu_add_one_smoothing = false;  // add-one on orders >= 2 for tiny corpora
  bool rouge_recall_only = false;       // default is F1
  bool meteor_stem = false;             // second-pass suffix-stem matching
};

// BLEU-n against a single reference: clipped modified n-gram precision,
// geometric mean over orders 1..n, brevity penalty. No smoothing unless
// configured. Empty candidate or reference scores 0 with a warning.
double bleu_n(std::string_view candidate, std::string_view reference, int n, const MetricConfig& config = {});

// N-gram overlap F-measure (n in 1..2).
double rouge_n(std::string_view candidate, std::string_view reference, int n, const MetricConfig& config = {});

// Longest-common-subsequence F-measure.
double rouge_l(std::string_view candidate, std::string_view reference, const MetricConfig& config = {});

// Simplified METEOR: in-order unigram alignment on exact (optionally
// stemmed) matches, harmonic mean F weighted toward recall, and a
// fragmentation penalty that is zero at the single-chunk baseline:
//   penalty = 0.5 * ((chunks - 1) / (matches - 1))^3   (0 when matches <= 1)
// No synonym resource, hence the "_simplified" name in reports.
double meteor_simplified(std::string_view candidate, std::string_view reference, const MetricConfig& config = {});

// exp(-sequence_score); natural base.
double perplexity(const ScoringModel& model, std::string_view prompt, std::string_view answer);

// Hook for model-based scorers that need external resources; no default
// implementation ships.
class ExternalScorer {
 public:
  virtual ~ExternalScorer() = default;
  virtual const std::string& name() const = 0;
  virtual double score(std::string_view candidate, std::string_view reference) const = 0;
};

struct EvalReport {
  double bleu_1 = 0, bleu_2 = 0, bleu_3 = 0, bleu_4 = 0;
  double rouge_1 = 0, rouge_2 = 0, rouge_l = 0;
  double meteor_simplified = 0;
  double ppl = 1.0;               // exp of mean NLL over the scored corpus
  double preference_score = 0.0;  // mean sequence score of the generations
  std::size_t sample_count = 0;
  std::size_t skipped = 0;  // questions with no generation
  std::map<std::string, double> extra;  // external scorers, keyed by name

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

using PromptBuilder = std::function<std::string(const QAPair&)>;

// Corpus means of all per-example metrics over the questions that have a
// generation. Errors if nothing can be scored.
EvalReport evaluate(const ScoringModel& model, std::span<const QAPair> dataset,
                    const std::map<std::string, std::string>& generations, const MetricConfig& config,
                    const PromptBuilder& prompt_builder,
                    std::span<const ExternalScorer* const> external_scorers = {});

// Generations file: JSON Lines {question_id, text}.
std::map<std::string, std::string> load_generations(const std::filesystem::path& path);
void save_generations(const std::filesystem::path& path, const std::map<std::string, std::string>& generations);

struct HumanEvalRecord {
  enum class Verdict { Win, Tie, Lose };  // from system_a's perspective

  std::string question_id;
  std::string system_a;
  std::string system_b;
  Verdict verdict = Verdict::Tie;
  std::string annotator;
};

HumanEvalRecord::Verdict verdict_from_string(std::string_view name);
std::string to_string(HumanEvalRecord::Verdict verdict);

struct PairTally {
  int win = 0, tie = 0, lose = 0;
};

struct HumanEvalTally {
  // Counts exactly as recorded, keyed by (system_a, system_b).
  std::map<std::pair<std::string, std::string>, PairTally> ordered;
  // Canonical orientation (lexicographically smaller system first) with
  // reversed records flipped; guarantees wins(a,b) == losses(b,a).
  std::map<std::pair<std::string, std::string>, PairTally> combined;
};

HumanEvalTally tally_human_eval(std::span<const HumanEvalRecord> records);

std::vector<HumanEvalRecord> load_human_eval(const std::filesystem::path& path);

}  // namespace kpa
