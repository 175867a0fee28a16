#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kpa/data_io.hpp"
#include "kpa/jsonl.hpp"
#include "kpa/retrieval.hpp"

namespace kpa {

// One ranked answer. rank 1 = most preferred; source tags where it came
// from ("golden", a generator name, or "kps:K1"/"kps:K2"/"kps:K3").
struct AnswerCandidate {
  std::string text;
  std::string source;
  int rank = 0;
};

enum class PreferenceKind { Style, Knowledge };

std::string to_string(PreferenceKind kind);
PreferenceKind preference_kind_from_string(std::string_view name);

// l >= 2 candidates whose ranks are exactly {1..l}; the golden answer is
// always present and always rank 1.
struct PreferenceSet {
  std::string question_id;
  PreferenceKind kind = PreferenceKind::Style;
  std::vector<AnswerCandidate> candidates;

  void validate() const;
  std::size_t size() const { return candidates.size(); }
  // Candidates ordered by rank ascending (rank 1 first).
  std::vector<AnswerCandidate> by_rank() const;
};

// Everything a generator may look at. Endpoint generators use the prompt
// only; synthetic corruption generators need the golden answer, and the
// slot tag lets knowledge-aware stubs grade their output per group.
struct GenerationContext {
  std::string prompt;
  std::string question_id;
  std::string golden_answer;
  std::string slot;  // "sps", "kps:K1", "kps:K2", "kps:K3"
};

class AnswerGenerator {
 public:
  virtual ~AnswerGenerator() = default;
  virtual const std::string& name() const = 0;
  virtual int quality_rank() const = 0;
  virtual std::string generate(const GenerationContext& ctx) = 0;
};

// Seeded stand-in for a weaker LLM: deletes or replaces a fraction of the
// golden answer's tokens. Larger fractions model weaker generators.
class CorruptionGenerator final : public AnswerGenerator {
 public:
  CorruptionGenerator(std::string name, int quality_rank, double corruption_fraction, std::uint64_t seed);

  const std::string& name() const override { return name_; }
  int quality_rank() const override { return quality_rank_; }
  std::string generate(const GenerationContext& ctx) override;

 private:
  std::string name_;
  int quality_rank_;
  double fraction_;
  std::uint64_t seed_;
};

// KPS stand-in for the backbone model: output quality depends on which
// knowledge group the prompt was built from.
class KnowledgeCorruptionGenerator final : public AnswerGenerator {
 public:
  KnowledgeCorruptionGenerator(std::string name, double k1_fraction, double k2_fraction, double k3_fraction,
                               std::uint64_t seed);

  const std::string& name() const override { return name_; }
  int quality_rank() const override { return 1; }
  std::string generate(const GenerationContext& ctx) override;

 private:
  std::string name_;
  double k1_fraction_, k2_fraction_, k3_fraction_;
  std::uint64_t seed_;
};

// Chat-completion endpoint client:
//   POST {model, messages: [{role, content}], temperature}
// and reads choices[0].message.content (or a top-level "content"/"text").
class EndpointGenerator final : public AnswerGenerator {
 public:
  struct Options {
    std::string name;
    int quality_rank = 1;
    std::string base_url;
    std::string path = "/v1/chat/completions";
    std::string model;
    double temperature = 0.0;
    std::string api_key;  // from the environment, never from flags
    int timeout_seconds = 60;
    int max_retries = 2;  // bounded backoff on transient failures
  };

  explicit EndpointGenerator(Options options);

  const std::string& name() const override { return options_.name; }
  int quality_rank() const override { return options_.quality_rank; }
  std::string generate(const GenerationContext& ctx) override;

 private:
  Options options_;
};

// Deterministic token-level corruption shared by the synthetic generators.
std::string corrupt_text(std::string_view golden, double fraction, std::uint64_t seed);

// Golden answer at rank 1; one answer per generator, ranked by generator
// quality_rank ascending, all prompted with the question plus K1 knowledge.
PreferenceSet build_sps(const QAPair& qa, std::span<AnswerGenerator* const> generators, const PromptTemplate& tmpl,
                        std::span<const std::string> k1_surfaces);

// Golden at rank 1, then the model's answers under K1, no knowledge, and K3
// prompts at ranks 2..4.
PreferenceSet build_kps(const QAPair& qa, AnswerGenerator& model_generator, const PromptTemplate& tmpl,
                        const KnowledgeGroups& groups);

struct BuildSummary {
  std::size_t emitted = 0;
  std::size_t failed = 0;
  std::vector<std::string> failures;  // "question_id kind: reason"
};

struct BuildAllResult {
  std::vector<PreferenceSet> sets;
  BuildSummary summary;
};

// One SPS and one KPS per QA pair (2N sets when nothing fails). A failed
// generation drops the whole set: no partial sets with rank gaps.
BuildAllResult build_all(std::span<const QAPair> dataset, std::span<const KnowledgeGroups> groups,
                         std::span<AnswerGenerator* const> sps_generators, AnswerGenerator& model_generator,
                         const PromptTemplate& tmpl);

nlohmann::json preference_set_to_json(const PreferenceSet& set);
PreferenceSet preference_set_from_json(const nlohmann::json& j);

void save_preference_sets(const std::filesystem::path& path, const ArtifactHeader& header,
                          std::span<const PreferenceSet> sets);
// Validates every set on load; rank ties or missing golden are rejected here.
std::vector<PreferenceSet> load_preference_sets(const std::filesystem::path& path,
                                                std::string_view expected_config_hash = {});

}  // namespace kpa
