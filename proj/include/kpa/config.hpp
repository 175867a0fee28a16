#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "kpa/data_io.hpp"
#include "kpa/evalsuite.hpp"
#include "kpa/reference_model.hpp"
#include "kpa/trainer.hpp"

namespace kpa {

struct EncoderSpec {
  std::string type = "hashed_tfidf";  // hashed_tfidf | remote
  std::size_t dimension = 256;        // remote: 0 = infer from the first response
  std::string endpoint_url;
  std::string endpoint_path = "/embed";
  std::string auth_token_env = "KPA_ENCODER_TOKEN";  // token value comes from the environment
};

struct GeneratorSpec {
  std::string type = "corruption";  // corruption | knowledge_corruption | endpoint
  std::string name;
  int quality_rank = 1;
  double corruption = 0.1;
  // knowledge_corruption: per-group corruption levels for the KPS stand-in.
  double corruption_k1 = 0.15;
  double corruption_k2 = 0.35;
  double corruption_k3 = 0.55;
  // endpoint type
  std::string base_url;
  std::string endpoint_path = "/v1/chat/completions";
  std::string model;
  double temperature = 0.0;
  std::string api_key_env = "KPA_API_KEY";
};

struct RetrievalSection {
  int k = 3;
  EncoderSpec encoder;
  bool save_index = false;
};

struct PrefsetSection {
  std::vector<GeneratorSpec> generators;  // SPS generators; defaults are three graded corruption stubs
  GeneratorSpec model_generator;          // KPS stand-in for the backbone model
};

struct EvalSection {
  std::string tokenizer_mode = "whitespace";
  bool bleu_smoothing = false;
  bool rouge_recall = false;
  bool meteor_stem = false;
  bool use_knowledge = true;      // score generations under the K1 prompt when groups exist
  std::string generations_path;   // optional default for `eval`
  int generate_max_tokens = 24;   // for --generate
};

// The whole run configuration: one file, flag overrides on top. Every
// stage derives its artifact hash from the sections that influence it, so
// artifacts produced under different effective configs never mix.
struct RunConfig {
  std::uint64_t seed = 42;
  struct Paths {
    std::string qa;
    std::string kb;
    std::string out_dir = "out";
  } paths;
  PromptTemplate prompt;
  RetrievalSection retrieval;
  PrefsetSection prefset;
  TrainConfig train;
  ReferenceModelConfig model;
  EvalSection eval;

  static RunConfig load(const std::filesystem::path& path);
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;

  std::filesystem::path out_path(std::string_view filename) const;
  // TrainConfig with the run-level seed and retrieval depth applied.
  TrainConfig effective_train_config() const;
  ReferenceModelConfig effective_model_config() const;
  MetricConfig metric_config() const;
};

enum class Stage { Retrieve, Prefsets, Train, Eval };

// Hash over the config sections a stage depends on (cumulative along the
// pipeline): changing eval settings never invalidates retrieval artifacts,
// while changing the seed invalidates everything.
std::string stage_config_hash(const RunConfig& config, Stage stage);

// Default SPS generator specs used when the config has none: three graded
// corruption stubs.
std::vector<GeneratorSpec> default_sps_generators();
GeneratorSpec default_model_generator();

}  // namespace kpa
