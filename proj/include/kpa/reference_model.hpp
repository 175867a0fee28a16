#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kpa/data_io.hpp"
#include "kpa/scoring_model.hpp"

namespace kpa {

struct ReferenceModelConfig {
  int embed_dim = 16;
  int hidden_dim = 32;
  int max_vocab = 512;
  double init_scale = 0.08;
  std::uint64_t seed = 42;
};

struct LoadedReferenceModel;

// Deliberately small trainable autoregressive LM. Each next-token
// distribution conditions on the previous token's embedding concatenated
// with the mean embedding of the whole context (BOS + prompt + answer
// prefix), through one tanh hidden layer:
//
//   x      = [ embed[prev] ; mean_t embed[context_t] ]
//   logits = W_o tanh(W_h x + b_h) + b_o
//
// Word-level tokenizer (lowercase, punctuation split), <unk>=0, <bos>=1.
// Everything is double precision; backward is hand-derived and checked
// against finite differences in the tests.
class ReferenceModel final : public ScoringModel {
 public:
  ReferenceModel(std::vector<std::string> vocab_words, const ReferenceModelConfig& config);

  // Builds the vocabulary from the corpus the model will see: questions,
  // golden answers, KB surfaces and the template's fixed text.
  static ReferenceModel fit(std::span<const QAPair> dataset, std::span<const KnowledgeItem> kb,
                            const PromptTemplate& tmpl, const ReferenceModelConfig& config);

  std::vector<int> tokenize(std::string_view text) const override;
  std::vector<double> answer_token_logprobs(std::span<const int> prompt_tokens,
                                            std::span<const int> answer_tokens) const override;

  bool trainable() const override { return true; }
  void accumulate_score_gradient(std::span<const int> prompt_tokens, std::span<const int> answer_tokens,
                                 double upstream) override;
  void zero_gradients() override;
  void apply_gradients(const AdamWConfig& config, double grad_scale = 1.0) override;

  // Greedy decoding; emits max_tokens words. BOS is masked out.
  std::string generate(std::string_view prompt, int max_tokens = 24) const;

  std::size_t vocab_size() const { return vocab_.size(); }
  std::size_t parameter_count() const { return params_.size(); }
  int adam_step() const { return adam_step_; }
  const ReferenceModelConfig& config() const { return config_; }

  // Raw parameter access for gradient checking.
  std::span<double> parameters() { return params_; }
  std::span<const double> gradients() const { return grads_; }

  void save_checkpoint(const std::filesystem::path& path, std::string_view config_hash, int epoch) const;
  static LoadedReferenceModel load_checkpoint(const std::filesystem::path& path,
                                              std::string_view expected_config_hash = {});

 private:
  int vocab_id(const std::string& token) const;
  void init_parameters();

  // Parameter block offsets inside params_.
  std::size_t embed_offset() const { return 0; }
  std::size_t w_h_offset() const;
  std::size_t b_h_offset() const;
  std::size_t w_o_offset() const;
  std::size_t b_o_offset() const;

  ReferenceModelConfig config_;
  std::vector<std::string> vocab_;  // index = token id; [0]=<unk>, [1]=<bos>
  std::unordered_map<std::string, int> vocab_index_;

  std::vector<double> params_;
  std::vector<double> grads_;
  std::vector<double> adam_m_;
  std::vector<double> adam_v_;
  int adam_step_ = 0;
};

struct LoadedReferenceModel {
  ReferenceModel model;
  int epoch = 0;
};

}  // namespace kpa
