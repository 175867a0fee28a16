#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kpa {

// AdamW: decoupled weight decay on top of Adam moment estimates.
struct AdamWConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// An autoregressive model that can score answer tokens given a prompt.
// Implementations must be deterministic in evaluation mode under a fixed
// seed, and every returned log-probability must be <= 0 (normalized
// distribution). Trainable implementations additionally accumulate
// d(upstream * S)/d(theta) where S is the mean answer-token log-likelihood.
class ScoringModel {
 public:
  virtual ~ScoringModel() = default;

  virtual std::vector<int> tokenize(std::string_view text) const = 0;

  // Log-probability of each answer token conditioned on the prompt and the
  // preceding answer tokens. Size equals answer_tokens.size().
  virtual std::vector<double> answer_token_logprobs(std::span<const int> prompt_tokens,
                                                    std::span<const int> answer_tokens) const = 0;

  virtual bool trainable() const { return false; }

  // Accumulates upstream * dS/dtheta into the gradient buffers, where S is
  // the mean log-likelihood of the answer tokens. No-op for frozen models.
  virtual void accumulate_score_gradient(std::span<const int> /*prompt_tokens*/,
                                         std::span<const int> /*answer_tokens*/, double /*upstream*/) {}

  virtual void zero_gradients() {}

  // Applies one optimizer step using the accumulated gradients scaled by
  // grad_scale (1/steps under gradient accumulation). Gradient buffers are
  // left untouched; callers zero them explicitly.
  virtual void apply_gradients(const AdamWConfig& /*config*/, double /*grad_scale*/ = 1.0) {}
};

// Deterministic fixture: per-position answer-token log-probabilities read
// from a table. Gradients are zero. Tokenization is lowercase whitespace
// splitting, so "a b" scores two positions.
class MockModel final : public ScoringModel {
 public:
  // Every answer position scores `logprob`, any answer length.
  static MockModel uniform(double logprob);

  // Position j reads table[j]; an answer longer than the table is a missing
  // entry and errors.
  explicit MockModel(std::vector<double> position_logprobs);

  // Optional per-prompt override table. Prompts are matched on their token
  // sequence, so whitespace differences do not defeat the lookup.
  MockModel& set_prompt_table(std::string_view prompt, std::vector<double> position_logprobs);

  std::vector<int> tokenize(std::string_view text) const override;
  std::vector<double> answer_token_logprobs(std::span<const int> prompt_tokens,
                                            std::span<const int> answer_tokens) const override;

 private:
  MockModel() = default;

  static void check_logprobs(std::span<const double> logprobs);
  std::string prompt_key(std::span<const int> prompt_tokens) const;

  std::optional<double> uniform_;
  std::vector<double> table_;
  std::map<std::string, std::vector<double>> prompt_tables_;

  // Token ids are interned per distinct token text; mutable because
  // tokenize() is logically const. Not thread-safe while interning.
  mutable std::vector<std::string> token_texts_;
  mutable std::map<std::string, int> token_ids_;
};

}  // namespace kpa
