#pragma once

#include <string_view>
#include <vector>

#include "kpa/scoring_model.hpp"

namespace kpa {

// Model preference scores of one preference set, ordered by human rank
// ascending: values[0] belongs to the most preferred (golden) candidate.
struct SequenceScores {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

// Min-max normalized weights, mu[i] in [0, 1]; all ones when the scores are
// (numerically) all equal.
struct AdaptiveWeights {
  std::vector<double> mu;
};

// One combined-objective evaluation. `total` is l_ft plus the alignment
// loss scaled by lambda over the contrast count (set size minus one).
struct LossBreakdown {
  double l_ft = 0.0;
  double l_align = 0.0;
  double lambda = 0.0;
  int contrast_normalizer = 1;
  double total = 0.0;
};

// Numerically stable ln(1 + e^x).
double softplus(double x);
// Stable ln sigma(x) = -softplus(-x).
double log_sigmoid(double x);
double sigmoid(double x);

// Mean log-likelihood of the answer tokens under the model (the model
// preference score S). Errors if the answer tokenizes to nothing.
double sequence_score(const ScoringModel& model, std::string_view prompt, std::string_view answer);

// Length-normalized autoregressive NLL of the golden answer; exactly
// -sequence_score.
double ft_loss(const ScoringModel& model, std::string_view prompt, std::string_view golden_answer);

// -sum_{i=1}^{l-1} ( ln sigma(S_i) + sum_{j less preferred than i} ln sigma(-S_j) ).
double align_loss_unweighted(const SequenceScores& scores);

// mu_i = (S_i - S_min) / (S_max - S_min); all ones when the spread is below
// 1e-12 (degenerate 0/0 case recovers the unweighted loss).
AdaptiveWeights adaptive_weights(const SequenceScores& scores);

// sum_{i=1}^{l-1} mu_i ( ln(1+e^{-S_i}) + sum_{j less preferred} ln(1+e^{S_j}) ),
// with mu from adaptive_weights.
double align_loss(const SequenceScores& scores);

// d align_loss / dS with mu treated as constants (stop-gradient weights).
std::vector<double> align_loss_gradient(const SequenceScores& scores);

// Hinge baseline: sum over (preferred i, less-preferred j) of
// max(0, margin - S_i + S_j). Zero once every pair is separated by margin.
double margin_rank_loss(const SequenceScores& scores, double margin);
std::vector<double> margin_rank_gradient(const SequenceScores& scores, double margin);

// total = l_ft + (lambda / (l - 1)) * align_loss(scores).
LossBreakdown combined_loss(double l_ft, const SequenceScores& scores, double lambda);

}  // namespace kpa
