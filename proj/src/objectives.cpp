#include "kpa/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "kpa/error.hpp"

namespace kpa {

namespace {

constexpr double kDegenerateSpread = 1e-12;

void require_contrastable(const SequenceScores& scores) {
  if (scores.size() < 2) {
    throw ValidationError("preference scores need at least 2 candidates, got " + std::to_string(scores.size()));
  }
  for (double s : scores.values) {
    if (!std::isfinite(s)) throw ValidationError("non-finite sequence score");
  }
}

}  // namespace

double softplus(double x) {
  // Branch on sign so the exponent never overflows.
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double log_sigmoid(double x) { return -softplus(-x); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double sequence_score(const ScoringModel& model, std::string_view prompt, std::string_view answer) {
  const auto prompt_tokens = model.tokenize(prompt);
  const auto answer_tokens = model.tokenize(answer);
  if (answer_tokens.empty()) {
    throw ValidationError("answer tokenizes to zero tokens: '" + std::string(answer) + "'");
  }
  const auto logprobs = model.answer_token_logprobs(prompt_tokens, answer_tokens);
  double sum = 0.0;
  for (double lp : logprobs) sum += lp;
  return sum / static_cast<double>(logprobs.size());
}

double ft_loss(const ScoringModel& model, std::string_view prompt, std::string_view golden_answer) {
  return -sequence_score(model, prompt, golden_answer);
}

double align_loss_unweighted(const SequenceScores& scores) {
  require_contrastable(scores);
  const auto& s = scores.values;
  const std::size_t l = s.size();
  double loss = 0.0;
  for (std::size_t i = 0; i + 1 < l; ++i) {
    double term = -log_sigmoid(s[i]);
    for (std::size_t j = i + 1; j < l; ++j) term += -log_sigmoid(-s[j]);
    loss += term;
  }
  return loss;
}

AdaptiveWeights adaptive_weights(const SequenceScores& scores) {
  require_contrastable(scores);
  const auto& s = scores.values;
  const auto [min_it, max_it] = std::minmax_element(s.begin(), s.end());
  const double spread = *max_it - *min_it;
  AdaptiveWeights w;
  w.mu.resize(s.size(), 1.0);
  if (spread <= kDegenerateSpread) return w;  // all-equal scores: keep the unweighted loss
  for (std::size_t i = 0; i < s.size(); ++i) w.mu[i] = (s[i] - *min_it) / spread;
  return w;
}

double align_loss(const SequenceScores& scores) {
  require_contrastable(scores);
  const auto& s = scores.values;
  const auto mu = adaptive_weights(scores).mu;
  const std::size_t l = s.size();
  double loss = 0.0;
  for (std::size_t i = 0; i + 1 < l; ++i) {
    double term = softplus(-s[i]);
    for (std::size_t j = i + 1; j < l; ++j) term += softplus(s[j]);
    loss += mu[i] * term;
  }
  return loss;
}

std::vector<double> align_loss_gradient(const SequenceScores& scores) {
  require_contrastable(scores);
  const auto& s = scores.values;
  const auto mu = adaptive_weights(scores).mu;
  const std::size_t l = s.size();
  std::vector<double> grad(l, 0.0);

  // Prefix sums of mu make the "less-preferred member" contributions O(l).
  double mu_prefix = 0.0;
  for (std::size_t i = 0; i < l; ++i) {
    if (i + 1 < l) grad[i] += -mu[i] * sigmoid(-s[i]);  // preferred-role term
    grad[i] += sigmoid(s[i]) * mu_prefix;               // contrasts against every better-ranked i'
    mu_prefix += (i + 1 < l) ? mu[i] : 0.0;
  }
  return grad;
}

double margin_rank_loss(const SequenceScores& scores, double margin) {
  require_contrastable(scores);
  if (margin < 0.0) throw ValidationError("margin must be non-negative");
  const auto& s = scores.values;
  double loss = 0.0;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      loss += std::max(0.0, margin - s[i] + s[j]);
    }
  }
  return loss;
}

std::vector<double> margin_rank_gradient(const SequenceScores& scores, double margin) {
  require_contrastable(scores);
  if (margin < 0.0) throw ValidationError("margin must be non-negative");
  const auto& s = scores.values;
  std::vector<double> grad(s.size(), 0.0);
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      if (margin - s[i] + s[j] > 0.0) {
        grad[i] -= 1.0;
        grad[j] += 1.0;
      }
    }
  }
  return grad;
}

LossBreakdown combined_loss(double l_ft, const SequenceScores& scores, double lambda) {
  require_contrastable(scores);
  if (!(lambda > 0.0)) throw ValidationError("lambda must be positive");
  LossBreakdown out;
  out.l_ft = l_ft;
  out.l_align = align_loss(scores);
  out.lambda = lambda;
  out.contrast_normalizer = static_cast<int>(scores.size()) - 1;
  out.total = l_ft + (lambda / static_cast<double>(out.contrast_normalizer)) * out.l_align;
  return out;
}

}  // namespace kpa
