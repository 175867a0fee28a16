#include "kpa/scoring_model.hpp"

#include <sstream>

#include "kpa/error.hpp"
#include "kpa/text.hpp"

namespace kpa {

MockModel MockModel::uniform(double logprob) {
  check_logprobs({&logprob, 1});
  MockModel m;
  m.uniform_ = logprob;
  return m;
}

MockModel::MockModel(std::vector<double> position_logprobs) {
  check_logprobs(position_logprobs);
  table_ = std::move(position_logprobs);
}

void MockModel::check_logprobs(std::span<const double> logprobs) {
  for (double lp : logprobs) {
    if (!(lp <= 0.0)) {
      throw ValidationError("mock table entries must be log-probabilities <= 0, got " + std::to_string(lp));
    }
  }
}

MockModel& MockModel::set_prompt_table(std::string_view prompt, std::vector<double> position_logprobs) {
  check_logprobs(position_logprobs);
  prompt_tables_[prompt_key(tokenize(prompt))] = std::move(position_logprobs);
  return *this;
}

std::vector<int> MockModel::tokenize(std::string_view text) const {
  std::vector<int> ids;
  for (auto& tok : kpa::tokenize(text, TokenizerMode::Whitespace)) {
    auto [it, inserted] = token_ids_.try_emplace(tok, static_cast<int>(token_texts_.size()));
    if (inserted) token_texts_.push_back(tok);
    ids.push_back(it->second);
  }
  return ids;
}

std::string MockModel::prompt_key(std::span<const int> prompt_tokens) const {
  std::string key;
  for (std::size_t i = 0; i < prompt_tokens.size(); ++i) {
    if (i > 0) key += ' ';
    key += token_texts_.at(static_cast<std::size_t>(prompt_tokens[i]));
  }
  return key;
}

std::vector<double> MockModel::answer_token_logprobs(std::span<const int> prompt_tokens,
                                                     std::span<const int> answer_tokens) const {
  const std::vector<double>* table = nullptr;
  if (!prompt_tables_.empty()) {
    auto it = prompt_tables_.find(prompt_key(prompt_tokens));
    if (it != prompt_tables_.end()) table = &it->second;
  }
  if (table == nullptr && !table_.empty()) table = &table_;

  std::vector<double> out;
  out.reserve(answer_tokens.size());
  for (std::size_t j = 0; j < answer_tokens.size(); ++j) {
    if (table != nullptr) {
      if (j >= table->size()) {
        std::ostringstream msg;
        msg << "mock table has no entry for answer position " << j << " (table size " << table->size() << ")";
        throw ValidationError(msg.str());
      }
      out.push_back((*table)[j]);
    } else if (uniform_.has_value()) {
      out.push_back(*uniform_);
    } else {
      throw ValidationError("mock model has no table configured");
    }
  }
  return out;
}

}  // namespace kpa
