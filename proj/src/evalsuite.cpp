#include "kpa/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>

#include "kpa/error.hpp"
#include "kpa/jsonl.hpp"
#include "kpa/objectives.hpp"

namespace kpa {

using nlohmann::json;

namespace {

using Tokens = std::vector<std::string>;

std::map<Tokens, int> ngram_counts(const Tokens& tokens, std::size_t n) {
  std::map<Tokens, int> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                    tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

void warn_empty(const char* metric) {
  std::cerr << "warning: " << metric << " over an empty candidate or reference, scoring 0\n";
}

// Trailing-suffix stemmer used by the optional METEOR stem pass.
std::string light_stem(const std::string& token) {
  static const char* suffixes[] = {"ing", "ed", "es", "s"};
  for (const char* suf : suffixes) {
    const std::size_t len = std::string(suf).size();
    if (token.size() > len + 2 && token.compare(token.size() - len, len, suf) == 0) {
      return token.substr(0, token.size() - len);
    }
  }
  return token;
}

}  // namespace

double bleu_n(std::string_view candidate, std::string_view reference, int n, const MetricConfig& config) {
  if (n < 1 || n > 4) throw ValidationError("BLEU order must be in 1..4");
  const Tokens cand = tokenize(candidate, config.tokenizer);
  const Tokens ref = tokenize(reference, config.tokenizer);
  if (cand.empty() || ref.empty()) {
    warn_empty("BLEU");
    return 0.0;
  }

  double log_precision_sum = 0.0;
  for (int order = 1; order <= n; ++order) {
    const auto cand_ngrams = ngram_counts(cand, static_cast<std::size_t>(order));
    const auto ref_ngrams = ngram_counts(ref, static_cast<std::size_t>(order));
    double total = 0.0, matched = 0.0;
    for (const auto& [ngram, count] : cand_ngrams) {
      total += count;
      const auto it = ref_ngrams.find(ngram);
      if (it != ref_ngrams.end()) matched += std::min(count, it->second);
    }
    if (config.bleu_add_one_smoothing && order > 1) {
      matched += 1.0;
      total += 1.0;
    }
    if (total == 0.0 || matched == 0.0) return 0.0;  // some order has no overlap: geometric mean is 0
    log_precision_sum += std::log(matched / total);
  }

  const double c = static_cast<double>(cand.size());
  const double r = static_cast<double>(ref.size());
  const double brevity_penalty = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return brevity_penalty * std::exp(log_precision_sum / n);
}

namespace {

double overlap_f_measure(double matched, double cand_total, double ref_total, bool recall_only) {
  if (cand_total == 0.0 || ref_total == 0.0) return 0.0;
  const double precision = matched / cand_total;
  const double recall = matched / ref_total;
  if (recall_only) return recall;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

double rouge_n(std::string_view candidate, std::string_view reference, int n, const MetricConfig& config) {
  if (n < 1 || n > 2) throw ValidationError("ROUGE-N order must be 1 or 2");
  const Tokens cand = tokenize(candidate, config.tokenizer);
  const Tokens ref = tokenize(reference, config.tokenizer);
  if (cand.empty() || ref.empty()) {
    warn_empty("ROUGE");
    return 0.0;
  }
  const auto cand_ngrams = ngram_counts(cand, static_cast<std::size_t>(n));
  const auto ref_ngrams = ngram_counts(ref, static_cast<std::size_t>(n));
  double matched = 0.0, cand_total = 0.0, ref_total = 0.0;
  for (const auto& [ngram, count] : cand_ngrams) {
    cand_total += count;
    const auto it = ref_ngrams.find(ngram);
    if (it != ref_ngrams.end()) matched += std::min(count, it->second);
  }
  for (const auto& [ngram, count] : ref_ngrams) ref_total += count;
  return overlap_f_measure(matched, cand_total, ref_total, config.rouge_recall_only);
}

double rouge_l(std::string_view candidate, std::string_view reference, const MetricConfig& config) {
  const Tokens cand = tokenize(candidate, config.tokenizer);
  const Tokens ref = tokenize(reference, config.tokenizer);
  if (cand.empty() || ref.empty()) {
    warn_empty("ROUGE-L");
    return 0.0;
  }
  // Classic O(mn) LCS table.
  const std::size_t m = cand.size(), r = ref.size();
  std::vector<std::size_t> prev(r + 1, 0), curr(r + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= r; ++j) {
      curr[j] = cand[i - 1] == ref[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], curr[j - 1]);
    }
    std::swap(prev, curr);
  }
  const double lcs = static_cast<double>(prev[r]);
  return overlap_f_measure(lcs, static_cast<double>(m), static_cast<double>(r), config.rouge_recall_only);
}

double meteor_simplified(std::string_view candidate, std::string_view reference, const MetricConfig& config) {
  Tokens cand = tokenize(candidate, config.tokenizer);
  Tokens ref = tokenize(reference, config.tokenizer);
  if (cand.empty() || ref.empty()) return 0.0;

  // In-order greedy alignment: each candidate token takes the reference
  // position just after the previous match when possible (minimizing
  // chunks), otherwise the earliest unused match. Exact pass first, then
  // the optional stem pass over still-unmatched tokens.
  std::vector<int> cand_to_ref(cand.size(), -1);
  std::vector<bool> ref_used(ref.size(), false);

  const auto run_pass = [&](bool stemmed) {
    int prev_ref = -1;
    for (std::size_t ci = 0; ci < cand.size(); ++ci) {
      if (cand_to_ref[ci] >= 0) {
        prev_ref = cand_to_ref[ci];
        continue;
      }
      const std::string key = stemmed ? light_stem(cand[ci]) : cand[ci];
      int chosen = -1;
      const std::size_t next = static_cast<std::size_t>(prev_ref + 1);
      if (next < ref.size() && !ref_used[next] && (stemmed ? light_stem(ref[next]) : ref[next]) == key) {
        chosen = static_cast<int>(next);
      } else {
        for (std::size_t rj = 0; rj < ref.size(); ++rj) {
          if (!ref_used[rj] && (stemmed ? light_stem(ref[rj]) : ref[rj]) == key) {
            chosen = static_cast<int>(rj);
            break;
          }
        }
      }
      if (chosen >= 0) {
        cand_to_ref[ci] = chosen;
        ref_used[static_cast<std::size_t>(chosen)] = true;
        prev_ref = chosen;
      }
    }
  };
  run_pass(false);
  if (config.meteor_stem) run_pass(true);

  double matches = 0.0;
  std::size_t chunks = 0;
  int prev_ci = -2, prev_rj = -2;
  for (std::size_t ci = 0; ci < cand.size(); ++ci) {
    if (cand_to_ref[ci] < 0) continue;
    ++matches;
    const bool contiguous = static_cast<int>(ci) == prev_ci + 1 && cand_to_ref[ci] == prev_rj + 1;
    if (!contiguous) ++chunks;
    prev_ci = static_cast<int>(ci);
    prev_rj = cand_to_ref[ci];
  }
  if (matches == 0.0) return 0.0;

  const double precision = matches / static_cast<double>(cand.size());
  const double recall = matches / static_cast<double>(ref.size());
  const double f_mean = 10.0 * precision * recall / (recall + 9.0 * precision);
  double penalty = 0.0;
  if (matches > 1.0) {
    const double frag = (static_cast<double>(chunks) - 1.0) / (matches - 1.0);
    penalty = 0.5 * frag * frag * frag;
  }
  return f_mean * (1.0 - penalty);
}

double perplexity(const ScoringModel& model, std::string_view prompt, std::string_view answer) {
  return std::exp(-sequence_score(model, prompt, answer));
}

// ---------------------------------------------------------------------------
// Corpus evaluation
// ---------------------------------------------------------------------------

json EvalReport::to_json() const {
  json j{{"bleu_1", bleu_1},
         {"bleu_2", bleu_2},
         {"bleu_3", bleu_3},
         {"bleu_4", bleu_4},
         {"rouge_1", rouge_1},
         {"rouge_2", rouge_2},
         {"rouge_l", rouge_l},
         {"meteor_simplified", meteor_simplified},
         {"ppl", ppl},
         {"preference_score", preference_score},
         {"sample_count", sample_count},
         {"skipped", skipped}};
  if (!extra.empty()) j["extra"] = extra;
  return j;
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  r.bleu_1 = j.at("bleu_1").get<double>();
  r.bleu_2 = j.at("bleu_2").get<double>();
  r.bleu_3 = j.at("bleu_3").get<double>();
  r.bleu_4 = j.at("bleu_4").get<double>();
  r.rouge_1 = j.at("rouge_1").get<double>();
  r.rouge_2 = j.at("rouge_2").get<double>();
  r.rouge_l = j.at("rouge_l").get<double>();
  r.meteor_simplified = j.at("meteor_simplified").get<double>();
  r.ppl = j.at("ppl").get<double>();
  r.preference_score = j.at("preference_score").get<double>();
  r.sample_count = j.at("sample_count").get<std::size_t>();
  r.skipped = j.at("skipped").get<std::size_t>();
  if (j.contains("extra")) r.extra = j.at("extra").get<std::map<std::string, double>>();
  return r;
}

EvalReport evaluate(const ScoringModel& model, std::span<const QAPair> dataset,
                    const std::map<std::string, std::string>& generations, const MetricConfig& config,
                    const PromptBuilder& prompt_builder, std::span<const ExternalScorer* const> external_scorers) {
  for (const auto& [qid, text] : generations) {
    const bool known = std::any_of(dataset.begin(), dataset.end(), [&](const QAPair& qa) { return qa.id == qid; });
    if (!known) throw ValidationError("generation for unknown question id '" + qid + "'");
  }

  EvalReport report;
  double score_sum = 0.0;
  for (const auto& qa : dataset) {
    const auto it = generations.find(qa.id);
    if (it == generations.end()) {
      ++report.skipped;
      continue;
    }
    const std::string& gen = it->second;
    report.bleu_1 += bleu_n(gen, qa.golden_answer, 1, config);
    report.bleu_2 += bleu_n(gen, qa.golden_answer, 2, config);
    report.bleu_3 += bleu_n(gen, qa.golden_answer, 3, config);
    report.bleu_4 += bleu_n(gen, qa.golden_answer, 4, config);
    report.rouge_1 += rouge_n(gen, qa.golden_answer, 1, config);
    report.rouge_2 += rouge_n(gen, qa.golden_answer, 2, config);
    report.rouge_l += kpa::rouge_l(gen, qa.golden_answer, config);
    report.meteor_simplified += kpa::meteor_simplified(gen, qa.golden_answer, config);
    score_sum += sequence_score(model, prompt_builder(qa), gen);
    for (const auto* scorer : external_scorers) {
      report.extra[scorer->name()] += scorer->score(gen, qa.golden_answer);
    }
    ++report.sample_count;
  }
  if (report.sample_count == 0) throw ValidationError("nothing to evaluate: no generation matches the dataset");

  const double n = static_cast<double>(report.sample_count);
  report.bleu_1 /= n;
  report.bleu_2 /= n;
  report.bleu_3 /= n;
  report.bleu_4 /= n;
  report.rouge_1 /= n;
  report.rouge_2 /= n;
  report.rouge_l /= n;
  report.meteor_simplified /= n;
  for (auto& [name, value] : report.extra) value /= n;
  report.preference_score = score_sum / n;
  report.ppl = std::exp(-report.preference_score);  // corpus PPL: geometric mean of per-example PPL
  return report;
}

std::map<std::string, std::string> load_generations(const std::filesystem::path& path) {
  std::map<std::string, std::string> out;
  for (const auto& r : read_jsonl(path)) {
    if (r.contains("artifact")) continue;  // tolerate a header line
    const auto qid = r.at("question_id").get<std::string>();
    if (!out.emplace(qid, r.at("text").get<std::string>()).second) {
      throw ValidationError("duplicate generation for question '" + qid + "'");
    }
  }
  return out;
}

void save_generations(const std::filesystem::path& path, const std::map<std::string, std::string>& generations) {
  std::vector<json> records;
  records.reserve(generations.size());
  for (const auto& [qid, text] : generations) records.push_back(json{{"question_id", qid}, {"text", text}});
  write_jsonl(path, records);
}

// ---------------------------------------------------------------------------
// Human evaluation
// ---------------------------------------------------------------------------

HumanEvalRecord::Verdict verdict_from_string(std::string_view name) {
  if (name == "win") return HumanEvalRecord::Verdict::Win;
  if (name == "tie") return HumanEvalRecord::Verdict::Tie;
  if (name == "lose") return HumanEvalRecord::Verdict::Lose;
  throw ParseError("unknown verdict '" + std::string(name) + "' (expected win/tie/lose)");
}

std::string to_string(HumanEvalRecord::Verdict verdict) {
  switch (verdict) {
    case HumanEvalRecord::Verdict::Win: return "win";
    case HumanEvalRecord::Verdict::Tie: return "tie";
    case HumanEvalRecord::Verdict::Lose: return "lose";
  }
  return "tie";
}

HumanEvalTally tally_human_eval(std::span<const HumanEvalRecord> records) {
  HumanEvalTally tally;
  for (const auto& rec : records) {
    auto& ordered = tally.ordered[{rec.system_a, rec.system_b}];
    const bool flip = rec.system_b < rec.system_a;
    auto& combined = flip ? tally.combined[{rec.system_b, rec.system_a}] : tally.combined[{rec.system_a, rec.system_b}];
    switch (rec.verdict) {
      case HumanEvalRecord::Verdict::Win:
        ++ordered.win;
        ++(flip ? combined.lose : combined.win);
        break;
      case HumanEvalRecord::Verdict::Tie:
        ++ordered.tie;
        ++combined.tie;
        break;
      case HumanEvalRecord::Verdict::Lose:
        ++ordered.lose;
        ++(flip ? combined.win : combined.lose);
        break;
    }
  }
  return tally;
}

std::vector<HumanEvalRecord> load_human_eval(const std::filesystem::path& path) {
  std::vector<HumanEvalRecord> records;
  for (const auto& r : read_jsonl(path)) {
    HumanEvalRecord rec;
    rec.question_id = r.at("question_id").get<std::string>();
    rec.system_a = r.at("system_a").get<std::string>();
    rec.system_b = r.at("system_b").get<std::string>();
    rec.verdict = verdict_from_string(r.at("verdict").get<std::string>());
    rec.annotator = r.value("annotator", "");
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace kpa
