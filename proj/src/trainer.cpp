#include "kpa/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "kpa/error.hpp"
#include "kpa/text.hpp"

namespace kpa {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (grad_accumulation < 1) throw ConfigError("grad_accumulation must be >= 1");
  if (k < 1) throw ConfigError("k must be >= 1");
  if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) throw ConfigError("holdout_fraction must be in [0, 1)");
}

AdamWConfig TrainConfig::optimizer_config() const {
  AdamWConfig cfg = optimizer;
  cfg.learning_rate = learning_rate;
  return cfg;
}

namespace {

json epoch_stats_to_json(const EpochStats& s) {
  return json{{"mean_l_ft", s.mean_l_ft},
              {"mean_l_align", s.mean_l_align},
              {"mean_total", s.mean_total},
              {"rank_agreement", s.rank_agreement},
              {"pairwise_agreement", s.pairwise_agreement}};
}

// Scores candidates by rank order; nullopt when any candidate fails to
// tokenize (the whole set is skipped per policy).
std::optional<SequenceScores> score_set(const ScoringModel& model, const PreferenceSet& set,
                                        const std::string& prompt) {
  SequenceScores scores;
  for (const auto& candidate : set.by_rank()) {
    try {
      scores.values.push_back(sequence_score(model, prompt, candidate.text));
    } catch (const ValidationError& e) {
      std::cerr << "warning: skipping " << to_string(set.kind) << " set of '" << set.question_id
                << "': " << e.what() << '\n';
      return std::nullopt;
    }
  }
  return scores;
}

}  // namespace

StepResult train_step(ScoringModel& model, const QAPair& qa, const PreferenceSet* sps, const PreferenceSet* kps,
                      const PromptTemplate& tmpl, std::span<const std::string> k1_surfaces,
                      const TrainConfig& config) {
  config.validate();
  const std::string prompt = render_prompt(tmpl, k1_surfaces, qa.question);
  const auto prompt_tokens = model.tokenize(prompt);
  const auto golden_tokens = model.tokenize(qa.golden_answer);
  if (golden_tokens.empty()) {
    throw TrainingError("golden answer of '" + qa.id + "' tokenizes to nothing");
  }

  StepResult result;
  result.l_ft = ft_loss(model, prompt, qa.golden_answer);
  result.objective = result.l_ft;
  // The buffers accumulate dObjective/dtheta. l_ft = -S_golden, so the
  // golden answer's upstream is -1.
  model.accumulate_score_gradient(prompt_tokens, golden_tokens, -1.0);

  const auto process_set = [&](const PreferenceSet* set) -> std::optional<LossBreakdown> {
    if (set == nullptr) return std::nullopt;
    auto scores = score_set(model, *set, prompt);
    if (!scores.has_value()) return std::nullopt;
    LossBreakdown breakdown = combined_loss(result.l_ft, *scores, config.lambda);
    // Chain rule through each candidate: lambda/(l-1) * dL_align/dS_i.
    const double scale = config.lambda / static_cast<double>(breakdown.contrast_normalizer);
    const auto grad = align_loss_gradient(*scores);
    const auto by_rank = set->by_rank();
    for (std::size_t i = 0; i < by_rank.size(); ++i) {
      const auto answer_tokens = model.tokenize(by_rank[i].text);
      model.accumulate_score_gradient(prompt_tokens, answer_tokens, scale * grad[i]);
    }
    result.objective += scale * breakdown.l_align;
    ++result.sets_used;
    return breakdown;
  };

  result.sps = process_set(sps);
  result.kps = process_set(kps);

  if (!std::isfinite(result.objective)) {
    throw TrainingError("non-finite training objective at question '" + qa.id + "'");
  }
  return result;
}

json TrainReport::to_json(bool include_timing) const {
  json j;
  j["initial"] = epoch_stats_to_json(initial);
  json epochs_json = json::array();
  for (const auto& e : epochs) epochs_json.push_back(epoch_stats_to_json(e));
  j["epochs"] = std::move(epochs_json);
  j["train_pairs"] = train_pairs;
  j["holdout_pairs"] = holdout_pairs;
  j["skipped_sets"] = skipped_sets;
  if (include_timing) j["wall_clock_seconds"] = wall_clock_seconds;
  return j;
}

std::string TrainReport::deterministic_digest() const { return to_json(/*include_timing=*/false).dump(); }

RankAgreement rank_agreement(const ScoringModel& model, std::span<const PreferenceSet* const> sets,
                             std::span<const QAPair> dataset,
                             const std::map<std::string, std::vector<std::string>>& k1_by_question,
                             const PromptTemplate& tmpl) {
  RankAgreement out;
  if (sets.empty()) return out;
  std::map<std::string, const QAPair*> qa_by_id;
  for (const auto& qa : dataset) qa_by_id[qa.id] = &qa;
  std::size_t exact_hits = 0;
  std::size_t pair_hits = 0, pair_total = 0;
  std::size_t usable = 0;
  static const std::vector<std::string> kNoKnowledge;
  for (const auto* set : sets) {
    const auto qa_it = qa_by_id.find(set->question_id);
    if (qa_it == qa_by_id.end()) continue;
    const auto it = k1_by_question.find(set->question_id);
    const auto& k1 = it == k1_by_question.end() ? kNoKnowledge : it->second;
    // Held-out sets must not crash scoring; unscorable sets are just skipped.
    std::optional<SequenceScores> scores;
    try {
      scores = score_set(model, *set, render_prompt(tmpl, k1, qa_it->second->question));
    } catch (const Error&) {
      scores = std::nullopt;
    }
    if (!scores.has_value()) continue;
    ++usable;
    bool exact = true;
    for (std::size_t i = 0; i < scores->values.size(); ++i) {
      for (std::size_t j = i + 1; j < scores->values.size(); ++j) {
        ++pair_total;
        if (scores->values[i] > scores->values[j]) {
          ++pair_hits;
        } else {
          exact = false;
        }
      }
    }
    if (exact) ++exact_hits;
  }
  if (usable > 0) out.exact = static_cast<double>(exact_hits) / static_cast<double>(usable);
  if (pair_total > 0) out.pairwise = static_cast<double>(pair_hits) / static_cast<double>(pair_total);
  return out;
}

namespace {

struct SetLookup {
  std::map<std::string, const PreferenceSet*> sps;
  std::map<std::string, const PreferenceSet*> kps;
};

SetLookup index_sets(std::span<const PreferenceSet> sets) {
  SetLookup lookup;
  for (const auto& s : sets) {
    auto& slot = s.kind == PreferenceKind::Style ? lookup.sps : lookup.kps;
    slot[s.question_id] = &s;
  }
  return lookup;
}

}  // namespace

TrainReport train(ScoringModel& model, std::span<const QAPair> dataset, std::span<const PreferenceSet> preference_data,
                  std::span<const KnowledgeGroups> groups, const PromptTemplate& tmpl, const TrainConfig& config,
                  const TrainSinks& sinks, int start_epoch) {
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();

  const SetLookup lookup = index_sets(preference_data);
  std::map<std::string, std::vector<std::string>> k1_by_question;
  for (const auto& g : groups) k1_by_question[g.question_id] = g.k1_surfaces();

  // Seeded train/holdout split of QA pairs, stable across epochs and resume.
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 split_rng(mix_seed(config.seed, "holdout-split"));
  std::shuffle(order.begin(), order.end(), split_rng);
  std::size_t holdout_count = static_cast<std::size_t>(config.holdout_fraction * static_cast<double>(dataset.size()));
  if (config.holdout_fraction > 0.0 && dataset.size() > 1) holdout_count = std::max<std::size_t>(holdout_count, 1);
  std::vector<std::size_t> holdout_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout_count));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(holdout_count), order.end());
  std::sort(train_idx.begin(), train_idx.end());  // dataset order; epoch shuffles re-derive from the seed
  std::sort(holdout_idx.begin(), holdout_idx.end());

  std::vector<const PreferenceSet*> holdout_sets;
  for (std::size_t idx : holdout_idx) {
    const auto& qa = dataset[idx];
    if (auto it = lookup.sps.find(qa.id); it != lookup.sps.end()) holdout_sets.push_back(it->second);
    if (auto it = lookup.kps.find(qa.id); it != lookup.kps.end()) holdout_sets.push_back(it->second);
  }

  TrainReport report;
  report.train_pairs = train_idx.size();
  report.holdout_pairs = holdout_idx.size();

  static const std::vector<std::string> kNoKnowledge;
  const auto k1_of = [&](const QAPair& qa) -> const std::vector<std::string>& {
    const auto it = k1_by_question.find(qa.id);
    return it == k1_by_question.end() ? kNoKnowledge : it->second;
  };

  // Forward-only pass: initial losses on the training pairs, agreement on
  // the held-out sets.
  const auto evaluate_epoch_losses = [&](EpochStats& stats) {
    double ft_sum = 0.0, align_sum = 0.0, total_sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t idx : train_idx) {
      const auto& qa = dataset[idx];
      const std::string prompt = render_prompt(tmpl, k1_of(qa), qa.question);
      const double l_ft = ft_loss(model, prompt, qa.golden_answer);
      double align = 0.0;
      double total = l_ft;
      for (const auto* set_map : {&lookup.sps, &lookup.kps}) {
        const auto it = set_map->find(qa.id);
        if (it == set_map->end()) continue;
        const auto scores = score_set(model, *it->second, prompt);
        if (!scores.has_value()) continue;
        const auto breakdown = combined_loss(l_ft, *scores, config.lambda);
        align += breakdown.l_align;
        total += (config.lambda / static_cast<double>(breakdown.contrast_normalizer)) * breakdown.l_align;
      }
      ft_sum += l_ft;
      align_sum += align;
      total_sum += total;
      ++counted;
    }
    if (counted > 0) {
      stats.mean_l_ft = ft_sum / static_cast<double>(counted);
      stats.mean_l_align = align_sum / static_cast<double>(counted);
      stats.mean_total = total_sum / static_cast<double>(counted);
    }
    const auto agreement = rank_agreement(model, holdout_sets, dataset, k1_by_question, tmpl);
    stats.rank_agreement = agreement.exact;
    stats.pairwise_agreement = agreement.pairwise;
  };

  evaluate_epoch_losses(report.initial);

  const AdamWConfig opt = config.optimizer_config();
  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    // Per-epoch seeded order, derived (not stateful) so resume replays the
    // same schedule.
    std::vector<std::size_t> epoch_order = train_idx;
    std::mt19937_64 epoch_rng(mix_seed(config.seed, "epoch-" + std::to_string(epoch)));
    std::shuffle(epoch_order.begin(), epoch_order.end(), epoch_rng);

    EpochStats stats;
    double ft_sum = 0.0, align_sum = 0.0, total_sum = 0.0;
    std::size_t counted = 0;
    int accumulated = 0;
    model.zero_gradients();
    for (std::size_t idx : epoch_order) {
      const auto& qa = dataset[idx];
      const auto sps_it = lookup.sps.find(qa.id);
      const auto kps_it = lookup.kps.find(qa.id);
      const StepResult step = train_step(model, qa, sps_it == lookup.sps.end() ? nullptr : sps_it->second,
                                         kps_it == lookup.kps.end() ? nullptr : kps_it->second, tmpl, k1_of(qa),
                                         config);
      const int wanted = (sps_it != lookup.sps.end() ? 1 : 0) + (kps_it != lookup.kps.end() ? 1 : 0);
      report.skipped_sets += static_cast<std::size_t>(wanted - step.sets_used);

      ft_sum += step.l_ft;
      align_sum += (step.sps ? step.sps->l_align : 0.0) + (step.kps ? step.kps->l_align : 0.0);
      total_sum += step.objective;
      ++counted;

      if (sinks.step_log_writer) {
        json rec{{"epoch", epoch}, {"question_id", qa.id}, {"l_ft", step.l_ft}, {"objective", step.objective}};
        if (step.sps) {
          rec["sps"] = json{{"l_align", step.sps->l_align},
                            {"lambda", step.sps->lambda},
                            {"contrast_normalizer", step.sps->contrast_normalizer},
                            {"total", step.sps->total}};
        }
        if (step.kps) {
          rec["kps"] = json{{"l_align", step.kps->l_align},
                            {"lambda", step.kps->lambda},
                            {"contrast_normalizer", step.kps->contrast_normalizer},
                            {"total", step.kps->total}};
        }
        sinks.step_log_writer(rec);
      }

      ++accumulated;
      if (accumulated == config.grad_accumulation) {
        model.apply_gradients(opt, 1.0 / static_cast<double>(accumulated));
        model.zero_gradients();
        accumulated = 0;
      }
    }
    if (accumulated > 0) {
      model.apply_gradients(opt, 1.0 / static_cast<double>(accumulated));
      model.zero_gradients();
    }

    if (counted > 0) {
      stats.mean_l_ft = ft_sum / static_cast<double>(counted);
      stats.mean_l_align = align_sum / static_cast<double>(counted);
      stats.mean_total = total_sum / static_cast<double>(counted);
    }
    const auto agreement = rank_agreement(model, holdout_sets, dataset, k1_by_question, tmpl);
    stats.rank_agreement = agreement.exact;
    stats.pairwise_agreement = agreement.pairwise;
    report.epochs.push_back(stats);

    if (sinks.checkpoint_writer) sinks.checkpoint_writer(epoch);
  }

  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

}  // namespace kpa
