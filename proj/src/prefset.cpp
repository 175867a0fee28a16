#include "kpa/prefset.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#define CPPHTTPLIB_NO_EXCEPTIONS 0
#include <httplib.h>

#include "kpa/error.hpp"
#include "kpa/text.hpp"

namespace kpa {

using nlohmann::json;

std::string to_string(PreferenceKind kind) {
  return kind == PreferenceKind::Style ? "style" : "knowledge";
}

PreferenceKind preference_kind_from_string(std::string_view name) {
  if (name == "style") return PreferenceKind::Style;
  if (name == "knowledge") return PreferenceKind::Knowledge;
  throw ParseError("unknown preference set kind: " + std::string(name));
}

void PreferenceSet::validate() const {
  if (candidates.size() < 2) {
    throw ValidationError("preference set for '" + question_id + "' has fewer than 2 candidates");
  }
  std::set<int> ranks;
  int golden_count = 0;
  for (const auto& c : candidates) {
    if (trim(c.text).empty()) {
      throw ValidationError("preference set for '" + question_id + "' has an empty candidate text");
    }
    if (c.rank < 1) throw ValidationError("preference set for '" + question_id + "' has rank < 1");
    if (!ranks.insert(c.rank).second) {
      throw ValidationError("preference set for '" + question_id + "' has tied rank " + std::to_string(c.rank));
    }
    if (c.source == "golden") {
      ++golden_count;
      if (c.rank != 1) {
        throw ValidationError("golden answer of '" + question_id + "' must have rank 1, got " +
                              std::to_string(c.rank));
      }
    }
  }
  // Ranks must be exactly {1..l}.
  if (*ranks.begin() != 1 || *ranks.rbegin() != static_cast<int>(candidates.size())) {
    throw ValidationError("preference set for '" + question_id + "' has a rank gap");
  }
  if (golden_count != 1) {
    throw ValidationError("preference set for '" + question_id + "' needs exactly one golden candidate, found " +
                          std::to_string(golden_count));
  }
}

std::vector<AnswerCandidate> PreferenceSet::by_rank() const {
  std::vector<AnswerCandidate> sorted = candidates;
  std::sort(sorted.begin(), sorted.end(),
            [](const AnswerCandidate& a, const AnswerCandidate& b) { return a.rank < b.rank; });
  return sorted;
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

std::string corrupt_text(std::string_view golden, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0) throw ValidationError("corruption fraction must be in [0, 1]");
  auto tokens = tokenize(golden, TokenizerMode::Whitespace);
  if (tokens.empty()) return std::string(golden);

  std::mt19937_64 rng(seed);
  const auto n = tokens.size();
  const auto corrupt_count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));

  std::vector<std::size_t> positions(n);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  std::shuffle(positions.begin(), positions.end(), rng);

  // Noise words deliberately never occur in clean text.
  std::vector<bool> deleted(n, false);
  for (std::size_t i = 0; i < corrupt_count; ++i) {
    const std::size_t pos = positions[i];
    if (rng() % 2 == 0) {
      deleted[pos] = true;
    } else {
      tokens[pos] = "zz" + std::to_string(rng() % 97);
    }
  }

  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (deleted[i]) continue;
    if (!out.empty()) out += ' ';
    out += tokens[i];
  }
  if (trim(out).empty()) out = tokens.front();  // never emit an empty candidate
  return out;
}

CorruptionGenerator::CorruptionGenerator(std::string name, int quality_rank, double corruption_fraction,
                                         std::uint64_t seed)
    : name_(std::move(name)), quality_rank_(quality_rank), fraction_(corruption_fraction), seed_(seed) {
  if (quality_rank_ < 1) throw ValidationError("generator quality_rank must be >= 1");
}

std::string CorruptionGenerator::generate(const GenerationContext& ctx) {
  if (ctx.golden_answer.empty()) {
    throw GenerationError("corruption generator '" + name_ + "' needs the golden answer");
  }
  const std::uint64_t stream = mix_seed(seed_, name_ + "|" + ctx.question_id + "|" + ctx.slot);
  return corrupt_text(ctx.golden_answer, fraction_, stream);
}

KnowledgeCorruptionGenerator::KnowledgeCorruptionGenerator(std::string name, double k1_fraction, double k2_fraction,
                                                           double k3_fraction, std::uint64_t seed)
    : name_(std::move(name)),
      k1_fraction_(k1_fraction),
      k2_fraction_(k2_fraction),
      k3_fraction_(k3_fraction),
      seed_(seed) {}

std::string KnowledgeCorruptionGenerator::generate(const GenerationContext& ctx) {
  if (ctx.golden_answer.empty()) {
    throw GenerationError("corruption generator '" + name_ + "' needs the golden answer");
  }
  double fraction = k2_fraction_;
  if (ctx.slot == "kps:K1") fraction = k1_fraction_;
  if (ctx.slot == "kps:K3") fraction = k3_fraction_;
  const std::uint64_t stream = mix_seed(seed_, name_ + "|" + ctx.question_id + "|" + ctx.slot);
  return corrupt_text(ctx.golden_answer, fraction, stream);
}

// ---------------------------------------------------------------------------
// Endpoint generator
// ---------------------------------------------------------------------------

EndpointGenerator::EndpointGenerator(Options options) : options_(std::move(options)) {
  if (options_.base_url.empty()) throw ConfigError("endpoint generator '" + options_.name + "' needs a base_url");
  if (options_.quality_rank < 1) throw ValidationError("generator quality_rank must be >= 1");
}

std::string EndpointGenerator::generate(const GenerationContext& ctx) {
  json body;
  body["model"] = options_.model;
  body["messages"] = json::array({json{{"role", "user"}, {"content", ctx.prompt}}});
  body["temperature"] = options_.temperature;

  httplib::Client client(options_.base_url);
  client.set_connection_timeout(options_.timeout_seconds);
  client.set_read_timeout(options_.timeout_seconds);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

  std::string last_error;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    if (attempt > 0) {
      // Bounded linear backoff; generous enough for rate limits at desk scale.
      std::this_thread::sleep_for(std::chrono::milliseconds(200 * attempt));
    }
    auto res = client.Post(options_.path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "endpoint unreachable: " + options_.base_url;
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "endpoint returned status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw GenerationError("generator '" + options_.name + "': endpoint returned status " +
                            std::to_string(res->status));
    }
    json parsed;
    try {
      parsed = json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw GenerationError("generator '" + options_.name + "': malformed endpoint response: " + std::string(e.what()));
    }
    std::string text;
    if (parsed.contains("choices") && parsed["choices"].is_array() && !parsed["choices"].empty()) {
      const auto& choice = parsed["choices"].front();
      if (choice.contains("message")) text = choice["message"].value("content", "");
      if (text.empty()) text = choice.value("text", "");
    } else if (parsed.contains("content")) {
      text = parsed.value("content", "");
    } else if (parsed.contains("text")) {
      text = parsed.value("text", "");
    }
    if (trim(text).empty()) {
      throw GenerationError("generator '" + options_.name + "': endpoint returned empty output");
    }
    return text;
  }
  throw GenerationError("generator '" + options_.name + "': " + last_error);
}

// ---------------------------------------------------------------------------
// Set construction
// ---------------------------------------------------------------------------

PreferenceSet build_sps(const QAPair& qa, std::span<AnswerGenerator* const> generators, const PromptTemplate& tmpl,
                        std::span<const std::string> k1_surfaces) {
  if (generators.empty()) throw ValidationError("build_sps needs at least one generator");
  std::set<std::string> names;
  std::set<int> qranks;
  for (const auto* g : generators) {
    if (!names.insert(g->name()).second) throw ValidationError("duplicate generator name '" + g->name() + "'");
    if (!qranks.insert(g->quality_rank()).second) {
      throw ValidationError("generators must have distinct quality ranks");
    }
  }

  std::vector<AnswerGenerator*> ordered(generators.begin(), generators.end());
  std::sort(ordered.begin(), ordered.end(),
            [](const AnswerGenerator* a, const AnswerGenerator* b) { return a->quality_rank() < b->quality_rank(); });

  // Every generator sees the same knowledge-augmented prompt used in
  // fine-tuning.
  GenerationContext ctx;
  ctx.prompt = render_prompt(tmpl, k1_surfaces, qa.question);
  ctx.question_id = qa.id;
  ctx.golden_answer = qa.golden_answer;
  ctx.slot = "sps";

  PreferenceSet set;
  set.question_id = qa.id;
  set.kind = PreferenceKind::Style;
  set.candidates.push_back(AnswerCandidate{qa.golden_answer, "golden", 1});
  int rank = 2;
  for (auto* g : ordered) {
    std::string text = g->generate(ctx);
    if (trim(text).empty()) {
      throw GenerationError("generator '" + g->name() + "' produced empty output for '" + qa.id + "'");
    }
    set.candidates.push_back(AnswerCandidate{std::move(text), g->name(), rank++});
  }
  set.validate();
  return set;
}

PreferenceSet build_kps(const QAPair& qa, AnswerGenerator& model_generator, const PromptTemplate& tmpl,
                        const KnowledgeGroups& groups) {
  if (groups.question_id != qa.id) {
    throw ValidationError("knowledge groups of '" + groups.question_id + "' do not belong to QA pair '" + qa.id + "'");
  }

  struct Slot {
    const char* tag;
    std::vector<std::string> surfaces;
  };
  // K3 may be empty on small KBs; the slot still exists and keeps its rank.
  const Slot slots[3] = {{"kps:K1", groups.k1_surfaces()}, {"kps:K2", {}}, {"kps:K3", groups.k3_surfaces()}};

  PreferenceSet set;
  set.question_id = qa.id;
  set.kind = PreferenceKind::Knowledge;
  set.candidates.push_back(AnswerCandidate{qa.golden_answer, "golden", 1});
  int rank = 2;
  for (const auto& slot : slots) {
    GenerationContext ctx;
    ctx.prompt = render_prompt(tmpl, slot.surfaces, qa.question);
    ctx.question_id = qa.id;
    ctx.golden_answer = qa.golden_answer;
    ctx.slot = slot.tag;
    std::string text = model_generator.generate(ctx);
    if (trim(text).empty()) {
      throw GenerationError("generator '" + model_generator.name() + "' produced empty output for '" + qa.id + "'");
    }
    set.candidates.push_back(AnswerCandidate{std::move(text), slot.tag, rank++});
  }
  set.validate();
  return set;
}

BuildAllResult build_all(std::span<const QAPair> dataset, std::span<const KnowledgeGroups> groups,
                         std::span<AnswerGenerator* const> sps_generators, AnswerGenerator& model_generator,
                         const PromptTemplate& tmpl) {
  std::map<std::string, const KnowledgeGroups*> by_question;
  for (const auto& g : groups) by_question[g.question_id] = &g;

  BuildAllResult result;
  for (const auto& qa : dataset) {
    const auto it = by_question.find(qa.id);
    if (it == by_question.end()) {
      result.summary.failed += 2;
      result.summary.failures.push_back(qa.id + " style+knowledge: no knowledge groups for question");
      continue;
    }
    const KnowledgeGroups& g = *it->second;
    const auto k1 = g.k1_surfaces();
    try {
      result.sets.push_back(build_sps(qa, sps_generators, tmpl, k1));
      ++result.summary.emitted;
    } catch (const Error& e) {
      ++result.summary.failed;
      result.summary.failures.push_back(qa.id + " style: " + e.what());
      std::cerr << "warning: dropped style set for '" << qa.id << "': " << e.what() << '\n';
    }
    try {
      result.sets.push_back(build_kps(qa, model_generator, tmpl, g));
      ++result.summary.emitted;
    } catch (const Error& e) {
      ++result.summary.failed;
      result.summary.failures.push_back(qa.id + " knowledge: " + e.what());
      std::cerr << "warning: dropped knowledge set for '" << qa.id << "': " << e.what() << '\n';
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

json preference_set_to_json(const PreferenceSet& set) {
  json candidates = json::array();
  for (const auto& c : set.candidates) {
    candidates.push_back(json{{"text", c.text}, {"source", c.source}, {"rank", c.rank}});
  }
  return json{{"question_id", set.question_id}, {"kind", to_string(set.kind)}, {"candidates", std::move(candidates)}};
}

PreferenceSet preference_set_from_json(const json& j) {
  PreferenceSet set;
  set.question_id = j.at("question_id").get<std::string>();
  set.kind = preference_kind_from_string(j.at("kind").get<std::string>());
  for (const auto& c : j.at("candidates")) {
    set.candidates.push_back(
        AnswerCandidate{c.at("text").get<std::string>(), c.at("source").get<std::string>(), c.at("rank").get<int>()});
  }
  set.validate();
  return set;
}

void save_preference_sets(const std::filesystem::path& path, const ArtifactHeader& header,
                          std::span<const PreferenceSet> sets) {
  std::vector<json> records;
  records.reserve(sets.size());
  for (const auto& s : sets) records.push_back(preference_set_to_json(s));
  write_jsonl_artifact(path, header, records);
}

std::vector<PreferenceSet> load_preference_sets(const std::filesystem::path& path,
                                                std::string_view expected_config_hash) {
  const auto file = read_jsonl_artifact(path, "preference_sets", expected_config_hash);
  std::vector<PreferenceSet> sets;
  sets.reserve(file.records.size());
  for (const auto& r : file.records) sets.push_back(preference_set_from_json(r));
  return sets;
}

}  // namespace kpa
