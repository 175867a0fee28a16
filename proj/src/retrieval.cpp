#include "kpa/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#define CPPHTTPLIB_NO_EXCEPTIONS 0
#include <httplib.h>

#include "kpa/error.hpp"
#include "kpa/text.hpp"

namespace kpa {

using nlohmann::json;

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dimension() != v.dimension()) {
    throw ValidationError("cosine: dimension mismatch (" + std::to_string(u.dimension()) + " vs " +
                          std::to_string(v.dimension()) + ")");
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    dot += u.values[i] * v.values[i];
    nu += u.values[i] * u.values[i];
    nv += v.values[i] * v.values[i];
  }
  if (nu == 0.0 || nv == 0.0) throw ValidationError("cosine: zero vector (degenerate encoding)");
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

std::vector<EmbeddingVector> TextEncoder::encode_batch(std::span<const std::string> texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(encode(t));
  return out;
}

// ---------------------------------------------------------------------------
// HashedTfIdfEncoder
// ---------------------------------------------------------------------------

HashedTfIdfEncoder::HashedTfIdfEncoder(std::size_t dimension, std::uint64_t hash_seed)
    : dimension_(dimension), hash_seed_(hash_seed) {
  if (dimension_ == 0) throw ValidationError("encoder dimension must be positive");
}

void HashedTfIdfEncoder::fit(std::span<const KnowledgeItem> kb) {
  std::vector<std::string> corpus;
  corpus.reserve(kb.size());
  for (const auto& item : kb) corpus.push_back(item.surface);
  fit(std::span<const std::string>(corpus));
}

void HashedTfIdfEncoder::fit(std::span<const std::string> corpus) {
  corpus_size_ = corpus.size();
  document_frequency_.clear();
  for (const auto& doc : corpus) {
    auto tokens = tokenize(doc, TokenizerMode::Whitespace);
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    for (auto& t : tokens) ++document_frequency_[t];
  }
}

double HashedTfIdfEncoder::idf(const std::string& token) const {
  if (corpus_size_ == 0) return 1.0;
  const auto it = document_frequency_.find(token);
  const double df = it == document_frequency_.end() ? 0.0 : static_cast<double>(it->second);
  return std::log((1.0 + static_cast<double>(corpus_size_)) / (1.0 + df)) + 1.0;
}

EmbeddingVector HashedTfIdfEncoder::encode(std::string_view text) const {
  EmbeddingVector vec;
  vec.values.assign(dimension_, 0.0);
  std::unordered_map<std::string, std::size_t> tf;
  for (auto& t : tokenize(text, TokenizerMode::Whitespace)) ++tf[t];
  for (const auto& [token, count] : tf) {
    const std::size_t bucket = fnv1a64(token, hash_seed_) % dimension_;
    // Sign hash decorrelates colliding tokens.
    const double sign = (fnv1a64(token, hash_seed_ ^ 0x5851f42d4c957f2dull) & 1) ? 1.0 : -1.0;
    vec.values[bucket] += sign * static_cast<double>(count) * idf(token);
  }
  double norm = 0.0;
  for (double x : vec.values) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : vec.values) x /= norm;
  }
  return vec;
}

// ---------------------------------------------------------------------------
// RemoteEncoder
// ---------------------------------------------------------------------------

RemoteEncoder::RemoteEncoder(Options options) : options_(std::move(options)) {
  if (options_.base_url.empty()) throw ConfigError("remote encoder needs a base_url");
  dimension_ = options_.dimension;
}

std::size_t RemoteEncoder::dimension() const {
  if (dimension_ == 0) throw ValidationError("remote encoder dimension unknown before the first call");
  return dimension_;
}

EmbeddingVector RemoteEncoder::encode(std::string_view text) const {
  std::vector<std::string> one{std::string(text)};
  return encode_batch(one).front();
}

std::vector<EmbeddingVector> RemoteEncoder::encode_batch(std::span<const std::string> texts) const {
  httplib::Client client(options_.base_url);
  client.set_connection_timeout(options_.timeout_seconds);
  client.set_read_timeout(options_.timeout_seconds);
  httplib::Headers headers;
  if (!options_.auth_token.empty()) headers.emplace("Authorization", "Bearer " + options_.auth_token);

  json body;
  body["texts"] = texts;
  auto res = client.Post(options_.path, headers, body.dump(), "application/json");
  if (!res) throw Error("embedding endpoint unreachable: " + options_.base_url);
  if (res->status != 200) {
    throw Error("embedding endpoint returned status " + std::to_string(res->status));
  }

  json parsed;
  try {
    parsed = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("embedding endpoint returned malformed JSON: ") + e.what());
  }
  if (!parsed.contains("vectors") || !parsed["vectors"].is_array()) {
    throw ParseError("embedding endpoint response has no 'vectors' array");
  }
  const auto& vectors = parsed["vectors"];
  if (vectors.size() != texts.size()) {
    throw ValidationError("embedding endpoint returned " + std::to_string(vectors.size()) + " vectors for " +
                          std::to_string(texts.size()) + " texts");
  }

  std::vector<EmbeddingVector> out;
  out.reserve(vectors.size());
  for (const auto& v : vectors) {
    EmbeddingVector e;
    e.values = v.get<std::vector<double>>();
    for (double x : e.values) {
      if (!std::isfinite(x)) throw ValidationError("embedding endpoint returned a non-finite value");
    }
    if (dimension_ == 0) dimension_ = e.dimension();
    if (e.dimension() != dimension_) {
      throw ValidationError("embedding endpoint dimension changed from " + std::to_string(dimension_) + " to " +
                            std::to_string(e.dimension()));
    }
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// RetrievalIndex
// ---------------------------------------------------------------------------

RetrievalIndex RetrievalIndex::build(const TextEncoder& encoder, std::span<const KnowledgeItem> kb) {
  if (kb.empty()) throw ValidationError("cannot build an index over an empty knowledge base");
  RetrievalIndex index;
  index.items_.assign(kb.begin(), kb.end());
  std::vector<std::string> surfaces;
  surfaces.reserve(kb.size());
  for (const auto& item : kb) surfaces.push_back(item.surface);
  index.vectors_ = encoder.encode_batch(surfaces);
  return index;
}

namespace {

json knowledge_item_to_json(const KnowledgeItem& item) {
  json j{{"id", item.id}};
  if (item.kind == KnowledgeKind::Triple) {
    j["head"] = item.head;
    j["relation"] = item.relation;
    j["tail"] = item.tail;
  } else {
    j["body"] = item.body;
  }
  return j;
}

KnowledgeItem knowledge_item_from_json(const json& j) {
  if (j.contains("head")) {
    return KnowledgeItem::triple(j.at("id").get<std::string>(), j.at("head").get<std::string>(),
                                 j.at("relation").get<std::string>(), j.at("tail").get<std::string>());
  }
  return KnowledgeItem::document(j.at("id").get<std::string>(), j.at("body").get<std::string>());
}

json scored_list_to_json(const std::vector<ScoredKnowledge>& list) {
  json arr = json::array();
  for (const auto& sk : list) {
    arr.push_back(json{{"item", knowledge_item_to_json(sk.item)}, {"similarity", sk.similarity}});
  }
  return arr;
}

std::vector<ScoredKnowledge> scored_list_from_json(const json& arr) {
  std::vector<ScoredKnowledge> list;
  for (const auto& e : arr) {
    list.push_back(ScoredKnowledge{knowledge_item_from_json(e.at("item")), e.at("similarity").get<double>()});
  }
  return list;
}

}  // namespace

void RetrievalIndex::save(const std::filesystem::path& path, std::string_view config_hash) const {
  json j;
  j["artifact"] = "retrieval_index";
  j["version"] = 1;
  j["config_hash"] = std::string(config_hash);
  j["dimension"] = vectors_.empty() ? 0 : vectors_.front().dimension();
  json items = json::array();
  json vectors = json::array();
  for (std::size_t i = 0; i < items_.size(); ++i) {
    items.push_back(knowledge_item_to_json(items_[i]));
    vectors.push_back(vectors_[i].values);
  }
  j["items"] = std::move(items);
  j["vectors"] = std::move(vectors);
  write_text_file(path, j.dump());
}

RetrievalIndex RetrievalIndex::load(const std::filesystem::path& path, std::string_view expected_config_hash) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": malformed index file: " + e.what());
  }
  if (j.value("artifact", "") != "retrieval_index") {
    throw ValidationError(path.string() + ": not a retrieval index file");
  }
  if (!expected_config_hash.empty() && j.value("config_hash", "") != expected_config_hash) {
    throw ValidationError(path.string() + ": config hash mismatch");
  }
  RetrievalIndex index;
  for (const auto& item : j.at("items")) index.items_.push_back(knowledge_item_from_json(item));
  for (const auto& vec : j.at("vectors")) {
    index.vectors_.push_back(EmbeddingVector{vec.get<std::vector<double>>()});
  }
  if (index.items_.size() != index.vectors_.size()) {
    throw ValidationError(path.string() + ": item/vector count mismatch");
  }
  if (index.items_.empty()) throw ValidationError(path.string() + ": empty index");
  return index;
}

// ---------------------------------------------------------------------------
// Group retrieval
// ---------------------------------------------------------------------------

std::vector<std::string> KnowledgeGroups::k1_surfaces() const {
  std::vector<std::string> out;
  out.reserve(k1.size());
  for (const auto& sk : k1) out.push_back(sk.item.surface);
  return out;
}

std::vector<std::string> KnowledgeGroups::k3_surfaces() const {
  std::vector<std::string> out;
  out.reserve(k3.size());
  for (const auto& sk : k3) out.push_back(sk.item.surface);
  return out;
}

KnowledgeGroups retrieve_groups(const RetrievalIndex& index, const TextEncoder& encoder,
                                std::string_view question_id, std::string_view question, int k) {
  if (k < 1) throw ValidationError("retrieval depth k must be >= 1");
  const EmbeddingVector q = encoder.encode(question);

  const std::size_t n = index.size();
  std::vector<std::pair<double, std::size_t>> scored(n);
  for (std::size_t i = 0; i < n; ++i) {
    scored[i] = {cosine_similarity(q, index.vectors()[i]), i};
  }

  // Only the top 2k ranks matter; ties break by item id ascending so the
  // ordering is deterministic.
  const auto better = [&index](const std::pair<double, std::size_t>& a, const std::pair<double, std::size_t>& b) {
    if (a.first != b.first) return a.first > b.first;
    return index.items()[a.second].id < index.items()[b.second].id;
  };
  const std::size_t want = std::min(n, 2 * static_cast<std::size_t>(k));
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(want), scored.end(), better);

  KnowledgeGroups groups;
  groups.question_id = std::string(question_id);
  groups.k = k;
  const std::size_t k1_count = std::min(static_cast<std::size_t>(k), n);
  for (std::size_t r = 0; r < k1_count; ++r) {
    groups.k1.push_back(ScoredKnowledge{index.items()[scored[r].second], scored[r].first});
  }
  for (std::size_t r = k1_count; r < want; ++r) {
    groups.k3.push_back(ScoredKnowledge{index.items()[scored[r].second], scored[r].first});
  }
  return groups;
}

json knowledge_groups_to_json(const KnowledgeGroups& groups) {
  return json{{"question_id", groups.question_id},
              {"k", groups.k},
              {"k1", scored_list_to_json(groups.k1)},
              {"k2", scored_list_to_json(groups.k2)},
              {"k3", scored_list_to_json(groups.k3)}};
}

KnowledgeGroups knowledge_groups_from_json(const json& j) {
  KnowledgeGroups groups;
  groups.question_id = j.at("question_id").get<std::string>();
  groups.k = j.at("k").get<int>();
  groups.k1 = scored_list_from_json(j.at("k1"));
  groups.k2 = scored_list_from_json(j.at("k2"));
  groups.k3 = scored_list_from_json(j.at("k3"));
  if (!groups.k2.empty()) throw ValidationError("knowledge group K2 must be empty by construction");
  return groups;
}

void save_knowledge_groups(const std::filesystem::path& path, const ArtifactHeader& header,
                           std::span<const KnowledgeGroups> groups) {
  std::vector<json> records;
  records.reserve(groups.size());
  for (const auto& g : groups) records.push_back(knowledge_groups_to_json(g));
  write_jsonl_artifact(path, header, records);
}

std::vector<KnowledgeGroups> load_knowledge_groups(const std::filesystem::path& path,
                                                   std::string_view expected_config_hash) {
  const auto file = read_jsonl_artifact(path, "knowledge_groups", expected_config_hash);
  std::vector<KnowledgeGroups> groups;
  groups.reserve(file.records.size());
  for (const auto& r : file.records) groups.push_back(knowledge_groups_from_json(r));
  return groups;
}

}  // namespace kpa
