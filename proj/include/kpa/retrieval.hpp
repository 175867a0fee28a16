#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kpa/data_io.hpp"
#include "kpa/jsonl.hpp"

namespace kpa {

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dimension() const { return values.size(); }
};

// dot(u, v) / (|u| |v|). Errors on dimension mismatch or a zero vector
// (degenerate encoding).
double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v);

// Sentence-encoder contract: deterministic, fixed output dimension.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::size_t dimension() const = 0;
  virtual EmbeddingVector encode(std::string_view text) const = 0;
  virtual std::vector<EmbeddingVector> encode_batch(std::span<const std::string> texts) const;
};

// Default encoder: hashed bag-of-words with TF-IDF weights over the KB
// corpus, L2-normalized, fixed hash seed. Deterministic by construction,
// which the retrieval oracle tests rely on.
class HashedTfIdfEncoder final : public TextEncoder {
 public:
  static constexpr std::size_t kDefaultDimension = 256;
  static constexpr std::uint64_t kDefaultHashSeed = 0x9e3779b97f4a7c15ull;

  explicit HashedTfIdfEncoder(std::size_t dimension = kDefaultDimension,
                              std::uint64_t hash_seed = kDefaultHashSeed);

  // Collects document frequencies. Without a fit the encoder degrades to
  // plain hashed term frequencies (idf = 1).
  void fit(std::span<const KnowledgeItem> kb);
  void fit(std::span<const std::string> corpus);

  std::size_t dimension() const override { return dimension_; }
  EmbeddingVector encode(std::string_view text) const override;

 private:
  double idf(const std::string& token) const;

  std::size_t dimension_;
  std::uint64_t hash_seed_;
  std::size_t corpus_size_ = 0;
  std::unordered_map<std::string, std::size_t> document_frequency_;
};

// Encoder backed by a remote embedding endpoint speaking
//   POST {texts: [...]}  ->  {vectors: [[...], ...]}
// with an optional bearer token. The expected dimension may be pinned in
// advance or inferred from the first response.
class RemoteEncoder final : public TextEncoder {
 public:
  struct Options {
    std::string base_url;          // e.g. http://127.0.0.1:8089
    std::string path = "/embed";
    std::string auth_token;        // sent as "Authorization: Bearer <token>" when non-empty
    std::size_t dimension = 0;     // 0 = infer from the first response
    int timeout_seconds = 30;
  };

  explicit RemoteEncoder(Options options);

  std::size_t dimension() const override;
  EmbeddingVector encode(std::string_view text) const override;
  std::vector<EmbeddingVector> encode_batch(std::span<const std::string> texts) const override;

 private:
  Options options_;
  mutable std::size_t dimension_ = 0;
};

struct ScoredKnowledge {
  KnowledgeItem item;
  double similarity = 0.0;
};

// The three retrieval groups of one question: K1 = similarity ranks 1..k,
// K2 = empty by construction, K3 = ranks k+1..2k (truncated on small KBs).
struct KnowledgeGroups {
  std::string question_id;
  int k = 0;
  std::vector<ScoredKnowledge> k1;
  std::vector<ScoredKnowledge> k2;  // always empty; kept so the file schema is explicit
  std::vector<ScoredKnowledge> k3;

  std::vector<std::string> k1_surfaces() const;
  std::vector<std::string> k3_surfaces() const;
};

// Immutable KB index: one embedding per item, built once.
class RetrievalIndex {
 public:
  static RetrievalIndex build(const TextEncoder& encoder, std::span<const KnowledgeItem> kb);

  const std::vector<KnowledgeItem>& items() const { return items_; }
  const std::vector<EmbeddingVector>& vectors() const { return vectors_; }
  std::size_t size() const { return items_.size(); }

  void save(const std::filesystem::path& path, std::string_view config_hash) const;
  static RetrievalIndex load(const std::filesystem::path& path, std::string_view expected_config_hash = {});

 private:
  RetrievalIndex() = default;

  std::vector<KnowledgeItem> items_;
  std::vector<EmbeddingVector> vectors_;
};

// Ranks every KB item by (similarity desc, id asc) and slices ranks 1..k
// into K1 and k+1..2k into K3.
KnowledgeGroups retrieve_groups(const RetrievalIndex& index, const TextEncoder& encoder,
                                std::string_view question_id, std::string_view question, int k);

nlohmann::json knowledge_groups_to_json(const KnowledgeGroups& groups);
KnowledgeGroups knowledge_groups_from_json(const nlohmann::json& j);

void save_knowledge_groups(const std::filesystem::path& path, const ArtifactHeader& header,
                           std::span<const KnowledgeGroups> groups);
std::vector<KnowledgeGroups> load_knowledge_groups(const std::filesystem::path& path,
                                                   std::string_view expected_config_hash = {});

}  // namespace kpa
