#pragma once

#include <cstdint>
#include <vector>

#include "kpa/data_io.hpp"

namespace kpa {

struct ToyCorpus {
  std::vector<QAPair> qa;
  std::vector<KnowledgeItem> kb;
};

// Deterministic synthetic QA corpus over a small closed vocabulary
// (~60 distinct words): templated service-support questions, templated
// golden answers, and a triple KB linking services to their properties.
// Used by the desk-scale training runs and the end-to-end fixtures.
ToyCorpus make_toy_corpus(std::size_t n_pairs = 200, std::uint64_t seed = 7);

}  // namespace kpa
