#include "kpa/synthetic.hpp"

#include <random>
#include <set>
#include <string>

namespace kpa {

namespace {

const char* kEntities[] = {"alpha", "beta", "gamma", "delta", "omega", "sigma", "kappa", "zeta"};
const char* kProperties[] = {"timeout", "quota", "cache", "route", "token", "backup", "alarm", "port", "address",
                             "limit"};
const char* kActions[] = {"configure", "reset", "enable", "disable", "check", "restore"};
const char* kValues[] = {"ten", "fifty", "hundred", "auto", "manual", "default"};

template <typename T, std::size_t N>
const T& pick(std::mt19937_64& rng, const T (&arr)[N]) {
  return arr[rng() % N];
}

}  // namespace

ToyCorpus make_toy_corpus(std::size_t n_pairs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ToyCorpus corpus;

  std::set<std::pair<std::string, std::string>> used_pairs;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const std::string entity = pick(rng, kEntities);
    const std::string prop = pick(rng, kProperties);
    const std::string action = pick(rng, kActions);
    const std::string value = pick(rng, kValues);
    used_pairs.emplace(entity, prop);

    QAPair qa;
    qa.id = "q" + std::to_string(i + 1);
    switch (rng() % 3) {
      case 0:
        qa.question = "how to " + action + " the " + prop + " for service " + entity;
        break;
      case 1:
        qa.question = "what is the default " + prop + " of service " + entity;
        break;
      default:
        qa.question = "steps to " + action + " the " + prop + " on service " + entity;
        break;
    }
    switch (rng() % 3) {
      case 0:
        qa.golden_answer =
            "open the " + entity + " panel then " + action + " the " + prop + " option and apply the changes";
        break;
      case 1:
        qa.golden_answer =
            "the default " + prop + " of " + entity + " is " + value + " and you can " + action + " it in the panel";
        break;
      default:
        qa.golden_answer = "first check the " + entity + " panel and then " + action + " the " + prop + " option";
        break;
    }
    corpus.qa.push_back(std::move(qa));
  }

  // KB: every service/property link, plus a default-value triple for the
  // combinations the dataset actually asks about.
  int kb_id = 0;
  for (const char* entity : kEntities) {
    for (const char* prop : kProperties) {
      corpus.kb.push_back(KnowledgeItem::triple("k" + std::to_string(++kb_id), std::string(entity) + " service",
                                                "has property", prop));
    }
  }
  std::mt19937_64 value_rng(seed ^ 0xabcdef12345ull);
  for (const auto& [entity, prop] : used_pairs) {
    corpus.kb.push_back(KnowledgeItem::triple("k" + std::to_string(++kb_id), prop + " of " + entity, "default value",
                                              pick(value_rng, kValues)));
  }
  return corpus;
}

}  // namespace kpa
