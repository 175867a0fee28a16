#include "kpa/config.hpp"

#include <set>

#include "kpa/error.hpp"
#include "kpa/jsonl.hpp"
#include "kpa/text.hpp"

namespace kpa {

using nlohmann::json;

namespace {

json encoder_to_json(const EncoderSpec& e) {
  return json{{"type", e.type},
              {"dimension", e.dimension},
              {"endpoint_url", e.endpoint_url},
              {"endpoint_path", e.endpoint_path},
              {"auth_token_env", e.auth_token_env}};
}

EncoderSpec encoder_from_json(const json& j) {
  EncoderSpec e;
  e.type = j.value("type", e.type);
  e.dimension = j.value("dimension", e.dimension);
  e.endpoint_url = j.value("endpoint_url", e.endpoint_url);
  e.endpoint_path = j.value("endpoint_path", e.endpoint_path);
  e.auth_token_env = j.value("auth_token_env", e.auth_token_env);
  if (e.type != "hashed_tfidf" && e.type != "remote") throw ConfigError("unknown encoder type: " + e.type);
  return e;
}

json generator_to_json(const GeneratorSpec& g) {
  return json{{"type", g.type},
              {"name", g.name},
              {"quality_rank", g.quality_rank},
              {"corruption", g.corruption},
              {"corruption_k1", g.corruption_k1},
              {"corruption_k2", g.corruption_k2},
              {"corruption_k3", g.corruption_k3},
              {"base_url", g.base_url},
              {"endpoint_path", g.endpoint_path},
              {"model", g.model},
              {"temperature", g.temperature},
              {"api_key_env", g.api_key_env}};
}

GeneratorSpec generator_from_json(const json& j) {
  GeneratorSpec g;
  g.type = j.value("type", g.type);
  g.name = j.value("name", g.name);
  g.quality_rank = j.value("quality_rank", g.quality_rank);
  g.corruption = j.value("corruption", g.corruption);
  g.corruption_k1 = j.value("corruption_k1", g.corruption_k1);
  g.corruption_k2 = j.value("corruption_k2", g.corruption_k2);
  g.corruption_k3 = j.value("corruption_k3", g.corruption_k3);
  g.base_url = j.value("base_url", g.base_url);
  g.endpoint_path = j.value("endpoint_path", g.endpoint_path);
  g.model = j.value("model", g.model);
  g.temperature = j.value("temperature", g.temperature);
  g.api_key_env = j.value("api_key_env", g.api_key_env);
  if (g.type != "corruption" && g.type != "knowledge_corruption" && g.type != "endpoint") {
    throw ConfigError("unknown generator type: " + g.type);
  }
  if (g.name.empty()) throw ConfigError("generator spec needs a name");
  return g;
}

}  // namespace

std::vector<GeneratorSpec> default_sps_generators() {
  GeneratorSpec strong, mid, weak;
  strong.name = "gen-strong";
  strong.quality_rank = 1;
  strong.corruption = 0.1;
  mid.name = "gen-mid";
  mid.quality_rank = 2;
  mid.corruption = 0.3;
  weak.name = "gen-weak";
  weak.quality_rank = 3;
  weak.corruption = 0.5;
  return {strong, mid, weak};
}

GeneratorSpec default_model_generator() {
  GeneratorSpec g;
  g.type = "knowledge_corruption";
  g.name = "self";
  return g;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": malformed config: " + e.what());
  }
  return from_json(j);
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  c.seed = j.value("seed", c.seed);
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    c.paths.qa = p.value("qa", c.paths.qa);
    c.paths.kb = p.value("kb", c.paths.kb);
    c.paths.out_dir = p.value("out_dir", c.paths.out_dir);
  }
  if (j.contains("prompt")) {
    const auto& p = j.at("prompt");
    c.prompt.template_text = p.value("template", c.prompt.template_text);
    c.prompt.knowledge_separator = p.value("separator", c.prompt.knowledge_separator);
  }
  if (j.contains("retrieval")) {
    const auto& r = j.at("retrieval");
    c.retrieval.k = r.value("k", c.retrieval.k);
    if (r.contains("encoder")) c.retrieval.encoder = encoder_from_json(r.at("encoder"));
    c.retrieval.save_index = r.value("save_index", c.retrieval.save_index);
  }
  c.prefset.generators = default_sps_generators();
  c.prefset.model_generator = default_model_generator();
  if (j.contains("prefset")) {
    const auto& p = j.at("prefset");
    if (p.contains("generators")) {
      c.prefset.generators.clear();
      for (const auto& g : p.at("generators")) c.prefset.generators.push_back(generator_from_json(g));
    }
    if (p.contains("model_generator")) c.prefset.model_generator = generator_from_json(p.at("model_generator"));
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    c.train.lambda = t.value("lambda", c.train.lambda);
    c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
    c.train.epochs = t.value("epochs", c.train.epochs);
    c.train.grad_accumulation = t.value("grad_accumulation", c.train.grad_accumulation);
    c.train.holdout_fraction = t.value("holdout_fraction", c.train.holdout_fraction);
    c.train.optimizer.weight_decay = t.value("weight_decay", c.train.optimizer.weight_decay);
    c.train.optimizer.beta1 = t.value("beta1", c.train.optimizer.beta1);
    c.train.optimizer.beta2 = t.value("beta2", c.train.optimizer.beta2);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    c.model.embed_dim = m.value("embed_dim", c.model.embed_dim);
    c.model.hidden_dim = m.value("hidden_dim", c.model.hidden_dim);
    c.model.max_vocab = m.value("max_vocab", c.model.max_vocab);
    c.model.init_scale = m.value("init_scale", c.model.init_scale);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    c.eval.tokenizer_mode = e.value("tokenizer_mode", c.eval.tokenizer_mode);
    c.eval.bleu_smoothing = e.value("bleu_smoothing", c.eval.bleu_smoothing);
    c.eval.rouge_recall = e.value("rouge_recall", c.eval.rouge_recall);
    c.eval.meteor_stem = e.value("meteor_stem", c.eval.meteor_stem);
    c.eval.use_knowledge = e.value("use_knowledge", c.eval.use_knowledge);
    c.eval.generations_path = e.value("generations", c.eval.generations_path);
    c.eval.generate_max_tokens = e.value("generate_max_tokens", c.eval.generate_max_tokens);
  }
  c.validate();
  return c;
}

json RunConfig::to_json() const {
  json generators = json::array();
  for (const auto& g : prefset.generators) generators.push_back(generator_to_json(g));
  return json{
      {"seed", seed},
      {"paths", json{{"qa", paths.qa}, {"kb", paths.kb}, {"out_dir", paths.out_dir}}},
      {"prompt", json{{"template", prompt.template_text}, {"separator", prompt.knowledge_separator}}},
      {"retrieval", json{{"k", retrieval.k},
                         {"encoder", encoder_to_json(retrieval.encoder)},
                         {"save_index", retrieval.save_index}}},
      {"prefset", json{{"generators", std::move(generators)},
                       {"model_generator", generator_to_json(prefset.model_generator)}}},
      {"train", json{{"lambda", train.lambda},
                     {"learning_rate", train.learning_rate},
                     {"epochs", train.epochs},
                     {"grad_accumulation", train.grad_accumulation},
                     {"holdout_fraction", train.holdout_fraction},
                     {"weight_decay", train.optimizer.weight_decay},
                     {"beta1", train.optimizer.beta1},
                     {"beta2", train.optimizer.beta2}}},
      {"model", json{{"embed_dim", model.embed_dim},
                     {"hidden_dim", model.hidden_dim},
                     {"max_vocab", model.max_vocab},
                     {"init_scale", model.init_scale}}},
      {"eval", json{{"tokenizer_mode", eval.tokenizer_mode},
                    {"bleu_smoothing", eval.bleu_smoothing},
                    {"rouge_recall", eval.rouge_recall},
                    {"meteor_stem", eval.meteor_stem},
                    {"use_knowledge", eval.use_knowledge},
                    {"generations", eval.generations_path},
                    {"generate_max_tokens", eval.generate_max_tokens}}}};
}

void RunConfig::validate() const {
  prompt.validate();
  effective_train_config().validate();
  tokenizer_mode_from_string(eval.tokenizer_mode);  // throws on bad names
  if (retrieval.k < 1) throw ConfigError("retrieval.k must be >= 1");
  if (prefset.generators.empty()) throw ConfigError("prefset needs at least one generator");
  std::set<std::string> names;
  std::set<int> qranks;
  for (const auto& g : prefset.generators) {
    if (!names.insert(g.name).second) throw ConfigError("duplicate generator name '" + g.name + "'");
    if (!qranks.insert(g.quality_rank).second) throw ConfigError("generator quality ranks must be distinct");
  }
}

std::filesystem::path RunConfig::out_path(std::string_view filename) const {
  return std::filesystem::path(paths.out_dir) / filename;
}

TrainConfig RunConfig::effective_train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  t.k = retrieval.k;
  return t;
}

ReferenceModelConfig RunConfig::effective_model_config() const {
  ReferenceModelConfig m = model;
  m.seed = mix_seed(seed, "reference-model-init");
  return m;
}

MetricConfig RunConfig::metric_config() const {
  MetricConfig m;
  m.tokenizer = tokenizer_mode_from_string(eval.tokenizer_mode);
  m.bleu_add_one_smoothing = eval.bleu_smoothing;
  m.rouge_recall_only = eval.rouge_recall;
  m.meteor_stem = eval.meteor_stem;
  return m;
}

std::string stage_config_hash(const RunConfig& config, Stage stage) {
  const json all = config.to_json();
  json relevant;
  relevant["seed"] = all.at("seed");
  relevant["retrieval"] = all.at("retrieval");
  if (stage >= Stage::Prefsets) {
    relevant["prompt"] = all.at("prompt");
    relevant["prefset"] = all.at("prefset");
  }
  if (stage >= Stage::Train) {
    relevant["train"] = all.at("train");
    relevant["model"] = all.at("model");
  }
  if (stage >= Stage::Eval) relevant["eval"] = all.at("eval");
  return to_hex(fnv1a64(relevant.dump()));
}

}  // namespace kpa
