#include "kpa/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "kpa/error.hpp"
#include "kpa/jsonl.hpp"
#include "kpa/reference_model.hpp"
#include "kpa/retrieval.hpp"
#include "kpa/synthetic.hpp"
#include "kpa/text.hpp"

namespace kpa {

using nlohmann::json;

namespace {

std::string env_or_empty(const std::string& var) {
  if (var.empty()) return {};
  const char* value = std::getenv(var.c_str());
  return value == nullptr ? std::string{} : std::string(value);
}

std::unique_ptr<TextEncoder> make_encoder(const RunConfig& config, std::span<const KnowledgeItem> kb) {
  const EncoderSpec& spec = config.retrieval.encoder;
  if (spec.type == "hashed_tfidf") {
    auto encoder = std::make_unique<HashedTfIdfEncoder>(spec.dimension);
    encoder->fit(kb);
    return encoder;
  }
  RemoteEncoder::Options options;
  options.base_url = spec.endpoint_url;
  options.path = spec.endpoint_path;
  options.dimension = spec.dimension;
  options.auth_token = env_or_empty(spec.auth_token_env);
  return std::make_unique<RemoteEncoder>(options);
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("config is missing the ") + what + " path");
  if (!std::filesystem::exists(path)) {
    throw ConfigError(std::string(what) + " file does not exist: " + path);
  }
}

std::vector<std::string> list_checkpoints(const RunConfig& config) {
  std::vector<std::pair<int, std::string>> found;
  const std::filesystem::path dir(config.paths.out_dir);
  if (!std::filesystem::exists(dir)) return {};
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("checkpoint_epoch_", 0) == 0 && entry.path().extension() == ".json") {
      const std::string digits = name.substr(17, name.size() - 17 - 5);
      try {
        found.emplace_back(std::stoi(digits), entry.path().string());
      } catch (...) {
        continue;
      }
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<std::string> paths;
  paths.reserve(found.size());
  for (auto& [epoch, path] : found) paths.push_back(std::move(path));
  return paths;
}

}  // namespace

std::unique_ptr<AnswerGenerator> make_generator(const GeneratorSpec& spec, std::uint64_t seed) {
  if (spec.type == "corruption") {
    return std::make_unique<CorruptionGenerator>(spec.name, spec.quality_rank, spec.corruption,
                                                 mix_seed(seed, "generator|" + spec.name));
  }
  if (spec.type == "knowledge_corruption") {
    return std::make_unique<KnowledgeCorruptionGenerator>(spec.name, spec.corruption_k1, spec.corruption_k2,
                                                          spec.corruption_k3, mix_seed(seed, "generator|" + spec.name));
  }
  EndpointGenerator::Options options;
  options.name = spec.name;
  options.quality_rank = spec.quality_rank;
  options.base_url = spec.base_url;
  options.path = spec.endpoint_path;
  options.model = spec.model;
  options.temperature = spec.temperature;
  options.api_key = env_or_empty(spec.api_key_env);
  return std::make_unique<EndpointGenerator>(options);
}

RetrieveResult cmd_retrieve(const RunConfig& config) {
  require_file(config.paths.qa, "QA dataset");
  require_file(config.paths.kb, "knowledge base");
  const auto dataset = load_qa_dataset(config.paths.qa);
  const auto kb = load_kb(config.paths.kb);

  const auto encoder = make_encoder(config, kb);
  const auto index = RetrievalIndex::build(*encoder, kb);

  std::vector<KnowledgeGroups> groups;
  groups.reserve(dataset.size());
  for (const auto& qa : dataset) {
    groups.push_back(retrieve_groups(index, *encoder, qa.id, qa.question, config.retrieval.k));
  }

  const std::string hash = stage_config_hash(config, Stage::Retrieve);
  RetrieveResult result;
  result.questions = groups.size();
  result.groups_path = config.out_path("knowledge_groups.jsonl").string();
  save_knowledge_groups(result.groups_path, ArtifactHeader{"knowledge_groups", 1, hash, config.seed}, groups);
  if (config.retrieval.save_index) index.save(config.out_path("retrieval_index.json"), hash);
  return result;
}

PrefsetsResult cmd_build_prefsets(const RunConfig& config) {
  require_file(config.paths.qa, "QA dataset");
  const auto dataset = load_qa_dataset(config.paths.qa);
  const auto groups = load_knowledge_groups(config.out_path("knowledge_groups.jsonl"),
                                            stage_config_hash(config, Stage::Retrieve));

  std::vector<std::unique_ptr<AnswerGenerator>> owned;
  std::vector<AnswerGenerator*> generators;
  for (const auto& spec : config.prefset.generators) {
    owned.push_back(make_generator(spec, config.seed));
    generators.push_back(owned.back().get());
  }
  const auto model_generator = make_generator(config.prefset.model_generator, config.seed);

  auto built = build_all(dataset, groups, generators, *model_generator, config.prompt);

  PrefsetsResult result;
  result.summary = std::move(built.summary);
  result.sets_path = config.out_path("preference_sets.jsonl").string();
  save_preference_sets(result.sets_path,
                       ArtifactHeader{"preference_sets", 1, stage_config_hash(config, Stage::Prefsets), config.seed},
                       built.sets);
  return result;
}

TrainResult cmd_train(const RunConfig& config, bool resume) {
  require_file(config.paths.qa, "QA dataset");
  require_file(config.paths.kb, "knowledge base");
  const auto dataset = load_qa_dataset(config.paths.qa);
  const auto kb = load_kb(config.paths.kb);
  const auto groups = load_knowledge_groups(config.out_path("knowledge_groups.jsonl"),
                                            stage_config_hash(config, Stage::Retrieve));
  const auto sets = load_preference_sets(config.out_path("preference_sets.jsonl"),
                                         stage_config_hash(config, Stage::Prefsets));

  const std::string train_hash = stage_config_hash(config, Stage::Train);
  const TrainConfig train_config = config.effective_train_config();

  int start_epoch = 0;
  std::optional<ReferenceModel> model;
  if (resume) {
    const auto checkpoints = list_checkpoints(config);
    if (!checkpoints.empty()) {
      auto loaded = ReferenceModel::load_checkpoint(checkpoints.back(), train_hash);
      start_epoch = loaded.epoch;
      model.emplace(std::move(loaded.model));
      std::cerr << "resuming from " << checkpoints.back() << " (epoch " << start_epoch << ")\n";
    }
  }
  if (!model.has_value()) {
    model.emplace(ReferenceModel::fit(dataset, kb, config.prompt, config.effective_model_config()));
  }

  std::filesystem::create_directories(config.paths.out_dir);
  std::ofstream log_stream;
  const auto log_path = config.out_path("train_log.jsonl");
  if (start_epoch == 0) {
    log_stream.open(log_path, std::ios::trunc);
    log_stream << ArtifactHeader{"train_log", 1, train_hash, config.seed}.to_json().dump() << '\n';
  } else {
    log_stream.open(log_path, std::ios::app);
  }

  TrainResult result;
  TrainSinks sinks;
  sinks.checkpoint_writer = [&](int epoch) {
    const auto path = config.out_path("checkpoint_epoch_" + std::to_string(epoch + 1) + ".json");
    model->save_checkpoint(path, train_hash, epoch + 1);
    result.checkpoint_paths.push_back(path.string());
  };
  sinks.step_log_writer = [&](const json& record) { log_stream << record.dump() << '\n'; };

  result.report = train(*model, dataset, sets, groups, config.prompt, train_config, sinks, start_epoch);

  json report_json;
  report_json["artifact"] = "train_report";
  report_json["version"] = 1;
  report_json["config_hash"] = train_hash;
  report_json["seed"] = config.seed;
  report_json["report"] = result.report.to_json();
  result.report_path = config.out_path("train_report.json").string();
  write_text_file(result.report_path, report_json.dump(2));
  return result;
}

EvalResult cmd_eval(const RunConfig& config, const EvalOptions& options) {
  require_file(config.paths.qa, "QA dataset");
  const auto dataset = load_qa_dataset(config.paths.qa);
  const std::string train_hash = stage_config_hash(config, Stage::Train);
  const std::string eval_hash = stage_config_hash(config, Stage::Eval);

  std::vector<std::string> checkpoints = options.checkpoints;
  if (checkpoints.empty()) {
    checkpoints = list_checkpoints(config);
    if (!checkpoints.empty()) checkpoints = {checkpoints.back()};  // default: latest epoch
  }
  if (checkpoints.empty()) {
    throw ConfigError("no checkpoint to evaluate; run `train` first or pass --checkpoint");
  }

  // K1 knowledge for scoring prompts, when available and wanted.
  std::map<std::string, std::vector<std::string>> k1_by_question;
  const auto groups_path = config.out_path("knowledge_groups.jsonl");
  if (config.eval.use_knowledge && std::filesystem::exists(groups_path)) {
    for (const auto& g : load_knowledge_groups(groups_path, stage_config_hash(config, Stage::Retrieve))) {
      k1_by_question[g.question_id] = g.k1_surfaces();
    }
  }
  static const std::vector<std::string> kNoKnowledge;
  const PromptBuilder prompt_builder = [&](const QAPair& qa) {
    const auto it = k1_by_question.find(qa.id);
    return render_prompt(config.prompt, it == k1_by_question.end() ? kNoKnowledge : it->second, qa.question);
  };

  EvalResult result;
  int index = 0;
  for (const auto& checkpoint_path : checkpoints) {
    auto loaded = ReferenceModel::load_checkpoint(checkpoint_path, train_hash);

    std::map<std::string, std::string> generations;
    if (options.generate_in_place) {
      for (const auto& qa : dataset) {
        generations[qa.id] = loaded.model.generate(prompt_builder(qa), config.eval.generate_max_tokens);
      }
      save_generations(config.out_path("generations.jsonl"), generations);
    } else {
      std::string generations_path =
          options.generations_path.empty() ? config.eval.generations_path : options.generations_path;
      if (generations_path.empty()) {
        throw ConfigError("eval needs a generations file (eval.generations or --generations) or --generate");
      }
      require_file(generations_path, "generations");
      generations = load_generations(generations_path);
    }

    const EvalReport report = evaluate(loaded.model, dataset, generations, config.metric_config(), prompt_builder);

    ++index;
    json out;
    out["artifact"] = "eval_report";
    out["version"] = 1;
    out["config_hash"] = eval_hash;
    out["seed"] = config.seed;
    out["checkpoint"] = checkpoint_path;
    out["report"] = report.to_json();
    const std::string suffix = checkpoints.size() > 1 ? "_" + std::to_string(index) : "";
    const auto report_path = config.out_path("eval_report" + suffix + ".json");
    write_text_file(report_path, out.dump(2));
    result.entries.push_back(EvalResult::Entry{checkpoint_path, report, report_path.string()});
  }
  return result;
}

}  // namespace kpa
