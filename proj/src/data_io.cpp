#include "kpa/data_io.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "kpa/error.hpp"
#include "kpa/jsonl.hpp"
#include "kpa/text.hpp"

namespace kpa {

using nlohmann::json;

KnowledgeItem KnowledgeItem::triple(std::string id, std::string head, std::string relation, std::string tail) {
  KnowledgeItem item;
  item.id = std::move(id);
  item.kind = KnowledgeKind::Triple;
  item.head = std::move(head);
  item.relation = std::move(relation);
  item.tail = std::move(tail);
  item.surface = render_surface(item);
  validate_knowledge_item(item);
  return item;
}

KnowledgeItem KnowledgeItem::document(std::string id, std::string body) {
  KnowledgeItem item;
  item.id = std::move(id);
  item.kind = KnowledgeKind::Document;
  item.body = std::move(body);
  item.surface = render_surface(item);
  validate_knowledge_item(item);
  return item;
}

std::string render_surface(const KnowledgeItem& item) {
  if (item.kind == KnowledgeKind::Triple) {
    return item.head + " | " + item.relation + " | " + item.tail;
  }
  return item.body;
}

void PromptTemplate::validate() const {
  for (std::string_view placeholder : {"{knowledge}", "{question}"}) {
    std::size_t first = template_text.find(placeholder);
    if (first == std::string::npos) {
      throw ValidationError("prompt template is missing placeholder " + std::string(placeholder));
    }
    if (template_text.find(placeholder, first + 1) != std::string::npos) {
      throw ValidationError("prompt template repeats placeholder " + std::string(placeholder));
    }
  }
}

namespace {

std::string require_string(const json& j, const char* key, const std::filesystem::path& path, std::size_t line_no) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    std::ostringstream msg;
    msg << path.string() << ":" << line_no << ": missing string field '" << key << "'";
    throw ParseError(msg.str());
  }
  return j.at(key).get<std::string>();
}

}  // namespace

std::vector<QAPair> load_qa_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open QA dataset: " + path.string());

  std::vector<QAPair> dataset;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": malformed JSON line: " << e.what();
      throw ParseError(msg.str());
    }
    QAPair qa;
    qa.id = require_string(j, "id", path, line_no);
    qa.question = require_string(j, "question", path, line_no);
    qa.golden_answer = require_string(j, "answer", path, line_no);
    dataset.push_back(std::move(qa));
  }
  validate_qa_dataset(dataset);
  return dataset;
}

void validate_qa_dataset(std::span<const QAPair> dataset) {
  std::unordered_set<std::string> seen;
  for (const auto& qa : dataset) {
    if (trim(qa.id).empty()) throw ValidationError("QA pair with empty id");
    if (trim(qa.question).empty()) throw ValidationError("QA pair '" + qa.id + "' has an empty question");
    if (trim(qa.golden_answer).empty()) throw ValidationError("QA pair '" + qa.id + "' has an empty answer");
    if (!seen.insert(qa.id).second) throw ValidationError("duplicate QA pair id '" + qa.id + "'");
  }
}

void save_qa_dataset(const std::filesystem::path& path, std::span<const QAPair> dataset) {
  std::vector<json> records;
  records.reserve(dataset.size());
  for (const auto& qa : dataset) {
    records.push_back(json{{"id", qa.id}, {"question", qa.question}, {"answer", qa.golden_answer}});
  }
  write_jsonl(path, records);
}

void validate_knowledge_item(const KnowledgeItem& item) {
  if (trim(item.id).empty()) throw ValidationError("knowledge item with empty id");
  if (item.kind == KnowledgeKind::Triple) {
    if (trim(item.head).empty() || trim(item.relation).empty() || trim(item.tail).empty()) {
      throw ValidationError("triple '" + item.id + "' needs non-empty head, relation and tail");
    }
  } else if (trim(item.body).empty()) {
    throw ValidationError("document '" + item.id + "' needs a non-empty body");
  }
}

std::vector<KnowledgeItem> load_kb(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open knowledge base: " + path.string());

  std::vector<KnowledgeItem> kb;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": malformed JSON line: " << e.what();
      throw ParseError(msg.str());
    }
    const std::string id = require_string(j, "id", path, line_no);
    const bool has_triple = j.contains("head") || j.contains("relation") || j.contains("tail");
    KnowledgeItem item;
    try {
      if (has_triple) {
        item = KnowledgeItem::triple(id, require_string(j, "head", path, line_no),
                                     require_string(j, "relation", path, line_no),
                                     require_string(j, "tail", path, line_no));
      } else if (j.contains("body")) {
        item = KnowledgeItem::document(id, require_string(j, "body", path, line_no));
      } else {
        std::ostringstream msg;
        msg << path.string() << ":" << line_no << ": record '" << id
            << "' has neither triple fields nor a document body";
        throw ValidationError(msg.str());
      }
    } catch (const ValidationError& e) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": " << e.what();
      throw ValidationError(msg.str());
    }
    if (!seen.insert(item.id).second) throw ValidationError("duplicate knowledge item id '" + item.id + "'");
    kb.push_back(std::move(item));
  }
  return kb;
}

void save_kb(const std::filesystem::path& path, std::span<const KnowledgeItem> kb) {
  std::vector<json> records;
  records.reserve(kb.size());
  for (const auto& item : kb) {
    if (item.kind == KnowledgeKind::Triple) {
      records.push_back(json{{"id", item.id}, {"head", item.head}, {"relation", item.relation}, {"tail", item.tail}});
    } else {
      records.push_back(json{{"id", item.id}, {"body", item.body}});
    }
  }
  write_jsonl(path, records);
}

namespace {

std::string substitute_once(std::string text, std::string_view placeholder, std::string_view value) {
  const std::size_t pos = text.find(placeholder);
  text.replace(pos, placeholder.size(), value);
  return text;
}

}  // namespace

std::string render_prompt(const PromptTemplate& tmpl, std::span<const std::string> knowledge_surfaces,
                          std::string_view question) {
  tmpl.validate();
  std::string joined;
  for (std::size_t i = 0; i < knowledge_surfaces.size(); ++i) {
    if (i > 0) joined += tmpl.knowledge_separator;
    joined += knowledge_surfaces[i];
  }
  std::string out = substitute_once(tmpl.template_text, "{knowledge}", joined);
  return substitute_once(std::move(out), "{question}", question);
}

std::string render_prompt(const PromptTemplate& tmpl, std::span<const KnowledgeItem> knowledge,
                          std::string_view question) {
  std::vector<std::string> surfaces;
  surfaces.reserve(knowledge.size());
  for (const auto& item : knowledge) surfaces.push_back(item.surface);
  return render_prompt(tmpl, surfaces, question);
}

}  // namespace kpa
