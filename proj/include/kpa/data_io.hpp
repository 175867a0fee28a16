#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kpa {

// One question/golden-answer record of the QA dataset.
struct QAPair {
  std::string id;
  std::string question;
  std::string golden_answer;
};

enum class KnowledgeKind { Triple, Document };

// One knowledge-base entry. `surface` is the deterministic text rendering
// used both for encoding and for prompting: "head | relation | tail" for
// triples, the body itself for documents.
struct KnowledgeItem {
  std::string id;
  KnowledgeKind kind = KnowledgeKind::Document;
  std::string head;
  std::string relation;
  std::string tail;
  std::string body;
  std::string surface;

  static KnowledgeItem triple(std::string id, std::string head, std::string relation, std::string tail);
  static KnowledgeItem document(std::string id, std::string body);
};

std::string render_surface(const KnowledgeItem& item);

// Prompt wrapper with {knowledge} and {question} placeholders, each required
// exactly once. Knowledge surfaces are joined by `knowledge_separator`.
struct PromptTemplate {
  std::string template_text = "Background knowledge: {knowledge}\nQuestion: {question}\nAnswer:";
  std::string knowledge_separator = "; ";

  void validate() const;
};

// JSON Lines, one record per line: {id, question, answer}.
std::vector<QAPair> load_qa_dataset(const std::filesystem::path& path);
void save_qa_dataset(const std::filesystem::path& path, std::span<const QAPair> dataset);

// JSON Lines: {id, head, relation, tail} or {id, body}.
std::vector<KnowledgeItem> load_kb(const std::filesystem::path& path);
void save_kb(const std::filesystem::path& path, std::span<const KnowledgeItem> kb);

void validate_qa_dataset(std::span<const QAPair> dataset);
void validate_knowledge_item(const KnowledgeItem& item);

std::string render_prompt(const PromptTemplate& tmpl, std::span<const KnowledgeItem> knowledge,
                          std::string_view question);
std::string render_prompt(const PromptTemplate& tmpl, std::span<const std::string> knowledge_surfaces,
                          std::string_view question);

}  // namespace kpa
