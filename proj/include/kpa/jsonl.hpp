#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace kpa {

// First line of every pipeline artifact. Plain datasets (QA, KB) carry no
// header; stage outputs do, so downstream stages can reject mixed configs.
struct ArtifactHeader {
  std::string artifact;
  int version = 1;
  std::string config_hash;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static ArtifactHeader from_json(const nlohmann::json& j);
};

struct JsonlFile {
  ArtifactHeader header;
  std::vector<nlohmann::json> records;
};

// Reads a headerless JSONL file. Parse errors name the 1-based line number.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

// Reads an artifact file, checking the artifact name and (when non-empty)
// the expected config hash.
JsonlFile read_jsonl_artifact(const std::filesystem::path& path, std::string_view expected_artifact,
                              std::string_view expected_config_hash = {});

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& records);
void write_jsonl_artifact(const std::filesystem::path& path, const ArtifactHeader& header,
                          const std::vector<nlohmann::json>& records);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace kpa
