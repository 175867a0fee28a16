#include "kpa/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "kpa/error.hpp"

namespace kpa {

using nlohmann::json;

json ArtifactHeader::to_json() const {
  return json{{"artifact", artifact}, {"version", version}, {"config_hash", config_hash}, {"seed", seed}};
}

ArtifactHeader ArtifactHeader::from_json(const json& j) {
  ArtifactHeader h;
  h.artifact = j.at("artifact").get<std::string>();
  h.version = j.at("version").get<int>();
  h.config_hash = j.at("config_hash").get<std::string>();
  h.seed = j.value("seed", std::uint64_t{0});
  return h;
}

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

json parse_line(const std::string& line, const std::filesystem::path& path, std::size_t line_no) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    std::ostringstream msg;
    msg << path.string() << ":" << line_no << ": malformed JSON line: " << e.what();
    throw ParseError(msg.str());
  }
}

bool is_blank(const std::string& s) {
  return s.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::vector<json> records;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (is_blank(line)) continue;
    records.push_back(parse_line(line, path, line_no));
  }
  return records;
}

JsonlFile read_jsonl_artifact(const std::filesystem::path& path, std::string_view expected_artifact,
                              std::string_view expected_config_hash) {
  auto records = read_jsonl(path);
  if (records.empty() || !records.front().contains("artifact")) {
    throw ParseError(path.string() + ": missing artifact header line");
  }
  JsonlFile file;
  file.header = ArtifactHeader::from_json(records.front());
  if (file.header.artifact != expected_artifact) {
    throw ValidationError(path.string() + ": expected artifact '" + std::string(expected_artifact) + "', found '" +
                          file.header.artifact + "'");
  }
  if (!expected_config_hash.empty() && file.header.config_hash != expected_config_hash) {
    throw ValidationError(path.string() + ": config hash mismatch (artifact " + file.header.config_hash +
                          ", current config " + std::string(expected_config_hash) +
                          "); regenerate the artifact with this config");
  }
  file.records.assign(records.begin() + 1, records.end());
  return file;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
}

void write_jsonl_artifact(const std::filesystem::path& path, const ArtifactHeader& header,
                          const std::vector<json>& records) {
  std::vector<json> all;
  all.reserve(records.size() + 1);
  all.push_back(header.to_json());
  all.insert(all.end(), records.begin(), records.end());
  write_jsonl(path, all);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path.string());
  out << content;
}

}  // namespace kpa
