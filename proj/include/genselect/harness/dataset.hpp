#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "genselect/answer_canon.hpp"
#include "genselect/errors.hpp"

namespace genselect::harness {

struct BenchmarkItem {
  std::string problem_id;
  std::string problem_text;
  std::string ground_truth_text;
  CanonicalAnswer ground_truth = CanonicalAnswer::opaque("");
  std::string source_tag;
};

// Ground truths may be bare ("1/2") or boxed ("\boxed{1/2}").
inline std::optional<CanonicalAnswer> parse_ground_truth(std::string_view text) {
  std::string body(text);
  if (body.find("\\boxed") != std::string::npos) {
    auto raw = extract_final_answer(body);
    if (!raw) return std::nullopt;
    body = raw->text;
  }
  auto c = canonicalize(body);
  if (c.kind() == CanonicalAnswer::Kind::Opaque && c.text().empty()) return std::nullopt;
  return c;
}

inline BenchmarkItem item_from_json(const nlohmann::json& j) {
  BenchmarkItem item;
  item.problem_id = j.at("problem_id").get<std::string>();
  item.problem_text = j.at("problem").get<std::string>();
  const auto& truth = j.at("expected_answer");
  // Integer answers are often stored as JSON numbers.
  item.ground_truth_text = truth.is_string() ? truth.get<std::string>() : truth.dump();
  item.source_tag = j.value("source", "");
  auto c = parse_ground_truth(item.ground_truth_text);
  if (!c) throw DatasetError("unparseable expected_answer '" + item.ground_truth_text + "'");
  item.ground_truth = *c;
  if (item.problem_id.empty()) throw DatasetError("empty problem_id");
  return item;
}

// One JSON object per line; blank lines are skipped. Errors name the line.
inline std::vector<BenchmarkItem> load_dataset(std::istream& in, const std::string& name = "") {
  std::vector<BenchmarkItem> items;
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  const std::string where = name.empty() ? "line " : name + ":";
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    BenchmarkItem item;
    try {
      item = item_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(where + std::to_string(lineno) + ": " + e.what());
    } catch (const DatasetError& e) {
      throw DatasetError(where + std::to_string(lineno) + ": " + e.what());
    }
    auto [it, fresh] = seen.emplace(item.problem_id, lineno);
    if (!fresh) throw DuplicateId(item.problem_id, it->second, lineno);
    items.push_back(std::move(item));
  }
  return items;
}

inline std::vector<BenchmarkItem> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset " + path.string());
  return load_dataset(in, path.string());
}

inline std::map<std::string, std::size_t> source_histogram(const std::vector<BenchmarkItem>& items) {
  std::map<std::string, std::size_t> h;
  for (const auto& i : items) ++h[i.source_tag];
  return h;
}

}  // namespace genselect::harness
