#pragma once

// Twenty-problem answer grid with hand-computed expected accuracies, shared
// by the harness tests and the acceptance binary.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "genselect/harness/config.hpp"
#include "genselect/harness/dataset.hpp"
#include "genselect/harness/pipeline.hpp"

namespace grid {

namespace h = genselect::harness;

struct Problem {
  std::string id;
  std::string source;
  std::string truth;
  // Boxed answer per sample; nullopt means the sample never states one.
  std::vector<std::optional<std::string>> answers;
  double judge_p;
  double verifier_p;
};

inline constexpr std::size_t kSamples = 8;

inline std::vector<Problem> problems() {
  using A = std::vector<std::optional<std::string>>;
  const std::nullopt_t x = std::nullopt;
  auto same = [](std::string a, std::size_t n) { return A(n, a); };
  auto cat = [](A a, const A& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  return {
      {"P01", "aime24", "42", same("42", 8), 1, 1},
      {"P02", "aime24", "17", same("3", 8), 1, 1},
      {"P03", "aime24", "100", {"100", "7", "7", "7", x, x, "9", "9"}, 1, 1},
      {"P04", "aime24", "5", {"5", "5", "6", "6", x, x, x, x}, 0, 1},
      {"P05", "aime24", "1/2", {"0.5", "\\frac{1}{2}", "1/2", "3", "3", "3", x, x}, 1, 0},
      {"P06", "aime24", "12", cat(same("12", 7), {x}), 0, 0},
      {"P07", "aime24", "256", A(8, x), 1, 1},
      {"P08", "aime25", "9", {"1", "2", "3", "4", "5", "6", "7", "9"}, 1, 1},
      {"P09", "aime25", "33", {"33", "33", "33", "1", "1", "1", "1", x}, 1, 0},
      {"P10", "aime25", "70", same("70", 8), 0, 0},
      {"P11", "aime25", "18", {"2", "18", "2", "18", "2", x, "18", "5"}, 0, 1},
      {"P12", "aime25", "-4", {"-4", "-4", "4", "4", "4", x, x, x}, 1, 1},
      {"P13", "aime25", "0", cat(same("0", 7), {"1"}), 0, 1},
      {"P14", "aime25", "2025",
       {"2024", "2024", "2026", "2026", "2024", "2026", "2025", "2025"}, 1, 1},
      {"P15", "hmmt", "\\sqrt{2}", {"\\sqrt2", "\\sqrt{2}", "2", "2", x, x, x, x}, 1, 1},
      {"P16", "hmmt", "3/4", {"0.75", "3/4", "\\frac{3}{4}", "0.75", "1", "1", "1", "1"}, 0, 0},
      {"P17", "hmmt", "8", cat({"8"}, A(7, x)), 1, 0},
      {"P18", "hmmt", "11", cat(same("10", 4), same("12", 4)), 0, 0},
      {"P19", "hmmt", "64", cat(same("64", 4), same("63", 4)), 1, 1},
      {"P20", "hmmt", "1000", cat({"999", "1000"}, same("999", 6)), 0, 1},
  };
}

// Problems each method solves, worked out by hand from the grid:
//   maj@8: first-seen plurality over stated answers.
//   genselect with p=1: solved iff some sample is correct; p=0: iff all are.
//   genrm (weighted) with v=1: iff some sample is correct; v=0: iff some
//   sample is correct and no stated answer is wrong.
inline const std::set<std::string> kPass8 = {"P01", "P03", "P04", "P05", "P06", "P08", "P09",
                                             "P10", "P11", "P12", "P13", "P14", "P15", "P16",
                                             "P17", "P19", "P20"};
inline const std::set<std::string> kMajority = {"P01", "P04", "P05", "P06", "P10",
                                                "P13", "P15", "P16", "P17", "P19"};
inline const std::set<std::string> kGenSelect = {"P01", "P03", "P05", "P08", "P09", "P10",
                                                 "P12", "P14", "P15", "P17", "P19"};
inline const std::set<std::string> kGenRM = {"P01", "P03", "P04", "P06", "P08", "P10", "P11",
                                             "P12", "P13", "P14", "P15", "P17", "P19", "P20"};
inline constexpr double kPass1 = 59.0 / 160.0;

inline const char* kGenSelectName = "genselect@4";

inline std::string problem_text(const Problem& p) {
  return "Grid problem " + p.id + ": find the value the " + p.source + " key expects.";
}

inline std::string solution_text(const Problem& p, std::size_t i) {
  std::string s = "Working for " + p.id + ", sample " + std::to_string(i) + ".\n";
  if (p.answers[i]) {
    s += "Therefore the answer is \\boxed{" + *p.answers[i] + "}.";
  } else {
    s += "I could not finish this one.";
  }
  return s;
}

inline nlohmann::json dataset_line(const Problem& p) {
  return {{"problem_id", p.id},
          {"problem", problem_text(p)},
          {"expected_answer", p.truth},
          {"source", p.source}};
}

inline void write_dataset(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  for (const auto& p : problems()) out << dataset_line(p).dump() << "\n";
}

inline nlohmann::json config_json(const std::filesystem::path& replay_dir) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& p : problems()) per[p.id] = {{"p", p.judge_p}, {"verifier_p", p.verifier_p}};
  return {
      {"backend", {{"kind", "replay"}, {"replay_dir", replay_dir.string()}}},
      {"judge", {{"mode", "scripted"}, {"scripted", {{"per_problem", per}}}}},
      {"generation", {{"samples", kSamples}}},
      {"selectors",
       {{"majority", true},
        {"genrm", {{"verifications", 2}}},
        {"genselect", {{"repeats", 4}, {"arity", 4}}}}},
      {"concurrency", {{"problems", 4}, {"generations", 4}, {"repeats", 2}}},
  };
}

// Replay fixtures for every generation request of the grid.
inline void write_fixtures(const std::filesystem::path& dir, const h::ExperimentConfig& cfg) {
  genselect::ReplayStore store(dir);
  genselect::PromptKit kit(cfg.prompts_dir ? genselect::PromptTemplates::load_dir(*cfg.prompts_dir)
                                           : genselect::PromptTemplates::defaults(),
                           cfg.limits);
  for (const auto& p : problems()) {
    const auto item = h::item_from_json(dataset_line(p));
    for (std::size_t i = 0; i < p.answers.size(); ++i) {
      const auto text = solution_text(p, i);
      genselect::GenerationResult r;
      r.text = text;
      r.prompt_tokens = 40;
      r.output_tokens = 100 + 10 * i;
      store.store(h::generation_request(item, i, cfg.generation, kit), r);
    }
  }
}

// A scratch directory holding dataset.jsonl, config.json and fixtures/.
struct Workspace {
  std::filesystem::path root;
  std::filesystem::path dataset;
  std::filesystem::path config;
  std::filesystem::path fixtures;

  explicit Workspace(const std::string& name)
      : root(std::filesystem::temp_directory_path() / ("genselect_grid_" + name)) {
    std::filesystem::remove_all(root);
    std::filesystem::create_directories(root);
    dataset = root / "dataset.jsonl";
    config = root / "config.json";
    fixtures = root / "fixtures";
    write_dataset(dataset);
    std::ofstream(config) << config_json("fixtures").dump(2);
    write_fixtures(fixtures, h::load_config(config));
  }

  ~Workspace() {
    std::error_code ec;
    std::filesystem::remove_all(root, ec);
  }

  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  h::ExperimentConfig load() const { return h::load_config(config); }
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::set<std::string> solved_by(const h::Metrics& m, const std::string& method) {
  std::set<std::string> out;
  for (const auto& p : m.per_problem) {
    if (p.method(method).correct == 1.0) out.insert(p.problem_id);
  }
  return out;
}

}  // namespace grid
