#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "genselect/backend.hpp"
#include "genselect/errors.hpp"
#include "genselect/selection.hpp"

namespace genselect::harness {

struct MethodOutcome {
  std::string name;
  // 0 or 1 for selectors; the fraction of correct samples for pass@1.
  double correct = 0.0;
  std::optional<std::string> chosen;
  bool degraded = false;
};

struct ProblemOutcome {
  std::string problem_id;
  std::string source_tag;
  std::string ground_truth;
  std::size_t samples = 0;
  std::size_t answered = 0;
  std::size_t correct_samples = 0;
  std::vector<MethodOutcome> methods;

  const MethodOutcome& method(std::string_view name) const {
    for (const auto& m : methods) {
      if (m.name == name) return m;
    }
    throw Error("problem " + problem_id + " has no method '" + std::string(name) + "'");
  }
};

struct Tally {
  double solved = 0.0;
  std::size_t total = 0;

  double accuracy() const { return total == 0 ? 0.0 : solved / static_cast<double>(total); }
};

struct MethodMetrics {
  std::string name;
  Tally overall;
  std::map<std::string, Tally> by_source;
};

struct Metrics {
  std::size_t samples_per_problem = 0;
  std::size_t problems = 0;
  std::vector<std::string> quarantined;  // "problem_id: reason"
  std::vector<MethodMetrics> methods;
  BudgetLedger ledger;
  std::vector<ProblemOutcome> per_problem;

  const MethodMetrics& method(std::string_view name) const {
    for (const auto& m : methods) {
      if (m.name == name) return m;
    }
    throw Error("no method '" + std::string(name) + "' in metrics");
  }
};

inline std::string pass_at_n_name(std::size_t m) { return "pass@" + std::to_string(m); }
inline std::string majority_name(std::size_t m) { return "maj@" + std::to_string(m); }

// Aggregates per-problem outcomes in the given order. Every method must be
// dominated by the pass@M oracle on every problem; a violation means a
// selector produced an answer no candidate had, and is thrown rather than
// reported.
inline Metrics reduce_metrics(std::vector<ProblemOutcome> outcomes, std::size_t samples,
                              std::vector<std::string> quarantined = {}) {
  Metrics m;
  m.samples_per_problem = samples;
  m.problems = outcomes.size() + quarantined.size();
  m.quarantined = std::move(quarantined);
  const std::string oracle = pass_at_n_name(samples);

  for (const auto& p : outcomes) {
    const double bound = p.method(oracle).correct;
    for (const auto& meth : p.methods) {
      if (meth.correct > bound) {
        throw InvariantViolation(meth.name + " solved problem " + p.problem_id +
                                 " although no candidate was correct");
      }
    }
    for (const auto& meth : p.methods) {
      auto it = std::find_if(m.methods.begin(), m.methods.end(),
                             [&](const MethodMetrics& x) { return x.name == meth.name; });
      if (it == m.methods.end()) {
        m.methods.push_back({meth.name, {}, {}});
        it = std::prev(m.methods.end());
      }
      it->overall.solved += meth.correct;
      it->overall.total += 1;
      auto& src = it->by_source[p.source_tag];
      src.solved += meth.correct;
      src.total += 1;
    }
  }
  if (!m.methods.empty()) {
    const double bound = m.method(oracle).overall.accuracy();
    for (const auto& meth : m.methods) {
      if (meth.overall.accuracy() > bound + 1e-12) {
        throw InvariantViolation(meth.name + " accuracy exceeds " + oracle);
      }
    }
  }
  m.per_problem = std::move(outcomes);
  return m;
}

// Ledger recomputed from a record stream. Failed calls carry no usage and
// are not counted.
inline BudgetLedger ledger_from_records(std::span<const RunRecord> records) {
  BudgetLedger l;
  for (const auto& r : records) {
    if (!r.failed) l.add(r.kind, r.output_tokens);
  }
  return l;
}

inline nlohmann::ordered_json to_json(const BudgetLedger& l) {
  nlohmann::ordered_json j;
  j["generation_tokens"] = l.generation_tokens;
  j["summary_tokens"] = l.summary_tokens;
  j["selection_tokens"] = l.selection_tokens;
  nlohmann::ordered_json calls = nlohmann::ordered_json::object();
  for (const auto& [k, v] : l.calls) calls[k] = v;
  j["calls"] = std::move(calls);
  return j;
}

inline BudgetLedger ledger_from_json(const nlohmann::json& j) {
  BudgetLedger l;
  l.generation_tokens = j.value("generation_tokens", std::size_t{0});
  l.summary_tokens = j.value("summary_tokens", std::size_t{0});
  l.selection_tokens = j.value("selection_tokens", std::size_t{0});
  if (j.contains("calls")) {
    for (const auto& [k, v] : j.at("calls").items()) l.calls[k] = v.get<std::size_t>();
  }
  return l;
}

inline nlohmann::ordered_json to_json(const Tally& t) {
  return {{"solved", t.solved}, {"total", t.total}, {"accuracy", t.accuracy()}};
}

inline nlohmann::ordered_json to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["samples_per_problem"] = m.samples_per_problem;
  j["problems"] = m.problems;
  j["quarantined"] = m.quarantined;
  nlohmann::ordered_json methods = nlohmann::ordered_json::array();
  for (const auto& meth : m.methods) {
    nlohmann::ordered_json e;
    e["name"] = meth.name;
    e["overall"] = to_json(meth.overall);
    nlohmann::ordered_json src = nlohmann::ordered_json::object();
    for (const auto& [k, t] : meth.by_source) src[k] = to_json(t);
    e["by_source"] = std::move(src);
    methods.push_back(std::move(e));
  }
  j["methods"] = std::move(methods);
  j["ledger"] = to_json(m.ledger);
  nlohmann::ordered_json problems = nlohmann::ordered_json::array();
  for (const auto& p : m.per_problem) {
    nlohmann::ordered_json e;
    e["problem_id"] = p.problem_id;
    e["source"] = p.source_tag;
    e["ground_truth"] = p.ground_truth;
    e["samples"] = p.samples;
    e["answered"] = p.answered;
    e["correct_samples"] = p.correct_samples;
    nlohmann::ordered_json ms = nlohmann::ordered_json::array();
    for (const auto& o : p.methods) {
      ms.push_back({{"name", o.name},
                    {"correct", o.correct},
                    {"chosen", or_null(o.chosen)},
                    {"degraded", o.degraded}});
    }
    e["methods"] = std::move(ms);
    problems.push_back(std::move(e));
  }
  j["per_problem"] = std::move(problems);
  return j;
}

inline Metrics metrics_from_json(const nlohmann::json& j) {
  Metrics m;
  m.samples_per_problem = j.at("samples_per_problem").get<std::size_t>();
  m.problems = j.at("problems").get<std::size_t>();
  m.quarantined = j.value("quarantined", std::vector<std::string>{});
  auto tally = [](const nlohmann::json& t) {
    return Tally{t.at("solved").get<double>(), t.at("total").get<std::size_t>()};
  };
  for (const auto& e : j.at("methods")) {
    MethodMetrics meth;
    meth.name = e.at("name").get<std::string>();
    meth.overall = tally(e.at("overall"));
    for (const auto& [k, t] : e.at("by_source").items()) meth.by_source[k] = tally(t);
    m.methods.push_back(std::move(meth));
  }
  if (j.contains("ledger")) m.ledger = ledger_from_json(j.at("ledger"));
  for (const auto& e : j.value("per_problem", nlohmann::json::array())) {
    ProblemOutcome p;
    p.problem_id = e.at("problem_id").get<std::string>();
    p.source_tag = e.value("source", "");
    p.ground_truth = e.value("ground_truth", "");
    p.samples = e.value("samples", std::size_t{0});
    p.answered = e.value("answered", std::size_t{0});
    p.correct_samples = e.value("correct_samples", std::size_t{0});
    for (const auto& o : e.at("methods")) {
      MethodOutcome mo;
      mo.name = o.at("name").get<std::string>();
      mo.correct = o.at("correct").get<double>();
      if (!o.at("chosen").is_null()) mo.chosen = o.at("chosen").get<std::string>();
      mo.degraded = o.value("degraded", false);
      p.methods.push_back(std::move(mo));
    }
    m.per_problem.push_back(std::move(p));
  }
  return m;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

inline void write_metrics(const std::filesystem::path& path, const Metrics& m) {
  write_text(path, to_json(m).dump(2) + "\n");
}

inline Metrics read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open metrics " + path.string());
  return metrics_from_json(nlohmann::json::parse(in));
}

inline void write_records(const std::filesystem::path& path, std::span<const RunRecord> records) {
  std::string text;
  for (const auto& r : records) text += to_json(r).dump() + "\n";
  write_text(path, text);
}

inline std::vector<RunRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open records " + path.string());
  std::vector<RunRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(run_record_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace genselect::harness
