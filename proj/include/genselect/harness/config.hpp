#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "genselect/errors.hpp"
#include "genselect/prompt_kit.hpp"
#include "genselect/selection.hpp"
#include "genselect/tournament.hpp"

// Experiment configuration. Loaded from a JSON file; every field has a
// default so an empty object is a valid config.

namespace genselect::harness {

struct BackendConfig {
  enum class Kind { Live, Replay };
  Kind kind = Kind::Replay;
  std::string base_url;  // live; falls back to $GENSELECT_BASE_URL
  std::string model;     // live; falls back to $GENSELECT_MODEL
  std::string api_key_env = "GENSELECT_API_KEY";
  std::filesystem::path replay_dir;   // replay source
  std::filesystem::path capture_dir;  // optional: save every live result here
  std::size_t max_in_flight = 8;
  int timeout_seconds = 1800;
  int max_retries = 4;
  int initial_backoff_ms = 1000;
  int max_backoff_ms = 30000;
};

struct ScriptedJudgeConfig {
  double judge_p = 1.0;
  double verifier_p = 1.0;
  struct Override {
    std::optional<double> judge_p;
    std::optional<double> verifier_p;
  };
  std::map<std::string, Override> per_problem;

  double judge_for(const std::string& problem_id) const {
    auto it = per_problem.find(problem_id);
    return it != per_problem.end() && it->second.judge_p ? *it->second.judge_p : judge_p;
  }
  double verifier_for(const std::string& problem_id) const {
    auto it = per_problem.find(problem_id);
    return it != per_problem.end() && it->second.verifier_p ? *it->second.verifier_p
                                                            : verifier_p;
  }
};

struct JudgeConfig {
  // Model: judgments and verifications go to the configured backend.
  // Scripted: they are simulated from ground-truth correctness.
  enum class Mode { Model, Scripted };
  Mode mode = Mode::Model;
  ScriptedJudgeConfig scripted;
  JudgeSampling sampling;
  // Ask the model about answer pairs the rules cannot settle.
  bool model_equivalence = false;
};

struct GenerationConfig {
  std::size_t samples = 64;
  double temperature = 0.6;
  double top_p = 0.95;
  std::size_t max_output_tokens = 32768;
  // When set, sample i carries seed_hint = seed + i.
  std::optional<std::int64_t> seed;
};

struct SummaryConfig {
  bool enabled = true;
  // Solutions estimated at or below this many tokens are used as-is.
  std::size_t threshold_tokens = 2048;
  double temperature = 0.6;
  double top_p = 0.95;
  std::size_t max_output_tokens = 4096;
};

struct GenSelectSelector {
  std::size_t repeats = 32;
  std::size_t arity = 8;
  std::uint64_t base_seed = 0;
  std::size_t retry_budget = 2;
  bool reshuffle_between_rounds = false;

  std::string name() const { return "genselect@" + std::to_string(repeats); }
};

struct GenRMSelector {
  std::size_t verifications = 1;
  GenRMAggregation aggregation = GenRMAggregation::WeightedMajority;
};

struct SelectorsConfig {
  bool majority = true;
  // JSON {problem_id: {candidate_id: score}}; enables weighted majority.
  std::optional<std::filesystem::path> weighted_majority_scores;
  std::optional<GenRMSelector> genrm;
  std::vector<GenSelectSelector> genselect{GenSelectSelector{}};
};

struct ConcurrencyConfig {
  std::size_t problems = 1;
  std::size_t generations = 8;
  std::size_t repeats = 1;
  std::size_t groups = 1;
  std::size_t verifications = 8;
};

struct ExperimentConfig {
  BackendConfig backend;
  JudgeConfig judge;
  GenerationConfig generation;
  SummaryConfig summary;
  PromptLimits limits;
  std::optional<std::filesystem::path> prompts_dir;
  SelectorsConfig selectors;
  ConcurrencyConfig concurrency;
  std::filesystem::path output_dir = "run";

  void validate() const {
    if (generation.samples < 1) throw ConfigError("generation.samples must be >= 1");
    auto prob = [](double p, const char* what) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0, 1]");
    };
    prob(judge.scripted.judge_p, "judge.scripted.p");
    prob(judge.scripted.verifier_p, "judge.scripted.verifier_p");
    for (const auto& [id, o] : judge.scripted.per_problem) {
      if (o.judge_p) prob(*o.judge_p, "judge.scripted.per_problem.p");
      if (o.verifier_p) prob(*o.verifier_p, "judge.scripted.per_problem.verifier_p");
    }
    for (const auto& g : selectors.genselect) {
      if (g.repeats < 1) throw ConfigError("genselect repeats must be >= 1");
      if (g.arity < 2) throw ConfigError("genselect arity must be >= 2");
    }
    if (selectors.genrm && selectors.genrm->verifications < 1) {
      throw ConfigError("genrm verifications must be >= 1");
    }
    if (limits.context_limit <= limits.reserved_output) {
      throw ConfigError("limits.context_limit must exceed limits.reserved_output");
    }
  }
};

namespace detail {

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  out = j.at(key).get<T>();
}

template <typename T>
void read(const nlohmann::json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  out = j.at(key).get<T>();
}

inline void read_path(const nlohmann::json& j, const char* key, std::filesystem::path& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<std::string>();
}

inline void read_sampling(const nlohmann::json& j, JudgeSampling& s) {
  read(j, "temperature", s.temperature);
  read(j, "top_p", s.top_p);
  read(j, "max_output_tokens", s.max_output_tokens);
}

inline const nlohmann::json& section(const nlohmann::json& j, const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  if (!j.contains(key)) return empty;
  const auto& s = j.at(key);
  if (!s.is_object()) throw ConfigError(std::string("'") + key + "' must be an object");
  return s;
}

inline GenSelectSelector genselect_from_json(const nlohmann::json& j) {
  GenSelectSelector g;
  read(j, "repeats", g.repeats);
  read(j, "arity", g.arity);
  read(j, "base_seed", g.base_seed);
  read(j, "retry_budget", g.retry_budget);
  read(j, "reshuffle", g.reshuffle_between_rounds);
  return g;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  namespace d = detail;
  ExperimentConfig c;
  try {
    {
      const auto& b = d::section(j, "backend");
      const std::string kind = b.value("kind", "replay");
      if (kind == "live") {
        c.backend.kind = BackendConfig::Kind::Live;
      } else if (kind == "replay") {
        c.backend.kind = BackendConfig::Kind::Replay;
      } else {
        throw ConfigError("backend.kind must be 'live' or 'replay', got '" + kind + "'");
      }
      d::read(b, "base_url", c.backend.base_url);
      d::read(b, "model", c.backend.model);
      d::read(b, "api_key_env", c.backend.api_key_env);
      d::read_path(b, "replay_dir", c.backend.replay_dir);
      d::read_path(b, "capture_dir", c.backend.capture_dir);
      d::read(b, "max_in_flight", c.backend.max_in_flight);
      d::read(b, "timeout_seconds", c.backend.timeout_seconds);
      d::read(b, "max_retries", c.backend.max_retries);
      d::read(b, "initial_backoff_ms", c.backend.initial_backoff_ms);
      d::read(b, "max_backoff_ms", c.backend.max_backoff_ms);
    }
    {
      const auto& jj = d::section(j, "judge");
      const std::string mode = jj.value("mode", "model");
      if (mode == "model") {
        c.judge.mode = JudgeConfig::Mode::Model;
      } else if (mode == "scripted") {
        c.judge.mode = JudgeConfig::Mode::Scripted;
      } else {
        throw ConfigError("judge.mode must be 'model' or 'scripted', got '" + mode + "'");
      }
      d::read_sampling(d::section(jj, "sampling"), c.judge.sampling);
      d::read(jj, "model_equivalence", c.judge.model_equivalence);
      const auto& s = d::section(jj, "scripted");
      d::read(s, "p", c.judge.scripted.judge_p);
      d::read(s, "verifier_p", c.judge.scripted.verifier_p);
      for (const auto& [id, o] : d::section(s, "per_problem").items()) {
        ScriptedJudgeConfig::Override ov;
        d::read(o, "p", ov.judge_p);
        d::read(o, "verifier_p", ov.verifier_p);
        c.judge.scripted.per_problem[id] = ov;
      }
    }
    {
      const auto& g = d::section(j, "generation");
      d::read(g, "samples", c.generation.samples);
      d::read(g, "temperature", c.generation.temperature);
      d::read(g, "top_p", c.generation.top_p);
      d::read(g, "max_output_tokens", c.generation.max_output_tokens);
      d::read(g, "seed", c.generation.seed);
    }
    {
      const auto& s = d::section(j, "summary");
      d::read(s, "enabled", c.summary.enabled);
      d::read(s, "threshold_tokens", c.summary.threshold_tokens);
      d::read(s, "temperature", c.summary.temperature);
      d::read(s, "top_p", c.summary.top_p);
      d::read(s, "max_output_tokens", c.summary.max_output_tokens);
    }
    {
      const auto& l = d::section(j, "limits");
      d::read(l, "context_limit", c.limits.context_limit);
      d::read(l, "reserved_output", c.limits.reserved_output);
      d::read(l, "max_arity", c.limits.max_arity);
    }
    if (j.contains("prompts_dir") && !j.at("prompts_dir").is_null()) {
      c.prompts_dir = j.at("prompts_dir").get<std::string>();
    }
    if (j.contains("selectors")) {
      const auto& s = d::section(j, "selectors");
      d::read(s, "majority", c.selectors.majority);
      if (s.contains("weighted_majority_scores") && !s.at("weighted_majority_scores").is_null()) {
        c.selectors.weighted_majority_scores = s.at("weighted_majority_scores").get<std::string>();
      }
      if (s.contains("genrm") && !s.at("genrm").is_null()) {
        const auto& g = s.at("genrm");
        GenRMSelector r;
        d::read(g, "verifications", r.verifications);
        const std::string agg = g.value("aggregation", "weighted_majority");
        if (agg == "weighted_majority") {
          r.aggregation = GenRMAggregation::WeightedMajority;
        } else if (agg == "argmax") {
          r.aggregation = GenRMAggregation::Argmax;
        } else {
          throw ConfigError("genrm.aggregation must be 'weighted_majority' or 'argmax'");
        }
        c.selectors.genrm = r;
      }
      if (s.contains("genselect")) {
        c.selectors.genselect.clear();
        const auto& g = s.at("genselect");
        if (g.is_object()) {
          c.selectors.genselect.push_back(d::genselect_from_json(g));
        } else if (g.is_array()) {
          for (const auto& e : g) c.selectors.genselect.push_back(d::genselect_from_json(e));
        } else if (!g.is_null()) {
          throw ConfigError("selectors.genselect must be an object or an array");
        }
      }
    }
    {
      const auto& cc = d::section(j, "concurrency");
      d::read(cc, "problems", c.concurrency.problems);
      d::read(cc, "generations", c.concurrency.generations);
      d::read(cc, "repeats", c.concurrency.repeats);
      d::read(cc, "groups", c.concurrency.groups);
      d::read(cc, "verifications", c.concurrency.verifications);
    }
    d::read_path(j, "output_dir", c.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  auto c = config_from_json(j);
  // Relative paths in the file are relative to the file.
  const auto base = path.parent_path();
  auto rebase = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  rebase(c.backend.replay_dir);
  rebase(c.backend.capture_dir);
  if (c.prompts_dir) rebase(*c.prompts_dir);
  if (c.selectors.weighted_majority_scores) rebase(*c.selectors.weighted_majority_scores);
  return c;
}

}  // namespace genselect::harness
