#pragma once

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "genselect/answer_canon.hpp"
#include "genselect/backend.hpp"
#include "genselect/chat_backend.hpp"
#include "genselect/errors.hpp"
#include "genselect/harness/config.hpp"
#include "genselect/harness/dataset.hpp"
#include "genselect/harness/metrics.hpp"
#include "genselect/http_transport.hpp"
#include "genselect/parallel.hpp"
#include "genselect/prompt_kit.hpp"
#include "genselect/scripted_judge.hpp"
#include "genselect/selection.hpp"

namespace genselect::harness {

inline std::string candidate_id(std::size_t sample_index) {
  return "c" + std::to_string(sample_index);
}

// Ground-truth correctness of every candidate seen so far; backs the
// scripted judge.
class CorrectnessBook {
 public:
  void set(const std::string& problem_id, const std::string& cand, bool correct) {
    std::lock_guard lock(mutex_);
    book_[{problem_id, cand}] = correct;
  }

  bool get(const std::string& problem_id, const std::string& cand) const {
    std::lock_guard lock(mutex_);
    auto it = book_.find({problem_id, cand});
    if (it == book_.end()) {
      throw BackendError("no correctness known for " + problem_id + "/" + cand);
    }
    return it->second;
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, bool> book_;
};

// Sums the usage of successful calls per problem.
class LedgerTap final : public Backend {
 public:
  explicit LedgerTap(Backend& inner) : inner_(inner) {}

  GenerationResult generate(const GenerationRequest& request) override {
    auto result = inner_.generate(request);
    std::lock_guard lock(mutex_);
    by_problem_[request.tags.problem_id].add(request.tags.kind, result.output_tokens);
    return result;
  }

  bool deterministic() const override { return inner_.deterministic(); }

  // Totals since the last call.
  BudgetLedger take_total() {
    std::lock_guard lock(mutex_);
    BudgetLedger l;
    for (const auto& [id, x] : by_problem_) l += x;
    by_problem_.clear();
    return l;
  }

 private:
  Backend& inner_;
  mutable std::mutex mutex_;
  std::map<std::string, BudgetLedger> by_problem_;
};

// The request for sample `index` of `item`. Replay fixtures are keyed on
// exactly this request.
inline GenerationRequest generation_request(const BenchmarkItem& item, std::size_t index,
                                            const GenerationConfig& gen, const PromptKit& kit) {
  GenerationRequest req;
  req.messages = kit.render_generation_prompt(item.problem_text).messages;
  req.temperature = gen.temperature;
  req.top_p = gen.top_p;
  req.max_output_tokens = gen.max_output_tokens;
  if (gen.seed) req.seed_hint = *gen.seed + static_cast<std::int64_t>(index);
  req.sample_index = index;
  req.tags.kind = RequestKind::Generation;
  req.tags.problem_id = item.problem_id;
  req.tags.candidate_ids = {candidate_id(index)};
  req.tags.label = "generation/" + candidate_id(index);
  return req;
}

namespace detail {

// Keeps the end of a solution (where the answer is) when the whole text
// would not fit in a summary prompt.
inline std::string tail_that_fits(std::string_view problem, const std::string& solution,
                                  const PromptKit& kit) {
  const std::size_t fixed =
      kit.estimate(kit.templates().summary.static_text()) + kit.estimate(problem) + 4;
  const std::size_t budget = kit.limits().prompt_budget();
  if (fixed + kit.estimate(solution) <= budget) return solution;
  if (fixed >= budget) throw TokenBudgetExceeded(fixed, budget);
  std::size_t keep_cp = (budget - fixed) * 4;
  std::size_t pos = solution.size();
  while (pos > 0 && keep_cp > 0) {
    --pos;
    if ((static_cast<unsigned char>(solution[pos]) & 0xC0) != 0x80) --keep_cp;
  }
  return "[...]\n" + solution.substr(pos);
}

}  // namespace detail

struct SelectorInputs {
  // problem_id -> candidate_id -> score
  std::map<std::string, std::map<std::string, double>> weighted_scores;
};

inline std::map<std::string, std::map<std::string, double>> load_scores(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scores file " + path.string());
  const auto j = nlohmann::json::parse(in);
  std::map<std::string, std::map<std::string, double>> out;
  for (const auto& [pid, per] : j.items()) {
    for (const auto& [cid, s] : per.items()) out[pid][cid] = s.get<double>();
  }
  return out;
}

// Runs experiments against one fully wired backend stack:
//   logging -> ledger tap -> routing -> {model backend, scripted judge}
// Every model call is logged exactly once, successful or not.
class Experiment {
 public:
  // `model` overrides the backend described by config.backend.
  explicit Experiment(ExperimentConfig config, Backend* model = nullptr,
                      std::shared_ptr<Transport> transport = nullptr)
      : config_(std::move(config)),
        kit_(config_.prompts_dir ? PromptTemplates::load_dir(*config_.prompts_dir)
                                 : PromptTemplates::defaults(),
             config_.limits) {
    config_.validate();
    if (model) {
      model_ = model;
    } else {
      owned_model_ = make_model_backend(std::move(transport));
      model_ = owned_model_.get();
    }
    if (!config_.backend.capture_dir.empty()) {
      capture_store_ = std::make_unique<ReplayStore>(config_.backend.capture_dir);
      capturing_ = std::make_unique<CapturingBackend>(*model_, *capture_store_);
      model_ = capturing_.get();
    }
    routing_ = std::make_unique<RoutingBackend>(*model_);
    if (config_.judge.mode == JudgeConfig::Mode::Scripted) {
      const auto sc = config_.judge.scripted;
      scripted_ = std::make_unique<ScriptedJudgeBackend>(
          [this](const std::string& pid, const std::string& cid) { return book_.get(pid, cid); },
          [sc](const std::string& pid) { return JudgeModel::scripted(sc.judge_for(pid)); },
          [sc](const std::string& pid) { return JudgeModel::scripted(sc.verifier_for(pid)); });
      routing_->route(RequestKind::Judgment, *scripted_).route(RequestKind::Verification, *scripted_);
    }
    tap_ = std::make_unique<LedgerTap>(*routing_);
    logging_ = std::make_unique<LoggingBackend>(*tap_, collector_);
    if (config_.selectors.weighted_majority_scores) {
      inputs_.weighted_scores = load_scores(*config_.selectors.weighted_majority_scores);
    }
  }

  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  const ExperimentConfig& config() const noexcept { return config_; }
  const PromptKit& kit() const noexcept { return kit_; }
  Backend& backend() noexcept { return *logging_; }

  struct Output {
    Metrics metrics;
    std::vector<RunRecord> records;
  };

  // Generation, answer extraction, summaries and every configured selector.
  Output run_pipeline(const std::vector<BenchmarkItem>& items) {
    return run(items, nullptr, true);
  }

  // Sampling only; metrics carry the generation-only rows.
  Output run_generation(const std::vector<BenchmarkItem>& items) {
    return run(items, nullptr, false);
  }

  // Selectors over a pool recovered from an earlier run's records. The
  // reused generation and summary records are carried into the output.
  Output run_selection(const std::vector<BenchmarkItem>& items,
                       const std::vector<RunRecord>& pool_records) {
    return run(items, &pool_records, true);
  }

  // Candidates of one problem rebuilt from generation/summary records.
  static std::vector<Candidate> pool_from_records(const BenchmarkItem& item,
                                                  const std::vector<RunRecord>& records,
                                                  const PromptKit& kit) {
    std::map<std::size_t, const RunRecord*> gens;
    std::map<std::string, const RunRecord*> sums;
    for (const auto& r : records) {
      if (r.failed || r.problem_id != item.problem_id || r.candidate_ids.empty()) continue;
      if (r.kind == RequestKind::Generation) gens[r.sample_index] = &r;
      if (r.kind == RequestKind::Summary) sums[r.candidate_ids.front()] = &r;
    }
    std::vector<Candidate> pool;
    for (const auto& [idx, r] : gens) {
      auto c = Candidate::from_text(r->candidate_ids.front(), r->text, r->output_tokens);
      c.view = kit.make_view(c.id, c.full_text);
      if (auto it = sums.find(c.id); it != sums.end()) {
        c.view = kit.make_view(c.id, it->second->text, it->second->output_tokens);
      }
      pool.push_back(std::move(c));
    }
    return pool;
  }

 private:
  std::unique_ptr<Backend> make_model_backend(std::shared_ptr<Transport> transport) {
    const auto& b = config_.backend;
    if (b.kind == BackendConfig::Kind::Replay) {
      if (b.replay_dir.empty()) throw ConfigError("replay backend needs backend.replay_dir");
      replay_store_ = std::make_unique<ReplayStore>(b.replay_dir);
      return std::make_unique<ReplayBackend>(*replay_store_);
    }
    ChatEndpointConfig ep;
    ep.model = b.model;
    if (ep.model.empty()) {
      if (const char* m = std::getenv("GENSELECT_MODEL")) ep.model = m;
    }
    if (const char* key = std::getenv(b.api_key_env.c_str())) ep.api_key = key;
    ep.max_in_flight = b.max_in_flight;
    ep.retry.max_retries = b.max_retries;
    ep.retry.initial_delay = std::chrono::milliseconds(b.initial_backoff_ms);
    ep.retry.max_delay = std::chrono::milliseconds(b.max_backoff_ms);
    if (!transport) {
      std::string url = b.base_url;
      if (url.empty()) {
        if (const char* u = std::getenv("GENSELECT_BASE_URL")) url = u;
      }
      if (url.empty()) {
        throw ConfigError("live backend needs backend.base_url or $GENSELECT_BASE_URL");
      }
      transport = std::make_shared<HttpLibTransport>(url, std::chrono::seconds(b.timeout_seconds));
    }
    return std::make_unique<ChatCompletionsBackend>(ep, std::move(transport));
  }

  std::vector<Candidate> generate_pool(const BenchmarkItem& item) {
    const std::size_t m = config_.generation.samples;
    std::vector<Candidate> pool(m);
    parallel_for(m, config_.concurrency.generations, [&](std::size_t i) {
      const auto req = generation_request(item, i, config_.generation, kit_);
      const auto res = backend().generate(req);
      pool[i] = Candidate::from_text(candidate_id(i), res.text, res.output_tokens);
      pool[i].view = kit_.make_view(pool[i].id, pool[i].full_text);
    });
    if (config_.summary.enabled) {
      parallel_for(m, config_.concurrency.generations, [&](std::size_t i) {
        auto& c = pool[i];
        if (kit_.estimate(c.full_text) <= config_.summary.threshold_tokens) return;
        GenerationRequest req;
        req.messages = kit_.render_summary_prompt(
                              item.problem_text,
                              detail::tail_that_fits(item.problem_text, c.full_text, kit_))
                           .messages;
        req.temperature = config_.summary.temperature;
        req.top_p = config_.summary.top_p;
        req.max_output_tokens = config_.summary.max_output_tokens;
        req.sample_index = 0;
        req.tags.kind = RequestKind::Summary;
        req.tags.problem_id = item.problem_id;
        req.tags.candidate_ids = {c.id};
        req.tags.label = "summary/" + c.id;
        const auto res = backend().generate(req);
        c.view = kit_.make_view(c.id, res.text, res.output_tokens);
      });
    }
    return pool;
  }

  ProblemOutcome score_problem(const BenchmarkItem& item, const std::vector<Candidate>& pool,
                               bool run_selectors) {
    const auto& truth = item.ground_truth;
    auto correct = [&](const std::optional<CanonicalAnswer>& a) {
      return a && answers_equivalent(*a, truth);
    };
    for (const auto& c : pool) book_.set(item.problem_id, c.id, correct(c.answer));

    ProblemOutcome out;
    out.problem_id = item.problem_id;
    out.source_tag = item.source_tag;
    out.ground_truth = truth.render();
    out.samples = pool.size();
    for (const auto& c : pool) {
      out.answered += c.answer ? 1 : 0;
      out.correct_samples += correct(c.answer) ? 1 : 0;
    }
    const std::size_t m = config_.generation.samples;
    const double pass1 = pool.empty() ? 0.0
                                      : static_cast<double>(out.correct_samples) /
                                            static_cast<double>(pool.size());
    out.methods.push_back({"pass@1", pass1, std::nullopt, false});

    auto record = [&](const std::string& name, const SelectionResult& r) {
      MethodOutcome mo{name, correct(r.chosen_answer) ? 1.0 : 0.0, std::nullopt, r.degraded};
      if (r.chosen_answer) mo.chosen = r.chosen_answer->render();
      out.methods.push_back(std::move(mo));
    };
    auto abstain = [&](const std::string& name) {
      out.methods.push_back({name, 0.0, std::nullopt, false});
    };

    std::optional<JudgeEquivalence> model_equiv;
    Equivalence equivalent = rule_equivalence();
    if (config_.judge.model_equivalence) {
      model_equiv.emplace(kit_, backend(), config_.judge.sampling);
      equivalent = model_equiv->as_function();
    }

    if (config_.selectors.majority || !run_selectors) {
      try {
        record(majority_name(m), majority_vote(pool, equivalent));
      } catch (const AllAnswersAbsent&) {
        abstain(majority_name(m));
      }
    }
    if (run_selectors) {
      if (config_.selectors.weighted_majority_scores) {
        auto it = inputs_.weighted_scores.find(item.problem_id);
        if (it == inputs_.weighted_scores.end()) {
          throw DatasetError("no weighted-majority scores for " + item.problem_id);
        }
        try {
          record("weighted_majority", weighted_majority_vote(pool, it->second, equivalent));
        } catch (const AllAnswersAbsent&) {
          abstain("weighted_majority");
        }
      }
      if (config_.selectors.genrm) {
        GenRMOptions o;
        o.problem_id = item.problem_id;
        o.sampling = config_.judge.sampling;
        o.aggregation = config_.selectors.genrm->aggregation;
        o.concurrency = config_.concurrency.verifications;
        record("genrm", select_genrm(item.problem_text, pool,
                                     config_.selectors.genrm->verifications, kit_, backend(), o,
                                     equivalent));
      }
      for (const auto& g : config_.selectors.genselect) {
        GenSelectOptions o;
        o.problem_id = item.problem_id;
        o.retry_budget = g.retry_budget;
        o.reshuffle_between_rounds = g.reshuffle_between_rounds;
        o.sampling = config_.judge.sampling;
        o.repeat_concurrency = config_.concurrency.repeats;
        o.group_concurrency = config_.concurrency.groups;
        record(g.name(), select_genselect_at_k(item.problem_text, pool, g.repeats, g.arity,
                                               g.base_seed, kit_, backend(), o, equivalent));
      }
    }
    out.methods.push_back({pass_at_n_name(m), pass_at_n(pool, truth) ? 1.0 : 0.0, std::nullopt,
                           false});
    return out;
  }

  Output run(const std::vector<BenchmarkItem>& items, const std::vector<RunRecord>* pool_records,
             bool run_selectors) {
    std::vector<std::optional<ProblemOutcome>> outcomes(items.size());
    std::vector<std::string> errors(items.size());
    parallel_for(items.size(), config_.concurrency.problems, [&](std::size_t i) {
      const auto& item = items[i];
      try {
        auto pool = pool_records ? pool_from_records(item, *pool_records, kit_)
                                 : generate_pool(item);
        if (pool.empty()) throw DatasetError("no candidates for " + item.problem_id);
        outcomes[i] = score_problem(item, pool, run_selectors);
      } catch (const std::exception& e) {
        errors[i] = item.problem_id + ": " + e.what();
      }
    });

    std::vector<ProblemOutcome> done;
    std::vector<std::string> quarantined;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (outcomes[i]) {
        done.push_back(std::move(*outcomes[i]));
      } else {
        quarantined.push_back(std::move(errors[i]));
      }
    }

    Output out;
    out.records = collector_.take_sorted();
    BudgetLedger ledger = tap_->take_total();
    if (pool_records) {
      std::vector<RunRecord> reused;
      for (const auto& r : *pool_records) {
        if (r.kind == RequestKind::Generation || r.kind == RequestKind::Summary) {
          reused.push_back(r);
        }
      }
      ledger += ledger_from_records(reused);
      reused.insert(reused.end(), std::make_move_iterator(out.records.begin()),
                    std::make_move_iterator(out.records.end()));
      out.records = std::move(reused);
    }
    out.metrics = reduce_metrics(std::move(done), config_.generation.samples,
                                 std::move(quarantined));
    out.metrics.ledger = ledger;
    if (!(ledger_from_records(out.records) == out.metrics.ledger)) {
      throw InvariantViolation("budget ledger does not match the record stream");
    }
    return out;
  }

  ExperimentConfig config_;
  PromptKit kit_;
  SelectorInputs inputs_;
  CorrectnessBook book_;
  RecordCollector collector_;
  std::unique_ptr<ReplayStore> replay_store_;
  std::unique_ptr<ReplayStore> capture_store_;
  std::unique_ptr<Backend> owned_model_;
  std::unique_ptr<CapturingBackend> capturing_;
  Backend* model_ = nullptr;
  std::unique_ptr<ScriptedJudgeBackend> scripted_;
  std::unique_ptr<RoutingBackend> routing_;
  std::unique_ptr<LedgerTap> tap_;
  std::unique_ptr<LoggingBackend> logging_;
};

// Writes records.jsonl and metrics.json under `dir`.
inline void persist(const std::filesystem::path& dir, const Experiment::Output& out) {
  write_records(dir / "records.jsonl", out.records);
  write_metrics(dir / "metrics.json", out.metrics);
}

}  // namespace genselect::harness
