#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "genselect/answer_canon.hpp"
#include "genselect/backend.hpp"
#include "genselect/errors.hpp"
#include "genselect/judgment.hpp"
#include "genselect/parallel.hpp"
#include "genselect/prompt_kit.hpp"
#include "genselect/tournament.hpp"

namespace genselect {

// One sampled solution to a problem.
struct Candidate {
  std::string id;
  std::string full_text;
  SolutionView view;
  std::optional<CanonicalAnswer> answer;
  std::size_t generation_tokens = 0;

  // Fills `answer` from the text and uses the text itself as the view.
  static Candidate from_text(std::string id, std::string full_text,
                             std::size_t generation_tokens = 0) {
    Candidate c;
    c.id = id;
    c.answer = answer_of(full_text);
    c.view = SolutionView{std::move(id), full_text,
                          std::max<std::size_t>(1, estimate_tokens(full_text))};
    c.full_text = std::move(full_text);
    c.generation_tokens = generation_tokens;
    return c;
  }
};

using Equivalence = std::function<bool(const CanonicalAnswer&, const CanonicalAnswer&)>;

inline Equivalence rule_equivalence() { return answers_equivalent; }

// Output-token spend, split the way the budget comparison needs it.
struct BudgetLedger {
  std::size_t generation_tokens = 0;
  std::size_t summary_tokens = 0;
  // Judge and verifier output.
  std::size_t selection_tokens = 0;
  std::map<std::string, std::size_t> calls;

  void add(RequestKind kind, std::size_t output_tokens) {
    calls[to_string(kind)] += 1;
    switch (kind) {
      case RequestKind::Generation:
        generation_tokens += output_tokens;
        break;
      case RequestKind::Summary:
        summary_tokens += output_tokens;
        break;
      default:
        selection_tokens += output_tokens;
        break;
    }
  }

  BudgetLedger& operator+=(const BudgetLedger& o) {
    generation_tokens += o.generation_tokens;
    summary_tokens += o.summary_tokens;
    selection_tokens += o.selection_tokens;
    for (const auto& [k, v] : o.calls) calls[k] += v;
    return *this;
  }

  bool operator==(const BudgetLedger&) const = default;
};

enum class Method { Majority, WeightedMajority, GenRM, GenSelect, PassOracle };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::Majority:
      return "majority";
    case Method::WeightedMajority:
      return "weighted_majority";
    case Method::GenRM:
      return "genrm";
    case Method::GenSelect:
      return "genselect";
    case Method::PassOracle:
      return "pass_oracle";
  }
  return "majority";
}

struct AnswerClass {
  CanonicalAnswer answer;  // the first member's answer
  std::size_t count = 0;
  double weight = 0.0;
  std::vector<std::string> members;
};

struct VoteDiagnostics {
  // In order of first appearance.
  std::vector<AnswerClass> classes;
  std::size_t abstained = 0;  // candidates without an answer
  std::size_t winner = 0;     // index into classes
};

struct GenRMScore {
  double score = 0.5;
  std::size_t samples = 0;
  std::size_t parseable = 0;
  std::size_t judged_correct = 0;
  std::size_t output_tokens = 0;
  bool degraded = false;
};

enum class GenRMAggregation { WeightedMajority, Argmax };

struct GenRMDiagnostics {
  GenRMAggregation aggregation = GenRMAggregation::WeightedMajority;
  std::map<std::string, GenRMScore> scores;
  VoteDiagnostics vote;
};

struct GenSelectDiagnostics {
  std::size_t arity_requested = 0;
  std::size_t arity_used = 0;
  std::vector<TournamentOutcome> outcomes;
  std::vector<std::string> winners;
  std::vector<std::string> failures;
  // Comparisons completed by repeats that later failed.
  std::vector<TournamentOutcome> failed_partials;
  VoteDiagnostics vote;
};

using Diagnostics = std::variant<VoteDiagnostics, GenRMDiagnostics, GenSelectDiagnostics>;

struct SelectionResult {
  Method method = Method::Majority;
  std::optional<CanonicalAnswer> chosen_answer;
  std::vector<std::string> chosen_candidate_ids;
  Diagnostics diagnostics;
  BudgetLedger budget;
  bool degraded = false;
};

namespace detail {

// Groups answered candidates into equivalence classes; weight_of(i) is the
// vote weight of candidates[i].
template <typename WeightOf>
VoteDiagnostics tally(std::span<const Candidate> candidates, WeightOf&& weight_of,
                      const Equivalence& equivalent) {
  VoteDiagnostics d;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (!c.answer) {
      ++d.abstained;
      continue;
    }
    auto it = std::find_if(d.classes.begin(), d.classes.end(), [&](const AnswerClass& k) {
      return equivalent(k.answer, *c.answer);
    });
    if (it == d.classes.end()) {
      d.classes.push_back({*c.answer, 0, 0.0, {}});
      it = std::prev(d.classes.end());
    }
    it->count += 1;
    it->weight += weight_of(i);
    it->members.push_back(c.id);
  }
  if (d.classes.empty()) throw AllAnswersAbsent();
  // Strict comparison keeps the earliest class on ties.
  for (std::size_t k = 1; k < d.classes.size(); ++k) {
    if (d.classes[k].weight > d.classes[d.winner].weight) d.winner = k;
  }
  return d;
}

inline SelectionResult vote_result(Method method, VoteDiagnostics vote) {
  SelectionResult r;
  r.method = method;
  const auto& win = vote.classes[vote.winner];
  r.chosen_answer = win.answer;
  r.chosen_candidate_ids = win.members;
  r.diagnostics = std::move(vote);
  return r;
}

}  // namespace detail

// Self-consistency: the most common answer class wins; ties go to the class
// that appeared first. Candidates without an answer abstain.
inline SelectionResult majority_vote(std::span<const Candidate> candidates,
                                     const Equivalence& equivalent = rule_equivalence()) {
  if (candidates.empty()) throw InvalidGroup("majority vote needs at least one candidate");
  auto vote = detail::tally(candidates, [](std::size_t) { return 1.0; }, equivalent);
  return detail::vote_result(Method::Majority, std::move(vote));
}

// Class weight is the sum of member scores; ties as in majority_vote.
inline SelectionResult weighted_majority_vote(std::span<const Candidate> candidates,
                                              const std::map<std::string, double>& scores,
                                              const Equivalence& equivalent = rule_equivalence()) {
  if (candidates.empty()) throw InvalidGroup("weighted vote needs at least one candidate");
  std::vector<double> weights;
  weights.reserve(candidates.size());
  for (const auto& c : candidates) {
    auto it = scores.find(c.id);
    if (it == scores.end()) throw Error("no score for candidate '" + c.id + "'");
    weights.push_back(it->second);
  }
  auto vote = detail::tally(candidates, [&](std::size_t i) { return weights[i]; }, equivalent);
  return detail::vote_result(Method::WeightedMajority, std::move(vote));
}

// Oracle: did any candidate reach the ground truth?
inline bool pass_at_n(std::span<const Candidate> candidates, const CanonicalAnswer& ground_truth,
                      const Equivalence& equivalent = rule_equivalence()) {
  return std::any_of(candidates.begin(), candidates.end(), [&](const Candidate& c) {
    return c.answer && equivalent(*c.answer, ground_truth);
  });
}

struct GenRMOptions {
  std::string problem_id;
  JudgeSampling sampling;
  GenRMAggregation aggregation = GenRMAggregation::WeightedMajority;
  std::size_t concurrency = 1;
};

// Fraction of parseable verdicts that call the candidate correct. All
// unparseable gives 0.5 and marks the score degraded.
inline GenRMScore genrm_score(std::string_view problem, const Candidate& candidate,
                              std::size_t verifications, const PromptKit& kit, Backend& backend,
                              const GenRMOptions& options = {}) {
  if (verifications < 1) throw InvalidRequest("genrm needs at least one verification");
  const RenderedPrompt prompt = kit.render_genrm_prompt(problem, candidate.view);
  GenerationRequest req;
  req.messages = prompt.messages;
  req.temperature = options.sampling.temperature;
  req.top_p = options.sampling.top_p;
  req.max_output_tokens = options.sampling.max_output_tokens;
  req.tags.kind = RequestKind::Verification;
  req.tags.problem_id = options.problem_id;
  req.tags.candidate_ids = {candidate.id};

  GenRMScore s;
  for (std::size_t i = 0; i < verifications; ++i) {
    req.sample_index = i;
    req.tags.label = "genrm/" + candidate.id + "/sample=" + std::to_string(i);
    const auto result = backend.generate(req);
    s.output_tokens += result.output_tokens;
    ++s.samples;
    if (auto verdict = parse_verdict(result.text)) {
      ++s.parseable;
      s.judged_correct += *verdict ? 1 : 0;
    }
  }
  if (s.parseable == 0) {
    s.score = 0.5;
    s.degraded = true;
  } else {
    s.score = static_cast<double>(s.judged_correct) / static_cast<double>(s.parseable);
  }
  return s;
}

// Pointwise GenRM: score every candidate, then aggregate by weighted
// majority (default) or by the single best-scored candidate.
inline SelectionResult select_genrm(std::string_view problem, std::span<const Candidate> candidates,
                                    std::size_t verifications, const PromptKit& kit,
                                    Backend& backend, const GenRMOptions& options = {},
                                    const Equivalence& equivalent = rule_equivalence()) {
  if (candidates.empty()) throw InvalidGroup("genrm needs at least one candidate");
  std::vector<GenRMScore> scores(candidates.size());
  parallel_for(candidates.size(), options.concurrency, [&](std::size_t i) {
    scores[i] = genrm_score(problem, candidates[i], verifications, kit, backend, options);
  });

  GenRMDiagnostics diag;
  diag.aggregation = options.aggregation;
  std::map<std::string, double> score_map;
  BudgetLedger ledger;
  bool degraded = false;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    diag.scores[candidates[i].id] = scores[i];
    score_map[candidates[i].id] = scores[i].score;
    for (std::size_t s = 0; s < scores[i].samples; ++s) ledger.calls["verification"] += 1;
    ledger.selection_tokens += scores[i].output_tokens;
    degraded = degraded || scores[i].degraded;
  }

  SelectionResult r;
  r.method = Method::GenRM;
  r.budget = ledger;
  r.degraded = degraded;
  if (options.aggregation == GenRMAggregation::WeightedMajority) {
    try {
      auto voted = weighted_majority_vote(candidates, score_map, equivalent);
      r.chosen_answer = std::move(voted.chosen_answer);
      r.chosen_candidate_ids = std::move(voted.chosen_candidate_ids);
      diag.vote = std::get<VoteDiagnostics>(std::move(voted.diagnostics));
    } catch (const AllAnswersAbsent&) {
    }
  } else {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (!candidates[i].answer) continue;
      if (!best || scores[i].score > scores[*best].score) best = i;
    }
    if (best) {
      r.chosen_answer = candidates[*best].answer;
      r.chosen_candidate_ids = {candidates[*best].id};
    }
  }
  r.diagnostics = std::move(diag);
  return r;
}

struct GenSelectOptions {
  std::string problem_id;
  std::size_t retry_budget = 2;
  bool reshuffle_between_rounds = false;
  JudgeSampling sampling;
  // Repeats run side by side; groups within a round run side by side.
  std::size_t repeat_concurrency = 1;
  std::size_t group_concurrency = 1;
};

// GenSelect@k: k knockout tournaments over the same pool with permutation
// seeds base_seed + 0..k-1, then a majority vote over the k winners' answers.
// The arity is lowered to what fits in the context budget.
inline SelectionResult select_genselect_at_k(std::string_view problem,
                                             std::span<const Candidate> candidates,
                                             std::size_t repeats, std::size_t arity,
                                             std::uint64_t base_seed, const PromptKit& kit,
                                             Backend& backend, const GenSelectOptions& options = {},
                                             const Equivalence& equivalent = rule_equivalence()) {
  if (repeats < 1) throw InvalidRequest("GenSelect@k needs k >= 1");
  if (candidates.empty()) throw InvalidGroup("GenSelect needs at least one candidate");
  if (arity < 2) throw InvalidGroup("tournament arity must be at least 2");

  std::vector<SolutionView> views;
  std::map<std::string, const Candidate*> by_id;
  for (const auto& c : candidates) {
    views.push_back(c.view);
    by_id[c.id] = &c;
  }

  GenSelectDiagnostics diag;
  diag.arity_requested = arity;
  std::size_t used = arity;
  if (candidates.size() >= 2) {
    const std::size_t feasible = kit.max_feasible_arity(problem, views);
    if (feasible < 2) {
      // Even the two largest views overflow the prompt budget.
      std::vector<std::size_t> sizes;
      for (const auto& v : views) sizes.push_back(v.token_estimate);
      std::sort(sizes.begin(), sizes.end(), std::greater<>());
      throw TokenBudgetExceeded(kit.genselect_estimate_for_sizes(problem, std::span(sizes).first(2)),
                                kit.limits().prompt_budget());
    }
    used = std::min(arity, feasible);
  }
  diag.arity_used = used;

  std::vector<std::optional<TournamentOutcome>> outcomes(repeats);
  std::vector<std::string> failures(repeats);
  std::vector<std::optional<TournamentOutcome>> partials(repeats);
  parallel_for(repeats, options.repeat_concurrency, [&](std::size_t i) {
    TournamentOptions to;
    to.arity = used;
    to.permutation_seed = base_seed + i;
    to.retry_budget = options.retry_budget;
    to.reshuffle_between_rounds = options.reshuffle_between_rounds;
    to.concurrency = options.group_concurrency;
    to.sampling = options.sampling;
    to.repeat_index = i;
    to.problem_id = options.problem_id;
    try {
      outcomes[i] = run_tournament(problem, views, kit, backend, to);
    } catch (const TournamentFailed& e) {
      failures[i] = e.what();
      partials[i] = e.partial();
    }
  });

  SelectionResult r;
  r.method = Method::GenSelect;
  std::vector<Candidate> winners;
  std::optional<std::string> first_failure;
  for (std::size_t i = 0; i < repeats; ++i) {
    if (!outcomes[i]) {
      diag.failures.push_back("repeat " + std::to_string(i) + ": " + failures[i]);
      if (!first_failure) first_failure = failures[i];
      r.degraded = true;
      if (partials[i]) {
        for (const auto& c : partials[i]->comparisons) {
          r.budget.calls["judgment"] += c.retries_used + 1;
          r.budget.selection_tokens += c.output_tokens;
        }
        diag.failed_partials.push_back(std::move(*partials[i]));
      }
      continue;
    }
    const auto& o = *outcomes[i];
    winners.push_back(*by_id.at(o.winner_id));
    diag.winners.push_back(o.winner_id);
    r.budget.selection_tokens += o.total_judge_output_tokens;
    for (const auto& c : o.comparisons) {
      r.budget.calls["judgment"] += c.retries_used + 1;
      r.degraded = r.degraded || c.degraded;
    }
    diag.outcomes.push_back(o);
  }
  if (winners.empty()) throw BackendError("every GenSelect repeat failed: " + *first_failure);

  try {
    auto voted = majority_vote(winners, equivalent);
    r.chosen_answer = std::move(voted.chosen_answer);
    // Distinct winners in the chosen class.
    for (auto& id : voted.chosen_candidate_ids) {
      if (std::find(r.chosen_candidate_ids.begin(), r.chosen_candidate_ids.end(), id) ==
          r.chosen_candidate_ids.end()) {
        r.chosen_candidate_ids.push_back(std::move(id));
      }
    }
    diag.vote = std::get<VoteDiagnostics>(std::move(voted.diagnostics));
  } catch (const AllAnswersAbsent&) {
    diag.vote.abstained = winners.size();
  }
  r.diagnostics = std::move(diag);
  return r;
}

// Rule-based equivalence first; for answers the rules cannot settle (an
// Opaque side), asks a model. Results are cached per answer pair.
class JudgeEquivalence {
 public:
  JudgeEquivalence(const PromptKit& kit, Backend& backend, JudgeSampling sampling = {})
      : kit_(kit), backend_(backend), sampling_(sampling) {}

  bool operator()(const CanonicalAnswer& a, const CanonicalAnswer& b) {
    if (answers_equivalent(a, b)) return true;
    if (a.is_numeric() && b.is_numeric()) return false;
    std::pair<std::string, std::string> key{a.render(), b.render()};
    if (key.second < key.first) std::swap(key.first, key.second);
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    const auto prompt = kit_.render_equivalence_prompt(key.first, key.second);
    GenerationRequest req;
    req.messages = prompt.messages;
    req.temperature = sampling_.temperature;
    req.top_p = sampling_.top_p;
    req.max_output_tokens = sampling_.max_output_tokens;
    req.tags.kind = RequestKind::Equivalence;
    req.tags.label = "equivalence";
    const bool same = parse_verdict(backend_.generate(req).text).value_or(false);
    std::lock_guard lock(mutex_);
    cache_.emplace(std::move(key), same);
    return same;
  }

  Equivalence as_function() {
    return [this](const CanonicalAnswer& a, const CanonicalAnswer& b) { return (*this)(a, b); };
  }

 private:
  const PromptKit& kit_;
  Backend& backend_;
  JudgeSampling sampling_;
  std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, bool> cache_;
};

}  // namespace genselect
