#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "genselect/backend.hpp"
#include "genselect/errors.hpp"
#include "genselect/judgment.hpp"
#include "genselect/parallel.hpp"
#include "genselect/prompt_kit.hpp"
#include "genselect/random.hpp"

// N-ary knockout tournaments.
//
// Candidates are shuffled by a permutation derived from the seed, then split
// left to right into groups of `arity` with one trailing short group for the
// remainder. A group of one is a bye: its member advances without a judge
// call. Each round is planned over the winners of the previous one, in group
// order, until one survivor remains, which takes ceil(log_arity M) rounds.

namespace genselect {

struct Bracket {
  std::size_t arity = 2;
  std::uint64_t permutation_seed = 0;
  // Round-0 entrants after the permutation.
  std::vector<std::string> seeded_order;
  // rounds[r][g] lists the entrants of group g in round r. In round 0 an
  // entrant is an index into seeded_order; in round r > 0 it is the index of
  // a group of round r - 1, standing for that group's winner.
  std::vector<std::vector<std::vector<std::size_t>>> rounds;

  std::size_t round_count() const noexcept { return rounds.size(); }

  // Groups that need a judge call (size >= 2).
  std::size_t comparisons() const noexcept {
    std::size_t n = 0;
    for (const auto& round : rounds) {
      for (const auto& g : round) n += g.size() >= 2 ? 1 : 0;
    }
    return n;
  }
};

struct RoundCount {
  std::size_t rounds = 0;
  std::size_t comparisons = 0;

  bool operator==(const RoundCount&) const = default;
};

namespace detail {

inline std::vector<std::vector<std::size_t>> partition_round(std::span<const std::size_t> entrants,
                                                             std::size_t arity) {
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < entrants.size(); i += arity) {
    const std::size_t end = std::min(entrants.size(), i + arity);
    groups.emplace_back(entrants.begin() + static_cast<std::ptrdiff_t>(i),
                        entrants.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return groups;
}

}  // namespace detail

inline Bracket build_bracket(std::span<const std::string> candidate_ids, std::size_t arity,
                             std::uint64_t permutation_seed,
                             bool reshuffle_between_rounds = false) {
  if (candidate_ids.empty()) throw InvalidGroup("a bracket needs at least one candidate");
  if (arity < 2) throw InvalidGroup("tournament arity must be at least 2");

  Bracket b;
  b.arity = arity;
  b.permutation_seed = permutation_seed;
  b.seeded_order.assign(candidate_ids.begin(), candidate_ids.end());
  rng::Engine eng(rng::splitmix64(permutation_seed));
  rng::shuffle(b.seeded_order, eng);

  std::vector<std::size_t> entrants(b.seeded_order.size());
  for (std::size_t i = 0; i < entrants.size(); ++i) entrants[i] = i;
  while (entrants.size() > 1) {
    auto groups = detail::partition_round(entrants, arity);
    const std::size_t group_count = groups.size();
    b.rounds.push_back(std::move(groups));
    entrants.resize(group_count);
    for (std::size_t g = 0; g < group_count; ++g) entrants[g] = g;
    if (reshuffle_between_rounds) rng::shuffle(entrants, eng);
  }
  return b;
}

// Rounds and judge calls build_bracket would plan, without building it.
inline RoundCount count_comparisons(std::size_t candidates, std::size_t arity) {
  if (arity < 2) throw InvalidGroup("tournament arity must be at least 2");
  RoundCount c;
  std::size_t survivors = candidates;
  while (survivors > 1) {
    const std::size_t full = survivors / arity;
    const std::size_t rest = survivors % arity;
    c.comparisons += full + (rest >= 2 ? 1 : 0);
    survivors = full + (rest > 0 ? 1 : 0);
    ++c.rounds;
  }
  return c;
}

// Plays a bracket with an arbitrary judge: judge(round, group_index, ids)
// returns the winning position within `ids`. Groups of one advance
// unjudged. Returns the champion.
template <typename Judge>
std::string play_bracket(const Bracket& bracket, Judge&& judge) {
  std::vector<std::string> current = bracket.seeded_order;
  for (std::size_t r = 0; r < bracket.rounds.size(); ++r) {
    const auto& round = bracket.rounds[r];
    std::vector<std::string> winners(round.size());
    for (std::size_t g = 0; g < round.size(); ++g) {
      const auto& group = round[g];
      if (group.size() == 1) {
        winners[g] = current[group.front()];
        continue;
      }
      std::vector<std::string> ids;
      ids.reserve(group.size());
      for (auto e : group) ids.push_back(current[e]);
      const std::size_t pos = judge(r, g, std::as_const(ids));
      winners[g] = ids.at(pos);
    }
    current = std::move(winners);
  }
  return current.front();
}

struct JudgeSampling {
  double temperature = 0.6;
  double top_p = 0.95;
  std::size_t max_output_tokens = 16384;
};

struct ComparisonRecord {
  std::size_t round_index = 0;
  std::size_t group_index = 0;
  std::vector<std::string> group;
  std::string prompt_hash;
  std::string judge_text;
  std::size_t winner_position = 0;
  std::string winner_id;
  std::size_t retries_used = 0;
  std::size_t output_tokens = 0;
  std::size_t prompt_tokens = 0;
  // Every sample was unparseable; the winner fell back to position 0.
  bool degraded = false;
};

struct ComparisonOptions {
  std::string problem_id;
  std::size_t retry_budget = 2;
  JudgeSampling sampling;
  // Offset added to the attempt number to form the request's sample_index.
  std::size_t sample_base = 0;
  std::string label;
  std::optional<std::uint64_t> permutation_seed;
};

// One GenSelect judgment over `group` (2 <= size <= max arity). Unparseable
// responses are re-sampled up to retry_budget times.
inline ComparisonRecord run_group_comparison(std::string_view problem,
                                             std::span<const SolutionView> group,
                                             const PromptKit& kit, Backend& backend,
                                             const ComparisonOptions& options) {
  const RenderedPrompt prompt = kit.render_genselect_prompt(problem, group);
  ComparisonRecord rec;
  rec.group = prompt.index_map;
  rec.prompt_hash = prompt_hash(prompt.messages);

  GenerationRequest req;
  req.messages = prompt.messages;
  req.temperature = options.sampling.temperature;
  req.top_p = options.sampling.top_p;
  req.max_output_tokens = options.sampling.max_output_tokens;
  req.tags.kind = RequestKind::Judgment;
  req.tags.problem_id = options.problem_id;
  req.tags.candidate_ids = prompt.index_map;
  req.tags.permutation_seed = options.permutation_seed;

  for (std::size_t attempt = 0; attempt <= options.retry_budget; ++attempt) {
    req.sample_index = options.sample_base + attempt;
    req.tags.label = options.label + "/attempt=" + std::to_string(attempt);
    const GenerationResult result = backend.generate(req);
    rec.output_tokens += result.output_tokens;
    rec.prompt_tokens += result.prompt_tokens;
    rec.judge_text = result.text;
    rec.retries_used = attempt;
    try {
      rec.winner_position = parse_judgment(result.text, group.size());
      rec.winner_id = rec.group[rec.winner_position];
      return rec;
    } catch (const UnparseableJudgment&) {
    }
  }
  rec.degraded = true;
  rec.winner_position = 0;
  rec.winner_id = rec.group.front();
  return rec;
}

struct TournamentOptions {
  std::size_t arity = 8;
  std::uint64_t permutation_seed = 0;
  std::size_t retry_budget = 2;
  bool reshuffle_between_rounds = false;
  // Groups of one round judged concurrently.
  std::size_t concurrency = 1;
  JudgeSampling sampling;
  // Distinguishes repeated tournaments over the same pool in replay keys.
  std::size_t repeat_index = 0;
  std::string problem_id;
  std::string label = "genselect";
};

struct TournamentOutcome {
  std::string winner_id;
  Bracket bracket;
  // Ordered by (round_index, group_index).
  std::vector<ComparisonRecord> comparisons;
  std::size_t rounds_executed = 0;
  std::size_t total_comparisons = 0;
  std::size_t total_judge_output_tokens = 0;
  std::size_t degraded_comparisons = 0;
};

// A tournament that stopped on a backend error. Carries the comparisons that
// completed before the failure.
class TournamentFailed : public Error {
 public:
  TournamentFailed(const std::string& what, TournamentOutcome partial)
      : Error(what), partial_(std::move(partial)) {}
  const TournamentOutcome& partial() const noexcept { return partial_; }

 private:
  TournamentOutcome partial_;
};

inline TournamentOutcome run_tournament(std::string_view problem,
                                        std::span<const SolutionView> views,
                                        const PromptKit& kit, Backend& backend,
                                        const TournamentOptions& options) {
  if (views.empty()) throw InvalidGroup("a tournament needs at least one candidate");
  std::map<std::string, const SolutionView*> by_id;
  std::vector<std::string> ids;
  for (const auto& v : views) {
    if (!by_id.emplace(v.candidate_id, &v).second) {
      throw InvalidGroup("duplicate candidate id '" + v.candidate_id + "'");
    }
    ids.push_back(v.candidate_id);
  }

  TournamentOutcome out;
  out.bracket = build_bracket(ids, options.arity, options.permutation_seed,
                              options.reshuffle_between_rounds);
  const std::size_t samples_per_comparison = options.retry_budget + 1;

  std::vector<std::string> current = out.bracket.seeded_order;
  for (std::size_t r = 0; r < out.bracket.rounds.size(); ++r) {
    const auto& round = out.bracket.rounds[r];
    std::vector<std::string> winners(round.size());
    std::vector<std::optional<ComparisonRecord>> records(round.size());
    try {
      parallel_for(round.size(), options.concurrency, [&](std::size_t g) {
        const auto& group = round[g];
        if (group.size() == 1) {
          winners[g] = current[group.front()];
          return;
        }
        std::vector<SolutionView> group_views;
        for (auto e : group) group_views.push_back(*by_id.at(current[e]));
        ComparisonOptions co;
        co.problem_id = options.problem_id;
        co.retry_budget = options.retry_budget;
        co.sampling = options.sampling;
        co.sample_base = options.repeat_index * samples_per_comparison;
        co.permutation_seed = options.permutation_seed;
        co.label = options.label + "/rep=" + std::to_string(options.repeat_index) +
                   "/round=" + std::to_string(r) + "/group=" + std::to_string(g);
        ComparisonRecord rec = run_group_comparison(problem, group_views, kit, backend, co);
        rec.round_index = r;
        rec.group_index = g;
        winners[g] = rec.winner_id;
        records[g] = std::move(rec);
      });
    } catch (const std::exception& e) {
      for (auto& rec : records) {
        if (!rec) continue;
        out.total_judge_output_tokens += rec->output_tokens;
        out.degraded_comparisons += rec->degraded ? 1 : 0;
        out.comparisons.push_back(std::move(*rec));
      }
      out.rounds_executed = r;
      out.total_comparisons = out.comparisons.size();
      throw TournamentFailed(e.what(), std::move(out));
    }
    for (auto& rec : records) {
      if (!rec) continue;
      out.total_judge_output_tokens += rec->output_tokens;
      out.degraded_comparisons += rec->degraded ? 1 : 0;
      out.comparisons.push_back(std::move(*rec));
    }
    current = std::move(winners);
  }
  out.winner_id = current.front();
  out.rounds_executed = out.bracket.rounds.size();
  out.total_comparisons = out.comparisons.size();
  return out;
}

}  // namespace genselect
