#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <functional>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "genselect/scripted_judge.hpp"
#include "genselect/tournament.hpp"

using namespace genselect;

namespace {

std::vector<std::string> ids(std::size_t m) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < m; ++i) out.push_back("c" + std::to_string(i));
  return out;
}

std::vector<SolutionView> views(std::size_t m) {
  std::vector<SolutionView> out;
  for (const auto& id : ids(m)) out.push_back({id, "solution " + id, 5});
  return out;
}

// Smallest r with arity^r >= m.
std::size_t ceil_log(std::size_t m, std::size_t arity) {
  std::size_t r = 0, reach = 1;
  while (reach < m) {
    reach *= arity;
    ++r;
  }
  return r;
}

// Answers with a fixed text, or with a function of the request.
class FakeJudge : public Backend {
 public:
  using Fn = std::function<std::string(const GenerationRequest&)>;
  explicit FakeJudge(Fn fn) : fn_(std::move(fn)) {}

  GenerationResult generate(const GenerationRequest& req) override {
    std::lock_guard lock(mutex_);
    seen.push_back(req);
    return {fn_(req), 10, 3, FinishReason::Stop, 0};
  }
  bool deterministic() const override { return true; }

  std::vector<GenerationRequest> seen;

 private:
  std::mutex mutex_;
  Fn fn_;
};

}  // namespace

TEST(CountComparisons, Examples) {
  EXPECT_EQ(count_comparisons(64, 2), (RoundCount{6, 63}));
  EXPECT_EQ(count_comparisons(64, 16), (RoundCount{2, 5}));
  EXPECT_EQ(count_comparisons(1, 8), (RoundCount{0, 0}));
  EXPECT_EQ(count_comparisons(64, 64), (RoundCount{1, 1}));
  EXPECT_EQ(count_comparisons(5, 4), (RoundCount{2, 2}));
  EXPECT_THROW(count_comparisons(4, 1), InvalidGroup);
}

TEST(Bracket, TenCandidatesArityFour) {
  const auto b = build_bracket(ids(10), 4, 123);
  ASSERT_EQ(b.round_count(), 2u);
  ASSERT_EQ(b.rounds[0].size(), 3u);
  EXPECT_EQ(b.rounds[0][0].size(), 4u);
  EXPECT_EQ(b.rounds[0][1].size(), 4u);
  EXPECT_EQ(b.rounds[0][2].size(), 2u);
  ASSERT_EQ(b.rounds[1].size(), 1u);
  EXPECT_EQ(b.rounds[1][0].size(), 3u);
  EXPECT_EQ(b.comparisons(), 4u);
}

TEST(Bracket, ByeAdvancesUnjudged) {
  // 5 with arity 4: groups {4, 1}; the single one advances for free.
  const auto b = build_bracket(ids(5), 4, 1);
  ASSERT_EQ(b.rounds[0].size(), 2u);
  EXPECT_EQ(b.rounds[0][1].size(), 1u);
  int calls = 0;
  const auto champ = play_bracket(b, [&](std::size_t, std::size_t, const auto& group) {
    ++calls;
    // Prefer the bye candidate whenever it shows up.
    const auto it = std::find(group.begin(), group.end(), b.seeded_order[4]);
    return it == group.end() ? 0 : static_cast<std::size_t>(it - group.begin());
  });
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(champ, b.seeded_order[4]);
}

TEST(Bracket, RejectsDegenerateInput) {
  EXPECT_THROW(build_bracket({}, 2, 0), InvalidGroup);
  EXPECT_THROW(build_bracket(ids(3), 1, 0), InvalidGroup);
  const auto single = build_bracket(ids(1), 8, 0);
  EXPECT_EQ(single.round_count(), 0u);
  EXPECT_EQ(play_bracket(single, [](auto, auto, const auto&) -> std::size_t { return 0; }), "c0");
}

TEST(BracketProperty, StructuralInvariants) {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 600; ++trial) {
    const std::size_t m = 1 + gen() % 130;
    const std::size_t n = 2 + gen() % 20;
    const std::uint64_t seed = gen();
    const bool reshuffle = gen() % 2;
    const auto b = build_bracket(ids(m), n, seed, reshuffle);

    auto sorted = b.seeded_order;
    std::sort(sorted.begin(), sorted.end());
    auto expect = ids(m);
    std::sort(expect.begin(), expect.end());
    ASSERT_EQ(sorted, expect);

    EXPECT_EQ(b.round_count(), ceil_log(m, n)) << m << " " << n;
    EXPECT_EQ((RoundCount{b.round_count(), b.comparisons()}), count_comparisons(m, n));

    std::size_t entrants = m, eliminated = 0;
    for (const auto& round : b.rounds) {
      std::vector<std::size_t> seen;
      for (std::size_t g = 0; g < round.size(); ++g) {
        const auto& grp = round[g];
        ASSERT_FALSE(grp.empty());
        EXPECT_LE(grp.size(), n);
        // Only the last group may be short.
        if (g + 1 < round.size()) {
          EXPECT_EQ(grp.size(), n);
        }
        if (grp.size() >= 2) eliminated += grp.size() - 1;
        seen.insert(seen.end(), grp.begin(), grp.end());
      }
      std::sort(seen.begin(), seen.end());
      for (std::size_t i = 0; i < seen.size(); ++i) ASSERT_EQ(seen[i], i);
      EXPECT_EQ(seen.size(), entrants);
      entrants = round.size();
    }
    EXPECT_EQ(entrants, 1u);
    EXPECT_EQ(eliminated, m - 1);

    const auto again = build_bracket(ids(m), n, seed, reshuffle);
    EXPECT_EQ(again.seeded_order, b.seeded_order);
    EXPECT_EQ(again.rounds, b.rounds);
  }
}

TEST(BracketProperty, SeedsSpreadPermutations) {
  std::set<std::vector<std::string>> orders;
  for (std::uint64_t s = 0; s < 50; ++s) orders.insert(build_bracket(ids(8), 2, s).seeded_order);
  EXPECT_GT(orders.size(), 45u);
}

TEST(BracketProperty, EveryPositionEquallyLikely) {
  // Candidate c0 should land at each of 6 positions with frequency 1/6.
  std::vector<int> pos(6, 0);
  const int n = 12000;
  for (int s = 0; s < n; ++s) {
    const auto b = build_bracket(ids(6), 2, static_cast<std::uint64_t>(s));
    ++pos[std::find(b.seeded_order.begin(), b.seeded_order.end(), "c0") - b.seeded_order.begin()];
  }
  for (int c : pos) EXPECT_NEAR(c / double(n), 1.0 / 6, 0.02);
}

TEST(BracketProperty, OracleSandwich) {
  // Perfect judge wins iff any candidate is correct; adversarial judge only
  // when every candidate is.
  std::mt19937_64 gen(77);
  for (int trial = 0; trial < 800; ++trial) {
    const std::size_t m = 1 + gen() % 12;
    const std::size_t n = 2 + gen() % 7;
    std::vector<bool> correct(m);
    for (std::size_t i = 0; i < m; ++i) correct[i] = gen() % 3 == 0;
    const bool any = std::find(correct.begin(), correct.end(), true) != correct.end();
    const bool all = std::find(correct.begin(), correct.end(), false) == correct.end();
    const auto b = build_bracket(ids(m), n, gen());
    rng::Engine eng(gen());
    auto judge_with = [&](double p) {
      return [&, p](std::size_t, std::size_t, const std::vector<std::string>& group) {
        std::vector<bool> flags;
        for (const auto& id : group) flags.push_back(correct[std::stoul(id.substr(1))]);
        return scripted_pick(flags, JudgeModel::scripted(p), eng);
      };
    };
    const auto best = play_bracket(b, judge_with(1.0));
    const auto worst = play_bracket(b, judge_with(0.0));
    EXPECT_EQ(correct[std::stoul(best.substr(1))], any);
    EXPECT_EQ(correct[std::stoul(worst.substr(1))], all);
  }
}

TEST(GroupComparison, ParsesAndMapsBackToCandidate) {
  PromptKit kit;
  const auto vs = views(3);
  FakeJudge judge([](const GenerationRequest&) { return std::string("Judgment: 2"); });
  ComparisonOptions opt;
  opt.problem_id = "P";
  opt.sample_base = 6;
  opt.label = "g";
  const auto rec = run_group_comparison("problem", vs, kit, judge, opt);
  EXPECT_EQ(rec.winner_position, 2u);
  EXPECT_EQ(rec.winner_id, "c2");
  EXPECT_EQ(rec.retries_used, 0u);
  EXPECT_FALSE(rec.degraded);
  ASSERT_EQ(judge.seen.size(), 1u);
  EXPECT_EQ(judge.seen[0].sample_index, 6u);
  EXPECT_EQ(judge.seen[0].tags.kind, RequestKind::Judgment);
  EXPECT_EQ(judge.seen[0].tags.candidate_ids, (std::vector<std::string>{"c0", "c1", "c2"}));
}

TEST(GroupComparison, GarbageExhaustsRetriesAndDegrades) {
  PromptKit kit;
  const auto vs = views(4);
  FakeJudge judge([](const GenerationRequest&) { return std::string("I cannot decide."); });
  ComparisonOptions opt;
  opt.retry_budget = 2;
  const auto rec = run_group_comparison("problem", vs, kit, judge, opt);
  EXPECT_TRUE(rec.degraded);
  EXPECT_EQ(rec.winner_position, 0u);
  EXPECT_EQ(rec.winner_id, "c0");
  EXPECT_EQ(rec.retries_used, 2u);
  EXPECT_EQ(rec.output_tokens, 9u);
  ASSERT_EQ(judge.seen.size(), 3u);
  std::set<std::string> keys;
  for (const auto& r : judge.seen) keys.insert(request_key(r));
  EXPECT_EQ(keys.size(), 3u);
}

TEST(GroupComparison, RecoversOnRetry) {
  PromptKit kit;
  const auto vs = views(2);
  FakeJudge judge([](const GenerationRequest& r) {
    return r.sample_index == 0 ? std::string("Judgment: 7") : std::string("Judgment: 1");
  });
  const auto rec = run_group_comparison("problem", vs, kit, judge, {});
  EXPECT_EQ(rec.winner_id, "c1");
  EXPECT_EQ(rec.retries_used, 1u);
  EXPECT_FALSE(rec.degraded);
}

TEST(Tournament, SingleCandidateNeedsNoJudge) {
  PromptKit kit;
  const auto vs = views(1);
  FakeJudge judge([](const GenerationRequest&) -> std::string { throw std::logic_error("called"); });
  const auto out = run_tournament("p", vs, kit, judge, {});
  EXPECT_EQ(out.winner_id, "c0");
  EXPECT_EQ(out.total_comparisons, 0u);
  EXPECT_EQ(out.rounds_executed, 0u);
}

TEST(Tournament, CountsMatchThePlan) {
  PromptKit kit;
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 1 + gen() % 40;
    TournamentOptions opt;
    opt.arity = 2 + gen() % 8;
    opt.permutation_seed = gen();
    opt.concurrency = 1 + gen() % 4;
    const auto vs = views(m);
    FakeJudge judge([](const GenerationRequest&) { return std::string("Judgment: 0"); });
    const auto out = run_tournament("p", vs, kit, judge, opt);
    const auto plan = count_comparisons(m, opt.arity);
    EXPECT_EQ(out.total_comparisons, plan.comparisons);
    EXPECT_EQ(out.rounds_executed, plan.rounds);
    EXPECT_EQ(judge.seen.size(), plan.comparisons);
    EXPECT_EQ(out.total_judge_output_tokens, 3 * plan.comparisons);
    // Always picking position 0 crowns the first seeded entrant.
    EXPECT_EQ(out.winner_id, out.bracket.seeded_order.front());
    for (std::size_t i = 1; i < out.comparisons.size(); ++i) {
      const auto& a = out.comparisons[i - 1];
      const auto& b = out.comparisons[i];
      EXPECT_TRUE(std::tie(a.round_index, a.group_index) < std::tie(b.round_index, b.group_index));
    }
  }
}

TEST(Tournament, RepeatIndexSeparatesReplayKeys) {
  PromptKit kit;
  const auto vs = views(2);
  FakeJudge judge([](const GenerationRequest&) { return std::string("Judgment: 0"); });
  TournamentOptions opt;
  opt.arity = 2;
  opt.retry_budget = 2;
  for (std::size_t rep = 0; rep < 3; ++rep) {
    opt.repeat_index = rep;
    run_tournament("p", vs, kit, judge, opt);
  }
  ASSERT_EQ(judge.seen.size(), 3u);
  EXPECT_EQ(judge.seen[0].sample_index, 0u);
  EXPECT_EQ(judge.seen[1].sample_index, 3u);
  EXPECT_EQ(judge.seen[2].sample_index, 6u);
}

TEST(Tournament, FailureKeepsCompletedComparisons) {
  PromptKit kit;
  const auto vs = views(8);
  // Round 0 succeeds; the final round's backend call throws.
  FakeJudge judge([](const GenerationRequest& r) -> std::string {
    if (r.tags.label.find("round=1") != std::string::npos) throw BackendUnavailable("gone");
    return "Judgment: 1";
  });
  TournamentOptions opt;
  opt.arity = 4;
  try {
    run_tournament("p", vs, kit, judge, opt);
    FAIL() << "expected TournamentFailed";
  } catch (const TournamentFailed& e) {
    EXPECT_EQ(e.partial().comparisons.size(), 2u);
    EXPECT_EQ(e.partial().rounds_executed, 1u);
    EXPECT_EQ(e.partial().total_judge_output_tokens, 6u);
    EXPECT_NE(std::string(e.what()).find("gone"), std::string::npos);
  }
}

TEST(Tournament, DuplicateIdsRejected) {
  PromptKit kit;
  std::vector<SolutionView> vs = {{"a", "x", 1}, {"a", "y", 1}};
  FakeJudge judge([](const GenerationRequest&) { return std::string("Judgment: 0"); });
  EXPECT_THROW(run_tournament("p", vs, kit, judge, {}), InvalidGroup);
}

TEST(Tournament, ScriptedJudgeEndToEnd) {
  PromptKit kit;
  const auto vs = views(16);
  ScriptedJudgeBackend judge([](const std::string&, const std::string& id) { return id == "c11"; },
                             JudgeModel::scripted(1.0), JudgeModel::scripted(1.0));
  for (std::size_t arity : {2u, 3u, 4u, 8u, 16u}) {
    TournamentOptions opt;
    opt.arity = arity;
    opt.permutation_seed = arity * 7;
    EXPECT_EQ(run_tournament("p", vs, kit, judge, opt).winner_id, "c11") << arity;
  }
}
