#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "genselect/judge_sim.hpp"

using namespace genselect;
using namespace genselect::sim;

namespace {

// Exact accuracy of one knockout with i.i.d. candidates. Subtrees are
// disjoint, so group members are independent; a scripted judge returns a
// correct winner with probability P(all) + p * P(mixed), a uniform judge
// with the mean of its members' probabilities. Bracket shapes do not depend
// on the permutation, so seed 0 stands for all of them.
double exact_accuracy(std::size_t m, std::size_t arity, double q, const JudgeModel& judge) {
  std::vector<std::string> ids(m);
  for (std::size_t i = 0; i < m; ++i) ids[i] = std::to_string(i);
  const auto b = build_bracket(ids, arity, 0);
  std::vector<double> prob(m, q);
  for (const auto& round : b.rounds) {
    std::vector<double> next;
    for (const auto& g : round) {
      if (judge.kind == JudgeModel::Kind::Uniform) {
        double s = 0;
        for (auto e : g) s += prob[e];
        next.push_back(s / static_cast<double>(g.size()));
        continue;
      }
      double all = 1, none = 1;
      for (auto e : g) {
        all *= prob[e];
        none *= 1 - prob[e];
      }
      next.push_back(g.size() == 1 ? all : all + judge.p * (1 - all - none));
    }
    prob = std::move(next);
  }
  return prob.front();
}

SimConfig config(std::size_t m, double q, JudgeModel judge, std::size_t trials = 10000) {
  SimConfig c;
  c.candidates = m;
  c.candidate_accuracy = q;
  c.judge = judge;
  c.trials = trials;
  c.seed = 17;
  return c;
}

}  // namespace

TEST(ExactOracle, AgreesWithClosedForms) {
  // Self-check of the oracle against textbook cases.
  for (std::size_t n : {2u, 3u, 4u, 8u}) {
    EXPECT_NEAR(exact_accuracy(8, n, 0.5, JudgeModel::scripted(1.0)), 1 - std::pow(0.5, 8), 1e-12);
    EXPECT_NEAR(exact_accuracy(8, n, 0.5, JudgeModel::scripted(0.0)), std::pow(0.5, 8), 1e-12);
    EXPECT_NEAR(exact_accuracy(11, n, 0.3, JudgeModel::uniform()), 0.3, 1e-12);
  }
  const double q = 0.5, p = 0.7;
  EXPECT_NEAR(exact_accuracy(8, 8, q, JudgeModel::scripted(p)),
              std::pow(q, 8) + p * (1 - std::pow(q, 8) - std::pow(1 - q, 8)), 1e-12);
}

TEST(Simulate, PerfectJudgeClosedForm) {
  const auto r = simulate(config(8, 0.5, JudgeModel::scripted(1.0)));
  const double expect = 1 - std::pow(0.5, 8);
  for (const auto& row : r.rows) {
    const double se = std::sqrt(expect * (1 - expect) / row.trials);
    EXPECT_LE(std::abs(row.accuracy - expect), 3 * se) << row.arity;
  }
}

TEST(Simulate, UniformJudgeGivesQ) {
  for (double q : {0.2, 0.5, 0.8}) {
    const auto r = simulate(config(8, q, JudgeModel::uniform()));
    for (const auto& row : r.rows) {
      EXPECT_LE(std::abs(row.accuracy - q), 3 * std::sqrt(q * (1 - q) / row.trials))
          << q << " " << row.arity;
    }
  }
}

TEST(Simulate, MatchesExactOracleAcrossSettings) {
  struct Case {
    std::size_t m;
    double q, p;
  };
  for (const auto& c : {Case{5, 0.4, 0.8}, Case{12, 0.3, 0.6}, Case{16, 0.6, 0.95},
                        Case{7, 0.5, 0.5}, Case{30, 0.2, 0.9}}) {
    auto cfg = config(c.m, c.q, JudgeModel::scripted(c.p), 20000);
    cfg.arities = {2, 3, 4, 8};
    const auto r = simulate(cfg);
    for (const auto& row : r.rows) {
      const double e = exact_accuracy(c.m, row.arity, c.q, JudgeModel::scripted(c.p));
      const double se = std::sqrt(e * (1 - e) / row.trials);
      EXPECT_LE(std::abs(row.accuracy - e), 4 * se + 1e-9)
          << "m=" << c.m << " n=" << row.arity << " exact=" << e;
    }
  }
}

TEST(Simulate, SingleCandidateIsExact) {
  const auto r = simulate(config(1, 0.37, JudgeModel::scripted(0.2)));
  for (const auto& row : r.rows) {
    EXPECT_DOUBLE_EQ(row.accuracy, 0.37);
    EXPECT_EQ(row.mean_comparisons, 0.0);
    EXPECT_EQ(row.mean_rounds, 0.0);
  }
}

TEST(Simulate, StructureMatchesCountComparisons) {
  for (std::size_t m : {2u, 9u, 33u, 64u}) {
    auto cfg = config(m, 0.5, JudgeModel::scripted(0.9), 200);
    cfg.arities = {2, 3, 4, 8, 16};
    for (const auto& row : simulate(cfg).rows) {
      const auto plan = count_comparisons(m, row.arity);
      EXPECT_EQ(row.mean_comparisons, static_cast<double>(plan.comparisons));
      EXPECT_EQ(row.mean_rounds, static_cast<double>(plan.rounds));
    }
  }
}

TEST(Simulate, MonotoneInJudgeQuality) {
  for (std::size_t n : {2u, 8u}) {
    auto at = [&](double p) {
      auto cfg = config(8, 0.4, JudgeModel::scripted(p));
      cfg.arities = {n};
      return simulate(cfg).rows.at(0);
    };
    const auto hi = at(1.0), mid = at(0.5), lo = at(0.0);
    const auto gap = [](const ArityResult& a, const ArityResult& b) {
      return (a.accuracy - b.accuracy) /
             std::sqrt(a.standard_error * a.standard_error + b.standard_error * b.standard_error);
    };
    EXPECT_GT(gap(hi, mid), 3.0);
    EXPECT_GT(gap(mid, lo), 3.0);
  }
}

TEST(Simulate, ReproducibleAndThreadIndependent) {
  auto cfg = config(16, 0.5, JudgeModel::scripted(0.8), 3000);
  const auto a = simulate(cfg);
  const auto b = simulate(cfg);
  cfg.threads = 4;
  const auto c = simulate(cfg);
  ASSERT_EQ(a.rows.size(), c.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].correct, b.rows[i].correct);
    EXPECT_EQ(a.rows[i].correct, c.rows[i].correct);
  }
  cfg.seed += 1;
  const auto d = simulate(cfg);
  bool differs = false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) differs |= a.rows[i].correct != d.rows[i].correct;
  EXPECT_TRUE(differs);
}

TEST(Simulate, EmpiricalMode) {
  SimConfig cfg;
  cfg.empirical = {{true, false, false, false}, {false, false}, {true, true, true}};
  cfg.judge = JudgeModel::scripted(1.0);
  cfg.trials = 300;
  cfg.arities = {2, 4};
  for (const auto& row : simulate(cfg).rows) EXPECT_EQ(row.correct, 200u);

  cfg.judge = JudgeModel::uniform();
  cfg.empirical = {{true, false, false, false}};
  cfg.trials = 20000;
  for (const auto& row : simulate(cfg).rows) {
    EXPECT_NEAR(row.accuracy, 0.25, 3 * std::sqrt(0.25 * 0.75 / 20000));
  }
}

TEST(Simulate, ConfigValidation) {
  auto bad = config(8, 1.5, JudgeModel::scripted(1.0));
  EXPECT_THROW(simulate(bad), ConfigError);
  bad = config(8, 0.5, JudgeModel::scripted(1.0));
  bad.trials = 0;
  EXPECT_THROW(simulate(bad), ConfigError);
  bad = config(8, 0.5, JudgeModel::scripted(1.0));
  bad.arities = {1};
  EXPECT_THROW(simulate(bad), ConfigError);
  bad = config(8, 0.5, JudgeModel::scripted(-0.1));
  EXPECT_THROW(simulate(bad), ConfigError);
}

TEST(Plurality, FirstSeenBreaksTies) {
  EXPECT_EQ(plurality_first({1, 0, 0, 1}), 1);
  EXPECT_EQ(plurality_first({2, 0, 0}), 0);
  EXPECT_EQ(plurality_first({3}), 3);
}

TEST(BudgetSplit, SingleSampleReducesToQ) {
  BudgetSplitConfig cfg;
  cfg.candidate_accuracy = 0.3;
  cfg.sizes = {1};
  cfg.trials = 20000;
  const auto row = budget_split_study(cfg).at(0);
  const double tol = 3 * std::sqrt(0.3 * 0.7 / cfg.trials);
  EXPECT_NEAR(row.majority_2m, 0.3, tol);
  EXPECT_NEAR(row.genselect_m, 0.3, tol);
  EXPECT_EQ(row.units_a, 2u);
  EXPECT_EQ(row.generation_units_b, 1u);
  EXPECT_EQ(row.judge_units_b, 0u);
}

TEST(BudgetSplit, PerfectJudgeBeatsMajorityAtLowAccuracy) {
  BudgetSplitConfig cfg;
  cfg.sizes = {8};
  const auto row = budget_split_study(cfg).at(0);
  // GenSelect with a perfect judge reaches pass@8.
  EXPECT_NEAR(row.genselect_m, 1 - std::pow(0.7, 8), 3 * row.genselect_m_se + 1e-3);
  EXPECT_GT(row.genselect_m - row.majority_2m,
            3 * std::hypot(row.genselect_m_se, row.majority_2m_se));
  EXPECT_EQ(row.judge_units_b, 8u);
}

TEST(BudgetSplit, UniformJudgeLosesToMajority) {
  BudgetSplitConfig cfg;
  cfg.judge = JudgeModel::uniform();
  cfg.sizes = {8, 16};
  for (const auto& row : budget_split_study(cfg)) {
    EXPECT_GT(row.majority_2m - row.genselect_m,
              3 * std::hypot(row.genselect_m_se, row.majority_2m_se))
        << row.m;
  }
}

TEST(BudgetSplit, ReproducibleAndValidated) {
  BudgetSplitConfig cfg;
  cfg.trials = 500;
  const auto a = budget_split_study(cfg), b = budget_split_study(cfg);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].majority_2m, b[i].majority_2m);
    EXPECT_EQ(a[i].genselect_m, b[i].genselect_m);
  }
  cfg.distractors = 0;
  EXPECT_THROW(budget_split_study(cfg), ConfigError);
}

TEST(Tables, MarkdownAndCsvShapes) {
  auto cfg = config(8, 0.5, JudgeModel::scripted(1.0), 100);
  const auto r = simulate(cfg);
  const auto md = to_markdown(r);
  const auto csv = to_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_EQ(std::count(md.begin(), md.end(), '\n'), 6);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "arity,trials,correct,accuracy,standard_error,mean_comparisons,mean_rounds");
  EXPECT_EQ(r.at_arity(4).arity, 4u);
  EXPECT_THROW(r.at_arity(5), Error);
}
