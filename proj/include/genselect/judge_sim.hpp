#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "genselect/errors.hpp"
#include "genselect/parallel.hpp"
#include "genselect/random.hpp"
#include "genselect/scripted_judge.hpp"
#include "genselect/tournament.hpp"

// Monte-Carlo study of knockout tournaments under a simulated judge. No
// prompts or model calls: candidates are correctness flags and the judge is
// scripted_pick().

namespace genselect::sim {

struct SimConfig {
  std::size_t candidates = 8;
  std::vector<std::size_t> arities{2, 4, 8, 16};
  // Probability each candidate is correct (i.i.d. mode).
  double candidate_accuracy = 0.5;
  // Empirical mode when non-empty: trial t replays vector t mod size().
  std::vector<std::vector<bool>> empirical;
  JudgeModel judge = JudgeModel::scripted(1.0);
  std::size_t trials = 10000;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const {
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (!(candidate_accuracy >= 0.0 && candidate_accuracy <= 1.0)) {
      throw ConfigError("candidate accuracy must lie in [0, 1]");
    }
    if (!(judge.p >= 0.0 && judge.p <= 1.0)) throw ConfigError("judge p must lie in [0, 1]");
    if (arities.empty()) throw ConfigError("arity set is empty");
    for (auto n : arities) {
      if (n < 2) throw ConfigError("arity must be >= 2");
    }
    if (empirical.empty() && candidates < 1) throw ConfigError("need at least one candidate");
    for (const auto& v : empirical) {
      if (v.empty()) throw ConfigError("empirical correctness vector is empty");
    }
  }
};

struct ArityResult {
  std::size_t arity = 0;
  std::size_t trials = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  double standard_error = 0.0;
  double mean_comparisons = 0.0;
  double mean_rounds = 0.0;
};

struct SimResult {
  std::vector<ArityResult> rows;

  const ArityResult& at_arity(std::size_t n) const {
    for (const auto& r : rows) {
      if (r.arity == n) return r;
    }
    throw Error("no simulation row for arity " + std::to_string(n));
  }
};

inline double binomial_standard_error(double accuracy, std::size_t trials) {
  return std::sqrt(accuracy * (1.0 - accuracy) / static_cast<double>(trials));
}

namespace detail {

inline const std::vector<std::string>& numbered_ids(std::size_t m) {
  thread_local std::map<std::size_t, std::vector<std::string>> cache;
  auto& ids = cache[m];
  if (ids.empty()) {
    for (std::size_t i = 0; i < m; ++i) ids.push_back(std::to_string(i));
  }
  return ids;
}

// Winner position (into `flags`) of one knockout under `judge`.
inline std::size_t play_once(const std::vector<bool>& flags, std::size_t arity,
                             const JudgeModel& judge, rng::Engine& eng, std::size_t* rounds,
                             std::size_t* comparisons) {
  const auto& ids = numbered_ids(flags.size());
  const Bracket b = build_bracket(ids, arity, eng());
  if (rounds) *rounds = b.round_count();
  if (comparisons) *comparisons = b.comparisons();
  std::vector<bool> group_flags;
  const std::string winner =
      play_bracket(b, [&](std::size_t, std::size_t, const std::vector<std::string>& group) {
        group_flags.clear();
        for (const auto& id : group) group_flags.push_back(flags[std::stoul(id)]);
        return scripted_pick(group_flags, judge, eng);
      });
  return std::stoul(winner);
}

}  // namespace detail

inline SimResult simulate(const SimConfig& config) {
  config.validate();
  SimResult result;
  const bool empirical = !config.empirical.empty();

  for (std::size_t arity : config.arities) {
    ArityResult row;
    row.arity = arity;
    row.trials = config.trials;

    if (!empirical && config.candidates == 1) {
      // Nothing to judge: the lone candidate wins.
      row.accuracy = config.candidate_accuracy;
      row.correct = static_cast<std::size_t>(
          std::llround(config.candidate_accuracy * static_cast<double>(config.trials)));
      result.rows.push_back(row);
      continue;
    }

    const std::size_t workers = std::max<std::size_t>(1, config.threads);
    std::vector<std::size_t> correct(workers, 0), rounds(workers, 0), comps(workers, 0);
    parallel_for(workers, workers, [&](std::size_t w) {
      std::vector<bool> flags;
      for (std::size_t t = w; t < config.trials; t += workers) {
        // Candidate draws depend only on (seed, trial) so every arity sees
        // the same candidate pools.
        rng::Engine pool(rng::derive_seed({config.seed, t}));
        if (empirical) {
          flags = config.empirical[t % config.empirical.size()];
        } else {
          flags.assign(config.candidates, false);
          for (std::size_t i = 0; i < config.candidates; ++i) {
            flags[i] = rng::bernoulli(pool, config.candidate_accuracy);
          }
        }
        rng::Engine judge_eng(rng::derive_seed({config.seed, t, arity}));
        std::size_t r = 0, c = 0;
        const std::size_t winner =
            detail::play_once(flags, arity, config.judge, judge_eng, &r, &c);
        correct[w] += flags[winner] ? 1 : 0;
        rounds[w] += r;
        comps[w] += c;
      }
    });
    for (std::size_t w = 0; w < workers; ++w) {
      row.correct += correct[w];
      row.mean_rounds += static_cast<double>(rounds[w]);
      row.mean_comparisons += static_cast<double>(comps[w]);
    }
    const double n = static_cast<double>(config.trials);
    row.accuracy = static_cast<double>(row.correct) / n;
    row.standard_error = binomial_standard_error(row.accuracy, config.trials);
    row.mean_rounds /= n;
    row.mean_comparisons /= n;
    result.rows.push_back(row);
  }
  if (empirical) return result;
  // M = 1 rows carry the exact value; fill in the structural columns.
  for (auto& row : result.rows) {
    if (config.candidates == 1) {
      row.mean_rounds = 0.0;
      row.mean_comparisons = 0.0;
    }
  }
  return result;
}

struct BudgetSplitConfig {
  double candidate_accuracy = 0.3;
  JudgeModel judge = JudgeModel::scripted(1.0);
  std::vector<std::size_t> sizes{4, 8, 16};
  std::size_t trials = 10000;
  std::uint64_t seed = 0;
  // Wrong answers are drawn uniformly from this many distinct values.
  std::size_t distractors = 3;
  // 0 means one M-way comparison per repeat.
  std::size_t arity = 0;
};

struct BudgetSplitRow {
  std::size_t m = 0;
  // (a) majority over 2M generations
  double majority_2m = 0.0;
  double majority_2m_se = 0.0;
  std::size_t units_a = 0;
  // (b) M generations + GenSelect@M
  double genselect_m = 0.0;
  double genselect_m_se = 0.0;
  std::size_t generation_units_b = 0;
  std::size_t judge_units_b = 0;
};

// Majority over small integer answers (0 is the correct one); ties go to the
// answer that appeared first.
inline int plurality_first(const std::vector<int>& answers) {
  std::vector<std::pair<int, std::size_t>> counts;  // answer, count (first-seen order)
  for (int a : answers) {
    auto it = std::find_if(counts.begin(), counts.end(), [&](auto& p) { return p.first == a; });
    if (it == counts.end()) {
      counts.emplace_back(a, 1);
    } else {
      ++it->second;
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < counts.size(); ++i) {
    if (counts[i].second > counts[best].second) best = i;
  }
  return counts[best].first;
}

// Compares spending 2M generation units on majority voting against M
// generations plus M GenSelect judge units, per pool size M.
inline std::vector<BudgetSplitRow> budget_split_study(const BudgetSplitConfig& config) {
  if (config.trials < 1) throw ConfigError("trials must be >= 1");
  if (config.distractors < 1) throw ConfigError("need at least one distractor answer");
  std::vector<BudgetSplitRow> rows;
  for (std::size_t m : config.sizes) {
    if (m < 1) throw ConfigError("pool size must be >= 1");
    const std::size_t arity = config.arity == 0 ? std::max<std::size_t>(m, 2) : config.arity;
    BudgetSplitRow row;
    row.m = m;
    row.units_a = 2 * m;
    row.generation_units_b = m;
    row.judge_units_b = m * count_comparisons(m, arity).comparisons;

    std::size_t ok_a = 0, ok_b = 0;
    std::vector<int> answers(2 * m), winners;
    std::vector<bool> flags(m);
    for (std::size_t t = 0; t < config.trials; ++t) {
      rng::Engine eng(rng::derive_seed({config.seed, m, t}));
      for (auto& a : answers) {
        a = rng::bernoulli(eng, config.candidate_accuracy)
                ? 0
                : 1 + static_cast<int>(rng::uniform_index(eng, config.distractors));
      }
      ok_a += plurality_first(answers) == 0 ? 1 : 0;

      for (std::size_t i = 0; i < m; ++i) flags[i] = answers[i] == 0;
      winners.clear();
      for (std::size_t k = 0; k < m; ++k) {
        const std::size_t w = detail::play_once(flags, arity, config.judge, eng, nullptr, nullptr);
        winners.push_back(answers[w]);
      }
      ok_b += plurality_first(winners) == 0 ? 1 : 0;
    }
    const double n = static_cast<double>(config.trials);
    row.majority_2m = static_cast<double>(ok_a) / n;
    row.majority_2m_se = binomial_standard_error(row.majority_2m, config.trials);
    row.genselect_m = static_cast<double>(ok_b) / n;
    row.genselect_m_se = binomial_standard_error(row.genselect_m, config.trials);
    rows.push_back(row);
  }
  return rows;
}

inline std::string fixed(double v, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

// Arity sweep laid out like a stability table: one row per N.
inline std::string to_markdown(const SimResult& r) {
  std::ostringstream out;
  out << "| N | Accuracy (%) | Std. err. (%) | Comparisons | Rounds |\n";
  out << "|---|---|---|---|---|\n";
  for (const auto& row : r.rows) {
    out << "| " << row.arity << " | " << fixed(100.0 * row.accuracy, 2) << " | "
        << fixed(100.0 * row.standard_error, 2) << " | " << fixed(row.mean_comparisons, 2)
        << " | " << fixed(row.mean_rounds, 2) << " |\n";
  }
  return out.str();
}

inline std::string to_csv(const SimResult& r) {
  std::ostringstream out;
  out << "arity,trials,correct,accuracy,standard_error,mean_comparisons,mean_rounds\n";
  for (const auto& row : r.rows) {
    out << row.arity << ',' << row.trials << ',' << row.correct << ','
        << fixed(row.accuracy, 6) << ',' << fixed(row.standard_error, 6) << ','
        << fixed(row.mean_comparisons, 4) << ',' << fixed(row.mean_rounds, 4) << '\n';
  }
  return out.str();
}

inline std::string to_markdown(const std::vector<BudgetSplitRow>& rows) {
  std::ostringstream out;
  out << "| M | Majority@2M (%) | Units | Gen(M) + GenSelect@M (%) | Gen units | Judge units |\n";
  out << "|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out << "| " << r.m << " | " << fixed(100.0 * r.majority_2m, 2) << " ± "
        << fixed(100.0 * r.majority_2m_se, 2) << " | " << r.units_a << " | "
        << fixed(100.0 * r.genselect_m, 2) << " ± " << fixed(100.0 * r.genselect_m_se, 2)
        << " | " << r.generation_units_b << " | " << r.judge_units_b << " |\n";
  }
  return out.str();
}

inline std::string to_csv(const std::vector<BudgetSplitRow>& rows) {
  std::ostringstream out;
  out << "m,majority_2m,majority_2m_se,units_a,genselect_m,genselect_m_se,generation_units_b,"
         "judge_units_b\n";
  for (const auto& r : rows) {
    out << r.m << ',' << fixed(r.majority_2m, 6) << ',' << fixed(r.majority_2m_se, 6) << ','
        << r.units_a << ',' << fixed(r.genselect_m, 6) << ',' << fixed(r.genselect_m_se, 6)
        << ',' << r.generation_units_b << ',' << r.judge_units_b << '\n';
  }
  return out.str();
}

}  // namespace genselect::sim
