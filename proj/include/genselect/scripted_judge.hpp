#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ranges>
#include <string>
#include <vector>

#include "genselect/backend.hpp"
#include "genselect/judgment.hpp"
#include "genselect/random.hpp"

namespace genselect {

// Behaviour of a simulated judge.
//   Scripted: with probability p prefer a correct candidate (uniformly among
//             the correct ones, or among all if none), otherwise prefer an
//             incorrect one (uniformly among those, or among all if none).
//   Uniform:  pick uniformly among all candidates of the group.
struct JudgeModel {
  enum class Kind { Scripted, Uniform };
  Kind kind = Kind::Scripted;
  double p = 1.0;

  static JudgeModel scripted(double p) { return {Kind::Scripted, p}; }
  static JudgeModel uniform() { return {Kind::Uniform, 0.0}; }
};

// Group position chosen by the judge. `flags` (correctness per position)
// must be non-empty.
template <std::ranges::random_access_range Flags>
std::size_t scripted_pick(const Flags& flags, const JudgeModel& model, rng::Engine& eng) {
  const std::size_t n = std::ranges::size(flags);
  if (model.kind == JudgeModel::Kind::Uniform) {
    return static_cast<std::size_t>(rng::uniform_index(eng, n));
  }
  const bool want_correct = rng::bernoulli(eng, model.p);
  std::size_t matching = 0;
  for (bool f : flags) matching += (f == want_correct) ? 1 : 0;
  if (matching == 0) return static_cast<std::size_t>(rng::uniform_index(eng, n));
  auto k = rng::uniform_index(eng, matching);
  for (std::size_t i = 0; i < n; ++i) {
    if (static_cast<bool>(flags[i]) == want_correct && k-- == 0) return i;
  }
  return 0;  // unreachable
}

// Judgment text in the grammar parse_judgment() reads.
template <std::ranges::random_access_range Flags>
std::string scripted_judge(const Flags& flags, double p, rng::Engine& eng) {
  const auto pick = scripted_pick(flags, JudgeModel::scripted(p), eng);
  return "Compared " + std::to_string(std::ranges::size(flags)) + " solutions.\n" +
         format_judgment(pick);
}

// Offline judge and verifier backend. Candidate correctness comes from an
// oracle keyed by (problem_id, candidate_id); the request's routing tags say
// which candidates are in the prompt. Each request draws from an RNG seeded
// by its content hash, so answers are reproducible.
class ScriptedJudgeBackend final : public Backend {
 public:
  using Oracle = std::function<bool(const std::string& problem_id,
                                    const std::string& candidate_id)>;
  using ModelFor = std::function<JudgeModel(const std::string& problem_id)>;

  ScriptedJudgeBackend(Oracle oracle, ModelFor judge_model, ModelFor verifier_model,
                       std::uint64_t seed = 0)
      : oracle_(std::move(oracle)),
        judge_model_(std::move(judge_model)),
        verifier_model_(std::move(verifier_model)),
        seed_(seed) {}

  ScriptedJudgeBackend(Oracle oracle, JudgeModel judge, JudgeModel verifier,
                       std::uint64_t seed = 0)
      : ScriptedJudgeBackend(
            std::move(oracle), [judge](const std::string&) { return judge; },
            [verifier](const std::string&) { return verifier; }, seed) {}

  GenerationResult generate(const GenerationRequest& request) override {
    request.validate();
    const std::string key = request_key(request);
    rng::Engine eng(rng::derive_seed({seed_, std::stoull(key.substr(0, 16), nullptr, 16)}));
    const auto& tags = request.tags;
    std::vector<bool> flags;
    for (const auto& id : tags.candidate_ids) flags.push_back(oracle_(tags.problem_id, id));
    if (flags.empty()) {
      throw BackendError("scripted judge needs candidate ids in the request tags");
    }

    GenerationResult result;
    switch (tags.kind) {
      case RequestKind::Judgment: {
        const auto pick = scripted_pick(flags, judge_model_(tags.problem_id), eng);
        result.text = "Compared " + std::to_string(flags.size()) + " solutions.\n" +
                      format_judgment(pick);
        break;
      }
      case RequestKind::Verification: {
        const JudgeModel m = verifier_model_(tags.problem_id);
        const bool truth = flags.front();
        const bool verdict = m.kind == JudgeModel::Kind::Uniform
                                 ? rng::bernoulli(eng, 0.5)
                                 : (rng::bernoulli(eng, m.p) ? truth : !truth);
        result.text = "Checked the solution.\n" + format_verdict(verdict);
        break;
      }
      default:
        throw BackendError(std::string("scripted judge cannot serve ") +
                           to_string(tags.kind) + " requests");
    }
    for (const auto& m : request.messages) result.prompt_tokens += estimate_tokens(m.text);
    result.output_tokens = estimate_tokens(result.text);
    return result;
  }

  bool deterministic() const override { return true; }

 private:
  Oracle oracle_;
  ModelFor judge_model_;
  ModelFor verifier_model_;
  std::uint64_t seed_;
};

}  // namespace genselect
