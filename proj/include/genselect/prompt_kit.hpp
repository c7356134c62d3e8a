#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "genselect/default_prompts.hpp"
#include "genselect/errors.hpp"

namespace genselect {

// Default heuristic: ceil(code points / 4). Deterministic and monotone in
// length.
inline std::size_t estimate_tokens(std::string_view text) {
  std::size_t code_points = 0;
  for (unsigned char c : text) {
    if ((c & 0xC0) != 0x80) ++code_points;
  }
  return (code_points + 3) / 4;
}

using TokenEstimator = std::function<std::size_t(std::string_view)>;

struct Message {
  std::string role;
  std::string text;

  bool operator==(const Message&) const = default;
};

// What a judge sees of one candidate: its summary, not the full trace.
struct SolutionView {
  std::string candidate_id;
  std::string summary_text;
  std::size_t token_estimate = 1;
};

struct RenderedPrompt {
  std::vector<Message> messages;
  // index_map[p] is the candidate shown as "Solution p". Empty for prompts
  // without indexed candidates.
  std::vector<std::string> index_map;
  std::size_t token_estimate = 0;
};

// A template with `{name}` placeholders. `{{` and `}}` are literal braces so
// LaTeX such as \boxed{{}} survives.
class PromptTemplate {
 public:
  PromptTemplate() = default;

  PromptTemplate(std::string_view source, std::set<std::string> allowed)
      : source_(source) {
    std::string literal;
    for (std::size_t i = 0; i < source.size(); ++i) {
      const char c = source[i];
      if (c == '{') {
        if (i + 1 < source.size() && source[i + 1] == '{') {
          literal.push_back('{');
          ++i;
          continue;
        }
        const std::size_t close = source.find('}', i);
        if (close == std::string_view::npos) {
          throw TemplateError("unterminated placeholder at offset " +
                              std::to_string(i));
        }
        std::string name(source.substr(i + 1, close - i - 1));
        if (!allowed.contains(name)) {
          throw TemplateError("unknown placeholder {" + name + "}");
        }
        segments_.push_back({std::move(literal), false});
        literal.clear();
        segments_.push_back({std::move(name), true});
        i = close;
      } else if (c == '}') {
        if (i + 1 < source.size() && source[i + 1] == '}') {
          literal.push_back('}');
          ++i;
          continue;
        }
        throw TemplateError("stray '}' at offset " + std::to_string(i));
      } else {
        literal.push_back(c);
      }
    }
    segments_.push_back({std::move(literal), false});
  }

  // Substituted values are inserted verbatim and never re-scanned.
  std::string render(const std::map<std::string, std::string, std::less<>>& values) const {
    std::string out;
    for (const auto& seg : segments_) {
      if (!seg.placeholder) {
        out += seg.text;
        continue;
      }
      if (auto it = values.find(seg.text); it != values.end()) out += it->second;
    }
    return out;
  }

  // The template with every placeholder left empty.
  std::string static_text() const { return render({}); }

  bool uses(std::string_view name) const {
    return std::any_of(segments_.begin(), segments_.end(), [&](const auto& s) {
      return s.placeholder && s.text == name;
    });
  }

  const std::string& source() const noexcept { return source_; }

 private:
  struct Segment {
    std::string text;
    bool placeholder;
  };
  std::string source_;
  std::vector<Segment> segments_;
};

struct PromptTemplates {
  PromptTemplate generation;
  PromptTemplate summary;
  PromptTemplate genrm;
  PromptTemplate genselect;
  PromptTemplate genselect_item;
  PromptTemplate equivalence;

  static PromptTemplates from_sources(std::string_view generation_src,
                                      std::string_view summary_src,
                                      std::string_view genrm_src,
                                      std::string_view genselect_src,
                                      std::string_view genselect_item_src,
                                      std::string_view equivalence_src) {
    PromptTemplates t;
    t.generation = PromptTemplate(generation_src, {"problem"});
    t.summary = PromptTemplate(summary_src, {"problem", "solution"});
    t.genrm = PromptTemplate(genrm_src, {"problem", "solution"});
    t.genselect = PromptTemplate(
        genselect_src, {"problem", "solutions", "num_solutions", "max_index"});
    t.genselect_item = PromptTemplate(genselect_item_src, {"index", "solution"});
    t.equivalence = PromptTemplate(equivalence_src, {"first", "second"});
    if (!t.genselect.uses("solutions")) {
      throw TemplateError("genselect template must contain {solutions}");
    }
    if (!t.genselect_item.uses("index") || !t.genselect_item.uses("solution")) {
      throw TemplateError("genselect_item template must contain {index} and {solution}");
    }
    return t;
  }

  static PromptTemplates defaults() {
    namespace d = default_prompts;
    return from_sources(d::kGeneration, d::kSummary, d::kGenrm, d::kGenselect,
                        d::kGenselectItem, d::kEquivalence);
  }

  // Reads <name>.txt for each template from `dir`; missing files fall back to
  // the built-in text.
  static PromptTemplates load_dir(const std::filesystem::path& dir) {
    namespace d = default_prompts;
    auto read = [&](const char* name, std::string_view fallback) {
      const auto path = dir / (std::string(name) + ".txt");
      if (!std::filesystem::exists(path)) return std::string(fallback);
      std::ifstream in(path, std::ios::binary);
      if (!in) throw TemplateError("cannot read " + path.string());
      std::ostringstream ss;
      ss << in.rdbuf();
      return ss.str();
    };
    return from_sources(read("generation", d::kGeneration), read("summary", d::kSummary),
                        read("genrm", d::kGenrm), read("genselect", d::kGenselect),
                        read("genselect_item", d::kGenselectItem),
                        read("equivalence", d::kEquivalence));
  }
};

struct PromptLimits {
  std::size_t context_limit = 40960;
  std::size_t reserved_output = 16384;
  std::size_t max_arity = 64;

  std::size_t prompt_budget() const {
    return context_limit > reserved_output ? context_limit - reserved_output : 0;
  }
};

// Renders every prompt the engine sends and keeps them inside the context
// budget. Prompt token estimates are additive: static template text plus the
// problem plus each view's own estimate, so backend-reported view sizes flow
// straight into the budget check.
class PromptKit {
 public:
  explicit PromptKit(PromptTemplates templates = PromptTemplates::defaults(),
                     PromptLimits limits = {},
                     TokenEstimator estimator = estimate_tokens)
      : templates_(std::move(templates)),
        limits_(limits),
        estimator_(std::move(estimator)) {
    if (limits_.context_limit <= limits_.reserved_output) {
      throw ConfigError("context_limit must exceed reserved_output");
    }
  }

  const PromptLimits& limits() const noexcept { return limits_; }
  const PromptTemplates& templates() const noexcept { return templates_; }

  std::size_t estimate(std::string_view text) const { return estimator_(text); }

  // `reported_tokens` (e.g. a summarizer's output usage) overrides the
  // heuristic when present and positive.
  SolutionView make_view(std::string candidate_id, std::string text,
                         std::size_t reported_tokens = 0) const {
    std::size_t est = reported_tokens > 0 ? reported_tokens : estimate(text);
    return {std::move(candidate_id), std::move(text), std::max<std::size_t>(est, 1)};
  }

  RenderedPrompt render_generation_prompt(std::string_view problem) const {
    RenderedPrompt p;
    p.messages.push_back(
        {"user", templates_.generation.render({{"problem", std::string(problem)}})});
    p.token_estimate =
        estimate(templates_.generation.static_text()) + estimate(problem);
    return p;
  }

  RenderedPrompt render_summary_prompt(std::string_view problem,
                                       std::string_view full_solution) const {
    RenderedPrompt p;
    p.messages.push_back({"user", templates_.summary.render(
                                      {{"problem", std::string(problem)},
                                       {"solution", std::string(full_solution)}})});
    p.token_estimate = estimate(templates_.summary.static_text()) +
                       estimate(problem) + estimate(full_solution);
    check_budget(p.token_estimate);
    return p;
  }

  RenderedPrompt render_genrm_prompt(std::string_view problem,
                                     const SolutionView& view) const {
    RenderedPrompt p;
    p.messages.push_back({"user", templates_.genrm.render(
                                      {{"problem", std::string(problem)},
                                       {"solution", view.summary_text}})});
    p.index_map.push_back(view.candidate_id);
    p.token_estimate = estimate(templates_.genrm.static_text()) +
                       estimate(problem) + view.token_estimate;
    check_budget(p.token_estimate);
    return p;
  }

  RenderedPrompt render_genselect_prompt(std::string_view problem,
                                         std::span<const SolutionView> views) const {
    if (views.size() < 2) {
      throw InvalidGroup("a GenSelect group needs at least 2 solutions, got " +
                         std::to_string(views.size()));
    }
    if (views.size() > limits_.max_arity) {
      throw InvalidGroup("group of " + std::to_string(views.size()) +
                         " exceeds max arity " + std::to_string(limits_.max_arity));
    }
    std::string block;
    RenderedPrompt p;
    for (std::size_t i = 0; i < views.size(); ++i) {
      if (i > 0) block += "\n";
      block += templates_.genselect_item.render(
          {{"index", std::to_string(i)}, {"solution", views[i].summary_text}});
      p.index_map.push_back(views[i].candidate_id);
    }
    p.messages.push_back({"user", templates_.genselect.render(
                                      {{"problem", std::string(problem)},
                                       {"solutions", block},
                                       {"num_solutions", std::to_string(views.size())},
                                       {"max_index", std::to_string(views.size() - 1)}})});
    p.token_estimate = genselect_estimate(problem, views);
    check_budget(p.token_estimate);
    return p;
  }

  RenderedPrompt render_equivalence_prompt(std::string_view first,
                                           std::string_view second) const {
    RenderedPrompt p;
    p.messages.push_back({"user", templates_.equivalence.render(
                                      {{"first", std::string(first)},
                                       {"second", std::string(second)}})});
    p.token_estimate = estimate(templates_.equivalence.static_text()) +
                       estimate(first) + estimate(second);
    return p;
  }

  // Token estimate of the GenSelect prompt over `views` without rendering
  // the solution text.
  std::size_t genselect_estimate(std::string_view problem,
                                 std::span<const SolutionView> views) const {
    return static_genselect_tokens(views.size()) + estimate(problem) +
           sum_views(views.begin(), views.end());
  }

  std::size_t genselect_estimate_for_sizes(std::string_view problem,
                                           std::span<const std::size_t> sizes) const {
    std::size_t total = static_genselect_tokens(sizes.size()) + estimate(problem);
    for (auto s : sizes) total += s;
    return total;
  }

  // Largest g <= |views| such that the GenSelect prompt over the g largest
  // views fits in context_limit - reserved_output. Returns 1 when not even two
  // fit and |views| when fewer than two views are given.
  std::size_t max_feasible_arity(std::string_view problem,
                                 std::span<const SolutionView> views,
                                 std::size_t context_limit,
                                 std::size_t reserved_output) const {
    if (context_limit <= reserved_output) {
      throw ConfigError("context_limit must exceed reserved_output");
    }
    if (views.size() < 2) return views.size();
    const std::size_t budget = context_limit - reserved_output;
    std::vector<std::size_t> sizes;
    sizes.reserve(views.size());
    for (const auto& v : views) sizes.push_back(v.token_estimate);
    std::sort(sizes.begin(), sizes.end(), std::greater<>());
    const std::size_t upper = std::min(views.size(), limits_.max_arity);
    std::size_t best = 1;
    for (std::size_t g = 2; g <= upper; ++g) {
      if (genselect_estimate_for_sizes(problem, std::span(sizes).first(g)) > budget) break;
      best = g;
    }
    return best;
  }

  std::size_t max_feasible_arity(std::string_view problem,
                                 std::span<const SolutionView> views) const {
    return max_feasible_arity(problem, views, limits_.context_limit,
                              limits_.reserved_output);
  }

 private:
  template <typename It>
  static std::size_t sum_views(It first, It last) {
    std::size_t total = 0;
    for (; first != last; ++first) total += first->token_estimate;
    return total;
  }

  std::size_t static_genselect_tokens(std::size_t group_size) const {
    std::size_t total = 0;
    std::string block;
    for (std::size_t i = 0; i < group_size; ++i) {
      if (i > 0) block += "\n";
      block += templates_.genselect_item.render({{"index", std::to_string(i)}});
    }
    total += estimate(templates_.genselect.render(
        {{"solutions", block},
         {"num_solutions", std::to_string(group_size)},
         {"max_index", std::to_string(group_size == 0 ? 0 : group_size - 1)}}));
    return total;
  }

  void check_budget(std::size_t estimate) const {
    if (estimate > limits_.prompt_budget()) {
      throw TokenBudgetExceeded(estimate, limits_.prompt_budget());
    }
  }

  PromptTemplates templates_;
  PromptLimits limits_;
  TokenEstimator estimator_;
};

}  // namespace genselect
