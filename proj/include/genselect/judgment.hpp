#pragma once

#include <cctype>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "genselect/errors.hpp"

// Output grammar of judge responses.
//
// GenSelect judges end with `Judgment: <index>` (also accepted: "best
// solution is <index>"); GenRM verifiers end with `Judgment: Yes|No`. In both
// cases the LAST marker in the text decides, since reasoning models often
// revise an earlier verdict.

namespace genselect {

namespace detail {

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::size_t skip_chars(std::string_view s, std::size_t i, std::string_view set) {
  while (i < s.size() && set.find(s[i]) != std::string_view::npos) ++i;
  return i;
}

inline std::size_t skip_word(std::string_view s, std::size_t i, std::string_view word) {
  if (s.substr(i, word.size()) == word) return i + word.size();
  return i;
}

// Position right after the separator following a "judgment" marker, or npos
// when the marker is not followed by ':' (markdown emphasis allowed).
inline std::size_t after_judgment_marker(std::string_view lower, std::size_t pos) {
  std::size_t i = pos + std::string_view("judgment").size();
  i = skip_chars(lower, i, " \t*_");
  if (i >= lower.size() || lower[i] != ':') return std::string_view::npos;
  return skip_chars(lower, i + 1, " \t*_[(#");
}

inline std::optional<long long> read_integer(std::string_view s, std::size_t i) {
  bool neg = false;
  if (i < s.size() && s[i] == '-') {
    neg = true;
    ++i;
  }
  if (i >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i]))) return std::nullopt;
  long long v = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
    v = v * 10 + (s[i] - '0');
    if (v > 1'000'000'000LL) return std::nullopt;
    ++i;
  }
  return neg ? -v : v;
}

// Integer following the marker at `pos`, if the occurrence is well formed.
inline std::optional<long long> index_after(std::string_view lower, std::size_t pos,
                                            bool judgment_marker) {
  std::size_t i;
  if (judgment_marker) {
    i = after_judgment_marker(lower, pos);
    if (i == std::string_view::npos) return std::nullopt;
  } else {
    i = pos + std::string_view("best solution").size();
    i = skip_chars(lower, i, " \t*_:");
    i = skip_word(lower, i, "is");
    i = skip_chars(lower, i, " \t*_:");
  }
  for (std::string_view word : {"solution", "index", "idx"}) {
    const std::size_t j = skip_word(lower, i, word);
    if (j != i) {
      i = skip_chars(lower, j, " \t*_:#");
      break;
    }
  }
  return read_integer(lower, i);
}

}  // namespace detail

// Index named by the last judgment marker. Throws UnparseableJudgment when no
// marker carries an integer or the last one is outside [0, group_size).
inline std::size_t parse_judgment(std::string_view judge_text, std::size_t group_size) {
  const std::string lower = detail::ascii_lower(judge_text);
  std::optional<long long> last;
  std::size_t last_pos = 0;
  for (auto [marker, is_judgment] :
       {std::pair<std::string_view, bool>{"judgment", true}, {"best solution", false}}) {
    std::size_t pos = 0;
    while ((pos = lower.find(marker, pos)) != std::string::npos) {
      if (auto v = detail::index_after(lower, pos, is_judgment)) {
        if (!last || pos >= last_pos) {
          last = v;
          last_pos = pos;
        }
      }
      pos += marker.size();
    }
  }
  if (!last) throw UnparseableJudgment("no judgment marker with an index");
  if (*last < 0 || static_cast<std::size_t>(*last) >= group_size) {
    throw UnparseableJudgment("judgment index " + std::to_string(*last) +
                              " outside [0, " + std::to_string(group_size) + ")");
  }
  return static_cast<std::size_t>(*last);
}

// Verdict named by the last `Judgment: Yes|No` marker; nullopt if none.
inline std::optional<bool> parse_verdict(std::string_view verifier_text) {
  const std::string lower = detail::ascii_lower(verifier_text);
  std::optional<bool> last;
  std::size_t pos = 0;
  while ((pos = lower.find("judgment", pos)) != std::string::npos) {
    const std::size_t i = detail::after_judgment_marker(lower, pos);
    pos += 8;
    if (i == std::string_view::npos) continue;
    const std::string_view rest = std::string_view(lower).substr(i);
    auto word_at = [&](std::string_view w) {
      if (!rest.starts_with(w)) return false;
      return rest.size() == w.size() ||
             !std::isalpha(static_cast<unsigned char>(rest[w.size()]));
    };
    if (word_at("yes") || word_at("correct") || word_at("true")) {
      last = true;
    } else if (word_at("no") || word_at("incorrect") || word_at("false")) {
      last = false;
    }
  }
  return last;
}

inline std::string format_judgment(std::size_t index) {
  return "Judgment: " + std::to_string(index);
}

inline std::string format_verdict(bool correct) {
  return correct ? "Judgment: Yes" : "Judgment: No";
}

}  // namespace genselect
