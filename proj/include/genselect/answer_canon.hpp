#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cctype>
#include <cstddef>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

// Final-answer extraction and normalization.
//
// A solution's final answer is the content of its last balanced \boxed{...}
// group. Answers are canonicalized into one of four kinds so that voting can
// group equivalent answers:
//
//   Integer   exact arbitrary-precision integer ("007" -> 7)
//   Rational  reduced fraction with positive denominator != 1
//             ("\frac{3}{6}", "3/6", "0.50" -> 1/2)
//   Decimal   significand * 10^exponent, produced for scientific notation
//             ("1.5e3", "1.5\times10^{3}")
//   Opaque    normalized LaTeX string when no numeric parse succeeds
//
// Numeric kinds compare by exact value; Opaque compares by string equality.

namespace genselect {

using BigInt = boost::multiprecision::cpp_int;

struct SourceSpan {
  std::size_t begin = 0;  // offset of the first character inside the braces
  std::size_t end = 0;    // offset one past the last character inside them
};

struct RawAnswer {
  std::string text;
  SourceSpan source_span;
};

class CanonicalAnswer {
 public:
  enum class Kind { Integer, Rational, Decimal, Opaque };

  static constexpr int kMaxDecimalExponent = 4096;

  static CanonicalAnswer integer(BigInt value) {
    CanonicalAnswer a;
    a.kind_ = Kind::Integer;
    a.num_ = std::move(value);
    a.den_ = 1;
    return a;
  }

  // Reduces to lowest terms with a positive denominator; collapses to Integer
  // when the reduced denominator is 1. `den` must be non-zero.
  static CanonicalAnswer rational(BigInt num, BigInt den) {
    if (den == 0) throw std::invalid_argument("zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    BigInt g = boost::multiprecision::gcd(num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
    if (den == 1) return integer(std::move(num));
    CanonicalAnswer a;
    a.kind_ = Kind::Rational;
    a.num_ = std::move(num);
    a.den_ = std::move(den);
    return a;
  }

  // Trailing zeros of the significand are folded into the exponent.
  static CanonicalAnswer decimal(BigInt significand, int exponent) {
    if (significand == 0) {
      exponent = 0;
    } else {
      while (significand % 10 == 0) {
        significand /= 10;
        ++exponent;
      }
    }
    if (exponent > kMaxDecimalExponent || exponent < -kMaxDecimalExponent) {
      throw std::out_of_range("decimal exponent out of range");
    }
    CanonicalAnswer a;
    a.kind_ = Kind::Decimal;
    a.num_ = std::move(significand);
    a.den_ = 1;
    a.exponent_ = exponent;
    return a;
  }

  static CanonicalAnswer opaque(std::string normalized) {
    CanonicalAnswer a;
    a.kind_ = Kind::Opaque;
    a.text_ = std::move(normalized);
    return a;
  }

  Kind kind() const noexcept { return kind_; }
  bool is_numeric() const noexcept { return kind_ != Kind::Opaque; }

  // Integer value, reduced numerator, or decimal significand.
  const BigInt& numerator() const noexcept { return num_; }
  const BigInt& denominator() const noexcept { return den_; }
  int exponent() const noexcept { return exponent_; }
  const std::string& text() const noexcept { return text_; }

  // Exact value as (numerator, positive denominator). Numeric kinds only.
  std::pair<BigInt, BigInt> exact_value() const {
    if (kind_ != Kind::Decimal) return {num_, den_};
    BigInt scale = boost::multiprecision::pow(BigInt(10), std::abs(exponent_));
    if (exponent_ >= 0) return {num_ * scale, BigInt(1)};
    return {num_, scale};
  }

  // Text that canonicalize() maps back to this exact value.
  std::string render() const {
    switch (kind_) {
      case Kind::Integer:
        return num_.str();
      case Kind::Rational:
        return num_.str() + "/" + den_.str();
      case Kind::Decimal:
        return num_.str() + "e" + std::to_string(exponent_);
      case Kind::Opaque:
        break;
    }
    return text_;
  }

  // Structural equality (same kind and payload), not value equivalence.
  bool operator==(const CanonicalAnswer&) const = default;

 private:
  Kind kind_ = Kind::Opaque;
  BigInt num_ = 0;
  BigInt den_ = 1;
  int exponent_ = 0;
  std::string text_;
};

inline const char* to_string(CanonicalAnswer::Kind k) {
  switch (k) {
    case CanonicalAnswer::Kind::Integer:
      return "integer";
    case CanonicalAnswer::Kind::Rational:
      return "rational";
    case CanonicalAnswer::Kind::Decimal:
      return "decimal";
    case CanonicalAnswer::Kind::Opaque:
      return "opaque";
  }
  return "opaque";
}

namespace detail {

inline bool is_space(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}
inline bool is_digit(char c) {
  return std::isdigit(static_cast<unsigned char>(c)) != 0;
}
inline bool is_alpha(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) != 0;
}

// Given text[open] == '{', returns the index of the matching '}' or npos.
// A backslash escapes the following character, so \{ \} and \\ never count.
inline std::size_t match_brace(std::string_view text, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\\') {
      ++i;
      continue;
    }
    if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::string_view::npos;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline void replace_all(std::string& s, std::string_view from,
                        std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

// Removes a control word only when it is not the prefix of a longer one
// (\left must not eat \leftarrow).
inline void remove_command(std::string& s, std::string_view cmd) {
  std::size_t pos = 0;
  while ((pos = s.find(cmd, pos)) != std::string::npos) {
    const std::size_t after = pos + cmd.size();
    if (after < s.size() && is_alpha(s[after])) {
      pos = after;
      continue;
    }
    s.erase(pos, cmd.size());
  }
}

inline void rename_command(std::string& s, std::string_view from,
                           std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    const std::size_t after = pos + from.size();
    if (after < s.size() && is_alpha(s[after])) {
      pos = after;
      continue;
    }
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

// Wraps bare single-token arguments of \sqrt and \frac in braces, so
// "\sqrt2" and "\frac12" read as "\sqrt{2}" and "\frac{1}{2}".
inline std::string brace_command_args(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 8);
  std::size_t i = 0;
  while (i < s.size()) {
    int args = 0;
    std::size_t cmd_len = 0;
    if (s.compare(i, 5, "\\sqrt") == 0 &&
        (i + 5 >= s.size() || !is_alpha(s[i + 5]))) {
      args = 1;
      cmd_len = 5;
    } else if (s.compare(i, 5, "\\frac") == 0 &&
               (i + 5 >= s.size() || !is_alpha(s[i + 5]))) {
      args = 2;
      cmd_len = 5;
    }
    if (args == 0) {
      out.push_back(s[i++]);
      continue;
    }
    out.append(s, i, cmd_len);
    i += cmd_len;
    // optional root index: \sqrt[3]
    if (args == 1 && i < s.size() && s[i] == '[') {
      const std::size_t close = s.find(']', i);
      if (close != std::string::npos) {
        out.append(s, i, close - i + 1);
        i = close + 1;
      }
    }
    for (int a = 0; a < args; ++a) {
      while (i < s.size() && is_space(s[i])) ++i;
      if (i >= s.size()) break;
      if (s[i] == '{') {
        const std::size_t close = match_brace(s, i);
        if (close == std::string::npos) break;
        out.append(s, i, close - i + 1);
        i = close + 1;
      } else if (s[i] == '\\') {
        std::size_t j = i + 1;
        while (j < s.size() && is_alpha(s[j])) ++j;
        if (j == i + 1 && j < s.size()) ++j;
        out.push_back('{');
        out.append(s, i, j - i);
        out.push_back('}');
        i = j;
      } else {
        out.push_back('{');
        out.push_back(s[i++]);
        out.push_back('}');
      }
    }
  }
  return out;
}

// Keeps a single space only between two letters ("\pi r"), drops the rest.
inline std::string squeeze_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty() && is_alpha(out.back()) && is_alpha(c)) {
      out.push_back(' ');
    }
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

// If the whole string is `prefix{...}` with one balanced group, returns the
// inside.
inline std::optional<std::string> unwrap(std::string_view s,
                                         std::string_view prefix) {
  if (s.size() < prefix.size() + 2 || s.substr(0, prefix.size()) != prefix) {
    return std::nullopt;
  }
  const std::size_t open = prefix.size();
  if (s[open] != '{') return std::nullopt;
  if (match_brace(s, open) != s.size() - 1) return std::nullopt;
  return std::string(s.substr(open + 1, s.size() - open - 2));
}

inline std::string normalize_once(std::string s) {
  s = std::string(trim(s));
  // math delimiters
  for (auto [open, close] : {std::pair<std::string_view, std::string_view>{"$$", "$$"},
                             {"$", "$"},
                             {"\\(", "\\)"},
                             {"\\[", "\\]"}}) {
    if (s.size() >= open.size() + close.size() && s.starts_with(open) &&
        s.ends_with(close)) {
      s = s.substr(open.size(), s.size() - open.size() - close.size());
    }
  }
  remove_command(s, "\\displaystyle");
  replace_all(s, "\\left.", "");
  replace_all(s, "\\right.", "");
  remove_command(s, "\\left");
  remove_command(s, "\\right");
  rename_command(s, "\\dfrac", "\\frac");
  rename_command(s, "\\tfrac", "\\frac");
  for (std::string_view spacing : {"\\,", "\\;", "\\:", "\\!", "\\ "}) {
    replace_all(s, spacing, " ");
  }
  remove_command(s, "\\quad");
  replace_all(s, "~", " ");
  replace_all(s, "{,}", ",");
  s = brace_command_args(s);
  s = squeeze_whitespace(s);
  while (!s.empty() && (s.back() == '.' || s.back() == ',' || s.back() == ';' ||
                        s.back() == ':')) {
    // a trailing "\," etc. was already rewritten; "\." stays escaped
    if (s.size() >= 2 && s[s.size() - 2] == '\\') break;
    s.pop_back();
  }
  for (std::string_view wrapper : {"", "\\boxed", "\\text", "\\mathrm", "\\textbf",
                                   "\\mathbf"}) {
    if (auto inner = unwrap(s, wrapper)) {
      s = std::move(*inner);
      break;
    }
  }
  return std::string(trim(s));
}

// Normalization iterated to a fixed point, so it is idempotent.
inline std::string normalize_latex(std::string_view text) {
  std::string cur(text);
  for (int iter = 0; iter < 32; ++iter) {
    std::string next = normalize_once(cur);
    if (next == cur) break;
    cur = std::move(next);
  }
  return cur;
}

// Exact parse of [+-]?(d+(.d*)?|.d+) into (num, den). No exponent.
inline std::optional<std::pair<BigInt, BigInt>> parse_plain_number(
    std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s.front() == '+' || s.front() == '-')) {
    neg = s.front() == '-';
    s.remove_prefix(1);
  }
  if (s.empty()) return std::nullopt;
  std::string digits;
  std::size_t frac_digits = 0;
  bool seen_dot = false;
  std::size_t int_digits = 0;
  for (char c : s) {
    if (c == '.') {
      if (seen_dot) return std::nullopt;
      seen_dot = true;
    } else if (is_digit(c)) {
      digits.push_back(c);
      if (seen_dot) {
        ++frac_digits;
      } else {
        ++int_digits;
      }
    } else {
      return std::nullopt;
    }
  }
  if (digits.empty()) return std::nullopt;
  if (int_digits == 0 && frac_digits == 0) return std::nullopt;
  // cpp_int reads a leading 0 as an octal prefix.
  const auto nz = digits.find_first_not_of('0');
  BigInt num = nz == std::string::npos ? BigInt(0) : BigInt(digits.substr(nz));
  BigInt den = boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(frac_digits));
  if (neg) num = -num;
  return std::make_pair(std::move(num), std::move(den));
}

inline std::optional<int> parse_exponent(std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s.front() == '+' || s.front() == '-')) {
    neg = s.front() == '-';
    s.remove_prefix(1);
  }
  if (s.empty() || s.size() > 6) return std::nullopt;
  int v = 0;
  for (char c : s) {
    if (!is_digit(c)) return std::nullopt;
    v = v * 10 + (c - '0');
  }
  if (v > CanonicalAnswer::kMaxDecimalExponent) return std::nullopt;
  return neg ? -v : v;
}

// Strips "1,234,567" grouping commas; anything else is returned as is.
inline std::string strip_thousands(std::string_view s) {
  std::string_view body = s;
  std::string sign;
  if (!body.empty() && (body.front() == '-' || body.front() == '+')) {
    sign = std::string(1, body.front());
    body.remove_prefix(1);
  }
  const std::size_t first = body.find(',');
  if (first == std::string_view::npos || first == 0 || first > 3) {
    return std::string(s);
  }
  std::string out = sign;
  std::size_t i = 0;
  for (; i < first; ++i) {
    if (!is_digit(body[i])) return std::string(s);
    out.push_back(body[i]);
  }
  while (i < body.size()) {
    if (body[i] != ',' || i + 4 > body.size()) return std::string(s);
    for (std::size_t k = 1; k <= 3; ++k) {
      if (!is_digit(body[i + k])) return std::string(s);
      out.push_back(body[i + k]);
    }
    i += 4;
    if (i < body.size() && body[i] == '.') {
      // decimal tail
      for (; i < body.size(); ++i) out.push_back(body[i]);
    }
  }
  return out;
}

inline std::optional<CanonicalAnswer> parse_numeric(std::string_view compact) {
  const std::string s = strip_thousands(compact);
  std::string_view v = s;

  if (auto n = parse_plain_number(v)) {
    return CanonicalAnswer::rational(std::move(n->first), std::move(n->second));
  }

  // scientific notation: <number>e<exp> or <number>\times10^{<exp>}
  auto sci = [&](std::string_view mantissa,
                 std::string_view exp) -> std::optional<CanonicalAnswer> {
    auto m = parse_plain_number(mantissa);
    auto e = parse_exponent(exp);
    if (!m || !e) return std::nullopt;
    // m = num / 10^k
    int k = 0;
    BigInt den = m->second;
    while (den > 1) {
      den /= 10;
      ++k;
    }
    const int exponent = *e - k;
    try {
      return CanonicalAnswer::decimal(std::move(m->first), exponent);
    } catch (const std::out_of_range&) {
      return std::nullopt;
    }
  };
  if (const auto epos = v.find_first_of("eE"); epos != std::string_view::npos) {
    if (auto d = sci(v.substr(0, epos), v.substr(epos + 1))) return d;
  }
  for (std::string_view times : {"\\times10^", "\\cdot10^"}) {
    if (const auto tpos = v.find(times); tpos != std::string_view::npos) {
      std::string_view exp = v.substr(tpos + times.size());
      if (exp.size() >= 2 && exp.front() == '{' && exp.back() == '}') {
        exp = exp.substr(1, exp.size() - 2);
      }
      if (auto d = sci(v.substr(0, tpos), exp)) return d;
    }
  }

  // fractions: [+-]\frac{a}{b} or a/b
  auto make_fraction = [](std::string_view a, std::string_view b,
                          bool negate) -> std::optional<CanonicalAnswer> {
    auto na = parse_plain_number(a);
    auto nb = parse_plain_number(b);
    if (!na || !nb) return std::nullopt;
    if (nb->first == 0) return std::nullopt;
    BigInt num = na->first * nb->second;
    BigInt den = na->second * nb->first;
    if (negate) num = -num;
    return CanonicalAnswer::rational(std::move(num), std::move(den));
  };
  {
    std::string_view f = v;
    bool negate = false;
    if (!f.empty() && (f.front() == '-' || f.front() == '+')) {
      negate = f.front() == '-';
      f.remove_prefix(1);
    }
    if (f.starts_with("\\frac{")) {
      const std::size_t open1 = 5;
      const std::size_t close1 = match_brace(f, open1);
      if (close1 != std::string_view::npos && close1 + 1 < f.size() &&
          f[close1 + 1] == '{') {
        const std::size_t close2 = match_brace(f, close1 + 1);
        if (close2 == f.size() - 1) {
          return make_fraction(f.substr(open1 + 1, close1 - open1 - 1),
                               f.substr(close1 + 2, close2 - close1 - 2), negate);
        }
      }
      return std::nullopt;
    }
  }
  if (const auto slash = v.find('/'); slash != std::string_view::npos &&
                                      v.find('/', slash + 1) == std::string_view::npos) {
    return make_fraction(v.substr(0, slash), v.substr(slash + 1), false);
  }
  return std::nullopt;
}

// Zero-denominator fractions parse to nothing numeric; canonicalize falls
// back to Opaque for them.
inline bool has_zero_denominator(std::string_view compact) {
  auto zero = [](std::string_view d) {
    auto n = parse_plain_number(d);
    return n && n->first == 0;
  };
  if (const auto slash = compact.find('/'); slash != std::string_view::npos) {
    return zero(compact.substr(slash + 1));
  }
  return false;
}

}  // namespace detail

// Contents of the last balanced \boxed{...} group, or nullopt when there is
// none, the last group is unbalanced, or its content is blank. Boxed groups
// nested inside an outer one belong to the outer group.
inline std::optional<RawAnswer> extract_final_answer(std::string_view solution_text) {
  static constexpr std::string_view kBoxed = "\\boxed";
  std::optional<RawAnswer> last;
  std::size_t pos = 0;
  while ((pos = solution_text.find(kBoxed, pos)) != std::string_view::npos) {
    std::size_t open = pos + kBoxed.size();
    if (open < solution_text.size() && detail::is_alpha(solution_text[open])) {
      pos = open;  // e.g. \boxedfoo
      continue;
    }
    while (open < solution_text.size() && detail::is_space(solution_text[open])) {
      ++open;
    }
    if (open >= solution_text.size() || solution_text[open] != '{') {
      pos = open;
      continue;
    }
    const std::size_t close = detail::match_brace(solution_text, open);
    if (close == std::string_view::npos) return std::nullopt;
    const std::string_view inner =
        solution_text.substr(open + 1, close - open - 1);
    if (detail::trim(inner).empty()) {
      last.reset();
    } else {
      last = RawAnswer{std::string(inner), {open + 1, close}};
    }
    pos = close + 1;
  }
  return last;
}

inline CanonicalAnswer canonicalize(std::string_view raw_text) {
  std::string normalized = detail::normalize_latex(raw_text);
  std::string compact;
  compact.reserve(normalized.size());
  for (char c : normalized) {
    if (!detail::is_space(c)) compact.push_back(c);
  }
  if (!detail::has_zero_denominator(compact)) {
    if (auto numeric = detail::parse_numeric(compact)) return *std::move(numeric);
  }
  return CanonicalAnswer::opaque(std::move(normalized));
}

inline CanonicalAnswer canonicalize(const RawAnswer& raw) {
  return canonicalize(raw.text);
}

// Ans(Y): extract then canonicalize; nullopt when there is no final answer.
inline std::optional<CanonicalAnswer> answer_of(std::string_view solution_text) {
  if (auto raw = extract_final_answer(solution_text)) return canonicalize(*raw);
  return std::nullopt;
}

inline bool answers_equivalent(const CanonicalAnswer& a, const CanonicalAnswer& b) {
  if (a.is_numeric() != b.is_numeric()) return false;
  if (!a.is_numeric()) return a.text() == b.text();
  if (a.kind() == b.kind() && a.kind() != CanonicalAnswer::Kind::Decimal) {
    return a.numerator() == b.numerator() && a.denominator() == b.denominator();
  }
  auto [an, ad] = a.exact_value();
  auto [bn, bd] = b.exact_value();
  return an * bd == bn * ad;
}

}  // namespace genselect
