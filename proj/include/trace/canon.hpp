#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <string_view>

namespace trace {

// Canonical form of an action string: trimmed, lower-cased, no trailing
// '.'/'!', inner whitespace collapsed to single spaces. Two raw actions are
// equivalent iff their canonical keys compare equal.
using CanonicalKey = std::string;

namespace detail {

inline bool is_space(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

inline bool is_digit(char c) {
  return std::isdigit(static_cast<unsigned char>(c)) != 0;
}

}  // namespace detail

// Normalisation steps, in order: trim, lowercase, strip the trailing run of
// periods/exclamation marks (and any whitespace inside that run, so the
// result never ends mid-air on a space), collapse whitespace runs to one
// space. Idempotent for arbitrary input.
inline CanonicalKey canonicalise_action(std::string_view raw) {
  std::size_t b = 0;
  std::size_t e = raw.size();
  while (b < e && detail::is_space(raw[b])) ++b;
  while (e > b && detail::is_space(raw[e - 1])) --e;

  std::string s(raw.substr(b, e - b));
  for (char& c : s) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  while (!s.empty() &&
         (s.back() == '.' || s.back() == '!' || detail::is_space(s.back()))) {
    s.pop_back();
  }

  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (detail::is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

inline bool actions_equivalent(std::string_view a, std::string_view b) {
  return canonicalise_action(a) == canonicalise_action(b);
}

namespace detail {

// Maximal numeric token starting at `i`: optional sign (only when not glued
// to a preceding digit), digits with commas allowed between digits, optional
// single fractional part. Returns one-past-the-end, or `i` if no token.
inline std::size_t numeric_token_end(std::string_view s, std::size_t i) {
  std::size_t j = i;
  if (j < s.size() && (s[j] == '+' || s[j] == '-')) {
    bool glued = i > 0 && is_digit(s[i - 1]);
    if (glued || j + 1 >= s.size() || !is_digit(s[j + 1])) return i;
    ++j;
  }
  if (j >= s.size() || !is_digit(s[j])) return i;
  while (j < s.size()) {
    if (is_digit(s[j])) {
      ++j;
    } else if (s[j] == ',' && j + 1 < s.size() && is_digit(s[j + 1]) &&
               is_digit(s[j - 1])) {
      ++j;
    } else {
      break;
    }
  }
  if (j + 1 < s.size() && s[j] == '.' && is_digit(s[j + 1])) {
    ++j;
    while (j < s.size() && is_digit(s[j])) ++j;
  }
  return j;
}

inline std::size_t skip_spaces(std::string_view s, std::size_t i) {
  while (i < s.size() && is_space(s[i])) ++i;
  return i;
}

}  // namespace detail

// Value-like normalisation of a numeric string: drop commas and a leading
// '+', strip an exact ".0"/".00" suffix. "1,234" -> "1234", "42.0" -> "42",
// "-3.50" -> "-3.50".
inline std::string normalise_numeric(std::string_view token) {
  std::string out;
  out.reserve(token.size());
  for (std::size_t i = 0; i < token.size(); ++i) {
    if (token[i] == ',') continue;
    if (token[i] == '+' && out.empty()) continue;
    out += token[i];
  }
  if (out.ends_with(".00")) {
    out.erase(out.size() - 3);
  } else if (out.ends_with(".0")) {
    out.erase(out.size() - 2);
  }
  return out;
}

// Three-stage answer extraction: first "Answer: N" (case-insensitive, any
// whitespace around the colon), then first "#### N", then the last numeric
// token anywhere. Absent when the text has no number at all.
inline std::optional<std::string> extract_numeric_answer(
    std::string_view completion) {
  std::string lower(completion);
  for (char& c : lower) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }

  const std::string_view needle = "answer";
  for (std::size_t pos = lower.find(needle); pos != std::string::npos;
       pos = lower.find(needle, pos + 1)) {
    std::size_t i = detail::skip_spaces(completion, pos + needle.size());
    if (i >= completion.size() || completion[i] != ':') continue;
    i = detail::skip_spaces(completion, i + 1);
    std::size_t end = detail::numeric_token_end(completion, i);
    if (end > i) return normalise_numeric(completion.substr(i, end - i));
  }

  for (std::size_t pos = completion.find("####"); pos != std::string::npos;
       pos = completion.find("####", pos + 1)) {
    std::size_t i = detail::skip_spaces(completion, pos + 4);
    std::size_t end = detail::numeric_token_end(completion, i);
    if (end > i) return normalise_numeric(completion.substr(i, end - i));
  }

  std::optional<std::string> last;
  for (std::size_t i = 0; i < completion.size();) {
    std::size_t end = detail::numeric_token_end(completion, i);
    if (end > i) {
      last = normalise_numeric(completion.substr(i, end - i));
      i = end;
    } else {
      ++i;
    }
  }
  return last;
}

}  // namespace trace
