#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace hypochain::detail {

// Word tokens: runs of alphanumerics plus '_', '-', '.' and any non-ASCII
// byte (kept so UTF-8 names survive).
inline std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (const char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '_' || c == '-' || c == '.' || u >= 0x80) {
      current.push_back(c);
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  // Trailing sentence punctuation is not part of a name.
  for (auto& t : out) {
    while (!t.empty() && (t.back() == '.' || t.back() == '-')) t.pop_back();
  }
  std::erase_if(out, [](const std::string& t) { return t.empty(); });
  return out;
}

inline bool IsStopword(std::string_view lower) {
  static constexpr std::string_view kStop[] = {
      "a",     "an",    "and",  "are",   "as",   "at",    "be",   "by",
      "can",   "could", "do",   "for",   "from", "genes", "has",  "have",
      "i",     "in",    "is",   "it",    "me",   "my",    "of",   "on",
      "or",    "some",  "that", "the",   "this", "to",    "we",   "what",
      "which", "with",  "would", "you",  "your", "am",    "any",  "about",
      "like",  "into",  "its",  "their", "these", "those", "via",  "related"};
  for (const auto w : kStop) {
    if (w == lower) return true;
  }
  return false;
}

inline std::string Lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace hypochain::detail
