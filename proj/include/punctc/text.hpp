// punctc/text.hpp — transcript normalization and the character tokenizer.
#pragma once

#include <array>
#include <string>
#include <string_view>

#include "punctc/common.hpp"
#include "punctc/ctc.hpp"

namespace punctc {

inline bool is_kept_mark(char c) { return c == ',' || c == '.' || c == '?'; }

// Normalization rules, applied in order:
//   1. lowercase
//   2. remove parenthesized spans, e.g. "(Applause)"
//   3. remove a leading speaker tag: a first token of <= 20 chars ending in ':'
//   4. drop everything outside [a-z0-9' ,.?]
//   5. collapse whitespace runs to single spaces, trim the ends
// Total function; idempotent on its own output.
inline std::string normalize_text(std::string_view raw) {
  std::string s(raw);
  for (char& c : s)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');

  // innermost parenthesized spans, repeatedly; stray parens fall to rule 4
  while (true) {
    size_t close = s.find(')');
    if (close == std::string::npos) break;
    size_t open = s.rfind('(', close);
    if (open == std::string::npos) break;
    s.erase(open, close - open + 1);
  }

  size_t at = 0;
  while (at < s.size() && (s[at] == ' ' || s[at] == '\t' || s[at] == '\n')) ++at;
  size_t end = at;
  while (end < s.size() && s[end] != ' ' && s[end] != '\t' && s[end] != '\n') ++end;
  if (end > at && end - at <= 20 && s[end - 1] == ':') s.erase(at, end - at);

  std::string kept;
  kept.reserve(s.size());
  for (char c : s) {
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\'' ||
        is_kept_mark(c)) {
      kept.push_back(c);
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      kept.push_back(' ');
    }
    // anything else (other punctuation, non-ascii bytes) is dropped
  }

  std::string out;
  out.reserve(kept.size());
  for (char c : kept) {
    if (c == ' ' && (out.empty() || out.back() == ' ')) continue;
    out.push_back(c);
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

// Character-level vocabulary. Symbol order defines token ids; the blank is
// not a member (it exists only as lattice column 0).
class Vocabulary {
 public:
  Vocabulary() { index_.fill(-1); }

  static Vocabulary from_symbols(std::string_view symbols) {
    Vocabulary v;
    ensure(!symbols.empty(), "vocabulary: empty symbol set");
    for (char c : symbols) {
      ensure(v.index_[byte(c)] < 0, "vocabulary: duplicate symbol '", c, "'");
      v.index_[byte(c)] = static_cast<int>(v.symbols_.size());
      v.symbols_.push_back(c);
    }
    return v;
  }

  size_t size() const { return symbols_.size(); }
  const std::string& symbols() const { return symbols_; }
  bool contains(char c) const { return index_[byte(c)] >= 0; }

  int id(char c) const {
    int i = index_[byte(c)];
    ensure(i >= 0, "vocabulary: symbol '", c, "' not in vocabulary");
    return i;
  }

  char symbol(int id) const {
    ensure(id >= 0 && static_cast<size_t>(id) < symbols_.size(),
           "vocabulary: id ", id, " out of range");
    return symbols_[static_cast<size_t>(id)];
  }

  TokenSequence tokenize(std::string_view text) const {
    TokenSequence out;
    out.reserve(text.size());
    for (char c : text) out.push_back(id(c));
    return out;
  }

  std::string detokenize(const TokenSequence& ids) const {
    std::string out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(symbol(i));
    return out;
  }

 private:
  static size_t byte(char c) { return static_cast<unsigned char>(c); }

  std::string symbols_;
  std::array<int, 256> index_{};
};

// letters + apostrophe + space + the three scored marks
inline std::string default_vocab_symbols(std::string_view letters) {
  std::string s(letters);
  s += "' ,.?";
  return s;
}

}  // namespace punctc
