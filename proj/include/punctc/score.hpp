// punctc/score.hpp — punctuation-excluded WER, word alignment, per-mark P/R/F1.
//
// Words are compared with their , . ? marks stripped; each word's punctuation
// class is the last trailing mark of the original token and attaches to that
// word. Alignment is a unit-cost edit-distance DP with the deterministic
// backtrace preference match > substitute > delete > insert. Corpus metrics
// pool TP/FP/FN and edit counts over all utterances before computing rates.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "punctc/common.hpp"
#include "punctc/text.hpp"

namespace punctc {

enum class Punct { none, comma, period, question };

inline Punct punct_class(char c) {
  switch (c) {
    case ',': return Punct::comma;
    case '.': return Punct::period;
    case '?': return Punct::question;
    default: return Punct::none;
  }
}

inline const char* punct_name(Punct p) {
  switch (p) {
    case Punct::none: return "none";
    case Punct::comma: return "comma";
    case Punct::period: return "period";
    case Punct::question: return "question";
  }
  return "none";
}

struct ScoredWord {
  std::string text;  // marks stripped
  Punct mark = Punct::none;
};

// Splits on spaces, strips , . ? from each token and attaches the last
// trailing mark to the word. A token that is only marks attaches its mark to
// the preceding word; with no preceding word it stays as a bare-mark word
// with empty text (a defensive case raw hypotheses can produce).
inline std::vector<ScoredWord> parse_scored_words(std::string_view text) {
  std::vector<ScoredWord> words;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    size_t j = i;
    while (j < text.size() && text[j] != ' ') ++j;
    if (j > i) {
      std::string_view token = text.substr(i, j - i);
      // multiple trailing marks keep the last one only
      Punct mark = punct_class(token.back());
      std::string stripped;
      for (char c : token)
        if (punct_class(c) == Punct::none) stripped.push_back(c);
      if (!stripped.empty()) {
        words.push_back(ScoredWord{std::move(stripped), mark});
      } else if (mark != Punct::none) {
        if (!words.empty()) {
          words.back().mark = mark;
        } else {
          words.push_back(ScoredWord{"", mark});
        }
      }
    }
    i = j;
  }
  return words;
}

inline std::vector<std::string> plain_words(std::string_view text) {
  std::vector<std::string> out;
  for (const ScoredWord& w : parse_scored_words(text))
    if (!w.text.empty()) out.push_back(w.text);
  return out;
}

// Word-level Levenshtein distance with unit costs.
inline size_t edit_distance(const std::vector<std::string>& ref,
                            const std::vector<std::string>& hyp) {
  size_t m = ref.size(), n = hyp.size();
  std::vector<size_t> prev(n + 1), cur(n + 1);
  for (size_t j = 0; j <= n; ++j) prev[j] = j;
  for (size_t i = 1; i <= m; ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= n; ++j) {
      size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

constexpr double kWerInfinity = std::numeric_limits<double>::infinity();

// Percent WER with punctuation excluded. An empty reference against a
// non-empty hypothesis has no defined rate and reports the infinity sentinel.
inline double wer(std::string_view ref, std::string_view hyp) {
  std::vector<std::string> r = plain_words(ref);
  std::vector<std::string> h = plain_words(hyp);
  if (r.empty()) return h.empty() ? 0.0 : kWerInfinity;
  return 100.0 * static_cast<double>(edit_distance(r, h)) /
         static_cast<double>(r.size());
}

struct AlignedPair {
  enum class Op { match, substitute, del, insert };
  Op op = Op::match;
  std::optional<std::string> ref_word;
  std::optional<std::string> hyp_word;
  Punct ref_punct = Punct::none;
  Punct hyp_punct = Punct::none;
};

// Minimal-cost word alignment; punctuation classes ride along from the
// original tokens. Bare-mark words participate with empty text so their marks
// surface as insertions/deletions of their class.
inline std::vector<AlignedPair> align(std::string_view ref,
                                      std::string_view hyp) {
  std::vector<ScoredWord> r = parse_scored_words(ref);
  std::vector<ScoredWord> h = parse_scored_words(hyp);
  size_t m = r.size(), n = h.size();
  // full DP table; utterances are short
  std::vector<std::vector<size_t>> d(m + 1, std::vector<size_t>(n + 1));
  for (size_t i = 0; i <= m; ++i) d[i][0] = i;
  for (size_t j = 0; j <= n; ++j) d[0][j] = j;
  for (size_t i = 1; i <= m; ++i)
    for (size_t j = 1; j <= n; ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (r[i - 1].text == h[j - 1].text ? 0 : 1),
                          d[i - 1][j] + 1, d[i][j - 1] + 1});

  std::vector<AlignedPair> pairs;
  size_t i = m, j = n;
  while (i > 0 || j > 0) {
    AlignedPair p;
    bool diag_ok = i > 0 && j > 0;
    bool is_match = diag_ok && r[i - 1].text == h[j - 1].text &&
                    d[i][j] == d[i - 1][j - 1];
    bool is_sub = diag_ok && d[i][j] == d[i - 1][j - 1] + 1 &&
                  r[i - 1].text != h[j - 1].text;
    bool is_del = i > 0 && d[i][j] == d[i - 1][j] + 1;
    if (is_match || is_sub) {
      p.op = is_match ? AlignedPair::Op::match : AlignedPair::Op::substitute;
      p.ref_word = r[i - 1].text;
      p.hyp_word = h[j - 1].text;
      p.ref_punct = r[i - 1].mark;
      p.hyp_punct = h[j - 1].mark;
      --i;
      --j;
    } else if (is_del) {
      p.op = AlignedPair::Op::del;
      p.ref_word = r[i - 1].text;
      p.ref_punct = r[i - 1].mark;
      --i;
    } else {
      p.op = AlignedPair::Op::insert;
      p.hyp_word = h[j - 1].text;
      p.hyp_punct = h[j - 1].mark;
      --j;
    }
    pairs.push_back(std::move(p));
  }
  std::reverse(pairs.begin(), pairs.end());
  return pairs;
}

struct MarkScore {
  size_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;  // percents

  void finish() {
    precision = tp + fp == 0 ? 0.0 : 100.0 * tp / static_cast<double>(tp + fp);
    recall = tp + fn == 0 ? 0.0 : 100.0 * tp / static_cast<double>(tp + fn);
    f1 = precision + recall == 0.0
             ? 0.0
             : 2.0 * precision * recall / (precision + recall);
  }
};

struct PunctReport {
  MarkScore comma, period, question;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;

  void finish() {
    comma.finish();
    period.finish();
    question.finish();
    macro_precision = (comma.precision + period.precision + question.precision) / 3.0;
    macro_recall = (comma.recall + period.recall + question.recall) / 3.0;
    macro_f1 = (comma.f1 + period.f1 + question.f1) / 3.0;
  }

  MarkScore& of(Punct p) {
    switch (p) {
      case Punct::comma: return comma;
      case Punct::period: return period;
      case Punct::question: return question;
      default: fail("no score bucket for 'none'");
    }
  }
};

inline void tally_pairs(std::span<const AlignedPair> pairs, PunctReport& report) {
  for (const AlignedPair& p : pairs) {
    for (Punct m : {Punct::comma, Punct::period, Punct::question}) {
      bool in_ref = p.ref_punct == m;
      bool in_hyp = p.hyp_punct == m;
      if (in_ref && in_hyp) ++report.of(m).tp;
      if (in_hyp && !in_ref) ++report.of(m).fp;   // insertions land here
      if (in_ref && !in_hyp) ++report.of(m).fn;   // deletions land here
    }
  }
}

inline PunctReport punct_scores(std::span<const AlignedPair> pairs) {
  PunctReport report;
  tally_pairs(pairs, report);
  report.finish();
  return report;
}

// unweighted mean of the three per-mark values
inline double macro_average(double comma, double period, double question) {
  return (comma + period + question) / 3.0;
}

// ── Corpus-level report ─────────────────────────────────────────────────────

struct ScoreReport {
  double wer_percent = 0.0;
  size_t edit_errors = 0;
  size_t ref_words = 0;
  PunctReport punct;
  size_t utterances = 0;
  size_t missing_hypotheses = 0;
};

inline ScoreReport score_corpus(
    const std::vector<std::pair<std::string, std::string>>& ref_hyp_pairs) {
  ScoreReport report;
  for (const auto& [ref, hyp] : ref_hyp_pairs) {
    ++report.utterances;
    report.edit_errors += edit_distance(plain_words(ref), plain_words(hyp));
    report.ref_words += plain_words(ref).size();
    auto pairs = align(ref, hyp);
    tally_pairs(pairs, report.punct);
  }
  report.punct.finish();
  report.wer_percent =
      report.ref_words == 0
          ? (report.edit_errors == 0 ? 0.0 : kWerInfinity)
          : 100.0 * static_cast<double>(report.edit_errors) /
                static_cast<double>(report.ref_words);
  return report;
}

inline std::string format_percent(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

// Table-1-shaped text: WER, then precision/recall/F1 for , . ? and their
// unweighted averages. Counts are pooled over the corpus.
inline std::string render_score_table(const ScoreReport& r,
                                      const std::string& title = "corpus") {
  std::string out;
  out += msg("# scores for ", title, " (", r.utterances,
             " utterances, corpus-pooled counts");
  if (r.missing_hypotheses > 0)
    out += msg(", ", r.missing_hypotheses, " missing hypotheses scored empty");
  out += ")\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %8s | %6s %6s %6s %6s\n", "metric",
                "WER(%)", ",", ".", "?", "avg.");
  out += line;
  std::snprintf(line, sizeof(line), "%-10s %8s | %6s %6s %6s %6s\n",
                "precision", format_percent(r.wer_percent).c_str(),
                format_percent(r.punct.comma.precision).c_str(),
                format_percent(r.punct.period.precision).c_str(),
                format_percent(r.punct.question.precision).c_str(),
                format_percent(r.punct.macro_precision).c_str());
  out += line;
  std::snprintf(line, sizeof(line), "%-10s %8s | %6s %6s %6s %6s\n", "recall",
                "",
                format_percent(r.punct.comma.recall).c_str(),
                format_percent(r.punct.period.recall).c_str(),
                format_percent(r.punct.question.recall).c_str(),
                format_percent(r.punct.macro_recall).c_str());
  out += line;
  std::snprintf(line, sizeof(line), "%-10s %8s | %6s %6s %6s %6s\n", "f1", "",
                format_percent(r.punct.comma.f1).c_str(),
                format_percent(r.punct.period.f1).c_str(),
                format_percent(r.punct.question.f1).c_str(),
                format_percent(r.punct.macro_f1).c_str());
  out += line;
  return out;
}

// One JSON record per mark plus a summary record.
inline std::string render_score_records(const ScoreReport& r) {
  std::string out;
  auto mark_record = [&](const char* name, const MarkScore& m) {
    nlohmann::json rec = {{"record", "mark"},     {"mark", name},
                          {"tp", m.tp},           {"fp", m.fp},
                          {"fn", m.fn},           {"precision", m.precision},
                          {"recall", m.recall},   {"f1", m.f1}};
    out += rec.dump() + "\n";
  };
  mark_record("comma", r.punct.comma);
  mark_record("period", r.punct.period);
  mark_record("question", r.punct.question);
  nlohmann::json summary = {
      {"record", "summary"},
      {"wer", std::isinf(r.wer_percent) ? -1.0 : r.wer_percent},
      {"edit_errors", r.edit_errors},
      {"ref_words", r.ref_words},
      {"macro_precision", r.punct.macro_precision},
      {"macro_recall", r.punct.macro_recall},
      {"macro_f1", r.punct.macro_f1},
      {"utterances", r.utterances},
      {"missing_hypotheses", r.missing_hypotheses},
      {"pooling", "corpus"}};
  out += summary.dump() + "\n";
  return out;
}

}  // namespace punctc
