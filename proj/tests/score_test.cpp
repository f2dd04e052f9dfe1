#include "punctc/score.hpp"

#include <gtest/gtest.h>

#include "punctc/random.hpp"

namespace punctc {
namespace {

TEST(Wer, ExactMatchIsZero) {
  EXPECT_DOUBLE_EQ(wer("a b c", "a b c"), 0.0);
  EXPECT_DOUBLE_EQ(wer("", ""), 0.0);
}

TEST(Wer, OneSubstitutionOfThree) {
  EXPECT_NEAR(wer("a b c", "a x c"), 100.0 / 3.0, 1e-9);
  EXPECT_EQ(format_percent(wer("a b c", "a x c")), "33.3");
}

TEST(Wer, PunctuationExcluded) {
  EXPECT_DOUBLE_EQ(wer("hello, world.", "hello world"), 0.0);
  EXPECT_DOUBLE_EQ(wer("go. now", "go now."), 0.0);
}

TEST(Wer, EmptyReferenceSentinel) {
  EXPECT_TRUE(std::isinf(wer("", "something here")));
  EXPECT_TRUE(std::isinf(wer(",.", "word")));  // marks only, no ref words
}

TEST(Wer, SelfScoreZeroProperty) {
  Rng rng(3);
  const char* words[] = {"go", "home", "now,", "really?", "a."};
  for (int i = 0; i < 50; ++i) {
    std::string s;
    size_t n = rng.index(8);
    for (size_t k = 0; k < n; ++k) {
      if (!s.empty()) s += ' ';
      s += words[rng.index(5)];
    }
    EXPECT_DOUBLE_EQ(wer(s, s), 0.0);
  }
}

TEST(Align, PunctuationRidesOnMatchedWords) {
  auto pairs = align("go home. now", "go home now");
  ASSERT_EQ(pairs.size(), 3u);
  for (const auto& p : pairs) EXPECT_EQ(p.op, AlignedPair::Op::match);
  EXPECT_EQ(pairs[1].ref_punct, Punct::period);
  EXPECT_EQ(pairs[1].hyp_punct, Punct::none);
}

TEST(Align, IdenticalStrings) {
  auto pairs = align("a, b c?", "a, b c?");
  ASSERT_EQ(pairs.size(), 3u);
  for (const auto& p : pairs) {
    EXPECT_EQ(p.op, AlignedPair::Op::match);
    EXPECT_EQ(p.ref_punct, p.hyp_punct);
  }
  EXPECT_EQ(pairs[0].ref_punct, Punct::comma);
  EXPECT_EQ(pairs[2].ref_punct, Punct::question);
}

TEST(Align, Insertion) {
  auto pairs = align("a b", "a x b");
  ASSERT_EQ(pairs.size(), 3u);
  EXPECT_EQ(pairs[0].op, AlignedPair::Op::match);
  EXPECT_EQ(pairs[1].op, AlignedPair::Op::insert);
  EXPECT_EQ(*pairs[1].hyp_word, "x");
  EXPECT_FALSE(pairs[1].ref_word.has_value());
  EXPECT_EQ(pairs[2].op, AlignedPair::Op::match);
}

TEST(Align, OpCountsMatchWordCounts) {
  Rng rng(17);
  const char* words[] = {"a", "b", "c", "d,", "e."};
  for (int i = 0; i < 100; ++i) {
    auto mk = [&](size_t n) {
      std::string s;
      for (size_t k = 0; k < n; ++k) {
        if (!s.empty()) s += ' ';
        s += words[rng.index(5)];
      }
      return s;
    };
    std::string ref = mk(rng.index(7));
    std::string hyp = mk(rng.index(7));
    auto pairs = align(ref, hyp);
    size_t match = 0, sub = 0, del = 0, ins = 0;
    for (const auto& p : pairs) {
      switch (p.op) {
        case AlignedPair::Op::match: ++match; break;
        case AlignedPair::Op::substitute: ++sub; break;
        case AlignedPair::Op::del: ++del; break;
        case AlignedPair::Op::insert: ++ins; break;
      }
    }
    EXPECT_EQ(match + sub + del, plain_words(ref).size());
    EXPECT_EQ(match + sub + ins, plain_words(hyp).size());
  }
}

// Brute force over every possible alignment (exponential; words <= 6).
size_t brute_force_cost(const std::vector<std::string>& ref,
                        const std::vector<std::string>& hyp, size_t i, size_t j) {
  if (i == ref.size()) return hyp.size() - j;
  if (j == hyp.size()) return ref.size() - i;
  size_t best = brute_force_cost(ref, hyp, i + 1, j + 1) +
                (ref[i] == hyp[j] ? 0 : 1);
  best = std::min(best, brute_force_cost(ref, hyp, i + 1, j) + 1);
  best = std::min(best, brute_force_cost(ref, hyp, i, j + 1) + 1);
  return best;
}

TEST(Align, DpCostMatchesBruteForceOracle) {
  Rng rng(29);
  const char* words[] = {"a", "b", "c"};
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> ref, hyp;
    for (size_t k = rng.index(7); k > 0; --k) ref.push_back(words[rng.index(3)]);
    for (size_t k = rng.index(7); k > 0; --k) hyp.push_back(words[rng.index(3)]);
    size_t oracle = brute_force_cost(ref, hyp, 0, 0);
    EXPECT_EQ(edit_distance(ref, hyp), oracle);

    // the produced alignment realizes exactly that cost
    std::string r, h;
    for (const auto& w : ref) r += (r.empty() ? "" : " ") + w;
    for (const auto& w : hyp) h += (h.empty() ? "" : " ") + w;
    size_t cost = 0;
    for (const auto& p : align(r, h))
      cost += p.op != AlignedPair::Op::match ? 1 : 0;
    EXPECT_EQ(cost, oracle);
  }
}

TEST(PunctScores, FormulaFixture) {
  // one comma TP, one comma FP, zero FN
  std::vector<AlignedPair> pairs(2);
  pairs[0].ref_punct = Punct::comma;
  pairs[0].hyp_punct = Punct::comma;
  pairs[1].ref_punct = Punct::none;
  pairs[1].hyp_punct = Punct::comma;
  PunctReport rep = punct_scores(pairs);
  EXPECT_DOUBLE_EQ(rep.comma.precision, 50.0);
  EXPECT_DOUBLE_EQ(rep.comma.recall, 100.0);
  EXPECT_NEAR(rep.comma.f1, 200.0 / 3.0, 1e-9);
  EXPECT_EQ(format_percent(rep.comma.f1), "66.7");
}

TEST(PunctScores, PerfectHypothesis) {
  auto pairs = align("a, b. c?", "a, b. c?");
  PunctReport rep = punct_scores(pairs);
  EXPECT_DOUBLE_EQ(rep.comma.f1, 100.0);
  EXPECT_DOUBLE_EQ(rep.period.f1, 100.0);
  EXPECT_DOUBLE_EQ(rep.question.f1, 100.0);
  EXPECT_DOUBLE_EQ(rep.macro_f1, 100.0);
}

TEST(PunctScores, MacroAverageIsUnweightedMean) {
  // Table-1 Baseline F1 row arithmetic
  EXPECT_EQ(format_percent(macro_average(50.3, 35.8, 34.0)), "40.0");
}

TEST(PunctScores, SwappingArgumentsSwapsPrecisionAndRecall) {
  Rng rng(71);
  const char* words[] = {"a", "b,", "c.", "d?", "e"};
  for (int i = 0; i < 50; ++i) {
    auto mk = [&](size_t n) {
      std::string s;
      for (size_t k = 0; k < n; ++k) {
        if (!s.empty()) s += ' ';
        s += words[rng.index(5)];
      }
      return s;
    };
    std::string ref = mk(1 + rng.index(6));
    std::string hyp = mk(1 + rng.index(6));
    PunctReport fwd = punct_scores(align(ref, hyp));
    PunctReport rev = punct_scores(align(hyp, ref));
    for (Punct m : {Punct::comma, Punct::period, Punct::question}) {
      EXPECT_DOUBLE_EQ(fwd.of(m).precision, rev.of(m).recall);
      EXPECT_DOUBLE_EQ(fwd.of(m).recall, rev.of(m).precision);
    }
  }
}

TEST(PunctScores, InsertionsAndDeletionsCount) {
  // hyp inserts "x." -> period FP; ref loses "c?" -> question FN
  auto pairs = align("a b c?", "a x. b");
  PunctReport rep = punct_scores(pairs);
  EXPECT_EQ(rep.period.fp, 1u);
  EXPECT_EQ(rep.question.fn, 1u);
}

TEST(PunctScores, BareMarkAttachesToPrecedingWord) {
  auto words = parse_scored_words("go . now");
  ASSERT_EQ(words.size(), 2u);
  EXPECT_EQ(words[0].text, "go");
  EXPECT_EQ(words[0].mark, Punct::period);
  // with no preceding word the mark stands alone and scores as its class
  auto lead = parse_scored_words(". go");
  ASSERT_EQ(lead.size(), 2u);
  EXPECT_EQ(lead[0].text, "");
  EXPECT_EQ(lead[0].mark, Punct::period);
}

TEST(PunctScores, MultipleTrailingMarksKeepLast) {
  auto words = parse_scored_words("what?, next");
  ASSERT_EQ(words.size(), 2u);
  EXPECT_EQ(words[0].mark, Punct::comma);
}

TEST(ScoreReport, CorpusPoolingAndRendering) {
  std::vector<std::pair<std::string, std::string>> pairs = {
      {"a, b. c?", "a, b. c?"},
      {"go home. now", "go home now"},
  };
  ScoreReport rep = score_corpus(pairs);
  EXPECT_DOUBLE_EQ(rep.wer_percent, 0.0);
  EXPECT_EQ(rep.punct.period.fn, 1u);
  EXPECT_EQ(rep.punct.period.tp, 1u);
  EXPECT_EQ(rep.utterances, 2u);

  std::string table = render_score_table(rep, "fixture");
  EXPECT_NE(table.find("WER(%)"), std::string::npos);
  EXPECT_NE(table.find("corpus-pooled"), std::string::npos);
  EXPECT_NE(table.find("avg."), std::string::npos);

  std::string records = render_score_records(rep);
  EXPECT_NE(records.find("\"record\":\"mark\""), std::string::npos);
  EXPECT_NE(records.find("\"record\":\"summary\""), std::string::npos);
  EXPECT_NE(records.find("\"pooling\":\"corpus\""), std::string::npos);
}

}  // namespace
}  // namespace punctc
