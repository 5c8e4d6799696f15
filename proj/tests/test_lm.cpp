#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace seqdisc;
using namespace testing_support;

namespace {

// <s> 0 1 / <s> 0 with D = 0.5, worked out by hand:
//   P(0) = 2/3, P(1) = 1/3
//   P(0|<s>) = 11/12, P(1|<s>) = 1/12
//   P(0|0) = 1/3, P(1|0) = 2/3
NGramLM hand_bigram() { return train_ngram({{0, 1}, {0}}, LmUnit::phoneme, 2, 2, 0.5); }

Lexicon small_lexicon() {
  Lexicon lex(PhonemeAlphabet({"a", "a#", "b", "b#"}));
  lex.add("x", {1});
  lex.add("y", {0, 3});
  lex.add("z", {2, 1});
  lex.add("zz", {2, 1});
  return lex;
}

}  // namespace

TEST(NGram, HandComputedBigram) {
  const auto lm = hand_bigram();
  const std::vector<int> none, bos{kBos}, zero{0}, one{1};
  EXPECT_NEAR(std::exp(lm.log_prob(none, 0)), 2.0 / 3, 1e-12);
  EXPECT_NEAR(std::exp(lm.log_prob(bos, 0)), 11.0 / 12, 1e-12);
  EXPECT_NEAR(std::exp(lm.log_prob(bos, 1)), 1.0 / 12, 1e-12);
  EXPECT_NEAR(std::exp(lm.log_prob(zero, 1)), 2.0 / 3, 1e-12);
  EXPECT_NEAR(std::exp(lm.log_prob(zero, 0)), 1.0 / 3, 1e-12);
  // unseen context backs off to the unigram
  EXPECT_NEAR(std::exp(lm.log_prob(one, 1)), 1.0 / 3, 1e-12);
  EXPECT_NEAR(lm.sequence_log_prob(std::vector<int>{0, 1}, false), std::log(11.0 / 12) + std::log(2.0 / 3), 1e-12);
}

TEST(NGram, DistributionsNormalize) {
  std::mt19937_64 rng(4);
  const auto corpus = random_corpus(rng, 5, 40, 6);
  for (int order = 0; order <= 4; ++order) {
    const auto lm = train_ngram(corpus, LmUnit::phoneme, order, 5, 0.4);
    for (const auto& [h, ctx] : lm.table()) EXPECT_NEAR(log_sum_exp(ctx.dist), 0.0, 1e-12) << "order " << order;
  }
  const auto wlm = train_ngram(corpus, LmUnit::word, 3, 5, 0.4);
  EXPECT_EQ(wlm.output_size(), 7);
  for (const auto& [h, ctx] : wlm.table()) EXPECT_NEAR(log_sum_exp(ctx.dist), 0.0, 1e-12);
}

TEST(NGram, UniformPerplexityEqualsVocabulary) {
  for (int v : {3, 79}) {
    const auto lm = train_ngram({}, LmUnit::phoneme, 0, v, 0.0);
    EXPECT_NEAR(perplexity(lm, {{0, 1, 2}, {v - 1}}), v, 1e-9);
  }
}

TEST(NGram, ZeroDiscountNeedsFullCoverage) {
  EXPECT_THROW(train_ngram({{0, 0}}, LmUnit::phoneme, 1, 2, 0.0), ValidationError);
  EXPECT_NO_THROW(train_ngram({{0, 1}}, LmUnit::phoneme, 1, 2, 0.0));
}

TEST(NGram, RejectsOutOfRangeTokens) {
  EXPECT_THROW(train_ngram({{0, 5}}, LmUnit::phoneme, 2, 2, 0.5), ValidationError);
  EXPECT_THROW(train_ngram({}, LmUnit::phoneme, 2, 2, 0.5), ValidationError);
  EXPECT_THROW(NGramLM(LmUnit::phoneme, -1, 2, 0.5), ValidationError);
}

TEST(NGram, PerplexityDecreasesWithOrderOnTrainingData) {
  std::mt19937_64 rng(6);
  std::vector<std::vector<int>> corpus;
  for (int i = 0; i < 50; ++i) corpus.push_back({0, 1, 2, 3, 0, 1, 2, 3});
  const double p1 = perplexity(train_ngram(corpus, LmUnit::phoneme, 1, 4, 0.5), corpus);
  const double p2 = perplexity(train_ngram(corpus, LmUnit::phoneme, 2, 4, 0.5), corpus);
  EXPECT_LT(p2, p1);
}

TEST(Arpa, RoundTripPreservesDistributions) {
  std::mt19937_64 rng(9);
  const auto corpus = random_corpus(rng, 4, 30, 5);
  const std::vector<std::string> names{"a", "b", "c", "d"};
  for (LmUnit unit : {LmUnit::phoneme, LmUnit::word})
    for (int order : {0, 1, 2, 3}) {
      const auto lm = train_ngram(corpus, unit, order, 4, 0.3);
      std::stringstream ss;
      write_arpa(lm, ss, names);
      const auto back = read_arpa(ss, names);
      EXPECT_EQ(back.order(), order);
      EXPECT_EQ(back.unit(), unit);
      for (const auto& s : random_corpus(rng, 4, 10, 4)) {
        std::vector<int> h{kBos};
        for (int w : s) {
          for (int y = 0; y < lm.output_size(); ++y) EXPECT_NEAR(back.log_prob(h, y), lm.log_prob(h, y), 1e-12);
          h.push_back(w);
        }
      }
    }
}

TEST(Arpa, ReportsLineOfBadEntry) {
  std::stringstream ss("\\data\\\norder=1\nngram 1=2\n\n\\1-grams:\n-0.3\ta\t0\n-0.3\tq\t0\n\\end\\\n");
  try {
    read_arpa(ss, {"a", "b"});
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7u);
  }
}

TEST(StatefulLM, NGramBehindStateMatchesContextQueries) {
  std::mt19937_64 rng(10);
  const auto corpus = random_corpus(rng, 3, 30, 6);
  const auto lm = train_ngram(corpus, LmUnit::phoneme, 3, 3, 0.5);
  const NGramStatefulLM st(lm);
  auto s = st.initial_state();
  std::vector<int> h{kBos};
  for (int a : {0, 2, 2, 1, 0}) {
    const auto d = st.log_probs(s);
    for (int y = 0; y < 3; ++y) EXPECT_DOUBLE_EQ(d[static_cast<std::size_t>(y)], lm.log_prob(h, y));
    s = st.advance(s, a);
    h.push_back(a);
  }
}

TEST(StatefulLM, SuffixModelNormalizes) {
  std::mt19937_64 rng(12);
  const SuffixLM lm(random_corpus(rng, 3, 20, 7), 3);
  const SuffixLM copy = lm;
  auto s = copy.initial_state();
  for (int a : {1, 1, 0, 2, 2, 2, 1, 0, 0}) {
    EXPECT_NEAR(log_sum_exp(copy.log_probs(s)), 0.0, 1e-12);
    s = copy.advance(s, a);
  }
  EXPECT_EQ(lm.model().order(), 8);
}

TEST(WordLevel, ScoresOnlyAtWordEnds) {
  const auto lex = small_lexicon();
  const auto wlm = train_ngram({{0, 1}, {1, 2}}, LmUnit::word, 2, lex.num_words(), 0.4);
  const WordEowLM lm(wlm, lex);
  auto s = lm.start();
  EXPECT_EQ(lm.score(s, 0), 0.0);
  s = lm.advance(s, 0);
  const std::vector<int> bos{kBos};
  EXPECT_NEAR(lm.score(s, 3), wlm.log_prob(bos, 1), 1e-12);  // "y"
  s = lm.advance(s, 3);
  EXPECT_TRUE(s.within.empty());
  // homophones z / zz: best-scoring one is taken
  const std::vector<int> hy{1};
  const double expect = std::max(wlm.log_prob(hy, 2), wlm.log_prob(hy, 3));
  s = lm.advance(s, 2);
  EXPECT_NEAR(lm.score(s, 1), expect, 1e-12);
}

TEST(WordLevel, UnknownPronunciationUsesUnk) {
  const auto lex = small_lexicon();
  const auto wlm = train_ngram({{0, 1}}, LmUnit::word, 2, lex.num_words(), 0.4);
  const WordEowLM lm(wlm, lex);
  auto s = lm.advance(lm.start(), 0);
  const std::vector<int> bos{kBos};
  EXPECT_NEAR(lm.score(s, 1), wlm.log_prob(bos, wlm.unk()), 1e-12);  // "a a#" not in lexicon
}

TEST(WordLevel, SentenceEndOnlyWhenRequested) {
  const auto lex = small_lexicon();
  const auto wlm = train_ngram({{0, 1}}, LmUnit::word, 2, lex.num_words(), 0.4);
  const WordEowLM off(wlm, lex), on(wlm, lex, true);
  const std::vector<Label> labels{1};
  const std::vector<int> bos{kBos}, x{0};
  EXPECT_NEAR(sequence_lm_score(off, labels), wlm.log_prob(bos, 0), 1e-12);
  EXPECT_NEAR(sequence_lm_score(on, labels), wlm.log_prob(bos, 0) + wlm.log_prob(x, wlm.eos()), 1e-12);
}

TEST(MultiLevel, CompleteWordsNetTheWordScore) {
  const auto lex = small_lexicon();
  std::mt19937_64 rng(13);
  const auto plm = train_ngram(random_corpus(rng, 4, 30, 6), LmUnit::phoneme, 2, 4, 0.5);
  const auto wlm = train_ngram({{0, 1, 2}, {2, 3}, {1}}, LmUnit::word, 3, lex.num_words(), 0.4);
  const MultiLevelLM<NGramLM> ml(plm, wlm, lex);
  const WordEowLM pure(wlm, lex);
  const std::vector<Label> labels{0, 3, 2, 1, 1, 0, 3};
  EXPECT_NEAR(sequence_lm_score(ml, labels), sequence_lm_score(pure, labels), 1e-12);
  // an unfinished word contributes nothing either
  const std::vector<Label> open{0, 3, 2};
  EXPECT_NEAR(sequence_lm_score(ml, open), sequence_lm_score(pure, open), 1e-12);
}

TEST(TableLMTest, LooksUpLastLabels) {
  std::mt19937_64 rng(2);
  const auto lm = random_table_lm(rng, 2, 3);
  const std::vector<int> h{kBos, 2, 0, 1};
  const auto key = lm.codec().encode(std::vector<int>{0, 1});
  EXPECT_EQ(lm.log_probs(h).data(), lm.row(key).data());
  const std::vector<int> start{kBos};
  EXPECT_EQ(lm.log_probs(start).data(), lm.row(lm.codec().start()).data());
}
