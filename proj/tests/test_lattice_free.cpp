#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace seqdisc;
using namespace testing_support;

namespace {

struct Fixture {
  int T, V, k;
  double alpha, beta;
};

Fixture fixture(int i) {
  return {1 + i % 5, 1 + (i / 5) % 3, 1 + i % 2, std::vector<double>{0.5, 1.0, 1.2}[i % 3],
          std::vector<double>{0.0, 0.2, 0.3}[(i / 3) % 3]};
}

}  // namespace

TEST(Limited, MatchesEnumerationOracle) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 40; ++i) {
    const auto f = fixture(i);
    const auto s = random_scores(rng, f.T, f.V, f.k);
    const auto lm = random_table_lm(rng, f.k, f.V);
    const SeqScoreConfig cfg{f.alpha, f.beta, std::nullopt, f.k};
    EXPECT_NEAR(lf_denominator_limited(s, lm, cfg), oracle_denominator(s, history_lm(lm), f.alpha, f.beta), 1e-9) << i;
  }
}

TEST(Limited, ScorerContextShorterThanRecombination) {
  std::mt19937_64 rng(22);
  const auto s = random_scores(rng, 4, 2, 0);
  const auto lm = random_table_lm(rng, 2, 2);
  const SeqScoreConfig cfg{1.0, 0.5, std::nullopt, 2};
  EXPECT_NEAR(lf_denominator_limited(s, lm, cfg), oracle_denominator(s, history_lm(lm), 1.0, 0.5), 1e-9);
}

TEST(Limited, NGramBackendMatchesOracle) {
  std::mt19937_64 rng(23);
  const auto lm = train_ngram(random_corpus(rng, 3, 20, 5), LmUnit::phoneme, 3, 3, 0.5);
  const auto s = random_scores(rng, 4, 3, 1);
  const SeqScoreConfig cfg{1.0, 0.3, std::nullopt, 2};
  const HistoryLM h = [&](const std::vector<int>& hist, int a) {
    std::vector<int> full{kBos};
    full.insert(full.end(), hist.begin(), hist.end());
    return lm.log_prob(full, a);
  };
  EXPECT_NEAR(lf_denominator_limited(s, lm, cfg), oracle_denominator(s, h, 1.0, 0.3), 1e-9);
}

TEST(Limited, NormalizedWithoutLm) {
  std::mt19937_64 rng(24);
  const auto s = random_scores(rng, 5, 3, 2);
  const auto lm = random_table_lm(rng, 2, 3);
  EXPECT_NEAR(lf_denominator_limited(s, lm, SeqScoreConfig{1.0, 0.0, std::nullopt, 2}), 0.0, 1e-12);
}

TEST(Limited, RejectsLongLmContext) {
  std::mt19937_64 rng(25);
  const auto s = random_scores(rng, 3, 2, 1);
  const auto lm = random_table_lm(rng, 2, 2);
  EXPECT_THROW(lf_denominator_limited(s, lm, SeqScoreConfig{1.0, 0.2, std::nullopt, 1}), ValidationError);
  EXPECT_THROW(lf_denominator_limited(s, lm, SeqScoreConfig{0.0, 0.2, std::nullopt, 2}), ValidationError);
}

TEST(Limited, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(26);
  auto s = random_scores(rng, 3, 2, 1);
  const auto lm = random_table_lm(rng, 1, 2);
  const SeqScoreConfig cfg{1.2, 0.3, std::nullopt, 1};
  FrameScores g = zeros_like(s);
  lf_denominator_limited(s, lm, cfg, &g, 1.0);
  const double eps = 1e-6;
  for (int t = 0; t < 3; ++t)
    for (std::size_t c = 0; c < s.num_contexts(); ++c)
      for (std::size_t y = 0; y < 3; ++y) {
        auto& x = s.at(t, c)[y];
        const double orig = x;
        x = orig + eps;
        const double up = lf_denominator_limited(s, lm, cfg);
        x = orig - eps;
        const double down = lf_denominator_limited(s, lm, cfg);
        x = orig;
        EXPECT_NEAR(g.at(t, c)[y], (up - down) / (2 * eps), 1e-6);
      }
}

TEST(BruteForce, LibraryEnumerationMatchesOracle) {
  std::mt19937_64 rng(27);
  for (int i = 0; i < 20; ++i) {
    const auto f = fixture(i);
    const auto s = random_scores(rng, f.T, f.V, f.k);
    const auto lm = random_table_lm(rng, f.k, f.V);
    const SeqScoreConfig cfg{f.alpha, f.beta, std::nullopt, f.k};
    EXPECT_NEAR(brute_force_denominator(s, ContextSequenceLM<TableLM>(lm), cfg),
                oracle_denominator(s, history_lm(lm), f.alpha, f.beta), 1e-9);
  }
}

TEST(BruteForce, RefusesHugeEnumerations) {
  std::mt19937_64 rng(28);
  const auto s = random_scores(rng, 30, 3, 0);
  const auto lm = random_table_lm(rng, 0, 3);
  EXPECT_THROW(brute_force_denominator(s, ContextSequenceLM<TableLM>(lm), SeqScoreConfig{}), ValidationError);
}

TEST(Approx, ExactForShortLmContext) {
  std::mt19937_64 rng(29);
  for (int i = 0; i < 30; ++i) {
    const auto f = fixture(i);
    const auto s = random_scores(rng, f.T, f.V, f.k);
    const auto lm = train_ngram(random_corpus(rng, f.V, 15, 5), LmUnit::phoneme, f.k + 1, f.V, 0.5);
    const SeqScoreConfig cfg{f.alpha, f.beta, std::nullopt, f.k};
    EXPECT_NEAR(lf_denominator_approx(s, NGramStatefulLM(lm), cfg), lf_denominator_limited(s, lm, cfg), 1e-9) << i;
  }
}

TEST(Approx, ExactWhenContextCoversUtterance) {
  std::mt19937_64 rng(30);
  for (int i = 0; i < 10; ++i) {
    const int T = 2 + i % 3, V = 2;
    const auto s = random_scores(rng, T, V, 1);
    const SuffixLM lm(random_corpus(rng, V, 15, 6), V);
    const SeqScoreConfig cfg{1.0, 0.4, std::nullopt, T};
    EXPECT_NEAR(lf_denominator_approx(s, lm, cfg), brute_force_denominator(s, StatefulSequenceLM<SuffixLM>(lm), cfg), 1e-9);
  }
}

TEST(Approx, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(31);
  auto s = random_scores(rng, 4, 2, 1);
  const SuffixLM lm(random_corpus(rng, 2, 15, 6), 2);
  const SeqScoreConfig cfg{1.0, 0.4, std::nullopt, 1};
  FrameScores g = zeros_like(s);
  const double base = lf_denominator_approx(s, lm, cfg, &g, 1.0);
  EXPECT_NEAR(base, lf_denominator_approx(s, lm, cfg), 1e-12);
  const double eps = 1e-6;
  for (int t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < s.num_contexts(); ++c)
      for (std::size_t y = 0; y < 3; ++y) {
        auto& x = s.at(t, c)[y];
        const double orig = x;
        x = orig + eps;
        const double up = lf_denominator_approx(s, lm, cfg);
        x = orig - eps;
        const double down = lf_denominator_approx(s, lm, cfg);
        x = orig;
        EXPECT_NEAR(g.at(t, c)[y], (up - down) / (2 * eps), 1e-5);
      }
}

TEST(Approx, ZeroRecombinationContext) {
  std::mt19937_64 rng(32);
  const auto s = random_scores(rng, 3, 2, 0);
  const auto lm = train_ngram(random_corpus(rng, 2, 10, 4), LmUnit::phoneme, 1, 2, 0.5);
  const SeqScoreConfig cfg{1.0, 0.5, std::nullopt, 0};
  EXPECT_NEAR(lf_denominator_approx(s, NGramStatefulLM(lm), cfg), lf_denominator_limited(s, lm, cfg), 1e-9);
}

TEST(TopJ, MonotoneAndExactAtFullBudget) {
  std::mt19937_64 rng(33);
  for (int i = 0; i < 20; ++i) {
    const int T = 3 + i % 3, V = 2 + i % 2, k = 1 + i % 2;
    const auto s = random_scores(rng, T, V, k);
    const auto lm = random_table_lm(rng, k, V);
    int full = 1;
    for (int j = 0; j < k; ++j) full *= V;
    const double exact = lf_denominator_limited(s, lm, SeqScoreConfig{1.0, 0.3, std::nullopt, k});
    double prev = kLogZero;
    for (int J = 1; J <= full; ++J) {
      const double v = lf_denominator_limited(s, lm, SeqScoreConfig{1.0, 0.3, J, k});
      EXPECT_GE(v, prev - 1e-12) << "J=" << J;
      prev = v;
    }
    EXPECT_NEAR(prev, exact, 1e-12);
  }
}

TEST(TopJ, SelectionBreaksTiesBySmallerKey) {
  const auto sel = top_j_select({{4, 1.0}, {2, 1.0}, {7, 3.0}, {1, 0.5}}, 2);
  ASSERT_EQ(sel.size(), 2u);
  EXPECT_EQ(sel[0].key, 7u);
  EXPECT_EQ(sel[1].key, 2u);
  EXPECT_THROW(top_j_select({}, 0), ValidationError);
}

TEST(WordDenominator, ExactWithFullContext) {
  Lexicon lex(PhonemeAlphabet({"a", "a#", "b", "b#"}));
  lex.add("x", {1});
  lex.add("y", {0, 3});
  lex.add("z", {2, 1});
  lex.add("zz", {2, 1});
  const auto wlm = train_ngram({{0, 1}, {1, 2}, {3}}, LmUnit::word, 2, lex.num_words(), 0.4);
  std::mt19937_64 rng(34);
  for (int T = 1; T <= 4; ++T) {
    const auto s = random_scores(rng, T, 4, 1);
    const SeqScoreConfig cfg{1.0, 0.5, std::nullopt, T};
    EXPECT_NEAR(lf_denominator_word(s, wlm, lex, cfg), brute_force_denominator(s, WordEowLM(wlm, lex), cfg), 1e-9);
  }
}

TEST(DpDump, OneJsonLinePerState) {
  std::mt19937_64 rng(35);
  const auto s = random_scores(rng, 2, 2, 1);
  const auto lm = random_table_lm(rng, 1, 2);
  DpTable table;
  lf_denominator_limited(s, lm, SeqScoreConfig{1.0, 0.2, std::nullopt, 1}, nullptr, 1.0, &table);
  ASSERT_EQ(table.frames.size(), 3u);
  std::stringstream ss;
  table.dump(ss, ContextCodec(1, 2), "u1");
  std::string line;
  std::getline(ss, line);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j["frame"], 0);
  EXPECT_EQ(j["context"], std::vector<int>{-1});
  EXPECT_EQ(j["utterance"], "u1");
  EXPECT_DOUBLE_EQ(j["q"].get<double>(), 0.0);
}
