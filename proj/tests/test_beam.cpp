#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

using namespace seqdisc;
using namespace testing_support;

namespace {

int full_beam(int T, int V) {
  int b = 1;
  for (int t = 0; t < T; ++t) b *= V + 1;
  return b;
}

Lexicon letter_lexicon() {
  Lexicon lex(PhonemeAlphabet({"a", "a#", "b", "b#"}));
  lex.add("A", {1});
  lex.add("B", {3});
  lex.add("AB", {0, 3});
  lex.add("BA", {2, 1});
  return lex;
}

}  // namespace

TEST(Beam, FullBeamIsExact) {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 20; ++i) {
    const int T = 1 + i % 4, V = 1 + i % 3, k = 1 + i % 2;
    const auto s = random_scores(rng, T, V, k);
    const auto lm = random_table_lm(rng, k, V);
    const ContextSequenceLM<TableLM> seq(lm);
    const SeqScoreConfig cfg{1.0 + 0.1 * (i % 3), 0.3, std::nullopt, k};
    const double exact = brute_force_denominator(s, seq, cfg);
    EXPECT_NEAR(beam_denominator(s, seq, cfg, full_beam(T, V), BeamMode::prune_recomb), exact, 1e-9);
    EXPECT_NEAR(beam_denominator(s, seq, cfg, full_beam(T, V), BeamMode::prune_single), exact, 1e-9);
  }
}

TEST(Beam, RecombinationKeepsAtLeastAsMuchMass) {
  std::mt19937_64 rng(42);
  int failures = 0;
  for (int i = 0; i < 50; ++i) {
    const int T = 3 + i % 3, V = 2 + i % 2, k = 1;
    const auto s = random_scores(rng, T, V, k);
    const auto lm = random_table_lm(rng, k, V);
    const ContextSequenceLM<TableLM> seq(lm);
    const SeqScoreConfig cfg{1.0, 0.3, std::nullopt, k};
    const int B = 1 + i % 4;
    const double r = beam_denominator(s, seq, cfg, B, BeamMode::prune_recomb);
    const double p = beam_denominator(s, seq, cfg, B, BeamMode::prune_single);
    failures += r < p - 1e-12;
    EXPECT_LE(r, brute_force_denominator(s, seq, cfg) + 1e-12);
  }
  EXPECT_EQ(failures, 0);
}

TEST(Beam, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(43);
  auto s = random_scores(rng, 3, 2, 1);
  const auto lm = random_table_lm(rng, 1, 2);
  const ContextSequenceLM<TableLM> seq(lm);
  const SeqScoreConfig cfg{1.0, 0.3, std::nullopt, 1};
  FrameScores g = zeros_like(s);
  beam_denominator(s, seq, cfg, 3, BeamMode::prune_recomb, &g, 1.0);
  const double eps = 1e-6;
  for (int t = 0; t < 3; ++t)
    for (std::size_t c = 0; c < s.num_contexts(); ++c)
      for (std::size_t y = 0; y < 3; ++y) {
        auto& x = s.at(t, c)[y];
        const double orig = x;
        x = orig + eps;
        const double up = beam_denominator(s, seq, cfg, 3, BeamMode::prune_recomb);
        x = orig - eps;
        const double down = beam_denominator(s, seq, cfg, 3, BeamMode::prune_recomb);
        x = orig;
        EXPECT_NEAR(g.at(t, c)[y], (up - down) / (2 * eps), 1e-5);
      }
}

TEST(Beam, RejectsBadArguments) {
  std::mt19937_64 rng(44);
  const auto s = random_scores(rng, 2, 2, 2);
  const auto lm = random_table_lm(rng, 1, 2);
  const ContextSequenceLM<TableLM> seq(lm);
  EXPECT_THROW(beam_denominator(s, seq, SeqScoreConfig{1.0, 0.0, std::nullopt, 1}, 4, BeamMode::prune_recomb), ValidationError);
  EXPECT_THROW(beam_denominator(s, seq, SeqScoreConfig{1.0, 0.0, std::nullopt, 2}, 0, BeamMode::prune_recomb), ValidationError);
  EXPECT_THROW(parse_beam_mode("wide"), ValidationError);
  EXPECT_EQ(parse_beam_mode("prune_single"), BeamMode::prune_single);
}

TEST(NBest, ContainsReferenceSortedAndUnique) {
  const auto lex = letter_lexicon();
  const auto wlm = train_ngram({{0, 1}, {2}, {3, 0}}, LmUnit::word, 2, lex.num_words(), 0.4);
  const WordEowLM elm(wlm, lex, true);
  std::mt19937_64 rng(45);
  for (int i = 0; i < 10; ++i) {
    const auto s = random_scores(rng, 4, 4, 1);
    Utterance u;
    u.id = "u" + std::to_string(i);
    u.num_frames = 4;
    u.reference_phonemes = {0, 3, 1};
    u.reference_words = {2, 0};
    const auto list = generate_nbest(s, elm, lex, u, 1.0, 0.5, 4, 8);
    ASSERT_LE(list.hyps.size(), 4u);
    ASSERT_TRUE(list.find(u.reference_phonemes).has_value());
    EXPECT_EQ(list.hyps[*list.find(u.reference_phonemes)].words, u.reference_words);
    std::set<LabelSequence> seen;
    for (std::size_t j = 0; j < list.hyps.size(); ++j) {
      EXPECT_TRUE(seen.insert(list.hyps[j].phonemes).second);
      if (j) {
        EXPECT_GE(list.hyps[j - 1].score, list.hyps[j].score);
      }
    }
  }
}

TEST(NBest, ScoresSumAllAlignmentsWithWideBeam) {
  const auto lex = letter_lexicon();
  const auto wlm = train_ngram({{0, 1}, {2}, {3, 0}}, LmUnit::word, 2, lex.num_words(), 0.4);
  const WordEowLM elm(wlm, lex, true);
  std::mt19937_64 rng(46);
  const auto s = random_scores(rng, 3, 4, 1);
  Utterance u;
  u.id = "u";
  u.num_frames = 3;
  u.reference_phonemes = {1};
  u.reference_words = {0};
  const auto list = generate_nbest(s, elm, lex, u, 0.8, 0.5, 5, 500);
  for (const auto& h : list.hyps)
    EXPECT_NEAR(h.score, 0.8 * 0 + numerator_forward(s, h.phonemes, 0.8) + 0.5 * sequence_lm_score(elm, h.phonemes), 1e-9);
  // wide beam: the list is the exact top 5 over all label sequences
  std::vector<double> all;
  for (const auto& seq : all_sequences(4, 3))
    all.push_back(numerator_forward(s, seq, 0.8) + 0.5 * sequence_lm_score(elm, seq));
  std::sort(all.rbegin(), all.rend());
  if (!list.hyps.empty() && list.hyps.front().phonemes != u.reference_phonemes) {
    EXPECT_NEAR(list.hyps.front().score, all.front(), 1e-9);
  }
}

TEST(NBest, ReferenceReplacesLowestEntry) {
  const auto lex = letter_lexicon();
  const auto wlm = train_ngram({{0}}, LmUnit::word, 1, lex.num_words(), 0.4);
  const WordEowLM elm(wlm, lex);
  // AM strongly prefers emitting nothing
  FrameScores s(2, 4, 1);
  for (int t = 0; t < 2; ++t)
    for (std::size_t c = 0; c < s.num_contexts(); ++c) {
      auto row = s.at(t, c);
      for (std::size_t y = 0; y < 5; ++y) row[y] = y == 4 ? std::log(0.96) : std::log(0.01);
    }
  Utterance u;
  u.id = "u";
  u.num_frames = 2;
  u.reference_phonemes = {2, 1};
  u.reference_words = {3};
  const auto list = generate_nbest(s, elm, lex, u, 1.0, 0.0, 1, 4);
  ASSERT_EQ(list.hyps.size(), 1u);
  EXPECT_EQ(list.hyps[0].phonemes, u.reference_phonemes);
  EXPECT_THROW(generate_nbest(s, elm, lex, u, 1.0, 0.0, 4, 2), ValidationError);
}
