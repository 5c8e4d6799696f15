#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"

using namespace seqdisc;
using namespace testing_support;

namespace {

const char* kLexicon =
    "cat\tk a t#\n"
    "at\ta t#\n"
    "a\ta#\n"
    "eh\ta#\n"
    "\n";

std::filesystem::path tmp_dir() {
  auto p = std::filesystem::path(SEQDISC_TEST_TMP) / "io";
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(LexiconFile, DerivesAlphabetAndHomophones) {
  std::stringstream ss(kLexicon);
  const auto lex = parse_lexicon(ss);
  EXPECT_EQ(lex.alphabet().symbols(), (std::vector<std::string>{"a", "a#", "k", "k#", "t", "t#"}));
  EXPECT_EQ(lex.num_words(), 4);
  EXPECT_EQ(lex.map_pronunciation(parse_phonemes(lex, "a#")).size(), 2u);
  std::stringstream out;
  write_lexicon(lex, out);
  std::stringstream again(out.str());
  EXPECT_EQ(parse_lexicon(again).entries(), lex.entries());
}

TEST(LexiconFile, EmptyFileGivesEmptyLexicon) {
  std::stringstream ss("\n\n");
  const auto lex = parse_lexicon(ss);
  EXPECT_TRUE(lex.empty());
  EXPECT_EQ(lex.num_words(), 0);
}

TEST(LexiconFile, ErrorsCarryLineNumbers) {
  const std::vector<std::pair<std::string, std::size_t>> bad{
      {"ok\ta#\nbad line without tab\n", 2},
      {"ok\ta#\n\nx\ta# b#\n", 3},
      {"x\ta b\n", 1},
      {"x\t\n", 1},
      {"x\ta##\n", 1},
  };
  for (const auto& [text, line] : bad) {
    std::stringstream ss(text);
    try {
      parse_lexicon(ss);
      ADD_FAILURE() << text;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), line) << text;
    }
  }
}

TEST(ScoreTensorFile, RoundTripIsExact) {
  std::mt19937_64 rng(81);
  for (int k : {0, 1, 2}) {
    const auto s = random_scores(rng, 3, 2, k);
    std::stringstream ss;
    write_score_tensor(s, ss);
    const auto back = parse_score_tensor(ss);
    EXPECT_EQ(back.context_size(), k);
    ASSERT_EQ(back.raw().size(), s.raw().size());
    for (std::size_t i = 0; i < s.raw().size(); ++i) EXPECT_EQ(back.raw()[i], s.raw()[i]);
  }
}

TEST(ScoreTensorFile, RejectsMalformedInput) {
  for (const char* text : {"T 1 LABELS 2\n0 0\n", "T 1 LABELS 3\n-1 -1\n", "X 1\n", "T 1 LABELS 2\n-0.5 nope\n",
                           "T 2 LABELS 2\n-0.6931471805599453 -0.6931471805599453\n"}) {
    std::stringstream ss(text);
    EXPECT_THROW(parse_score_tensor(ss), Error) << text;
  }
}

TEST(CorpusFile, LoadsAndValidates) {
  std::stringstream lx(kLexicon);
  const auto lex = parse_lexicon(lx);
  std::stringstream ss(
      R"({"id": "u1", "num_frames": 5, "phonemes": "k a t# a#", "words": "cat eh"})"
      "\n"
      R"({"id": "u2", "num_frames": 1, "phonemes": "a t#", "words": "at", "features": [[0.5, 1.0]]})"
      "\n");
  const auto corpus = parse_corpus(ss, lex);
  ASSERT_EQ(corpus.size(), 2u);
  EXPECT_EQ(corpus[0].reference_words, (WordSequence{*lex.find_word("cat"), *lex.find_word("eh")}));
  EXPECT_EQ(corpus[1].feature_dim, 2);
  // S > T still loads; it fails only when scored
  EXPECT_GT(corpus[1].reference_phonemes.size(), static_cast<std::size_t>(corpus[1].num_frames));
}

TEST(CorpusFile, RejectsInconsistentReferences) {
  std::stringstream lx(kLexicon);
  const auto lex = parse_lexicon(lx);
  for (const char* line : {
           R"({"id": "u", "num_frames": 3, "phonemes": "k a t#", "words": "at"})",
           R"({"id": "u", "num_frames": 3, "phonemes": "k a", "words": "cat"})",
           R"({"id": "u", "num_frames": 3, "phonemes": "q", "words": ""})",
           R"({"id": "u", "num_frames": 3, "phonemes": "a#", "words": "dog"})",
           R"({"id": "u", "num_frames": 2, "phonemes": "a#", "words": "a", "features": [[1.0]]})",
           R"({"id": "u", "num_frames": 3, "phonemes": "a#")",
       }) {
    std::stringstream ss(std::string("\n") + line + "\n");
    try {
      parse_corpus(ss, lex);
      ADD_FAILURE() << line;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), 2u);
    }
  }
}

TEST(CorpusFile, ScoresPathIsRelativeToCorpus) {
  const auto dir = tmp_dir();
  std::mt19937_64 rng(82);
  const auto s = random_scores(rng, 2, 6, 1);
  {
    std::ofstream f(dir / "u1.scores");
    write_score_tensor(s, f);
    std::ofstream lx(dir / "lex.txt");
    lx << kLexicon;
    std::ofstream c(dir / "corpus.jsonl");
    c << R"({"id": "u1", "num_frames": 2, "phonemes": "a#", "words": "a", "scores": "u1.scores"})" << "\n";
  }
  const auto lex = load_lexicon((dir / "lex.txt").string());
  const auto corpus = load_corpus((dir / "corpus.jsonl").string(), lex);
  ASSERT_TRUE(corpus[0].scores.has_value());
  const auto got = corpus[0].scores->raw();
  EXPECT_EQ(std::vector<double>(got.begin(), got.end()), std::vector<double>(s.raw().begin(), s.raw().end()));
}

TEST(NBestFile, RoundTrip) {
  std::stringstream lx(kLexicon);
  const auto lex = parse_lexicon(lx);
  NBestList l{"u1", {{{0}, parse_phonemes(lex, "k a t#"), -1.25}, {{lex.unknown_word()}, parse_phonemes(lex, "k#"), -3.5}}, true};
  std::stringstream ss;
  write_nbest({l}, lex, ss);
  const auto back = parse_nbest(ss, lex);
  ASSERT_EQ(back.size(), 1u);
  ASSERT_EQ(back[0].hyps.size(), 2u);
  EXPECT_EQ(back[0].hyps[1].words, l.hyps[1].words);
  EXPECT_EQ(back[0].hyps[0].phonemes, l.hyps[0].phonemes);
  EXPECT_EQ(back[0].hyps[0].score, -1.25);
}

TEST(HypFile, RoundTrip) {
  std::stringstream lx(kLexicon);
  const auto lex = parse_lexicon(lx);
  const std::map<std::string, WordSequence> hyps{{"a", {0, 1}}, {"b", {}}};
  std::stringstream ss;
  write_hyps(hyps, lex, ss);
  EXPECT_EQ(parse_hyps(ss, lex), hyps);
}

TEST(Synthetic, IsDeterministicAndConsistent) {
  SyntheticConfig cfg;
  cfg.num_utterances = 20;
  cfg.num_text_sentences = 50;
  const auto a = generate_synthetic(cfg), b = generate_synthetic(cfg);
  EXPECT_EQ(a.utterances.size(), 20u);
  EXPECT_EQ(a.lexicon.num_words(), 30);
  for (std::size_t i = 0; i < a.utterances.size(); ++i) {
    const auto& u = a.utterances[i];
    EXPECT_EQ(u.features, b.utterances[i].features);
    EXPECT_EQ(a.lexicon.to_words(u.reference_phonemes), u.reference_words);
    EXPECT_LE(u.reference_phonemes.size(), static_cast<std::size_t>(u.num_frames));
    EXPECT_EQ(u.features.size(), static_cast<std::size_t>(u.num_frames * u.feature_dim));
  }
  // writing and re-reading the corpus keeps it intact
  std::stringstream ss;
  write_corpus(a.utterances, a.lexicon, ss);
  const auto back = parse_corpus(ss, a.lexicon);
  ASSERT_EQ(back.size(), a.utterances.size());
  EXPECT_EQ(back[3].reference_words, a.utterances[3].reference_words);
}
