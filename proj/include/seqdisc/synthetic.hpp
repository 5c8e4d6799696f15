#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "core.hpp"
#include "error.hpp"

namespace seqdisc {

struct SyntheticConfig {
  int num_utterances = 200;
  int num_words = 30;
  int num_phonemes = 8;        // base phonemes; the alphabet doubles this
  int min_words = 3;
  int max_words = 6;
  double follow_prob = 0.85;   // chance of taking a word's preferred successor
  int blanks_per_label = 1;    // blank frames after each emitted label
  int extra_frames = 2;        // trailing blank frames
  double signal = 1.0;         // one-hot amplitude of the feature vectors
  double noise = 0.6;          // Gaussian feature noise
  int num_text_sentences = 2000;
  std::uint64_t seed = 1;
};

struct SyntheticData {
  Lexicon lexicon;
  std::vector<Utterance> utterances;
  std::vector<std::vector<int>> text;  // word-id sentences for LM training
};

// Toy task: a lexicon of short pronunciations, a word Markov grammar with
// one strongly preferred successor per word, utterances with fixed
// alignments (label then blanks) and noisy one-hot frame features.
inline SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.num_phonemes < 2 || cfg.num_words < 2 || cfg.min_words < 1 || cfg.max_words < cfg.min_words)
    throw ValidationError("invalid synthetic corpus configuration");
  std::mt19937_64 rng(cfg.seed);

  std::vector<std::string> symbols;
  for (int p = 0; p < cfg.num_phonemes; ++p) {
    const std::string base = "p" + std::to_string(p);
    symbols.push_back(base);
    symbols.push_back(base + "#");
  }
  SyntheticData out{Lexicon{PhonemeAlphabet(symbols)}, {}, {}};
  auto& lex = out.lexicon;

  std::uniform_int_distribution<int> len_dist(1, 3), ph_dist(0, cfg.num_phonemes - 1);
  std::set<LabelSequence> used;
  const std::size_t max_prons = static_cast<std::size_t>(cfg.num_phonemes) * (1 + cfg.num_phonemes * (1 + cfg.num_phonemes));
  if (static_cast<std::size_t>(cfg.num_words) > max_prons) throw ValidationError("too many words for the phoneme set");
  for (int w = 0; w < cfg.num_words;) {
    LabelSequence pron;
    const int len = len_dist(rng);
    for (int i = 0; i < len; ++i) pron.push_back(2 * ph_dist(rng) + (i + 1 == len ? 1 : 0));
    if (!used.insert(pron).second) continue;
    char name[16];
    std::snprintf(name, sizeof(name), "w%02d", w);
    lex.add(name, pron);
    ++w;
  }

  std::uniform_int_distribution<int> word_dist(0, cfg.num_words - 1), nw_dist(cfg.min_words, cfg.max_words);
  std::vector<int> successor(static_cast<std::size_t>(cfg.num_words));
  for (auto& s : successor) s = word_dist(rng);
  std::bernoulli_distribution follow(cfg.follow_prob);
  auto sentence = [&] {
    std::vector<int> s{word_dist(rng)};
    const int n = nw_dist(rng);
    while (static_cast<int>(s.size()) < n) s.push_back(follow(rng) ? successor[static_cast<std::size_t>(s.back())] : word_dist(rng));
    return s;
  };

  for (int i = 0; i < cfg.num_text_sentences; ++i) out.text.push_back(sentence());

  const int dim = lex.alphabet().size() + 1;
  const int blank = lex.alphabet().blank();
  std::normal_distribution<double> noise(0.0, cfg.noise);
  for (int i = 0; i < cfg.num_utterances; ++i) {
    Utterance u;
    char id[16];
    std::snprintf(id, sizeof(id), "utt%04d", i);
    u.id = id;
    for (int w : sentence()) {
      u.reference_words.push_back(w);
      const auto& prons = lex.entries();
      for (const auto& [pron, words] : prons)
        if (std::find(words.begin(), words.end(), w) != words.end())
          u.reference_phonemes.insert(u.reference_phonemes.end(), pron.begin(), pron.end());
    }
    std::vector<int> align;
    for (Label a : u.reference_phonemes) {
      align.push_back(a);
      for (int b = 0; b < cfg.blanks_per_label; ++b) align.push_back(blank);
    }
    for (int b = 0; b < cfg.extra_frames; ++b) align.push_back(blank);
    u.num_frames = static_cast<int>(align.size());
    u.feature_dim = dim;
    u.features.assign(static_cast<std::size_t>(u.num_frames * dim), 0.0);
    for (int t = 0; t < u.num_frames; ++t)
      for (int d = 0; d < dim; ++d)
        u.features[static_cast<std::size_t>(t * dim + d)] = (d == align[static_cast<std::size_t>(t)] ? cfg.signal : 0.0) + noise(rng);
    out.utterances.push_back(std::move(u));
  }
  return out;
}

}  // namespace seqdisc
