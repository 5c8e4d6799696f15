// Shared fixtures and brute-force oracles for the test suite.
#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "seqdisc/seqdisc.hpp"

namespace testing_support {

using namespace seqdisc;

inline std::vector<double> random_log_dist(std::mt19937_64& rng, int n, double spread = 1.5) {
  std::normal_distribution<double> g(0.0, spread);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = g(rng);
  log_normalize(v);
  return v;
}

inline FrameScores random_scores(std::mt19937_64& rng, int T, int V, int k, double spread = 1.5) {
  FrameScores s(T, V, k);
  for (int t = 0; t < T; ++t)
    for (std::size_t c = 0; c < s.num_contexts(); ++c) {
      const auto d = random_log_dist(rng, V + 1, spread);
      std::copy(d.begin(), d.end(), s.at(t, c).begin());
    }
  return s;
}

inline TableLM random_table_lm(std::mt19937_64& rng, int k, int V) {
  TableLM lm(k, V);
  for (std::size_t key = 0; key < lm.codec().num_keys(); ++key) lm.row(key) = random_log_dist(rng, V);
  return lm;
}

inline std::vector<std::vector<int>> random_corpus(std::mt19937_64& rng, int V, int sentences, int max_len) {
  std::uniform_int_distribution<int> tok(0, V - 1), len(1, max_len);
  std::vector<std::vector<int>> c;
  for (int i = 0; i < sentences; ++i) {
    std::vector<int> s(static_cast<std::size_t>(len(rng)));
    for (auto& x : s) x = tok(rng);
    c.push_back(s);
  }
  return c;
}

// Key of the last k labels of `labels`, computed digit by digit.
inline std::size_t key_of(const FrameScores& s, const std::vector<int>& labels) {
  const int k = s.context_size();
  const int base = s.num_labels() + 1;
  std::size_t key = 0;
  for (int i = 0; i < k; ++i) {
    const int pos = static_cast<int>(labels.size()) - k + i;
    key = key * static_cast<std::size_t>(base) + static_cast<std::size_t>(pos < 0 ? s.num_labels() : labels[static_cast<std::size_t>(pos)]);
  }
  return key;
}

// Label LM as a function of the full label history.
using HistoryLM = std::function<double(const std::vector<int>& history, int label)>;

inline HistoryLM history_lm(const TableLM& lm) {
  return [&lm](const std::vector<int>& h, int a) {
    std::vector<int> full{kBos};
    full.insert(full.end(), h.begin(), h.end());
    return lm.log_probs(full)[static_cast<std::size_t>(a)];
  };
}

// Visits every alignment (one symbol per frame) with its labels and
// per-frame log-probs.
inline void for_each_alignment(const FrameScores& s,
                               const std::function<void(const std::vector<int>& labels, double am, double am_alpha1)>& fn,
                               double alpha) {
  const int T = s.num_frames(), W = s.num_labels() + 1;
  std::vector<int> y(static_cast<std::size_t>(T), 0);
  while (true) {
    std::vector<int> labels;
    double am = 0.0, plain = 0.0;
    for (int t = 0; t < T; ++t) {
      const double lp = s.at(t, key_of(s, labels))[static_cast<std::size_t>(y[static_cast<std::size_t>(t)])];
      am += alpha * lp;
      plain += lp;
      if (y[static_cast<std::size_t>(t)] != s.blank()) labels.push_back(y[static_cast<std::size_t>(t)]);
    }
    fn(labels, am, plain);
    int t = T - 1;
    while (t >= 0 && ++y[static_cast<std::size_t>(t)] == W) y[static_cast<std::size_t>(t--)] = 0;
    if (t < 0) break;
  }
}

inline double lm_total(const HistoryLM& lm, const std::vector<int>& labels) {
  double total = 0.0;
  std::vector<int> h;
  for (int a : labels) {
    total += lm(h, a);
    h.push_back(a);
  }
  return total;
}

// log sum over all alignments of P^alpha * LM^beta.
inline double oracle_denominator(const FrameScores& s, const HistoryLM& lm, double alpha, double beta) {
  std::vector<double> terms;
  for_each_alignment(
      s, [&](const std::vector<int>& labels, double am, double) { terms.push_back(am + (beta == 0.0 ? 0.0 : beta * lm_total(lm, labels))); },
      alpha);
  return log_sum_exp(terms);
}

// log sum over alignments collapsing to `target` of P^alpha.
inline double oracle_numerator(const FrameScores& s, const std::vector<int>& target, double alpha) {
  std::vector<double> terms;
  for_each_alignment(
      s, [&](const std::vector<int>& labels, double am, double) { if (labels == target) terms.push_back(am); }, alpha);
  return terms.empty() ? kLogZero : log_sum_exp(terms);
}

// All label sequences of length <= max_len over V labels.
inline std::vector<std::vector<int>> all_sequences(int V, int max_len) {
  std::vector<std::vector<int>> out{{}};
  std::size_t begin = 0;
  for (int len = 1; len <= max_len; ++len) {
    const std::size_t end = out.size();
    for (std::size_t i = begin; i < end; ++i)
      for (int a = 0; a < V; ++a) {
        auto s = out[i];
        s.push_back(a);
        out.push_back(s);
      }
    begin = end;
  }
  return out;
}

// Small random utterance with features for scorer-level tests.
inline Utterance random_utterance(std::mt19937_64& rng, int T, int V, int dim, std::vector<int> ref) {
  Utterance u;
  u.id = "u";
  u.num_frames = T;
  u.reference_phonemes = std::move(ref);
  u.feature_dim = dim;
  std::normal_distribution<double> g(0.0, 1.0);
  u.features.resize(static_cast<std::size_t>(T * dim));
  for (auto& x : u.features) x = g(rng);
  (void)V;
  return u;
}

}  // namespace testing_support
