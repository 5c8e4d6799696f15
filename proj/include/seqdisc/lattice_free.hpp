#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "context.hpp"
#include "core.hpp"
#include "error.hpp"
#include "frame_scores.hpp"
#include "lattice.hpp"
#include "lm.hpp"
#include "logmath.hpp"

namespace seqdisc {

// Scales and recombination settings shared by every denominator.
struct SeqScoreConfig {
  double alpha = 1.0;            // AM exponent
  double beta = 0.0;             // LM exponent
  std::optional<int> top_j;      // keep the J best contexts per frame
  int recomb_context = 1;        // k, length of the recombination context

  void validate() const {
    if (!(alpha > 0.0)) throw ValidationError("alpha must be > 0");
    if (!(beta >= 0.0)) throw ValidationError("beta must be >= 0");
    if (top_j && *top_j < 1) throw ValidationError("top_j must be >= 1");
    if (recomb_context < 0) throw ValidationError("recombination context must be >= 0");
  }
};

// One DP state at one frame. `history` is the approximated full context for
// the approximating DPs and the (possibly padded) context itself for the
// limited one.
struct DpEntry {
  std::size_t key;
  double q;
  LabelSequence history;
};

// Q(t, context) for t = 0..T; only surviving states are listed.
struct DpTable {
  std::vector<std::vector<DpEntry>> frames;

  // JSON lines: {"frame", "context", "q", "history"}; contexts use -1 for padding.
  void dump(std::ostream& os, const ContextCodec& codec, const std::string& utterance_id = {}) const {
    for (std::size_t t = 0; t < frames.size(); ++t)
      for (const auto& e : frames[t]) {
        std::vector<int> ctx;
        for (int d : codec.digits(e.key)) ctx.push_back(d == codec.pad_digit() ? -1 : d);
        nlohmann::json j{{"frame", t}, {"context", ctx}, {"q", e.q}, {"history", e.history}};
        if (!utterance_id.empty()) j["utterance"] = utterance_id;
        os << j.dump() << '\n';
      }
  }
};

struct ScoredContext {
  std::size_t key;
  double q;
};

// Keeps the J highest-scoring states; ties go to the smaller context key.
// The result is ordered by descending score.
inline std::vector<ScoredContext> top_j_select(std::vector<ScoredContext> states, int J) {
  if (J < 1) throw ValidationError("J must be >= 1");
  std::sort(states.begin(), states.end(), [](const ScoredContext& a, const ScoredContext& b) {
    if (a.q != b.q) return a.q > b.q;
    return a.key < b.key;
  });
  if (static_cast<std::size_t>(J) < states.size()) states.resize(static_cast<std::size_t>(J));
  return states;
}

namespace detail {

inline void check_contexts(const FrameScores& scores, int lm_context, const SeqScoreConfig& cfg) {
  cfg.validate();
  if (scores.context_size() > cfg.recomb_context)
    throw ValidationError("scorer context (" + std::to_string(scores.context_size()) +
                          ") exceeds the recombination context (" + std::to_string(cfg.recomb_context) + ")");
  if (lm_context > cfg.recomb_context)
    throw ValidationError("LM context (" + std::to_string(lm_context) + ") exceeds the recombination context (" +
                          std::to_string(cfg.recomb_context) + ")");
}

// Applies top-J to the full-length contexts of `q` in place. Begin-padded
// contexts (fewer than k labels emitted) do not count against J, so J = |V|^k
// never prunes anything.
inline void prune_top_j(std::vector<double>& q, const ContextCodec& codec, int J) {
  std::vector<ScoredContext> full;
  for (std::size_t key = 0; key < q.size(); ++key)
    if (q[key] != kLogZero && !codec.padded(key)) full.push_back({key, q[key]});
  if (full.size() <= static_cast<std::size_t>(J)) return;
  std::vector<bool> keep(q.size(), false);
  for (const auto& s : top_j_select(std::move(full), J)) keep[s.key] = true;
  for (std::size_t key = 0; key < q.size(); ++key)
    if (q[key] != kLogZero && !codec.padded(key) && !keep[key]) q[key] = kLogZero;
}

}  // namespace detail

// Exact denominator for an LM whose context fits in the recombination
// context k:
//
//   Q(t, u) = Q(t-1, u) q(blank | u, t) + sum_{u0} Q(t-1, u0 u_1..u_{k-1}) q(u_k | ..., t)
//
// with q(blank) = P^alpha and q(a) = P^alpha * P_LM^beta, all in log space.
// Returns log sum_u Q(T, u). Optional top-J pruning, gradient accumulation
// (scale * d/d log-prob table) and a per-frame table dump.
template <ContextLM L>
double lf_denominator_limited(const FrameScores& scores, const L& lm, const SeqScoreConfig& cfg,
                              FrameScores* grad = nullptr, double scale = 1.0, DpTable* table = nullptr) {
  detail::check_contexts(scores, lm.context_size(), cfg);
  const int T = scores.num_frames();
  const int V = scores.num_labels();
  const int blank = scores.blank();
  const int ks = scores.context_size();
  const ContextCodec codec(cfg.recomb_context, V);
  const std::size_t K = codec.num_keys();

  std::vector<std::vector<double>> lm_inc(K);
  for (std::size_t key = 0; key < K; ++key) {
    if (!codec.valid(key)) continue;
    const auto dist = lm.log_probs(codec.history(key));
    if (static_cast<int>(dist.size()) < V) throw ValidationError("LM vocabulary smaller than the label inventory");
    lm_inc[key].resize(static_cast<std::size_t>(V));
    for (int a = 0; a < V; ++a) lm_inc[key][static_cast<std::size_t>(a)] = cfg.beta == 0.0 ? 0.0 : cfg.beta * dist[static_cast<std::size_t>(a)];
  }

  std::vector<std::vector<double>> Q(static_cast<std::size_t>(T) + 1, std::vector<double>(K, kLogZero));
  Q[0][codec.start()] = 0.0;
  for (int t = 0; t < T; ++t) {
    const auto& cur = Q[static_cast<std::size_t>(t)];
    auto& next = Q[static_cast<std::size_t>(t) + 1];
    for (std::size_t p = 0; p < K; ++p) {
      if (cur[p] == kLogZero) continue;
      const auto row = scores.at(t, codec.suffix(p, ks));
      log_accumulate(next[p], cur[p] + cfg.alpha * row[static_cast<std::size_t>(blank)]);
      for (int a = 0; a < V; ++a)
        log_accumulate(next[codec.push(p, a)],
                       cur[p] + cfg.alpha * row[static_cast<std::size_t>(a)] + lm_inc[p][static_cast<std::size_t>(a)]);
    }
    if (cfg.top_j) detail::prune_top_j(next, codec, *cfg.top_j);
  }
  const double total = log_sum_exp(Q[static_cast<std::size_t>(T)]);

  if (table) {
    table->frames.assign(static_cast<std::size_t>(T) + 1, {});
    for (int t = 0; t <= T; ++t)
      for (std::size_t key = 0; key < K; ++key)
        if (Q[static_cast<std::size_t>(t)][key] != kLogZero)
          table->frames[static_cast<std::size_t>(t)].push_back({key, Q[static_cast<std::size_t>(t)][key], codec.history(key)});
  }
  if (!grad || total == kLogZero) return total;

  // Backward pass over the same (pruned) state sets.
  std::vector<double> B(K, kLogZero);
  for (std::size_t u = 0; u < K; ++u)
    if (Q[static_cast<std::size_t>(T)][u] != kLogZero) B[u] = 0.0;
  for (int t = T - 1; t >= 0; --t) {
    const auto& cur = Q[static_cast<std::size_t>(t)];
    std::vector<double> prev(K, kLogZero);
    for (std::size_t p = 0; p < K; ++p) {
      if (cur[p] == kLogZero) continue;
      const std::size_t ctx = codec.suffix(p, ks);
      const auto row = scores.at(t, ctx);
      auto grow = grad->at(t, ctx);
      auto arc = [&](std::size_t target, int y, double w) {
        if (B[target] == kLogZero) return;
        log_accumulate(prev[p], w + B[target]);
        grow[static_cast<std::size_t>(y)] += scale * cfg.alpha * std::exp(cur[p] + w + B[target] - total);
      };
      arc(p, blank, cfg.alpha * row[static_cast<std::size_t>(blank)]);
      for (int a = 0; a < V; ++a)
        arc(codec.push(p, a), a, cfg.alpha * row[static_cast<std::size_t>(a)] + lm_inc[p][static_cast<std::size_t>(a)]);
    }
    B = std::move(prev);
  }
  return total;
}

namespace detail {

// Context-approximating DP for LMs with unbounded context.
//
// Each recombined state u carries one representative full history C(t, u)
// and the LM state reached by it. Per frame and state, the best predecessor
// is the argmax of omega over blank (Q(t-1,u) q(blank)) and every label
// arc into u; blank keeps the history, a label arc appends u_k to the
// winning predecessor's history. Ties: blank first, then the smallest
// predecessor key. Q still accumulates the full sum; only the LM
// conditioning is approximated.
template <SequenceLM L>
double approx_dp(const FrameScores& scores, const L& lm, const SeqScoreConfig& cfg, FrameScores* grad, double scale,
                 DpTable* table) {
  detail::check_contexts(scores, 0, cfg);
  const int T = scores.num_frames();
  const int V = scores.num_labels();
  const int blank = scores.blank();
  const int ks = scores.context_size();
  const ContextCodec codec(cfg.recomb_context, V);
  const std::size_t K = codec.num_keys();

  struct Node {
    double q = kLogZero;
    LabelSequence history;
    std::optional<typename L::State> state;
  };
  std::vector<Node> cur(K);
  cur[codec.start()] = Node{0.0, {}, lm.start()};

  Lattice lat;
  std::vector<int> node_index(K, -1);  // key -> lattice node at the current frame
  node_index[codec.start()] = 0;
  lat.nodes.push_back(1);

  if (table) table->frames.assign(1, {DpEntry{codec.start(), 0.0, {}}});

  for (int t = 0; t < T; ++t) {
    std::vector<double> sum(K, kLogZero);
    std::vector<double> best_label(K, kLogZero);
    std::vector<std::size_t> best_src(K, 0);
    std::vector<Label> best_a(K, 0);
    std::vector<bool> has_label(K, false);
    struct PendingArc {
      std::size_t from_key, to_key;
      double weight;
      std::size_t ctx;
      int out;
    };
    std::vector<PendingArc> pending;

    for (std::size_t p = 0; p < K; ++p) {
      const Node& n = cur[p];
      if (n.q == kLogZero) continue;
      const std::size_t ctx = codec.suffix(p, ks);
      const auto row = scores.at(t, ctx);
      const double wb = cfg.alpha * row[static_cast<std::size_t>(blank)];
      log_accumulate(sum[p], n.q + wb);
      pending.push_back({p, p, wb, ctx, blank});
      for (int a = 0; a < V; ++a) {
        const double lm_score = cfg.beta == 0.0 ? 0.0 : cfg.beta * lm.score(*n.state, a);
        const double w = cfg.alpha * row[static_cast<std::size_t>(a)] + lm_score;
        const std::size_t u = codec.push(p, a);
        const double omega = n.q + w;
        log_accumulate(sum[u], omega);
        pending.push_back({p, u, w, ctx, a});
        if (!has_label[u] || omega > best_label[u]) {
          best_label[u] = omega;
          best_src[u] = p;
          best_a[u] = a;
          has_label[u] = true;
        }
      }
    }
    if (cfg.top_j) detail::prune_top_j(sum, codec, *cfg.top_j);

    std::vector<Node> next(K);
    for (std::size_t u = 0; u < K; ++u) {
      if (sum[u] == kLogZero) continue;
      Node& n = next[u];
      n.q = sum[u];
      const bool blank_possible = cur[u].q != kLogZero;
      const double omega_blank = blank_possible
                                     ? cur[u].q + cfg.alpha * scores.at(t, codec.suffix(u, ks))[static_cast<std::size_t>(blank)]
                                     : kLogZero;
      if (blank_possible && (!has_label[u] || omega_blank >= best_label[u])) {
        n.history = cur[u].history;
        n.state = cur[u].state;
      } else {
        const Node& src = cur[best_src[u]];
        const Label a = best_a[u];
        n.history = src.history;
        n.history.push_back(a);
        n.state = lm.advance(*src.state, a);
      }
    }

    std::vector<int> next_index(K, -1);
    int count = 0;
    for (std::size_t u = 0; u < K; ++u)
      if (next[u].q != kLogZero) next_index[u] = count++;
    lat.nodes.push_back(count);
    auto& arcs = lat.arcs.emplace_back();
    for (const auto& pa : pending)
      if (next_index[pa.to_key] >= 0)
        arcs.push_back({node_index[pa.from_key], next_index[pa.to_key], pa.weight, pa.ctx, pa.out});

    if (table) {
      auto& f = table->frames.emplace_back();
      for (std::size_t u = 0; u < K; ++u)
        if (next[u].q != kLogZero) f.push_back({u, next[u].q, next[u].history});
    }
    cur = std::move(next);
    node_index = std::move(next_index);
  }

  lat.final_weight.assign(static_cast<std::size_t>(lat.nodes.back()), 0.0);
  for (std::size_t u = 0; u < K; ++u)
    if (cur[u].q != kLogZero && cfg.beta != 0.0)
      lat.final_weight[static_cast<std::size_t>(node_index[u])] = cfg.beta * lm.finish(*cur[u].state);

  if (grad) return lattice_forward_backward(lat, cfg.alpha, grad, scale);
  double total = kLogZero;
  for (std::size_t u = 0; u < K; ++u)
    if (cur[u].q != kLogZero) log_accumulate(total, cur[u].q + lat.final_weight[static_cast<std::size_t>(node_index[u])]);
  return total;
}

}  // namespace detail

// Denominator with a full-context LM through the context approximation.
template <StatefulLM L>
double lf_denominator_approx(const FrameScores& scores, const L& lm, const SeqScoreConfig& cfg,
                             FrameScores* grad = nullptr, double scale = 1.0, DpTable* table = nullptr) {
  return detail::approx_dp(scores, StatefulSequenceLM<L>(lm), cfg, grad, scale, table);
}

// Denominator with a word-level LM applied on end-of-word labels only. The
// approximated history is split at its last end-of-word label into the word
// history and the within-word suffix.
inline double lf_denominator_word(const FrameScores& scores, const NGramLM& word_lm, const Lexicon& lex,
                                  const SeqScoreConfig& cfg, FrameScores* grad = nullptr, double scale = 1.0,
                                  DpTable* table = nullptr) {
  if (lex.alphabet().size() != scores.num_labels()) throw ValidationError("lexicon alphabet does not match the scores");
  return detail::approx_dp(scores, WordEowLM(word_lm, lex), cfg, grad, scale, table);
}

// Ground truth: enumerates every alignment in (V + blank)^T, scores it with
// the exact full history and sums. Refuses when (|V|+1)^T exceeds `budget`.
template <SequenceLM L>
double brute_force_denominator(const FrameScores& scores, const L& lm, const SeqScoreConfig& cfg,
                               double budget = 4.0e6) {
  cfg.validate();
  const int T = scores.num_frames();
  const int V = scores.num_labels();
  if (static_cast<double>(T) * std::log(static_cast<double>(V + 1)) > std::log(budget))
    throw ValidationError("brute-force enumeration exceeds the budget");
  const auto& codec = scores.codec();
  double total = kLogZero;

  auto rec = [&](auto&& self, int t, std::size_t ctx, const typename L::State& state, double acc) -> void {
    if (t == T) {
      log_accumulate(total, acc + (cfg.beta == 0.0 ? 0.0 : cfg.beta * lm.finish(state)));
      return;
    }
    const auto row = scores.at(t, ctx);
    self(self, t + 1, ctx, state, acc + cfg.alpha * row[static_cast<std::size_t>(V)]);
    for (int a = 0; a < V; ++a) {
      const double w = cfg.alpha * row[static_cast<std::size_t>(a)] + (cfg.beta == 0.0 ? 0.0 : cfg.beta * lm.score(state, a));
      self(self, t + 1, codec.push(ctx, a), lm.advance(state, a), acc + w);
    }
  };
  rec(rec, 0, codec.start(), lm.start(), 0.0);
  return total;
}

}  // namespace seqdisc
