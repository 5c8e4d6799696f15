#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "error.hpp"
#include "frame_scores.hpp"
#include "lattice.hpp"
#include "lattice_free.hpp"
#include "lm.hpp"
#include "logmath.hpp"
#include "scorer.hpp"

namespace seqdisc {

enum class BeamMode { prune_single, prune_recomb };

inline BeamMode parse_beam_mode(const std::string& s) {
  if (s == "prune_single" || s == "prune-single") return BeamMode::prune_single;
  if (s == "prune_recomb" || s == "prune-recomb") return BeamMode::prune_recomb;
  throw ValidationError("unknown beam mode '" + s + "'");
}

inline constexpr int kDefaultBeamSize = 20;

// Time-synchronous beam search over alignments that returns the log of the
// probability mass left in the final beam.
//
// Every hypothesis is expanded by blank and by every label. prune_recomb
// first merges (log-sum) expansions that share the recombination key, i.e.
// the last k labels plus the LM's recombination signature (the within-word
// suffix for word-level LMs), keeping the LM state of the best member; it
// then keeps the B best merged groups. prune_single keeps the B best
// individual expansions. The searched paths are recorded so `grad` gets the
// exact derivative of the returned value with the pruning held fixed.
template <SequenceLM L>
double beam_denominator(const FrameScores& scores, const L& lm, const SeqScoreConfig& cfg, int beam_size, BeamMode mode,
                        FrameScores* grad = nullptr, double scale = 1.0) {
  cfg.validate();
  if (beam_size < 1) throw ValidationError("beam size must be >= 1");
  if (scores.context_size() > cfg.recomb_context)
    throw ValidationError("scorer context exceeds the recombination context");
  const int T = scores.num_frames();
  const int V = scores.num_labels();
  const int blank = scores.blank();
  const int ks = scores.context_size();
  const ContextCodec codec(cfg.recomb_context, V);

  struct Hyp {
    std::size_t key;
    typename L::State state;
    double score;
  };
  std::vector<Hyp> beam{{codec.start(), lm.start(), 0.0}};
  Lattice lat;
  lat.nodes.push_back(1);

  for (int t = 0; t < T; ++t) {
    struct Group {
      std::size_t key;
      typename L::State state;
      double score;
      double best;
      std::vector<LatticeArc> arcs;
    };
    std::vector<Group> groups;
    std::map<std::pair<std::size_t, std::vector<int>>, std::size_t> index;

    auto add = [&](int parent, std::size_t key, typename L::State state, double w, std::size_t ctx, int out) {
      const double s = beam[static_cast<std::size_t>(parent)].score + w;
      LatticeArc arc{parent, -1, w, ctx, out};
      if (mode == BeamMode::prune_recomb) {
        auto k = std::make_pair(key, std::vector<int>(lm.recombination_signature(state)));
        auto it = index.find(k);
        if (it != index.end()) {
          Group& g = groups[it->second];
          log_accumulate(g.score, s);
          if (s > g.best) {
            g.best = s;
            g.state = std::move(state);
          }
          g.arcs.push_back(arc);
          return;
        }
        index.emplace(std::move(k), groups.size());
      }
      groups.push_back({key, std::move(state), s, s, {arc}});
    };

    for (std::size_t i = 0; i < beam.size(); ++i) {
      const Hyp& h = beam[i];
      const std::size_t ctx = codec.suffix(h.key, ks);
      const auto row = scores.at(t, ctx);
      add(static_cast<int>(i), h.key, h.state, cfg.alpha * row[static_cast<std::size_t>(blank)], ctx, blank);
      for (int a = 0; a < V; ++a) {
        const double w = cfg.alpha * row[static_cast<std::size_t>(a)] + (cfg.beta == 0.0 ? 0.0 : cfg.beta * lm.score(h.state, a));
        add(static_cast<int>(i), codec.push(h.key, a), lm.advance(h.state, a), w, ctx, a);
      }
    }

    std::vector<std::size_t> order(groups.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return groups[a].score > groups[b].score; });
    if (order.size() > static_cast<std::size_t>(beam_size)) order.resize(static_cast<std::size_t>(beam_size));

    std::vector<Hyp> next;
    auto& arcs = lat.arcs.emplace_back();
    for (std::size_t gi : order) {
      Group& g = groups[gi];
      for (auto arc : g.arcs) {
        arc.to = static_cast<int>(next.size());
        arcs.push_back(arc);
      }
      next.push_back({g.key, std::move(g.state), g.score});
    }
    lat.nodes.push_back(static_cast<int>(next.size()));
    beam = std::move(next);
  }

  lat.final_weight.resize(beam.size());
  for (std::size_t i = 0; i < beam.size(); ++i) lat.final_weight[i] = cfg.beta == 0.0 ? 0.0 : cfg.beta * lm.finish(beam[i].state);
  return lattice_forward_backward(lat, cfg.alpha, grad, scale);
}

struct NBestHyp {
  WordSequence words;
  LabelSequence phonemes;
  double score = 0.0;
};

// Static hypothesis list for one utterance; always contains the reference.
struct NBestList {
  std::string id;
  std::vector<NBestHyp> hyps;
  bool reference_included = true;

  std::optional<std::size_t> find(const LabelSequence& phonemes) const {
    for (std::size_t i = 0; i < hyps.size(); ++i)
      if (hyps[i].phonemes == phonemes) return i;
    return std::nullopt;
  }
};

namespace detail {

// Label-synchronous view of a time-synchronous search: hypotheses with the
// same label sequence are merged, so `am` is the log-sum over their
// alignments and `lm` is shared.
template <class State>
struct LabelHyp {
  LabelSequence labels;
  std::size_t ctx;
  State state;
  double am;
  double lm;
};

}  // namespace detail

// Beam search with label-sequence recombination, scored as
// alpha * log P_AM + beta * LM. Final hypotheses are deduplicated by phoneme
// sequence and the best N kept; if the reference is missing it replaces the
// lowest entry. Output is sorted by non-increasing score.
template <SequenceLM L>
NBestList generate_nbest(const FrameScores& scores, const L& lm, const Lexicon& lex, const Utterance& utt, double alpha,
                         double beta, int n, int beam_size = kDefaultBeamSize) {
  if (n < 1) throw ValidationError("N must be >= 1");
  if (beam_size < n) throw ValidationError("beam size must be >= N");
  const int T = scores.num_frames();
  const int V = scores.num_labels();
  const int blank = scores.blank();
  const auto& codec = scores.codec();
  using Hyp = detail::LabelHyp<typename L::State>;

  std::vector<Hyp> beam{{{}, codec.start(), lm.start(), 0.0, 0.0}};
  for (int t = 0; t < T; ++t) {
    std::vector<Hyp> cand;
    std::map<LabelSequence, std::size_t> index;
    auto add = [&](Hyp&& h) {
      auto it = index.find(h.labels);
      if (it != index.end()) {
        log_accumulate(cand[it->second].am, h.am);
        return;
      }
      index.emplace(h.labels, cand.size());
      cand.push_back(std::move(h));
    };
    for (const Hyp& h : beam) {
      const auto row = scores.at(t, h.ctx);
      add(Hyp{h.labels, h.ctx, h.state, h.am + alpha * row[static_cast<std::size_t>(blank)], h.lm});
      for (int a = 0; a < V; ++a) {
        LabelSequence labels = h.labels;
        labels.push_back(a);
        const double lm_inc = beta == 0.0 ? 0.0 : beta * lm.score(h.state, a);
        add(Hyp{std::move(labels), codec.push(h.ctx, a), lm.advance(h.state, a), h.am + alpha * row[static_cast<std::size_t>(a)],
                h.lm + lm_inc});
      }
    }
    std::stable_sort(cand.begin(), cand.end(), [](const Hyp& a, const Hyp& b) { return a.am + a.lm > b.am + b.lm; });
    if (cand.size() > static_cast<std::size_t>(beam_size)) cand.resize(static_cast<std::size_t>(beam_size));
    beam = std::move(cand);
  }
  if (beam.empty()) throw Error("beam search produced no hypotheses for '" + utt.id + "'");

  std::vector<NBestHyp> finals;
  for (const Hyp& h : beam)
    finals.push_back({lex.to_words(h.labels), h.labels, h.am + h.lm + (beta == 0.0 ? 0.0 : beta * lm.finish(h.state))});
  std::stable_sort(finals.begin(), finals.end(), [](const NBestHyp& a, const NBestHyp& b) { return a.score > b.score; });
  if (finals.size() > static_cast<std::size_t>(n)) finals.resize(static_cast<std::size_t>(n));

  NBestList list{utt.id, std::move(finals), true};
  if (auto i = list.find(utt.reference_phonemes)) {
    if (!utt.reference_words.empty()) list.hyps[*i].words = utt.reference_words;
  } else {
    NBestHyp ref{utt.reference_words.empty() ? lex.to_words(utt.reference_phonemes) : utt.reference_words,
                 utt.reference_phonemes, 0.0};
    ref.score = numerator_forward(scores, utt.reference_phonemes, alpha) +
                (beta == 0.0 ? 0.0 : beta * sequence_lm_score(lm, utt.reference_phonemes));
    if (list.hyps.size() == static_cast<std::size_t>(n)) list.hyps.back() = std::move(ref);
    else list.hyps.push_back(std::move(ref));
    std::stable_sort(list.hyps.begin(), list.hyps.end(), [](const NBestHyp& a, const NBestHyp& b) { return a.score > b.score; });
  }
  return list;
}

}  // namespace seqdisc
