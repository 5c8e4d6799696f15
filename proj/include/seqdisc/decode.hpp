#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "beam.hpp"
#include "core.hpp"
#include "error.hpp"
#include "frame_scores.hpp"
#include "lm.hpp"
#include "logmath.hpp"
#include "losses.hpp"
#include "scorer.hpp"

namespace seqdisc {

struct DecodeConfig {
  double lambda1 = 0.0;  // external LM scale
  double lambda2 = 0.0;  // internal LM scale (subtracted)
  int beam_size = kDefaultBeamSize;

  void validate() const {
    if (beam_size < 1) throw ValidationError("beam size must be >= 1");
    if (!std::isfinite(lambda1) || !std::isfinite(lambda2)) throw ValidationError("LM scales must be finite");
  }
};

// Zero-encoder internal LM: the scorer's output with h_t = 0, blank removed
// and the label part renormalized. Context keys are the scorer's.
inline TableLM ilm_zero_encoder(const ContextKScorer& scorer) {
  TableLM ilm(scorer.context_size(), scorer.num_labels());
  const auto& codec = scorer.codec();
  const auto V = static_cast<std::size_t>(scorer.num_labels());
  for (std::size_t key = 0; key < codec.num_keys(); ++key) {
    if (!codec.valid(key)) continue;
    auto row = scorer.zero_encoder_log_probs(key);
    row.resize(V);
    const double z = log_normalize(row);
    if (!std::isfinite(z)) throw NumericError("zero-encoder output puts all mass on blank; the ILM is undefined");
    ilm.row(key) = std::move(row);
  }
  return ilm;
}

// Replays homophone choices with the word LM (best-scoring homophone given
// the words chosen so far); without a word LM the lowest word id is used.
inline WordSequence resolve_words(const Lexicon& lex, std::span<const Label> labels, const NGramLM* word_lm) {
  if (!word_lm) return lex.to_words(labels);
  LabelSequence tail;
  WordSequence out;
  std::vector<int> hist{kBos};
  for (const auto& pron : lex.split_words(labels, &tail)) {
    const auto choice = best_word_at_eow(*word_lm, lex, hist, std::span<const Label>(pron).first(pron.size() - 1), pron.back());
    out.push_back(choice.word);
    hist.push_back(choice.word == lex.unknown_word() ? word_lm->unk() : choice.word);
  }
  if (!tail.empty()) out.push_back(lex.unknown_word());
  return out;
}

// kBos followed by the labels: a full history for LM queries.
inline std::vector<int> with_bos(const LabelSequence& labels) {
  std::vector<int> h{kBos};
  h.insert(h.end(), labels.begin(), labels.end());
  return h;
}

struct Recognition {
  LabelSequence labels;
  double score = kLogZero;
};

// argmax_a log P_AM(a|X) + lambda1 log P_ELM + lambda2 * (-log P_ILM(a)).
//
// Time-synchronous beam search with label-sequence recombination (the AM
// term sums over alignments). The ELM is any sequence LM, applied as
// labels are emitted; the ILM is charged per label. `ilm` may be null.
template <SequenceLM E, ContextLM I = TableLM>
Recognition recognize(const FrameScores& scores, const E& elm, const I* ilm, const DecodeConfig& cfg) {
  cfg.validate();
  const int T = scores.num_frames();
  const int V = scores.num_labels();
  const int blank = scores.blank();
  const auto& codec = scores.codec();
  using State = typename E::State;
  struct Hyp {
    LabelSequence labels;
    std::size_t ctx;
    State state;
    double am;
    double lm;  // lambda1 * ELM - lambda2 * ILM so far
  };
  const bool use_ilm = ilm && cfg.lambda2 != 0.0;

  std::vector<Hyp> beam{{{}, codec.start(), elm.start(), 0.0, 0.0}};
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
      add(Hyp{h.labels, h.ctx, h.state, h.am + row[static_cast<std::size_t>(blank)], h.lm});
      std::span<const double> ilm_row;
      if (use_ilm) ilm_row = ilm->log_probs(with_bos(h.labels));
      for (int a = 0; a < V; ++a) {
        double inc = cfg.lambda1 == 0.0 ? 0.0 : cfg.lambda1 * elm.score(h.state, a);
        if (use_ilm) inc -= cfg.lambda2 * ilm_row[static_cast<std::size_t>(a)];
        LabelSequence labels = h.labels;
        labels.push_back(a);
        add(Hyp{std::move(labels), codec.push(h.ctx, a), elm.advance(h.state, a), h.am + row[static_cast<std::size_t>(a)], h.lm + inc});
      }
    }
    std::stable_sort(cand.begin(), cand.end(), [](const Hyp& a, const Hyp& b) { return a.am + a.lm > b.am + b.lm; });
    if (cand.size() > static_cast<std::size_t>(cfg.beam_size)) cand.resize(static_cast<std::size_t>(cfg.beam_size));
    beam = std::move(cand);
  }

  Recognition best;
  for (const Hyp& h : beam) {
    const double s = h.am + h.lm + (cfg.lambda1 == 0.0 ? 0.0 : cfg.lambda1 * elm.finish(h.state));
    if (s > best.score) best = {h.labels, s};
  }
  return best;
}

// Recognition mapped to words; homophones are resolved with `word_lm` when given.
template <SequenceLM E, ContextLM I = TableLM>
WordSequence recognize_words(const FrameScores& scores, const E& elm, const I* ilm, const DecodeConfig& cfg,
                             const Lexicon& lex, const NGramLM* word_lm = nullptr) {
  return resolve_words(lex, recognize(scores, elm, ilm, cfg).labels, word_lm);
}

// Sequence LM that applies no score; recognition with it is pure AM decoding.
struct NullLM {
  struct State {};
  State start() const { return {}; }
  double score(const State&, Label) const { return 0.0; }
  State advance(const State&, Label) const { return {}; }
  double finish(const State&) const { return 0.0; }
  std::vector<int> recombination_signature(const State&) const { return {}; }
};

struct WerBreakdown {
  long sub = 0;
  long del = 0;
  long ins = 0;
  long ref_tokens = 0;
  double wer = 0.0;

  long errors() const { return sub + del + ins; }
};

// Percentage of `count` over `total` to one decimal, exact ties rounded down.
inline std::string format_percent(long count, long total) {
  if (total <= 0) return "n/a";
  const long num = count * 1000;  // tenths of a percent, as a fraction over total
  long tenths = num / total;
  const long rem = num % total;
  if (2 * rem > total) ++tenths;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%ld.%ld", tenths / 10, tenths % 10);
  return buf;
}

// Corpus-level WER with a substitution / deletion / insertion breakdown.
inline WerBreakdown score_wer(const std::map<std::string, WordSequence>& refs,
                              const std::map<std::string, WordSequence>& hyps) {
  if (refs.size() != hyps.size()) throw ValidationError("reference and hypothesis sets have different utterance ids");
  WerBreakdown out;
  for (const auto& [id, ref] : refs) {
    auto it = hyps.find(id);
    if (it == hyps.end()) throw ValidationError("no hypothesis for utterance '" + id + "'");
    const auto st = edit_distance(ref, it->second);
    out.sub += st.sub;
    out.del += st.del;
    out.ins += st.ins;
    out.ref_tokens += static_cast<long>(ref.size());
  }
  out.wer = out.ref_tokens > 0 ? 100.0 * static_cast<double>(out.errors()) / static_cast<double>(out.ref_tokens) : 0.0;
  return out;
}

}  // namespace seqdisc
