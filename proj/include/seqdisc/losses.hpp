#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "beam.hpp"
#include "core.hpp"
#include "error.hpp"
#include "frame_scores.hpp"
#include "lattice_free.hpp"
#include "lm.hpp"
#include "logmath.hpp"
#include "scorer.hpp"

namespace seqdisc {

// A loss and its derivative with respect to the log-prob table it was
// computed from. to_param_loss() chains it into scorer parameters.
struct ScoreLoss {
  double value = 0.0;
  FrameScores grad;
};

struct LossValue {
  double value = 0.0;
  std::vector<double> grads;
};

inline LossValue to_param_loss(const ContextKScorer& scorer, const Utterance& utt, const FrameScores& scores,
                               const ScoreLoss& loss) {
  LossValue out{loss.value, std::vector<double>(scorer.num_params(), 0.0)};
  scorer.backward(utt, scores, loss.grad, out.grads);
  return out;
}

inline FrameScores zeros_like(const FrameScores& s) { return FrameScores(s.num_frames(), s.num_labels(), s.context_size()); }

// Sequence cross-entropy, -log P(reference | X).
inline ScoreLoss ce_loss(const FrameScores& scores, std::span<const Label> reference) {
  ScoreLoss out{0.0, zeros_like(scores)};
  out.value = -numerator_forward(scores, reference, 1.0, &out.grad, -1.0);
  if (!std::isfinite(out.value)) throw NumericError("CE loss is not finite");
  return out;
}

// ---------------------------------------------------------------------------
// Denominator backends for lattice-free MMI. Each computes the log
// denominator (accumulating its gradient) and the matching LM score of a
// complete label sequence for the numerator.

template <ContextLM L>
struct LimitedDenominator {
  const L& lm;
  double operator()(const FrameScores& s, const SeqScoreConfig& cfg, FrameScores* g, double scale) const {
    return lf_denominator_limited(s, lm, cfg, g, scale);
  }
  double lm_score(std::span<const Label> labels) const { return sequence_lm_score(ContextSequenceLM<L>(lm), labels); }
};

template <StatefulLM L>
struct ApproxDenominator {
  const L& lm;
  double operator()(const FrameScores& s, const SeqScoreConfig& cfg, FrameScores* g, double scale) const {
    return lf_denominator_approx(s, lm, cfg, g, scale);
  }
  double lm_score(std::span<const Label> labels) const { return sequence_lm_score(StatefulSequenceLM<L>(lm), labels); }
};

struct WordDenominator {
  const NGramLM& word_lm;
  const Lexicon& lexicon;
  double operator()(const FrameScores& s, const SeqScoreConfig& cfg, FrameScores* g, double scale) const {
    return lf_denominator_word(s, word_lm, lexicon, cfg, g, scale);
  }
  double lm_score(std::span<const Label> labels) const { return sequence_lm_score(WordEowLM(word_lm, lexicon), labels); }
};

template <SequenceLM L>
struct BeamDenominator {
  const L& lm;
  int beam_size = kDefaultBeamSize;
  BeamMode mode = BeamMode::prune_recomb;
  double operator()(const FrameScores& s, const SeqScoreConfig& cfg, FrameScores* g, double scale) const {
    return beam_denominator(s, lm, cfg, beam_size, mode, g, scale);
  }
  double lm_score(std::span<const Label> labels) const { return sequence_lm_score(lm, labels); }
};

template <class D>
concept DenominatorBackend = requires(const D& d, const FrameScores& s, const SeqScoreConfig& cfg, FrameScores* g,
                                      std::span<const Label> labels) {
  { d(s, cfg, g, 1.0) } -> std::convertible_to<double>;
  { d.lm_score(labels) } -> std::convertible_to<double>;
};

// -log(q(reference) / denominator). The numerator applies the same alpha,
// beta and LM as the denominator: alpha inside the alignment sum, beta on
// the reference's LM score.
template <DenominatorBackend D>
ScoreLoss mmi_lf_loss(const FrameScores& scores, std::span<const Label> reference, const D& denominator,
                      const SeqScoreConfig& cfg) {
  cfg.validate();
  ScoreLoss out{0.0, zeros_like(scores)};
  const double num_am = numerator_forward(scores, reference, cfg.alpha, &out.grad, -1.0);
  if (num_am == kLogZero) throw NumericError("reference has zero probability");
  const double num = num_am + (cfg.beta == 0.0 ? 0.0 : cfg.beta * denominator.lm_score(reference));
  const double den = denominator(scores, cfg, &out.grad, 1.0);
  out.value = den - num;
  if (!std::isfinite(out.value)) throw NumericError("MMI loss is not finite");
  return out;
}

// ---------------------------------------------------------------------------
// N-best criteria.

namespace detail {

struct NBestScores {
  std::vector<double> q;  // alpha * log P_AM + beta * log P_LM per hypothesis
  std::size_t ref;
};

template <SequenceLM L>
NBestScores nbest_scores(const FrameScores& scores, const NBestList& nbest, const LabelSequence& reference, const L& lm,
                         double alpha, double beta) {
  auto ref = nbest.find(reference);
  if (!ref) throw ValidationError("N-best list for '" + nbest.id + "' does not contain the reference");
  NBestScores out{{}, *ref};
  for (const auto& h : nbest.hyps) {
    const double am = static_cast<int>(h.phonemes.size()) > scores.num_frames()
                          ? kLogZero
                          : numerator_forward(scores, h.phonemes, alpha);
    out.q.push_back(am + (beta == 0.0 ? 0.0 : beta * sequence_lm_score(lm, h.phonemes)));
  }
  return out;
}

// d(loss)/d(q_i) = weights[i]; chains through each hypothesis' alignment sum.
inline void nbest_backward(const FrameScores& scores, const NBestList& nbest, double alpha, const std::vector<double>& weights,
                           FrameScores& grad) {
  for (std::size_t i = 0; i < nbest.hyps.size(); ++i) {
    if (weights[i] == 0.0 || static_cast<int>(nbest.hyps[i].phonemes.size()) > scores.num_frames()) continue;
    numerator_forward(scores, nbest.hyps[i].phonemes, alpha, &grad, weights[i]);
  }
}

}  // namespace detail

// -log(q(ref) / sum_h q(h)) over a static N-best list. The training LM can
// differ from the one that generated the list.
template <SequenceLM L>
ScoreLoss mmi_nbest_loss(const FrameScores& scores, const NBestList& nbest, const LabelSequence& reference,
                         const L& training_lm, double alpha, double beta) {
  const auto s = detail::nbest_scores(scores, nbest, reference, training_lm, alpha, beta);
  const double z = log_sum_exp(s.q);
  ScoreLoss out{z - s.q[s.ref], zeros_like(scores)};
  std::vector<double> w(s.q.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(s.q[i] - z) - (i == s.ref ? 1.0 : 0.0);
  detail::nbest_backward(scores, nbest, alpha, w, out.grad);
  if (!std::isfinite(out.value)) throw NumericError("N-best MMI loss is not finite");
  return out;
}

// ---------------------------------------------------------------------------
// Edit distance and MBR.

struct EditStats {
  int distance = 0;
  int sub = 0;
  int del = 0;
  int ins = 0;
};

// Unit-cost Levenshtein alignment of `ref` (a) against `hyp` (b). Deletions
// are ref tokens missing from hyp, insertions extra hyp tokens. The
// backtrace prefers substitution (or match), then deletion, then insertion.
template <class T>
EditStats edit_distance(std::span<const T> a, std::span<const T> b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> d((n + 1) * (m + 1));
  auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
  for (std::size_t i = 0; i <= n; ++i) d[at(i, 0)] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) d[at(0, j)] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      d[at(i, j)] = std::min({d[at(i - 1, j - 1)] + (a[i - 1] == b[j - 1] ? 0 : 1), d[at(i - 1, j)] + 1, d[at(i, j - 1)] + 1});
  EditStats st;
  st.distance = d[at(n, m)];
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[at(i, j)] == d[at(i - 1, j - 1)] + (a[i - 1] == b[j - 1] ? 0 : 1)) {
      if (a[i - 1] != b[j - 1]) ++st.sub;
      --i;
      --j;
    } else if (i > 0 && d[at(i, j)] == d[at(i - 1, j)] + 1) {
      ++st.del;
      --i;
    } else {
      ++st.ins;
      --j;
    }
  }
  return st;
}

template <class T>
EditStats edit_distance(const std::vector<T>& a, const std::vector<T>& b) {
  return edit_distance(std::span<const T>(a), std::span<const T>(b));
}

enum class CostKind { word_edit, phoneme_edit };

inline CostKind parse_cost_kind(const std::string& s) {
  if (s == "word_edit" || s == "word") return CostKind::word_edit;
  if (s == "phoneme_edit" || s == "phoneme") return CostKind::phoneme_edit;
  throw ValidationError("unknown MBR cost '" + s + "'");
}

struct CostFunction {
  CostKind kind = CostKind::word_edit;
  double offset = 0.0;  // constant added to every cost

  double operator()(const NBestHyp& h, const Utterance& utt) const {
    if (kind == CostKind::word_edit) return edit_distance(h.words, utt.reference_words).distance + offset;
    return edit_distance(h.phonemes, utt.reference_phonemes).distance + offset;
  }
};

// Expected risk sum_h p(h) cost(h, ref) with p(h) = q(h) / sum q over the list.
template <SequenceLM L>
ScoreLoss mbr_nbest_loss(const FrameScores& scores, const NBestList& nbest, const Utterance& utt, const L& training_lm,
                         double alpha, double beta, const CostFunction& cost = {}) {
  const auto s = detail::nbest_scores(scores, nbest, utt.reference_phonemes, training_lm, alpha, beta);
  const double z = log_sum_exp(s.q);
  std::vector<double> post(s.q.size()), c(s.q.size());
  double risk = 0.0;
  for (std::size_t i = 0; i < post.size(); ++i) {
    post[i] = std::exp(s.q[i] - z);
    c[i] = cost(nbest.hyps[i], utt);
    risk += post[i] * c[i];
  }
  ScoreLoss out{risk, zeros_like(scores)};
  std::vector<double> w(post.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = post[i] * (c[i] - risk);
  detail::nbest_backward(scores, nbest, alpha, w, out.grad);
  if (!std::isfinite(out.value)) throw NumericError("MBR loss is not finite");
  return out;
}

// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool pass = false;
};

// Central finite differences on `max_coords` sampled coordinates (all when
// 0). Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline GradCheckReport grad_check(const std::function<double(std::span<const double>)>& loss, std::vector<double> params,
                                  std::span<const double> analytic, double epsilon, double tolerance,
                                  std::size_t max_coords = 0, std::uint64_t seed = 0, double floor = 1e-6) {
  if (analytic.size() != params.size()) throw ValidationError("gradient size mismatch");
  std::vector<std::size_t> coords(params.size());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  if (max_coords && max_coords < coords.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
  }
  GradCheckReport rep;
  for (std::size_t i : coords) {
    const double orig = params[i];
    params[i] = orig + epsilon;
    const double up = loss(params);
    params[i] = orig - epsilon;
    const double down = loss(params);
    params[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("loss is not finite during the gradient check");
    const double numeric = (up - down) / (2.0 * epsilon);
    const double rel = std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_index = i;
    }
    ++rep.checked;
  }
  rep.pass = rep.max_rel_error <= tolerance;
  return rep;
}

}  // namespace seqdisc
