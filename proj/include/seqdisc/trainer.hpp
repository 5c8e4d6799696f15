#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "beam.hpp"
#include "core.hpp"
#include "error.hpp"
#include "lattice_free.hpp"
#include "lm.hpp"
#include "losses.hpp"
#include "scorer.hpp"

namespace seqdisc {

enum class Criterion { ce, mmi_lf_limited, mmi_lf_approx, mmi_lf_word, mmi_lf_beam, mmi_nbest, mbr_nbest };

inline std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::ce: return "ce";
    case Criterion::mmi_lf_limited: return "mmi_lf_limited";
    case Criterion::mmi_lf_approx: return "mmi_lf_approx";
    case Criterion::mmi_lf_word: return "mmi_lf_word";
    case Criterion::mmi_lf_beam: return "mmi_lf_beam";
    case Criterion::mmi_nbest: return "mmi_nbest";
    case Criterion::mbr_nbest: return "mbr_nbest";
  }
  return "?";
}

inline Criterion parse_criterion(const std::string& s) {
  for (Criterion c : {Criterion::ce, Criterion::mmi_lf_limited, Criterion::mmi_lf_approx, Criterion::mmi_lf_word,
                      Criterion::mmi_lf_beam, Criterion::mmi_nbest, Criterion::mbr_nbest})
    if (to_string(c) == s) return c;
  throw ValidationError("unknown criterion '" + s + "'");
}

struct TrainConfig {
  Criterion criterion = Criterion::ce;
  int steps = 10;
  double learning_rate = 0.1;
  double alpha = 1.0;
  double beta = 0.0;
  std::optional<int> top_j;
  std::optional<int> recomb_context;  // defaults to max(scorer, LM) context
  int beam_size = kDefaultBeamSize;
  BeamMode beam_mode = BeamMode::prune_recomb;
  CostFunction cost;
  int jobs = 1;
};

// Models a criterion may need; which ones are required depends on it.
struct TrainResources {
  const NGramLM* phoneme_lm = nullptr;
  const NGramLM* word_lm = nullptr;
  const Lexicon* lexicon = nullptr;
  const std::map<std::string, NBestList>* nbest = nullptr;
};

struct StepRecord {
  int step = 0;
  std::string utterance;
  std::string criterion;
  double loss = 0.0;
  double grad_norm = 0.0;

  nlohmann::json to_json() const {
    return {{"step", step}, {"utterance", utterance}, {"criterion", criterion}, {"loss", loss}, {"grad_norm", grad_norm}};
  }
};

class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

}  // namespace detail

// Loss and parameter gradient of one utterance under the configured criterion.
inline LossValue utterance_loss(const ContextKScorer& scorer, const Utterance& utt, const TrainConfig& cfg,
                                const TrainResources& res) {
  const FrameScores scores = scorer.score_utterance(utt);
  const auto& ref = utt.reference_phonemes;
  const NGramLM uniform = train_ngram({}, LmUnit::phoneme, 0, scorer.num_labels(), 0.0);
  const NGramLM& plm = res.phoneme_lm ? *res.phoneme_lm : uniform;
  SeqScoreConfig sc{cfg.alpha, cfg.beta, cfg.top_j, 0};
  auto recomb = [&](int lm_ctx) { return cfg.recomb_context.value_or(std::max(scorer.context_size(), lm_ctx)); };

  ScoreLoss loss{0.0, zeros_like(scores)};
  switch (cfg.criterion) {
    case Criterion::ce:
      loss = ce_loss(scores, ref);
      break;
    case Criterion::mmi_lf_limited:
      sc.recomb_context = recomb(plm.context_size());
      loss = mmi_lf_loss(scores, ref, LimitedDenominator<NGramLM>{plm}, sc);
      break;
    case Criterion::mmi_lf_approx: {
      sc.recomb_context = recomb(0);
      const NGramStatefulLM slm(plm);
      loss = mmi_lf_loss(scores, ref, ApproxDenominator<NGramStatefulLM>{slm}, sc);
      break;
    }
    case Criterion::mmi_lf_word:
      detail::require(res.word_lm && res.lexicon, "mmi_lf_word needs a word LM and a lexicon");
      sc.recomb_context = recomb(0);
      loss = mmi_lf_loss(scores, ref, WordDenominator{*res.word_lm, *res.lexicon}, sc);
      break;
    case Criterion::mmi_lf_beam:
      sc.recomb_context = recomb(0);
      if (res.word_lm) {
        detail::require(res.lexicon, "mmi_lf_beam with a word LM needs a lexicon");
        const WordEowLM wlm(*res.word_lm, *res.lexicon);
        loss = mmi_lf_loss(scores, ref, BeamDenominator<WordEowLM>{wlm, cfg.beam_size, cfg.beam_mode}, sc);
      } else {
        const ContextSequenceLM<NGramLM> clm(plm);
        loss = mmi_lf_loss(scores, ref, BeamDenominator<ContextSequenceLM<NGramLM>>{clm, cfg.beam_size, cfg.beam_mode}, sc);
      }
      break;
    case Criterion::mmi_nbest:
    case Criterion::mbr_nbest: {
      detail::require(res.nbest != nullptr, to_string(cfg.criterion) + " needs an N-best file");
      auto it = res.nbest->find(utt.id);
      detail::require(it != res.nbest->end(), "no N-best list for utterance '" + utt.id + "'");
      auto run = [&](const auto& lm) {
        if (cfg.criterion == Criterion::mmi_nbest) return mmi_nbest_loss(scores, it->second, ref, lm, cfg.alpha, cfg.beta);
        return mbr_nbest_loss(scores, it->second, utt, lm, cfg.alpha, cfg.beta, cfg.cost);
      };
      if (res.word_lm) {
        detail::require(res.lexicon, "N-best training with a word LM needs a lexicon");
        loss = run(WordEowLM(*res.word_lm, *res.lexicon));
      } else {
        loss = run(ContextSequenceLM<NGramLM>(plm));
      }
      break;
    }
  }
  return to_param_loss(scorer, utt, scores, loss);
}

// Per-utterance losses for the whole corpus, computed on `jobs` threads.
// Results are stored by corpus position, so they do not depend on `jobs`.
inline std::vector<LossValue> corpus_losses(const ContextKScorer& scorer, const std::vector<Utterance>& corpus,
                                            const TrainConfig& cfg, const TrainResources& res) {
  std::vector<std::optional<LossValue>> out(corpus.size());
  std::vector<std::exception_ptr> errors(corpus.size());
  const std::function<void(std::size_t, std::size_t)> work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < corpus.size(); i += stride) {
      try {
        out[i] = utterance_loss(scorer, corpus[i], cfg, res);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t jobs = static_cast<std::size_t>(std::max(1, cfg.jobs));
  if (jobs == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(work, j, jobs);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<LossValue> values;
  values.reserve(out.size());
  for (auto& v : out) values.push_back(std::move(*v));
  return values;
}

// Full-batch gradient descent with a fixed step on the mean loss. Every
// utterance of every step is reported through `log` (before the update).
// A non-finite loss or gradient raises DivergenceError.
inline std::vector<double> train_sequence(ContextKScorer& scorer, const std::vector<Utterance>& corpus,
                                          const TrainConfig& cfg, const TrainResources& res,
                                          const std::function<void(const StepRecord&)>& log = {}) {
  if (cfg.steps < 0) throw ValidationError("steps must be >= 0");
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) throw ValidationError("learning rate must be positive");
  if (corpus.empty()) throw ValidationError("training corpus is empty");
  std::vector<double> mean_losses;
  const std::string name = to_string(cfg.criterion);
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<LossValue> losses;
    try {
      losses = corpus_losses(scorer, corpus, cfg, res);
    } catch (const NumericError& e) {
      throw DivergenceError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    std::vector<double> grad(scorer.num_params(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
      double sq = 0.0;
      for (std::size_t p = 0; p < grad.size(); ++p) {
        grad[p] += losses[i].grads[p];
        sq += losses[i].grads[p] * losses[i].grads[p];
      }
      const StepRecord rec{step, corpus[i].id, name, losses[i].value, std::sqrt(sq)};
      if (log) log(rec);
      if (!std::isfinite(rec.loss) || !std::isfinite(rec.grad_norm))
        throw DivergenceError("training diverged at step " + std::to_string(step) + " on '" + corpus[i].id + "'");
      total += losses[i].value;
    }
    mean_losses.push_back(total / static_cast<double>(corpus.size()));
    const double lr = cfg.learning_rate / static_cast<double>(corpus.size());
    auto params = scorer.params();
    for (std::size_t p = 0; p < grad.size(); ++p) params[p] -= lr * grad[p];
  }
  return mean_losses;
}

}  // namespace seqdisc
