#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "core.hpp"
#include "error.hpp"
#include "frame_scores.hpp"
#include "logmath.hpp"

namespace seqdisc {

// Desk-scale transducer posterior P(y_t | last k labels, h_t).
//
// A tabular softmax: for every context key c (last k labels, begin-padded)
// the logits are an affine function of the frame feature vector h_t,
//
//   logit(t, c, y) = W[0][c][y] + sum_d h_t[d] * W[d+1][c][y],
//
// so slice 0 plays the part of the prediction network and the remaining
// slices the encoder contribution. Zeroing h_t leaves slice 0 alone, which is
// what the zero-encoder internal LM estimate reads off.
class ContextKScorer {
 public:
  ContextKScorer(int context_size, int num_labels, int feature_dim)
      : codec_(context_size, num_labels), feature_dim_(feature_dim) {
    if (feature_dim < 0) throw ValidationError("feature dimension must be >= 0");
    params_.assign(static_cast<std::size_t>(feature_dim + 1) * codec_.num_keys() * width(), 0.0);
  }

  int context_size() const { return codec_.context_size(); }
  int num_labels() const { return codec_.num_labels(); }
  int feature_dim() const { return feature_dim_; }
  int width() const { return codec_.num_labels() + 1; }
  std::size_t num_contexts() const { return codec_.num_keys(); }
  const ContextCodec& codec() const { return codec_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t num_params() const { return params_.size(); }

  // Index of W[slice][ctx][y].
  std::size_t param_index(int slice, std::size_t ctx, int y) const {
    return (static_cast<std::size_t>(slice) * num_contexts() + ctx) * static_cast<std::size_t>(width()) +
           static_cast<std::size_t>(y);
  }

  void randomize(std::uint64_t seed, double scale) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, scale);
    for (double& p : params_) p = dist(rng);
  }

  // Log-distribution over labels + blank for one frame feature and context key.
  std::vector<double> log_probs(std::span<const double> feature, std::size_t ctx) const {
    check_feature(feature);
    std::vector<double> row(static_cast<std::size_t>(width()));
    fill_logits(feature, ctx, row);
    log_normalize(row);
    return row;
  }

  // Log-distribution with the encoder input replaced by zeros.
  std::vector<double> zero_encoder_log_probs(std::size_t ctx) const {
    std::vector<double> row(params_.begin() + static_cast<std::ptrdiff_t>(param_index(0, ctx, 0)),
                            params_.begin() + static_cast<std::ptrdiff_t>(param_index(0, ctx, 0) + width()));
    log_normalize(row);
    return row;
  }

  FrameScores score_utterance(const Utterance& utt) const {
    if (utt.feature_dim != feature_dim_)
      throw ValidationError("utterance '" + utt.id + "' has feature dim " + std::to_string(utt.feature_dim) +
                            ", scorer expects " + std::to_string(feature_dim_));
    if (utt.features.size() != static_cast<std::size_t>(utt.num_frames) * static_cast<std::size_t>(feature_dim_))
      throw ValidationError("utterance '" + utt.id + "' feature matrix does not match num_frames");
    FrameScores out(utt.num_frames, num_labels(), context_size());
    for (int t = 0; t < utt.num_frames; ++t)
      for (std::size_t c = 0; c < num_contexts(); ++c) {
        auto row = out.at(t, c);
        fill_logits(utt.feature_row(t), c, row);
        log_normalize(row);
      }
    return out;
  }

  // Chains d(loss)/d(log-prob table) through the log-softmax into the
  // parameters; `scores` must be score_utterance(utt).
  void backward(const Utterance& utt, const FrameScores& scores, const FrameScores& grad_logp,
                std::span<double> grad_params) const {
    if (grad_params.size() != params_.size()) throw ValidationError("gradient buffer has the wrong size");
    std::vector<double> g(static_cast<std::size_t>(width()));
    for (int t = 0; t < utt.num_frames; ++t) {
      const auto h = utt.feature_row(t);
      for (std::size_t c = 0; c < num_contexts(); ++c) {
        const auto gl = grad_logp.at(t, c);
        double total = 0.0;
        bool any = false;
        for (double v : gl) {
          total += v;
          any = any || v != 0.0;
        }
        if (!any) continue;
        const auto lp = scores.at(t, c);
        for (int y = 0; y < width(); ++y)
          g[static_cast<std::size_t>(y)] = gl[static_cast<std::size_t>(y)] - std::exp(lp[static_cast<std::size_t>(y)]) * total;
        for (int y = 0; y < width(); ++y) grad_params[param_index(0, c, y)] += g[static_cast<std::size_t>(y)];
        for (int d = 0; d < feature_dim_; ++d) {
          const double hd = h[static_cast<std::size_t>(d)];
          if (hd == 0.0) continue;
          for (int y = 0; y < width(); ++y) grad_params[param_index(d + 1, c, y)] += hd * g[static_cast<std::size_t>(y)];
        }
      }
    }
  }

  nlohmann::json to_json() const {
    return {{"version", 1},
            {"context_size", context_size()},
            {"num_labels", num_labels()},
            {"feature_dim", feature_dim_},
            {"params", params_}};
  }

  static ContextKScorer from_json(const nlohmann::json& j) {
    if (j.value("version", 0) != 1) throw ValidationError("unsupported checkpoint version");
    ContextKScorer s(j.at("context_size").get<int>(), j.at("num_labels").get<int>(), j.at("feature_dim").get<int>());
    auto p = j.at("params").get<std::vector<double>>();
    if (p.size() != s.params_.size()) throw ValidationError("checkpoint parameter count mismatch");
    s.params_ = std::move(p);
    return s;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write checkpoint " + path);
    out << to_json().dump() << '\n';
  }

  static ContextKScorer load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read checkpoint " + path);
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("checkpoint " + path + ": " + e.what());
    }
  }

 private:
  void check_feature(std::span<const double> feature) const {
    if (feature.size() != static_cast<std::size_t>(feature_dim_)) throw ValidationError("feature dimension mismatch");
  }

  void fill_logits(std::span<const double> h, std::size_t ctx, std::span<double> row) const {
    const double* w0 = params_.data() + param_index(0, ctx, 0);
    for (int y = 0; y < width(); ++y) row[static_cast<std::size_t>(y)] = w0[y];
    for (int d = 0; d < feature_dim_; ++d) {
      const double hd = h[static_cast<std::size_t>(d)];
      if (hd == 0.0) continue;
      const double* wd = params_.data() + param_index(d + 1, ctx, 0);
      for (int y = 0; y < width(); ++y) row[static_cast<std::size_t>(y)] += hd * wd[y];
    }
  }

  ContextCodec codec_;
  int feature_dim_;
  std::vector<double> params_;
};

// Distribution at frame t (0-based) given up to k previous labels; shorter
// contexts are begin-padded.
inline std::span<const double> score_frame(const FrameScores& scores, int t, std::span<const Label> context) {
  if (t < 0 || t >= scores.num_frames()) throw ValidationError("frame index out of range");
  if (static_cast<int>(context.size()) > scores.context_size()) throw ValidationError("context longer than k");
  return scores.at(t, scores.codec().encode(context));
}

inline std::vector<double> score_frame(const ContextKScorer& scorer, const Utterance& utt, int t,
                                       std::span<const Label> context) {
  if (t < 0 || t >= utt.num_frames) throw ValidationError("frame index out of range");
  if (static_cast<int>(context.size()) > scorer.context_size()) throw ValidationError("context longer than k");
  return scorer.log_probs(utt.feature_row(t), scorer.codec().encode(context));
}

// log sum over alignments y with collapse(y) = labels of prod_t P(y_t|ctx,t)^alpha.
//
// DP over (t, s), s = number of labels of the reference emitted so far.
// When `grad` is given, scale * d(result)/d(log-prob table) is accumulated
// into it.
inline double numerator_forward(const FrameScores& scores, std::span<const Label> labels, double alpha,
                                FrameScores* grad = nullptr, double scale = 1.0) {
  const int T = scores.num_frames();
  const int S = static_cast<int>(labels.size());
  if (S > T)
    throw ValidationError("reference has " + std::to_string(S) + " labels but only " + std::to_string(T) +
                          " frames: no alignment exists");
  for (Label a : labels)
    if (a < 0 || a >= scores.num_labels()) throw ValidationError("reference contains an invalid label");
  const auto& codec = scores.codec();
  const int blank = scores.blank();

  std::vector<std::size_t> ctx(static_cast<std::size_t>(S) + 1);
  ctx[0] = codec.start();
  for (int s = 0; s < S; ++s) ctx[static_cast<std::size_t>(s) + 1] = codec.push(ctx[static_cast<std::size_t>(s)], labels[static_cast<std::size_t>(s)]);

  const std::size_t W = static_cast<std::size_t>(S) + 1;
  auto idx = [W](int t, int s) { return static_cast<std::size_t>(t) * W + static_cast<std::size_t>(s); };
  std::vector<double> fw(static_cast<std::size_t>(T + 1) * W, kLogZero);
  fw[idx(0, 0)] = 0.0;
  for (int t = 0; t < T; ++t) {
    // s can only lie in [max(0, S-(T-t)), min(t, S)] on a complete path
    const int lo = std::max(0, S - (T - t));
    const int hi = std::min(t, S);
    for (int s = lo; s <= hi; ++s) {
      const double q = fw[idx(t, s)];
      if (q == kLogZero) continue;
      const auto row = scores.at(t, ctx[static_cast<std::size_t>(s)]);
      log_accumulate(fw[idx(t + 1, s)], q + alpha * row[static_cast<std::size_t>(blank)]);
      if (s < S) log_accumulate(fw[idx(t + 1, s + 1)], q + alpha * row[static_cast<std::size_t>(labels[static_cast<std::size_t>(s)])]);
    }
  }
  const double total = fw[idx(T, S)];
  if (!grad || total == kLogZero) return total;

  std::vector<double> bw(static_cast<std::size_t>(T + 1) * W, kLogZero);
  bw[idx(T, S)] = 0.0;
  for (int t = T - 1; t >= 0; --t) {
    const int lo = std::max(0, S - (T - t));
    const int hi = std::min(t, S);
    for (int s = lo; s <= hi; ++s) {
      const auto row = scores.at(t, ctx[static_cast<std::size_t>(s)]);
      auto grow = grad->at(t, ctx[static_cast<std::size_t>(s)]);
      const double wb = alpha * row[static_cast<std::size_t>(blank)];
      double b = bw[idx(t + 1, s)] + wb;
      const double f = fw[idx(t, s)];
      if (f != kLogZero && bw[idx(t + 1, s)] != kLogZero)
        grow[static_cast<std::size_t>(blank)] += scale * alpha * std::exp(f + wb + bw[idx(t + 1, s)] - total);
      if (s < S) {
        const auto y = static_cast<std::size_t>(labels[static_cast<std::size_t>(s)]);
        const double wl = alpha * row[y];
        log_accumulate(b, wl + bw[idx(t + 1, s + 1)]);
        if (f != kLogZero && bw[idx(t + 1, s + 1)] != kLogZero)
          grow[y] += scale * alpha * std::exp(f + wl + bw[idx(t + 1, s + 1)] - total);
      }
      bw[idx(t, s)] = b;
    }
  }
  return total;
}

}  // namespace seqdisc
