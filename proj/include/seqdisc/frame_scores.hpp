#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "context.hpp"
#include "error.hpp"
#include "logmath.hpp"

namespace seqdisc {

// Per-frame transducer log-posteriors for one utterance.
//
// Layout is [frame][context key][output], outputs being the |V| labels
// followed by blank (id |V|). Context keys come from ContextCodec with the
// scorer's context size, so a k = 0 table has exactly one row per frame.
class FrameScores {
 public:
  FrameScores() = default;

  FrameScores(int num_frames, int num_labels, int context_size)
      : num_frames_(num_frames), codec_(context_size, num_labels) {
    if (num_frames < 0) throw ValidationError("negative frame count");
    data_.assign(static_cast<std::size_t>(num_frames) * codec_.num_keys() * width(), 0.0);
  }

  int num_frames() const { return num_frames_; }
  int num_labels() const { return codec_.num_labels(); }
  int blank() const { return codec_.num_labels(); }
  int width() const { return codec_.num_labels() + 1; }
  int context_size() const { return codec_.context_size(); }
  std::size_t num_contexts() const { return codec_.num_keys(); }
  const ContextCodec& codec() const { return codec_; }

  std::span<const double> at(int t, std::size_t ctx) const {
    return {data_.data() + offset(t, ctx), static_cast<std::size_t>(width())};
  }
  std::span<double> at(int t, std::size_t ctx) {
    return {data_.data() + offset(t, ctx), static_cast<std::size_t>(width())};
  }

  std::span<const double> raw() const { return data_; }
  std::span<double> raw() { return data_; }

  // Checks every row that can be reached (valid context keys) sums to one.
  void validate_normalized(double tol = 1e-9) const {
    for (int t = 0; t < num_frames_; ++t)
      for (std::size_t c = 0; c < num_contexts(); ++c) {
        if (!codec_.valid(c)) continue;
        const double z = log_sum_exp(at(t, c));
        if (!(std::abs(z) <= tol))
          throw ValidationError("score row (t=" + std::to_string(t) + ", ctx=" + std::to_string(c) +
                                ") is not normalized: logsumexp = " + std::to_string(z));
      }
  }

 private:
  std::size_t offset(int t, std::size_t ctx) const {
    return (static_cast<std::size_t>(t) * codec_.num_keys() + ctx) * static_cast<std::size_t>(width());
  }

  int num_frames_ = 0;
  ContextCodec codec_{0, 1};
  std::vector<double> data_;
};

}  // namespace seqdisc
