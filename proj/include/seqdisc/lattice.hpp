#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "frame_scores.hpp"
#include "logmath.hpp"

namespace seqdisc {

// Arc from node `from` at frame t to node `to` at frame t+1. `weight` is the
// full log weight; (am_ctx, am_out) names the transducer log-prob entry it
// used at frame t, which alpha scaled.
struct LatticeArc {
  int from;
  int to;
  double weight;
  std::size_t am_ctx;
  int am_out;
};

// Time-synchronous DAG recorded by a pruned or approximated search, so the
// gradient can be taken over exactly the paths the forward pass summed.
struct Lattice {
  std::vector<int> nodes;                   // node count per frame, size T+1
  std::vector<std::vector<LatticeArc>> arcs;  // per frame t, size T
  std::vector<double> final_weight;         // per node at frame T
  std::vector<int> start_nodes{0};          // nodes at frame 0 with weight 0

  int num_frames() const { return static_cast<int>(arcs.size()); }
};

// log of the total path weight; when `grad` is given, accumulates
// scale * d(result)/d(log-prob entry) using alpha as the per-arc AM scale.
inline double lattice_forward_backward(const Lattice& lat, double alpha, FrameScores* grad = nullptr, double scale = 1.0) {
  const int T = lat.num_frames();
  std::vector<std::vector<double>> fw(static_cast<std::size_t>(T) + 1);
  for (int t = 0; t <= T; ++t) fw[static_cast<std::size_t>(t)].assign(static_cast<std::size_t>(lat.nodes[static_cast<std::size_t>(t)]), kLogZero);
  for (int n : lat.start_nodes) fw[0][static_cast<std::size_t>(n)] = 0.0;
  for (int t = 0; t < T; ++t)
    for (const auto& arc : lat.arcs[static_cast<std::size_t>(t)]) {
      const double f = fw[static_cast<std::size_t>(t)][static_cast<std::size_t>(arc.from)];
      if (f != kLogZero) log_accumulate(fw[static_cast<std::size_t>(t) + 1][static_cast<std::size_t>(arc.to)], f + arc.weight);
    }
  double total = kLogZero;
  const auto& last = fw[static_cast<std::size_t>(T)];
  for (std::size_t n = 0; n < last.size(); ++n) log_accumulate(total, last[n] + lat.final_weight[n]);
  if (!grad || total == kLogZero) return total;

  std::vector<double> bw(lat.final_weight.begin(), lat.final_weight.end());
  for (int t = T - 1; t >= 0; --t) {
    std::vector<double> prev(static_cast<std::size_t>(lat.nodes[static_cast<std::size_t>(t)]), kLogZero);
    for (const auto& arc : lat.arcs[static_cast<std::size_t>(t)]) {
      const double b = bw[static_cast<std::size_t>(arc.to)];
      if (b == kLogZero) continue;
      log_accumulate(prev[static_cast<std::size_t>(arc.from)], arc.weight + b);
      const double f = fw[static_cast<std::size_t>(t)][static_cast<std::size_t>(arc.from)];
      if (f == kLogZero) continue;
      grad->at(t, arc.am_ctx)[static_cast<std::size_t>(arc.am_out)] += scale * alpha * std::exp(f + arc.weight + b - total);
    }
    bw = std::move(prev);
  }
  return total;
}

}  // namespace seqdisc
