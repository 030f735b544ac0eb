#pragma once

#include "kpalign/graph.hpp"
#include "kpalign/objective.hpp"
#include "kpalign/sage.hpp"
#include "kpalign/sl3.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace kpalign {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Eigen::MatrixXd> m;  // first moments, one per tensor
  std::vector<Eigen::MatrixXd> v;  // second moments
  long step = 0;
  AdamConfig config;
};

AdamState make_adam_state(const SageWeights& weights, const AdamConfig& config);

// Standard bias-corrected Adam update, in place. Deterministic.
void adam_step(SageWeights& weights, const SageWeights& grads, AdamState& state);

struct TrainConfig {
  int epochs = 600;
  double sigma = 0.25;
  int flip_every = 100;  // K; the check runs when epoch % K == 0, epoch 0 included
  std::uint64_t seed = 0;
  Arch arch = Arch::sage;
  int hidden_dim = 64;
  int layers = 5;
  bool use_bias = true;
  bool robust = true;  // false = l2 ablation
  bool normalize = false;
  GaugeMode gauge = GaugeMode::karcher;
  AdamConfig adam;
};

struct AlignmentResult {
  std::vector<int> image_ids;
  std::vector<Homography> homographies;  // gauge-normalized
  std::vector<Sl3Vector> thetas;         // raw network outputs
  FlipFlags flips;
  double final_loss = 0.0;
  std::vector<double> loss_history;  // one entry per completed epoch
  GaugeMode gauge = GaugeMode::karcher;
  bool gauge_fallback = false;
  bool aborted = false;  // numerical failure; history is partial
  std::string abort_reason;
};

struct GradResult {
  SageWeights grads;
  LossReport report;
};

// Exact gradients of kp_ic_loss(forward(graph)) with respect to every
// trainable tensor. Throws NumericalError naming the first non-finite
// tensor.
GradResult loss_gradients(const SageWeights& weights, const CorrespondenceGraph& graph,
                          const TrainConfig& config);

// One greedy pass over images in id order: keep a toggled flag iff the
// total loss strictly decreases by more than 1e-12. The graph passed here
// is the unflipped base graph.
FlipFlags flip_search(const CorrespondenceGraph& graph, const SageWeights& weights,
                      FlipFlags flags, const TrainConfig& config);

// Per-epoch sink: (epoch, loss, number of flip flags changed this epoch).
using LossSink = std::function<void(int, double, int)>;

// The full test-time optimization loop: seeded init, epochs of
// flip-check/gradient/Adam, then gauge normalization.
AlignmentResult align_collection(const CorrespondenceGraph& graph,
                                 const TrainConfig& config,
                                 const LossSink& sink = nullptr);

}  // namespace kpalign
