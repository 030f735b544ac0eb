#pragma once

#include "kpalign/graph.hpp"
#include "kpalign/sl3.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace kpalign {

// Regressor variants. sage is the full model; mlp drops the neighbor term;
// linear is features -> readout -> head; direct optimizes the per-image
// parameter vectors as free variables.
enum class Arch { sage, mlp, direct, linear };

Arch arch_from_string(const std::string& s);
std::string to_string(Arch a);

struct SageLayerWeights {
  Eigen::MatrixXd w1;    // self, d_prev x d
  Eigen::MatrixXd w2;    // neighbor mean, d_prev x d
  Eigen::MatrixXd bias;  // d x 1
};

struct SageWeights {
  Arch arch = Arch::sage;
  bool use_bias = true;
  std::vector<SageLayerWeights> layers;
  Eigen::MatrixXd w_head;         // d_L x 8
  Eigen::MatrixXd b_head;         // 8 x 1
  Eigen::MatrixXd direct_thetas;  // N x 8, used only by Arch::direct

  long parameter_count() const;
};

struct InitOptions {
  Arch arch = Arch::sage;
  bool use_bias = true;
  int n_images = 0;  // required for Arch::direct
};

// Glorot-uniform layer weights, zero biases, head scaled by 1e-3 so the
// initial parameter outputs stay near zero. Deterministic per seed.
SageWeights init_weights(int hidden_dim, int layers, std::uint64_t seed,
                         const InitOptions& options = {});

using NodeEmbeddings = Eigen::MatrixXd;  // |V| x d

// One message-passing layer:
//   h_v = act(w1^T h_v + w2^T mean_{u in N(v)} h_u + bias)
// with leaky-rectifier slope 0.01 when `activation` is set, identity
// otherwise. Isolated nodes use a zero neighbor mean.
NodeEmbeddings sage_layer(const NodeEmbeddings& h_prev,
                          const std::vector<std::vector<int>>& neighbors,
                          const SageLayerWeights& w, bool use_bias,
                          bool activation);

// Mean of final embeddings per image, ordered by image id.
Eigen::MatrixXd readout(const NodeEmbeddings& h_final,
                        const CorrespondenceGraph& graph);

// Saved intermediates of one forward pass; everything backward() needs.
struct ForwardTrace {
  std::vector<NodeEmbeddings> h;         // h[0] = features0, h[l] activated
  std::vector<NodeEmbeddings> neigh;     // neighbor means fed to layer l
  std::vector<NodeEmbeddings> preact;    // pre-activation of layer l
  Eigen::MatrixXd z;                     // N x d readout
  Eigen::MatrixXd theta;                 // N x 8
};

ForwardTrace forward_trace(const CorrespondenceGraph& graph,
                           const SageWeights& weights);

// Predicted warp parameters, one per image, ordered by image id.
std::vector<Sl3Vector> forward(const CorrespondenceGraph& graph,
                               const SageWeights& weights);

// Reverse-mode pass: gradients of a scalar loss with respect to every
// weight, given dL/dtheta (N x 8). Shapes mirror `weights`.
SageWeights backward(const CorrespondenceGraph& graph, const SageWeights& weights,
                     const ForwardTrace& trace, const Eigen::MatrixXd& dtheta);

SageWeights zeros_like(const SageWeights& w);

// Every trainable tensor in a fixed order; grads/moments use the same order.
std::vector<Eigen::MatrixXd*> tensor_list(SageWeights& w);
std::vector<const Eigen::MatrixXd*> tensor_list(const SageWeights& w);
std::vector<std::string> tensor_names(const SageWeights& w);

}  // namespace kpalign
