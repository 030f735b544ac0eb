#include "kpalign/sage.hpp"

#include "kpalign/errors.hpp"

#include <cmath>
#include <random>

namespace kpalign {

namespace {

constexpr double kLeakySlope = 0.01;

double leaky(double x) { return x > 0.0 ? x : kLeakySlope * x; }
double leaky_grad(double x) { return x > 0.0 ? 1.0 : kLeakySlope; }

Eigen::MatrixXd glorot(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = scale * dist(rng);
  }
  return m;
}

// Mean over each node's neighbor rows; zero rows for isolated nodes.
Eigen::MatrixXd neighbor_means(const Eigen::MatrixXd& h,
                               const std::vector<std::vector<int>>& neighbors) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(h.rows(), h.cols());
  for (int v = 0; v < static_cast<int>(neighbors.size()); ++v) {
    const auto& nb = neighbors[v];
    if (nb.empty()) continue;
    for (int u : nb) out.row(v) += h.row(u);
    out.row(v) /= static_cast<double>(nb.size());
  }
  return out;
}

std::vector<int> image_node_counts(const CorrespondenceGraph& g) {
  std::vector<int> counts(g.num_images(), 0);
  for (const auto& node : g.nodes) counts[node.image] += 1;
  return counts;
}

}  // namespace

Arch arch_from_string(const std::string& s) {
  if (s == "sage") return Arch::sage;
  if (s == "mlp") return Arch::mlp;
  if (s == "direct") return Arch::direct;
  if (s == "linear") return Arch::linear;
  throw ValidationError("unknown arch: " + s);
}

std::string to_string(Arch a) {
  switch (a) {
    case Arch::sage: return "sage";
    case Arch::mlp: return "mlp";
    case Arch::direct: return "direct";
    case Arch::linear: return "linear";
  }
  return "sage";
}

long SageWeights::parameter_count() const {
  if (arch == Arch::direct) return direct_thetas.size();
  long count = w_head.size() + b_head.size();
  for (const auto& l : layers) {
    count += l.w1.size() + l.w2.size();
    if (use_bias) count += l.bias.size();
  }
  return count;
}

SageWeights init_weights(int hidden_dim, int layers, std::uint64_t seed,
                         const InitOptions& options) {
  if (hidden_dim < 1 || layers < 1) {
    throw ValidationError("init_weights: hidden_dim and layers must be >= 1");
  }
  std::mt19937_64 rng(seed);
  SageWeights w;
  w.arch = options.arch;
  w.use_bias = options.use_bias;

  switch (options.arch) {
    case Arch::direct:
      if (options.n_images < 1) {
        throw ValidationError("init_weights: direct arch needs the image count");
      }
      w.direct_thetas = Eigen::MatrixXd::Zero(options.n_images, 8);
      return w;
    case Arch::linear:
      w.w_head = glorot(2, 8, rng, 1e-3);
      w.b_head = Eigen::MatrixXd::Zero(8, 1);
      return w;
    case Arch::sage:
    case Arch::mlp:
      break;
  }

  int d_prev = 2;
  for (int l = 0; l < layers; ++l) {
    SageLayerWeights lw;
    lw.w1 = glorot(d_prev, hidden_dim, rng);
    lw.w2 = glorot(d_prev, hidden_dim, rng);
    lw.bias = Eigen::MatrixXd::Zero(hidden_dim, 1);
    w.layers.push_back(std::move(lw));
    d_prev = hidden_dim;
  }
  w.w_head = glorot(hidden_dim, 8, rng, 1e-3);
  w.b_head = Eigen::MatrixXd::Zero(8, 1);
  return w;
}

NodeEmbeddings sage_layer(const NodeEmbeddings& h_prev,
                          const std::vector<std::vector<int>>& neighbors,
                          const SageLayerWeights& w, bool use_bias,
                          bool activation) {
  if (h_prev.cols() != w.w1.rows()) {
    throw ValidationError("sage_layer: embedding/weight dimension mismatch");
  }
  const Eigen::MatrixXd neigh = neighbor_means(h_prev, neighbors);
  Eigen::MatrixXd pre = h_prev * w.w1 + neigh * w.w2;
  if (use_bias) pre.rowwise() += w.bias.col(0).transpose();
  if (!activation) return pre;
  return pre.unaryExpr([](double x) { return leaky(x); });
}

Eigen::MatrixXd readout(const NodeEmbeddings& h_final, const CorrespondenceGraph& graph) {
  const auto counts = image_node_counts(graph);
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(graph.num_images(), h_final.cols());
  for (int v = 0; v < graph.num_nodes(); ++v) {
    z.row(graph.image_tag(v)) += h_final.row(v);
  }
  for (int i = 0; i < graph.num_images(); ++i) {
    if (counts[i] == 0) {
      throw ValidationError("readout: image ordinal " + std::to_string(i) + " has no nodes");
    }
    z.row(i) /= static_cast<double>(counts[i]);
  }
  return z;
}

ForwardTrace forward_trace(const CorrespondenceGraph& graph, const SageWeights& weights) {
  ForwardTrace trace;
  if (weights.arch == Arch::direct) {
    if (weights.direct_thetas.rows() != graph.num_images()) {
      throw ValidationError("forward: direct parameter count does not match image count");
    }
    trace.theta = weights.direct_thetas;
    return trace;
  }

  Eigen::MatrixXd h = graph.features0;
  trace.h.push_back(h);
  if (weights.arch != Arch::linear) {
    for (const auto& lw : weights.layers) {
      Eigen::MatrixXd neigh;
      if (weights.arch == Arch::mlp) {
        neigh = Eigen::MatrixXd::Zero(h.rows(), h.cols());
      } else {
        neigh = neighbor_means(h, graph.neighbors);
      }
      Eigen::MatrixXd pre = h * lw.w1 + neigh * lw.w2;
      if (weights.use_bias) pre.rowwise() += lw.bias.col(0).transpose();
      trace.neigh.push_back(std::move(neigh));
      trace.preact.push_back(pre);
      h = pre.unaryExpr([](double x) { return leaky(x); });
      trace.h.push_back(h);
    }
  }
  trace.z = readout(trace.h.back(), graph);
  trace.theta = (trace.z * weights.w_head).rowwise() + weights.b_head.col(0).transpose();
  return trace;
}

std::vector<Sl3Vector> forward(const CorrespondenceGraph& graph, const SageWeights& weights) {
  const ForwardTrace trace = forward_trace(graph, weights);
  std::vector<Sl3Vector> thetas(trace.theta.rows());
  for (int i = 0; i < trace.theta.rows(); ++i) {
    thetas[i] = trace.theta.row(i).transpose();
  }
  return thetas;
}

SageWeights backward(const CorrespondenceGraph& graph, const SageWeights& weights,
                     const ForwardTrace& trace, const Eigen::MatrixXd& dtheta) {
  SageWeights grads = zeros_like(weights);
  if (weights.arch == Arch::direct) {
    grads.direct_thetas = dtheta;
    return grads;
  }

  grads.w_head = trace.z.transpose() * dtheta;
  grads.b_head = dtheta.colwise().sum().transpose();
  Eigen::MatrixXd dz = dtheta * weights.w_head.transpose();

  // Readout adjoint: each node receives its image's dz divided by node count.
  const auto counts = image_node_counts(graph);
  Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(graph.num_nodes(), dz.cols());
  for (int v = 0; v < graph.num_nodes(); ++v) {
    const int tag = graph.image_tag(v);
    dh.row(v) = dz.row(tag) / static_cast<double>(counts[tag]);
  }

  if (weights.arch == Arch::linear) return grads;

  for (int l = static_cast<int>(weights.layers.size()) - 1; l >= 0; --l) {
    const auto& lw = weights.layers[l];
    const Eigen::MatrixXd g =
        dh.cwiseProduct(trace.preact[l].unaryExpr([](double x) { return leaky_grad(x); }));
    grads.layers[l].w1 = trace.h[l].transpose() * g;
    grads.layers[l].w2 = trace.neigh[l].transpose() * g;
    if (weights.use_bias) grads.layers[l].bias = g.colwise().sum().transpose();

    Eigen::MatrixXd dh_prev = g * lw.w1.transpose();
    if (weights.arch == Arch::sage) {
      const Eigen::MatrixXd dneigh = g * lw.w2.transpose();
      for (int v = 0; v < graph.num_nodes(); ++v) {
        const auto& nb = graph.neighbors[v];
        if (nb.empty()) continue;
        const double inv = 1.0 / static_cast<double>(nb.size());
        for (int u : nb) dh_prev.row(u) += inv * dneigh.row(v);
      }
    }
    dh = std::move(dh_prev);
  }
  return grads;
}

SageWeights zeros_like(const SageWeights& w) {
  SageWeights z;
  z.arch = w.arch;
  z.use_bias = w.use_bias;
  z.layers.reserve(w.layers.size());
  for (const auto& l : w.layers) {
    z.layers.push_back(SageLayerWeights{Eigen::MatrixXd::Zero(l.w1.rows(), l.w1.cols()),
                                        Eigen::MatrixXd::Zero(l.w2.rows(), l.w2.cols()),
                                        Eigen::MatrixXd::Zero(l.bias.rows(), l.bias.cols())});
  }
  z.w_head = Eigen::MatrixXd::Zero(w.w_head.rows(), w.w_head.cols());
  z.b_head = Eigen::MatrixXd::Zero(w.b_head.rows(), w.b_head.cols());
  z.direct_thetas = Eigen::MatrixXd::Zero(w.direct_thetas.rows(), w.direct_thetas.cols());
  return z;
}

std::vector<Eigen::MatrixXd*> tensor_list(SageWeights& w) {
  std::vector<Eigen::MatrixXd*> out;
  if (w.arch == Arch::direct) {
    out.push_back(&w.direct_thetas);
    return out;
  }
  for (auto& l : w.layers) {
    out.push_back(&l.w1);
    out.push_back(&l.w2);
    if (w.use_bias) out.push_back(&l.bias);
  }
  out.push_back(&w.w_head);
  out.push_back(&w.b_head);
  return out;
}

std::vector<const Eigen::MatrixXd*> tensor_list(const SageWeights& w) {
  const auto mut = tensor_list(const_cast<SageWeights&>(w));
  return {mut.begin(), mut.end()};
}

std::vector<std::string> tensor_names(const SageWeights& w) {
  std::vector<std::string> out;
  if (w.arch == Arch::direct) {
    out.push_back("direct_thetas");
    return out;
  }
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l + 1) + ".";
    out.push_back(p + "w1");
    out.push_back(p + "w2");
    if (w.use_bias) out.push_back(p + "bias");
  }
  out.push_back("w_head");
  out.push_back("b_head");
  return out;
}

}  // namespace kpalign
