#include "kpalign/optimizer.hpp"

#include "kpalign/errors.hpp"

#include <cmath>
#include <utility>

namespace kpalign {

AdamState make_adam_state(const SageWeights& weights, const AdamConfig& config) {
  AdamState state;
  state.config = config;
  for (const auto* t : tensor_list(weights)) {
    state.m.push_back(Eigen::MatrixXd::Zero(t->rows(), t->cols()));
    state.v.push_back(Eigen::MatrixXd::Zero(t->rows(), t->cols()));
  }
  return state;
}

void adam_step(SageWeights& weights, const SageWeights& grads, AdamState& state) {
  auto wt = tensor_list(weights);
  const auto gt = tensor_list(grads);
  if (wt.size() != gt.size() || wt.size() != state.m.size()) {
    throw ValidationError("adam_step: tensor structure mismatch");
  }
  state.step += 1;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < wt.size(); ++k) {
    auto& m = state.m[k];
    auto& v = state.v[k];
    const auto& g = *gt[k];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    const Eigen::MatrixXd m_hat = m / bc1;
    const Eigen::MatrixXd v_hat = v / bc2;
    *wt[k] -= (c.lr * m_hat.array() / (v_hat.array().sqrt() + c.eps)).matrix();
  }
}

GradResult loss_gradients(const SageWeights& weights, const CorrespondenceGraph& graph,
                          const TrainConfig& config) {
  GradResult out;
  if (weights.arch == Arch::direct) {
    std::vector<Sl3Vector> thetas(weights.direct_thetas.rows());
    for (int i = 0; i < weights.direct_thetas.rows(); ++i) {
      thetas[i] = weights.direct_thetas.row(i).transpose();
    }
    LossWithGrad lg = kp_ic_loss_with_grad(graph, thetas, config.sigma, config.robust,
                                           config.normalize);
    out.grads = zeros_like(weights);
    out.grads.direct_thetas = lg.dtheta;
    out.report = std::move(lg.report);
  } else {
    const ForwardTrace trace = forward_trace(graph, weights);
    std::vector<Sl3Vector> thetas(trace.theta.rows());
    for (int i = 0; i < trace.theta.rows(); ++i) thetas[i] = trace.theta.row(i).transpose();
    LossWithGrad lg = kp_ic_loss_with_grad(graph, thetas, config.sigma, config.robust,
                                           config.normalize);
    out.grads = backward(graph, weights, trace, lg.dtheta);
    out.report = std::move(lg.report);
  }

  const auto tensors = tensor_list(out.grads);
  const auto names = tensor_names(out.grads);
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    if (!tensors[k]->allFinite()) {
      throw NumericalError("non-finite gradient in " + names[k]);
    }
  }
  return out;
}

namespace {

double total_loss(const CorrespondenceGraph& posed, const SageWeights& weights,
                  const TrainConfig& config) {
  const std::vector<Sl3Vector> thetas = forward(posed, weights);
  return kp_ic_loss(posed, thetas, config.sigma, config.robust, config.normalize).total;
}

}  // namespace

FlipFlags flip_search(const CorrespondenceGraph& graph, const SageWeights& weights,
                      FlipFlags flags, const TrainConfig& config) {
  if (static_cast<int>(flags.size()) != graph.num_images()) {
    throw ValidationError("flip_search: flag count does not match image count");
  }
  double best = total_loss(apply_flips(graph, flags), weights, config);
  for (int i = 0; i < graph.num_images(); ++i) {
    FlipFlags candidate = flags;
    candidate[i] ^= 1;
    const double loss = total_loss(apply_flips(graph, candidate), weights, config);
    if (loss < best - 1e-12) {
      best = loss;
      flags = std::move(candidate);
    }
  }
  return flags;
}

AlignmentResult align_collection(const CorrespondenceGraph& graph,
                                 const TrainConfig& config, const LossSink& sink) {
  if (graph.matches.empty()) {
    throw ValidationError("align_collection: graph has no matches");
  }
  if (config.epochs < 0 || config.flip_every < 1 || config.sigma <= 0.0) {
    throw ValidationError("align_collection: invalid training configuration");
  }

  InitOptions opts;
  opts.arch = config.arch;
  opts.use_bias = config.use_bias;
  opts.n_images = graph.num_images();
  SageWeights weights = init_weights(config.hidden_dim, config.layers, config.seed, opts);
  AdamState state = make_adam_state(weights, config.adam);

  AlignmentResult result;
  result.gauge = config.gauge;
  for (const auto& im : graph.images) result.image_ids.push_back(im.id);

  FlipFlags flags(graph.num_images(), 0);
  CorrespondenceGraph posed = graph;  // graph under the current flip flags

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    int flips_changed = 0;
    if (epoch % config.flip_every == 0) {
      const FlipFlags updated = flip_search(graph, weights, flags, config);
      for (std::size_t i = 0; i < flags.size(); ++i) {
        if (updated[i] != flags[i]) ++flips_changed;
      }
      if (flips_changed > 0) {
        flags = updated;
        posed = apply_flips(graph, flags);
      }
    }

    GradResult gr;
    try {
      gr = loss_gradients(weights, posed, config);
    } catch (const NumericalError& e) {
      result.aborted = true;
      result.abort_reason = e.what();
      break;
    }
    result.loss_history.push_back(gr.report.total);
    if (sink) sink(epoch, gr.report.total, flips_changed);
    adam_step(weights, gr.grads, state);
  }

  const std::vector<Sl3Vector> thetas = forward(posed, weights);
  result.thetas = thetas;
  result.flips = flags;
  result.final_loss =
      kp_ic_loss(posed, thetas, config.sigma, config.robust, config.normalize).total;

  GaugeResult gauge = gauge_normalize(thetas, config.gauge);
  result.homographies = std::move(gauge.homographies);
  result.gauge_fallback = gauge.karcher_fallback;
  return result;
}

}  // namespace kpalign
