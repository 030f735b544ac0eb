#include "kpalign/objective.hpp"

#include "kpalign/errors.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace kpalign {

double geman_mcclure(double z, double sigma) {
  if (sigma <= 0.0) throw ValidationError("geman_mcclure: sigma must be positive");
  const double z2 = z * z;
  return z2 / (z2 + sigma * sigma);
}

CorrespondenceGraph apply_flips(const CorrespondenceGraph& graph, const FlipFlags& flags) {
  if (static_cast<int>(flags.size()) != graph.num_images()) {
    throw ValidationError("apply_flips: flag count does not match image count");
  }
  CorrespondenceGraph out = graph;
  for (int v = 0; v < out.num_nodes(); ++v) {
    if (flags[out.nodes[v].image]) {
      out.nodes[v].pos.x = -out.nodes[v].pos.x;
      out.features0(v, 0) = -out.features0(v, 0);
    }
  }
  return out;
}

namespace {

struct TermGrad {
  Eigen::Matrix3d d_fwd = Eigen::Matrix3d::Zero();  // adjoint on exp(theta_i)
  Eigen::Matrix3d d_bwd = Eigen::Matrix3d::Zero();  // adjoint on exp(-theta_j)
};

// One ordered evaluation: warp pi from image i toward image j through
// m = bwd_j * fwd_i and penalize the distance to pj. Returns the term value
// and, when grad is non-null, the adjoints on the two factors.
double eval_term(const Eigen::Matrix3d& m, Point2 pi, Point2 pj, double sigma,
                 bool robust, const Eigen::Matrix3d& fwd, const Eigen::Matrix3d& bwd,
                 double* residual_out, TermGrad* grad, bool& degenerate) {
  const double u = m(0, 0) * pi.x + m(0, 1) * pi.y + m(0, 2);
  const double v = m(1, 0) * pi.x + m(1, 1) * pi.y + m(1, 2);
  const double w = m(2, 0) * pi.x + m(2, 1) * pi.y + m(2, 2);
  if (std::abs(w) <= 1e-12) {
    // Degenerate perspective division: the robust loss clamps the term to
    // its supremum with zero gradient; the l2 ablation drops it.
    degenerate = true;
    if (residual_out) *residual_out = std::numeric_limits<double>::infinity();
    return robust ? 1.0 : 0.0;
  }
  degenerate = false;
  const double qx = u / w;
  const double qy = v / w;
  const double rx = pj.x - qx;
  const double ry = pj.y - qy;
  const double z2 = rx * rx + ry * ry;
  if (residual_out) *residual_out = std::sqrt(z2);

  double value;
  double dvalue_dz2;
  if (robust) {
    const double s2 = sigma * sigma;
    value = z2 / (z2 + s2);
    dvalue_dz2 = s2 / ((z2 + s2) * (z2 + s2));
  } else {
    value = z2;
    dvalue_dz2 = 1.0;
  }

  if (grad != nullptr) {
    // d(z^2)/dq = -2r; chain through the perspective division into m.
    const double gx = dvalue_dz2 * (-2.0 * rx);
    const double gy = dvalue_dz2 * (-2.0 * ry);
    const double du = gx / w;
    const double dv = gy / w;
    const double dw = -(gx * u + gy * v) / (w * w);
    Eigen::Matrix3d dm;
    dm << du * pi.x, du * pi.y, du,
          dv * pi.x, dv * pi.y, dv,
          dw * pi.x, dw * pi.y, dw;
    grad->d_fwd = bwd.transpose() * dm;  // m = bwd * fwd
    grad->d_bwd = dm * fwd.transpose();
  }
  return value;
}

LossReport evaluate(const CorrespondenceGraph& graph,
                    const std::vector<Eigen::Matrix3d>& fwd,
                    const std::vector<Eigen::Matrix3d>& bwd, double sigma,
                    bool robust, bool normalize, bool keep_residuals,
                    std::vector<Eigen::Matrix3d>* adj_fwd,
                    std::vector<Eigen::Matrix3d>* adj_bwd) {
  if (graph.matches.empty()) {
    throw ValidationError("kp_ic_loss: graph has no matches");
  }
  LossReport report;
  report.per_image.assign(graph.num_images(), 0.0);
  if (keep_residuals) report.residuals.reserve(graph.matches.size() * 2);

  const bool want_grad = adj_fwd != nullptr;
  for (const auto& match : graph.matches) {
    const int i = graph.image_tag(match.u);
    const int j = graph.image_tag(match.v);
    const Point2 pi = graph.nodes[match.u].pos;
    const Point2 pj = graph.nodes[match.v].pos;

    for (int dir = 0; dir < 2; ++dir) {
      const int a = dir == 0 ? i : j;
      const int b = dir == 0 ? j : i;
      const Point2 pa = dir == 0 ? pi : pj;
      const Point2 pb = dir == 0 ? pj : pi;
      const Eigen::Matrix3d m = bwd[b] * fwd[a];
      TermGrad tg;
      double residual = 0.0;
      bool degenerate = false;
      const double value = eval_term(m, pa, pb, sigma, robust, fwd[a], bwd[b],
                                     keep_residuals ? &residual : nullptr,
                                     want_grad ? &tg : nullptr, degenerate);
      report.evaluations += 1;
      report.total += value;
      report.per_image[a] += value;
      report.per_image[b] += value;
      if (keep_residuals) report.residuals.push_back(residual);
      if (degenerate) {
        if (robust) report.clamped += 1; else report.skipped += 1;
      } else if (want_grad) {
        (*adj_fwd)[a] += tg.d_fwd;
        (*adj_bwd)[b] += tg.d_bwd;
      }
    }
  }

  if (normalize && report.evaluations > 0) {
    const double inv = 1.0 / static_cast<double>(report.evaluations);
    report.total *= inv;
    for (auto& p : report.per_image) p *= inv;
    report.normalized = true;
    if (want_grad) {
      for (auto& m : *adj_fwd) m *= inv;
      for (auto& m : *adj_bwd) m *= inv;
    }
  }
  return report;
}

}  // namespace

LossReport kp_ic_loss(const CorrespondenceGraph& graph,
                      const std::vector<Sl3Vector>& thetas, double sigma,
                      bool robust, bool normalize, bool keep_residuals) {
  if (static_cast<int>(thetas.size()) != graph.num_images()) {
    throw ValidationError("kp_ic_loss: theta count does not match image count");
  }
  std::vector<Eigen::Matrix3d> fwd(thetas.size()), bwd(thetas.size());
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    fwd[i] = sl3_exp(thetas[i]).m;
    bwd[i] = sl3_exp(Sl3Vector(-thetas[i])).m;
  }
  return evaluate(graph, fwd, bwd, sigma, robust, normalize, keep_residuals,
                  nullptr, nullptr);
}

LossReport kp_ic_loss_matrices(const CorrespondenceGraph& graph,
                               const std::vector<Eigen::Matrix3d>& warps,
                               double sigma, bool robust, bool normalize) {
  if (static_cast<int>(warps.size()) != graph.num_images()) {
    throw ValidationError("kp_ic_loss_matrices: warp count does not match image count");
  }
  std::vector<Eigen::Matrix3d> bwd(warps.size());
  for (std::size_t i = 0; i < warps.size(); ++i) bwd[i] = warps[i].inverse();
  return evaluate(graph, warps, bwd, sigma, robust, normalize, false, nullptr, nullptr);
}

LossWithGrad kp_ic_loss_with_grad(const CorrespondenceGraph& graph,
                                  const std::vector<Sl3Vector>& thetas,
                                  double sigma, bool robust, bool normalize) {
  if (static_cast<int>(thetas.size()) != graph.num_images()) {
    throw ValidationError("kp_ic_loss: theta count does not match image count");
  }
  const std::size_t n = thetas.size();
  std::vector<ExpTape> tape_fwd(n), tape_bwd(n);
  std::vector<Eigen::Matrix3d> fwd(n), bwd(n);
  for (std::size_t i = 0; i < n; ++i) {
    tape_fwd[i] = sl3_exp_tape(thetas[i]);
    tape_bwd[i] = sl3_exp_tape(Sl3Vector(-thetas[i]));
    fwd[i] = tape_fwd[i].value;
    bwd[i] = tape_bwd[i].value;
  }

  std::vector<Eigen::Matrix3d> adj_fwd(n, Eigen::Matrix3d::Zero());
  std::vector<Eigen::Matrix3d> adj_bwd(n, Eigen::Matrix3d::Zero());
  LossWithGrad out;
  out.report = evaluate(graph, fwd, bwd, sigma, robust, normalize, false,
                        &adj_fwd, &adj_bwd);

  out.dtheta.resize(n, 8);
  for (std::size_t i = 0; i < n; ++i) {
    const Sl3Vector g_fwd = sl3_exp_backward(tape_fwd[i], adj_fwd[i]);
    const Sl3Vector g_bwd = sl3_exp_backward(tape_bwd[i], adj_bwd[i]);
    out.dtheta.row(i) = (g_fwd - g_bwd).transpose();  // the bwd tape saw -theta
  }
  return out;
}

}  // namespace kpalign
