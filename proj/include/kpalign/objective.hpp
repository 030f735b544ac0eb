#pragma once

#include "kpalign/graph.hpp"
#include "kpalign/sl3.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace kpalign {

// true = image treated as horizontally flipped. Length N.
using FlipFlags = std::vector<std::uint8_t>;

struct LossReport {
  double total = 0.0;
  std::vector<double> per_image;   // sums to 2*total: each term counts for i and j
  std::vector<double> residuals;   // filled only when requested
  int clamped = 0;                 // robust point-at-infinity terms, counted at rho's supremum
  int skipped = 0;                 // l2 point-at-infinity terms, dropped with a warning count
  long evaluations = 0;            // ordered match evaluations
  bool normalized = false;
};

// Geman-McClure penalty z^2 / (z^2 + sigma^2), in [0,1).
double geman_mcclure(double z, double sigma);

// Mirror every node (and therefore match endpoint) of each flagged image:
// x -> -x in the [-1,1] frame. Involutive; edges and adjacency unchanged.
CorrespondenceGraph apply_flips(const CorrespondenceGraph& graph, const FlipFlags& flags);

// The joint keypoint loss: for every stored match and both orientations
// (i->j and j->i), the warp residual z = ||x_j - ic_warp(theta_i, theta_j,
// x_i)||_2 enters as rho_sigma(z) (robust) or z^2 (l2 ablation).
LossReport kp_ic_loss(const CorrespondenceGraph& graph,
                      const std::vector<Sl3Vector>& thetas, double sigma,
                      bool robust, bool normalize = false,
                      bool keep_residuals = false);

// Same loss evaluated on explicit per-image warp matrices: the pair warp for
// (i,j) is inverse(m_j) * m_i. Used by the gauge-invariance checks.
LossReport kp_ic_loss_matrices(const CorrespondenceGraph& graph,
                               const std::vector<Eigen::Matrix3d>& warps,
                               double sigma, bool robust, bool normalize = false);

struct LossWithGrad {
  LossReport report;
  Eigen::MatrixXd dtheta;  // N x 8
};

// Loss plus exact dL/dtheta, reverse-mode through the perspective division,
// the pair composition, and the truncated exponential series.
LossWithGrad kp_ic_loss_with_grad(const CorrespondenceGraph& graph,
                                  const std::vector<Sl3Vector>& thetas,
                                  double sigma, bool robust, bool normalize = false);

}  // namespace kpalign
