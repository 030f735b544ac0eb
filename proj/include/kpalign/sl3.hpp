#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

namespace kpalign {

// 2D point in the normalized [-1,1]^2 image frame (may leave the box after
// warping). Pixel-space points reuse the same struct; the units are stated
// at each call site.
struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// Coefficients of an sl(3) algebra element in the fixed generator basis
// returned by sl3_generators().
using Sl3Vector = Eigen::Matrix<double, 8, 1>;

// 3x3 unit-determinant matrix acting on homogeneous 2D points.
struct Homography {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();

  static Homography identity() { return Homography{}; }
};

// Fixed ordered basis G_1..G_8 of traceless 3x3 matrices:
//   G1 x-translation, G2 y-translation, G3 rotation, G4 isotropic scale
//   diag(1,1,-2)/sqrt(6), G5 anisotropic stretch diag(1,-1,0), G6 shear,
//   G7/G8 projective.
const std::array<Eigen::Matrix3d, 8>& sl3_generators();

// Sum_k v_k G_k. Traceless by construction.
Eigen::Matrix3d sl3_algebra(const Sl3Vector& v);

// Coefficients of a (numerically near-)traceless matrix in the generator
// basis. The trace component, if any, is discarded.
Sl3Vector sl3_coefficients(const Eigen::Matrix3d& a);

// exp(sum v_k G_k) by scaling-and-squaring with a degree-12 series.
// Throws ValidationError on non-finite input.
Homography sl3_exp(const Sl3Vector& v);

// Principal matrix logarithm via inverse scaling-and-squaring (repeated
// Denman-Beavers square roots, then a Mercator series). Throws
// NumericalError when an eigenvalue lies on the negative real axis.
Sl3Vector sl3_log(const Homography& h);

// Perspective division. Throws PointAtInfinity when |w| <= 1e-12; callers
// in the loss treat that residual as an outlier.
class PointAtInfinity : public std::runtime_error {
public:
  PointAtInfinity() : std::runtime_error("point maps to infinity (|w| <= 1e-12)") {}
};
Point2 hom_apply(const Homography& h, Point2 p);

// "Apply a first, then b": hom_apply(hom_compose(a,b), p) ==
// hom_apply(b, hom_apply(a, p)). Result renormalized to det 1.
Homography hom_compose(const Homography& a, const Homography& b);

Homography hom_inverse(const Homography& h);

// Divide by cbrt(det) so the determinant drifts back to 1.
Eigen::Matrix3d renormalize_det(const Eigen::Matrix3d& m);

// Warp p by exp(theta_i) then by exp(-theta_j). exp(-theta) is the exact
// inverse of exp(theta).
Point2 ic_warp(const Sl3Vector& theta_i, const Sl3Vector& theta_j, Point2 p);

struct KarcherResult {
  Homography mean;
  bool converged = false;
  int iterations = 0;
};

// Fixed-point iteration mu <- mu * exp(mean_i log(mu^-1 h_i)) from
// mu = hs[0], until the mean log-increment norm < 1e-10 or 100 iterations.
// A log domain error mid-iteration is reported as non-convergence with the
// last iterate as partial result.
KarcherResult karcher_mean(const std::vector<Homography>& hs);

enum class GaugeMode { karcher, first, none };

GaugeMode gauge_mode_from_string(const std::string& s);
std::string to_string(GaugeMode m);

struct GaugeResult {
  std::vector<Homography> homographies;
  // karcher requested but the mean did not converge; fell back to first.
  bool karcher_fallback = false;
};

// Post-hoc gauge fix. All pairwise relative warps H_i * H_j^-1 are
// unchanged by the mode; only the shared frame moves.
GaugeResult gauge_normalize(const std::vector<Sl3Vector>& thetas, GaugeMode mode);

// ---- Differentiable exponential -----------------------------------------
//
// Forward state of one sl3_exp evaluation, kept so the backward pass
// differentiates exactly the truncated scaled series the forward pass ran.

struct ExpTape {
  Eigen::Matrix3d value;                  // exp(A)
  std::vector<Eigen::Matrix3d> powers;    // (A/2^s)^0 .. (A/2^s)^degree
  std::vector<Eigen::Matrix3d> squares;   // pre-squaring iterates E_0..E_{s-1}
  int squarings = 0;
};

ExpTape sl3_exp_tape(const Sl3Vector& v);

// Adjoint of sl3_exp: given dL/d(exp(A)), returns dL/dv.
Sl3Vector sl3_exp_backward(const ExpTape& tape, const Eigen::Matrix3d& adj);

}  // namespace kpalign
