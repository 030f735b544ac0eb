#include "kpalign/sl3.hpp"

#include "kpalign/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace kpalign {

namespace {

constexpr int kSeriesDegree = 12;
constexpr double kScaleTarget = 0.5;  // ||A/2^s||_F <= 0.5 keeps the series below 1e-12

std::array<Eigen::Matrix3d, 8> make_generators() {
  std::array<Eigen::Matrix3d, 8> g;
  for (auto& m : g) m.setZero();
  g[0](0, 2) = 1.0;                       // x-translation
  g[1](1, 2) = 1.0;                       // y-translation
  g[2](1, 0) = 1.0;                       // rotation
  g[2](0, 1) = -1.0;
  const double s6 = 1.0 / std::sqrt(6.0);
  g[3](0, 0) = s6;                        // isotropic scale, unit Frobenius norm
  g[3](1, 1) = s6;
  g[3](2, 2) = -2.0 * s6;
  g[4](0, 0) = 1.0;                       // anisotropic stretch
  g[4](1, 1) = -1.0;
  g[5](0, 1) = 1.0;                       // shear
  g[5](1, 0) = 1.0;
  g[6](2, 0) = 1.0;                       // projective x
  g[7](2, 1) = 1.0;                       // projective y
  return g;
}

const std::array<double, kSeriesDegree + 1>& inv_factorials() {
  static const auto table = [] {
    std::array<double, kSeriesDegree + 1> t{};
    double f = 1.0;
    t[0] = 1.0;
    for (int n = 1; n <= kSeriesDegree; ++n) {
      f *= n;
      t[n] = 1.0 / f;
    }
    return t;
  }();
  return table;
}

// Principal square root by the Denman-Beavers iteration.
Eigen::Matrix3d principal_sqrt(const Eigen::Matrix3d& m) {
  Eigen::Matrix3d y = m;
  Eigen::Matrix3d z = Eigen::Matrix3d::Identity();
  for (int it = 0; it < 60; ++it) {
    const double dy = std::abs(y.determinant());
    const double dz = std::abs(z.determinant());
    if (dy < 1e-14 || dz < 1e-14) {
      throw NumericalError("sl3_log: singular iterate in square-root computation");
    }
    const Eigen::Matrix3d yn = 0.5 * (y + z.inverse());
    const Eigen::Matrix3d zn = 0.5 * (z + y.inverse());
    const double delta = (yn - y).norm();
    y = yn;
    z = zn;
    if (delta < 1e-14 * std::max(1.0, y.norm())) return y;
  }
  throw NumericalError("sl3_log: square-root iteration did not converge");
}

}  // namespace

const std::array<Eigen::Matrix3d, 8>& sl3_generators() {
  static const auto g = make_generators();
  return g;
}

Eigen::Matrix3d sl3_algebra(const Sl3Vector& v) {
  const auto& g = sl3_generators();
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  for (int k = 0; k < 8; ++k) a += v[k] * g[k];
  return a;
}

Sl3Vector sl3_coefficients(const Eigen::Matrix3d& a) {
  // The basis is Frobenius-orthogonal; squared norms below.
  static const std::array<double, 8> norm2 = {1, 1, 2, 1, 2, 2, 1, 1};
  const auto& g = sl3_generators();
  Sl3Vector v;
  for (int k = 0; k < 8; ++k) {
    v[k] = a.cwiseProduct(g[k]).sum() / norm2[k];
  }
  return v;
}

ExpTape sl3_exp_tape(const Sl3Vector& v) {
  if (!v.allFinite()) throw ValidationError("sl3_exp: non-finite input");
  const Eigen::Matrix3d a = sl3_algebra(v);
  const double nf = a.norm();
  int s = 0;
  if (nf > kScaleTarget) {
    s = static_cast<int>(std::ceil(std::log2(nf / kScaleTarget)));
  }
  const double scale = std::ldexp(1.0, -s);

  ExpTape tape;
  tape.squarings = s;
  tape.powers.resize(kSeriesDegree + 1);
  tape.powers[0] = Eigen::Matrix3d::Identity();
  const Eigen::Matrix3d as = a * scale;
  for (int n = 1; n <= kSeriesDegree; ++n) tape.powers[n] = tape.powers[n - 1] * as;

  const auto& inv_fact = inv_factorials();
  Eigen::Matrix3d e = Eigen::Matrix3d::Zero();
  for (int n = 0; n <= kSeriesDegree; ++n) e += inv_fact[n] * tape.powers[n];

  tape.squares.resize(s);
  for (int k = 0; k < s; ++k) {
    tape.squares[k] = e;
    e = e * e;
  }
  tape.value = e;
  return tape;
}

Sl3Vector sl3_exp_backward(const ExpTape& tape, const Eigen::Matrix3d& adj) {
  Eigen::Matrix3d g = adj;
  for (int k = tape.squarings - 1; k >= 0; --k) {
    const Eigen::Matrix3d& e = tape.squares[k];
    g = (g * e.transpose() + e.transpose() * g).eval();
  }
  // Adjoint of the truncated series E = sum_n (A^n / n!):
  //   dA = sum_n 1/n! sum_{m=0}^{n-1} (A^m)^T dE (A^{n-1-m})^T
  const auto& inv_fact = inv_factorials();
  Eigen::Matrix3d abar = Eigen::Matrix3d::Zero();
  for (int n = 1; n <= kSeriesDegree; ++n) {
    for (int m = 0; m < n; ++m) {
      abar += inv_fact[n] * (tape.powers[m].transpose() * g * tape.powers[n - 1 - m].transpose());
    }
  }
  abar *= std::ldexp(1.0, -tape.squarings);

  const auto& gen = sl3_generators();
  Sl3Vector vbar;
  for (int k = 0; k < 8; ++k) vbar[k] = gen[k].cwiseProduct(abar).sum();
  return vbar;
}

Homography sl3_exp(const Sl3Vector& v) {
  return Homography{sl3_exp_tape(v).value};
}

Sl3Vector sl3_log(const Homography& h) {
  if (!h.m.allFinite()) throw ValidationError("sl3_log: non-finite input");
  // Principal log exists only when no eigenvalue sits on the negative real axis.
  Eigen::EigenSolver<Eigen::Matrix3d> es(h.m, /*computeEigenvectors=*/false);
  const double scale = h.m.norm();
  for (int i = 0; i < 3; ++i) {
    const auto lam = es.eigenvalues()[i];
    if (std::abs(lam.imag()) < 1e-12 * std::max(1.0, scale) && lam.real() <= 0.0) {
      throw NumericalError("sl3_log: eigenvalue on the negative real axis, principal log undefined");
    }
  }

  Eigen::Matrix3d x = h.m;
  int roots = 0;
  while ((x - Eigen::Matrix3d::Identity()).norm() >= 0.25) {
    if (roots >= 60) throw NumericalError("sl3_log: inverse scaling did not reach the series domain");
    x = principal_sqrt(x);
    ++roots;
  }

  // log(I + W) = sum_{n>=1} (-1)^{n+1} W^n / n  for ||W|| < 1.
  const Eigen::Matrix3d w = x - Eigen::Matrix3d::Identity();
  Eigen::Matrix3d term = w;
  Eigen::Matrix3d sum = Eigen::Matrix3d::Zero();
  for (int n = 1; n <= 48; ++n) {
    const double c = (n % 2 == 1) ? 1.0 / n : -1.0 / n;
    sum += c * term;
    if (term.norm() / n < 1e-17) break;
    term = term * w;
  }
  Eigen::Matrix3d l = sum * std::ldexp(1.0, roots);
  l -= (l.trace() / 3.0) * Eigen::Matrix3d::Identity();  // drop numerical trace drift
  return sl3_coefficients(l);
}

Point2 hom_apply(const Homography& h, Point2 p) {
  const auto& m = h.m;
  const double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
  if (std::abs(w) <= 1e-12) throw PointAtInfinity();
  return Point2{(m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2)) / w,
                (m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2)) / w};
}

Eigen::Matrix3d renormalize_det(const Eigen::Matrix3d& m) {
  const double d = m.determinant();
  if (!std::isfinite(d) || std::abs(d) < 1e-300) {
    throw NumericalError("homography renormalization: determinant vanished");
  }
  return m / std::cbrt(d);
}

Homography hom_compose(const Homography& a, const Homography& b) {
  return Homography{renormalize_det(b.m * a.m)};
}

Homography hom_inverse(const Homography& h) {
  return Homography{renormalize_det(h.m.inverse())};
}

Point2 ic_warp(const Sl3Vector& theta_i, const Sl3Vector& theta_j, Point2 p) {
  const Homography fwd = sl3_exp(theta_i);
  const Homography bwd = sl3_exp(Sl3Vector(-theta_j));
  return hom_apply(hom_compose(fwd, bwd), p);
}

KarcherResult karcher_mean(const std::vector<Homography>& hs) {
  if (hs.empty()) throw ValidationError("karcher_mean: empty input");
  KarcherResult res;
  res.mean = hs[0];
  for (int it = 0; it < 100; ++it) {
    res.iterations = it + 1;
    const Eigen::Matrix3d mu_inv = renormalize_det(res.mean.m.inverse());
    Sl3Vector delta = Sl3Vector::Zero();
    try {
      for (const auto& h : hs) {
        delta += sl3_log(Homography{renormalize_det(mu_inv * h.m)});
      }
    } catch (const NumericalError&) {
      res.converged = false;
      return res;  // partial result: last iterate
    }
    delta /= static_cast<double>(hs.size());
    res.mean = Homography{renormalize_det(res.mean.m * sl3_exp(delta).m)};
    if (delta.norm() < 1e-10) {
      res.converged = true;
      return res;
    }
  }
  res.converged = false;
  return res;
}

GaugeMode gauge_mode_from_string(const std::string& s) {
  if (s == "karcher") return GaugeMode::karcher;
  if (s == "first") return GaugeMode::first;
  if (s == "none") return GaugeMode::none;
  throw ValidationError("unknown gauge mode: " + s);
}

std::string to_string(GaugeMode m) {
  switch (m) {
    case GaugeMode::karcher: return "karcher";
    case GaugeMode::first: return "first";
    case GaugeMode::none: return "none";
  }
  return "none";
}

GaugeResult gauge_normalize(const std::vector<Sl3Vector>& thetas, GaugeMode mode) {
  if (thetas.empty()) throw ValidationError("gauge_normalize: empty input");
  std::vector<Homography> raw;
  raw.reserve(thetas.size());
  for (const auto& t : thetas) raw.push_back(sl3_exp(t));

  GaugeResult out;
  if (mode == GaugeMode::none) {
    out.homographies = std::move(raw);
    return out;
  }

  Eigen::Matrix3d gauge;
  if (mode == GaugeMode::karcher) {
    const KarcherResult km = karcher_mean(raw);
    if (km.converged) {
      gauge = renormalize_det(km.mean.m.inverse());
    } else {
      out.karcher_fallback = true;
      gauge = sl3_exp(Sl3Vector(-thetas[0])).m;
    }
  } else {
    gauge = sl3_exp(Sl3Vector(-thetas[0])).m;
  }

  out.homographies.reserve(raw.size());
  for (const auto& h : raw) {
    out.homographies.push_back(Homography{renormalize_det(gauge * h.m)});
  }
  return out;
}

}  // namespace kpalign
