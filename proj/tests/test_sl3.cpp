#include "kpalign/errors.hpp"
#include "kpalign/sl3.hpp"

#include <doctest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <random>

using namespace kpalign;

namespace {

Sl3Vector unit_vec(int k, double t = 1.0) {
  Sl3Vector v = Sl3Vector::Zero();
  v[k] = t;
  return v;
}

Sl3Vector random_vec(std::mt19937_64& rng, double max_norm) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> mag(0.0, max_norm);
  Sl3Vector v;
  for (int k = 0; k < 8; ++k) v[k] = u(rng);
  if (v.norm() > 0) v *= mag(rng) / v.norm();
  return v;
}

}  // namespace

TEST_CASE("generators are traceless, independent, and ordered as documented") {
  const auto& g = sl3_generators();
  for (const auto& m : g) CHECK(std::abs(m.trace()) < 1e-15);

  Eigen::Matrix<double, 8, 9> flat;
  for (int k = 0; k < 8; ++k) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) flat(k, 3 * r + c) = g[k](r, c);
    }
  }
  Eigen::FullPivLU<Eigen::Matrix<double, 8, 9>> lu(flat);
  CHECK(lu.rank() == 8);

  // G_1 carries only the (0,2) entry
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (r == 0 && c == 2) {
        CHECK(g[0](r, c) == doctest::Approx(1.0));
      } else {
        CHECK(g[0](r, c) == 0.0);
      }
    }
  }
}

TEST_CASE("sl3_exp basic values") {
  CHECK((sl3_exp(Sl3Vector::Zero()).m - Eigen::Matrix3d::Identity()).norm() < 1e-15);

  const Homography t = sl3_exp(unit_vec(0, 0.1));
  Eigen::Matrix3d expected;
  expected << 1, 0, 0.1, 0, 1, 0, 0, 0, 1;
  CHECK((t.m - expected).norm() < 1e-14);

  // quarter turn takes (1, 0) to (0, 1)
  const Homography rot = sl3_exp(unit_vec(2, M_PI / 2));
  const Point2 p = hom_apply(rot, Point2{1.0, 0.0});
  CHECK(std::abs(p.x - 0.0) < 1e-9);
  CHECK(std::abs(p.y - 1.0) < 1e-9);

  Sl3Vector bad = Sl3Vector::Zero();
  bad[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(sl3_exp(bad), ValidationError);
}

TEST_CASE("sl3_exp matches an independent matrix exponential") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const Sl3Vector v = random_vec(rng, 5.0);
    const Eigen::Matrix3d ours = sl3_exp(v).m;
    const Eigen::Matrix3d reference = sl3_algebra(v).exp();
    CHECK((ours - reference).norm() / std::max(1.0, reference.norm()) < 1e-9);
  }
}

TEST_CASE("det(exp) = 1 and exp(-v) inverts exp(v)") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const Sl3Vector v = random_vec(rng, 5.0);
    const Homography h = sl3_exp(v);
    CHECK(std::abs(h.m.determinant() - 1.0) < 1e-9);
    const Homography hinv = sl3_exp(Sl3Vector(-v));
    CHECK((hinv.m * h.m - Eigen::Matrix3d::Identity()).norm() < 1e-8);
  }
}

TEST_CASE("sl3_log round trips and basic values") {
  CHECK(sl3_log(Homography::identity()).norm() < 1e-15);

  Eigen::Matrix3d t;
  t << 1, 0, 0.1, 0, 1, 0, 0, 0, 1;
  const Sl3Vector v = sl3_log(Homography{t});
  CHECK((v - unit_vec(0, 0.1)).norm() < 1e-12);

  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 500; ++trial) {
    const Sl3Vector w = random_vec(rng, 1.0);
    const Sl3Vector back = sl3_log(sl3_exp(w));
    CHECK((back - w).norm() < 1e-8);
  }
}

TEST_CASE("sl3_log agrees with an independent matrix log near identity") {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const Sl3Vector v = random_vec(rng, 1.5);
    const Homography h = sl3_exp(v);
    const Eigen::Matrix3d ref = h.m.log();
    CHECK((sl3_algebra(sl3_log(h)) - ref).norm() < 1e-8);
  }
}

TEST_CASE("sl3_log rejects spectra on the negative real axis") {
  // A half-turn rotation has eigenvalues {-1, -1, 1}.
  const Homography half_turn = sl3_exp(unit_vec(2, M_PI));
  CHECK_THROWS_AS(sl3_log(half_turn), NumericalError);
}

TEST_CASE("hom_apply applies the projective action") {
  const Point2 p = hom_apply(Homography::identity(), Point2{0.3, -0.7});
  CHECK(p.x == doctest::Approx(0.3));
  CHECK(p.y == doctest::Approx(-0.7));

  Eigen::Matrix3d t;
  t << 1, 0, 0.1, 0, 1, 0, 0, 0, 1;
  const Point2 q = hom_apply(Homography{t}, Point2{0.5, 0.0});
  CHECK(q.x == doctest::Approx(0.6));
  CHECK(q.y == doctest::Approx(0.0));

  Eigen::Matrix3d s = Eigen::Vector3d(2.0, 0.5, 1.0).asDiagonal();
  const Point2 r = hom_apply(Homography{s}, Point2{0.2, 0.4});
  CHECK(r.x == doctest::Approx(0.4));
  CHECK(r.y == doctest::Approx(0.2));

  Eigen::Matrix3d deg = Eigen::Matrix3d::Identity();
  deg(2, 2) = 0.0;
  deg(2, 0) = 1.0;  // w = x
  CHECK_THROWS_AS(hom_apply(Homography{deg}, Point2{0.0, 0.5}), PointAtInfinity);
}

TEST_CASE("hom_compose follows apply-a-then-b and renormalizes") {
  std::mt19937_64 rng(15);
  const Homography a = sl3_exp(random_vec(rng, 0.8));
  const Homography b = sl3_exp(random_vec(rng, 0.8));

  CHECK((hom_compose(a, Homography::identity()).m - a.m).norm() < 1e-12);

  const Point2 p{0.21, -0.35};
  const Point2 via_compose = hom_apply(hom_compose(a, b), p);
  const Point2 via_chain = hom_apply(b, hom_apply(a, p));
  CHECK(std::abs(via_compose.x - via_chain.x) < 1e-12);
  CHECK(std::abs(via_compose.y - via_chain.y) < 1e-12);

  const Sl3Vector v = random_vec(rng, 1.0);
  const Homography cancel = hom_compose(sl3_exp(v), sl3_exp(Sl3Vector(-v)));
  CHECK((cancel.m - Eigen::Matrix3d::Identity()).norm() < 1e-8);

  const Homography sum = hom_compose(sl3_exp(unit_vec(0, 0.1)), sl3_exp(unit_vec(0, 0.2)));
  CHECK((sum.m - sl3_exp(unit_vec(0, 0.3)).m).norm() < 1e-12);
}

TEST_CASE("ic_warp composes the forward and inverse warps") {
  std::mt19937_64 rng(16);
  const Sl3Vector v = random_vec(rng, 0.7);
  const Point2 p{0.1, 0.2};
  const Point2 same = ic_warp(v, v, p);
  CHECK(std::abs(same.x - p.x) < 1e-12);
  CHECK(std::abs(same.y - p.y) < 1e-12);

  const Point2 a = ic_warp(unit_vec(0, 0.1), Sl3Vector::Zero(), Point2{0.0, 0.0});
  CHECK(a.x == doctest::Approx(0.1));
  CHECK(a.y == doctest::Approx(0.0));

  const Point2 b = ic_warp(Sl3Vector::Zero(), unit_vec(0, 0.1), Point2{0.1, 0.0});
  CHECK(std::abs(b.x) < 1e-15);
  CHECK(std::abs(b.y) < 1e-15);
}

TEST_CASE("ic_warp is invariant to a global gauge") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const Sl3Vector ti = random_vec(rng, 0.5);
    const Sl3Vector tj = random_vec(rng, 0.5);
    Sl3Vector t0 = random_vec(rng, 0.5);
    t0[6] *= 0.1;  // keep the test points finite
    t0[7] *= 0.1;
    const Point2 p{0.3, -0.2};

    const Point2 base = ic_warp(ti, tj, p);
    // replace each exponential by exp(theta) followed by exp(theta0)
    const Homography hi = hom_compose(sl3_exp(ti), sl3_exp(t0));
    const Homography hj = hom_compose(sl3_exp(tj), sl3_exp(t0));
    const Point2 gauged = hom_apply(Homography{hj.m.inverse() * hi.m}, p);
    CHECK(std::abs(base.x - gauged.x) < 1e-9);
    CHECK(std::abs(base.y - gauged.y) < 1e-9);
  }
}

TEST_CASE("karcher_mean fixed points and commuting averages") {
  std::mt19937_64 rng(18);
  const Homography h = sl3_exp(random_vec(rng, 0.6));
  const KarcherResult same = karcher_mean({h, h, h});
  CHECK(same.converged);
  CHECK((same.mean.m - h.m).norm() < 1e-9);

  const double t = 0.4;
  const KarcherResult sym = karcher_mean({sl3_exp(unit_vec(0, t)), sl3_exp(unit_vec(0, -t))});
  CHECK(sym.converged);
  CHECK((sym.mean.m - Eigen::Matrix3d::Identity()).norm() < 1e-9);
}

TEST_CASE("karcher_mean of {h,h,h,I} matches a densely iterated oracle") {
  std::mt19937_64 rng(19);
  const Sl3Vector v = random_vec(rng, 0.2);
  const std::vector<Homography> hs = {sl3_exp(v), sl3_exp(v), sl3_exp(v),
                                      Homography::identity()};

  // Independent oracle: iterate the fixed-point map far past the
  // implementation's stopping rule, using the reference matrix functions.
  Eigen::Matrix3d mu = hs[0].m;
  for (int it = 0; it < 2000; ++it) {
    Eigen::Matrix3d delta = Eigen::Matrix3d::Zero();
    for (const auto& h : hs) delta += Eigen::Matrix3d(mu.inverse() * h.m).log();
    delta /= static_cast<double>(hs.size());
    mu = mu * Eigen::Matrix3d(delta.exp());
  }

  const KarcherResult km = karcher_mean(hs);
  CHECK(km.converged);
  CHECK((km.mean.m - mu).norm() < 1e-8);
  // commuting one-parameter family: the mean is exp(0.75 v)
  CHECK((km.mean.m - sl3_exp(Sl3Vector(0.75 * v)).m).norm() < 1e-6);
}

TEST_CASE("karcher_mean is right-equivariant") {
  std::mt19937_64 rng(20);
  std::vector<Homography> hs;
  for (int i = 0; i < 5; ++i) hs.push_back(sl3_exp(random_vec(rng, 0.3)));
  const Homography g = sl3_exp(random_vec(rng, 0.2));

  std::vector<Homography> shifted;
  for (const auto& h : hs) shifted.push_back(Homography{renormalize_det(h.m * g.m)});

  const KarcherResult base = karcher_mean(hs);
  const KarcherResult moved = karcher_mean(shifted);
  REQUIRE(base.converged);
  REQUIRE(moved.converged);
  CHECK((moved.mean.m - base.mean.m * g.m).norm() < 1e-7);
}

TEST_CASE("gauge_normalize modes agree on relative warps") {
  std::mt19937_64 rng(21);
  std::vector<Sl3Vector> thetas;
  for (int i = 0; i < 6; ++i) {
    Sl3Vector v = random_vec(rng, 0.4);
    v[6] *= 0.1;
    v[7] *= 0.1;
    thetas.push_back(v);
  }

  const GaugeResult first = gauge_normalize(thetas, GaugeMode::first);
  CHECK((first.homographies[0].m - Eigen::Matrix3d::Identity()).norm() < 1e-10);

  const GaugeResult none = gauge_normalize(std::vector<Sl3Vector>(4, Sl3Vector::Zero()),
                                           GaugeMode::none);
  for (const auto& h : none.homographies) {
    CHECK((h.m - Eigen::Matrix3d::Identity()).norm() < 1e-15);
  }

  const GaugeResult karcher = gauge_normalize(thetas, GaugeMode::karcher);
  const GaugeResult raw = gauge_normalize(thetas, GaugeMode::none);
  CHECK(!karcher.karcher_fallback);
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    CHECK(std::abs(karcher.homographies[i].m.determinant() - 1.0) < 1e-9);
    for (std::size_t j = 0; j < thetas.size(); ++j) {
      const Eigen::Matrix3d rel_raw =
          raw.homographies[i].m * raw.homographies[j].m.inverse();
      for (const GaugeResult* gr : {&first, &karcher}) {
        const Eigen::Matrix3d rel =
            gr->homographies[i].m * gr->homographies[j].m.inverse();
        CHECK((rel - rel_raw).norm() < 1e-8);
      }
    }
  }
}

TEST_CASE("sl3_exp_backward matches central finite differences") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Sl3Vector v = random_vec(rng, 0.8);
    Eigen::Matrix3d adj;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) adj(r, c) = u(rng);
    }

    const ExpTape tape = sl3_exp_tape(v);
    const Sl3Vector grad = sl3_exp_backward(tape, adj);

    const double h = 1e-6;
    for (int k = 0; k < 8; ++k) {
      Sl3Vector vp = v, vm = v;
      vp[k] += h;
      vm[k] -= h;
      const double fp = (sl3_exp(vp).m.array() * adj.array()).sum();
      const double fm = (sl3_exp(vm).m.array() * adj.array()).sum();
      const double fd = (fp - fm) / (2 * h);
      CHECK(std::abs(grad[k] - fd) < 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}
