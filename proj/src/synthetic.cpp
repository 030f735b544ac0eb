#include "kpalign/synthetic.hpp"

#include "kpalign/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <string>

namespace kpalign {

namespace {

constexpr double kSafeBox = 0.95;      // warped keypoints must stay inside
constexpr double kProjectiveDamp = 0.1;  // undamped projective terms blow up

std::string kp_label(int c) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "kp_%03d", c);
  return buf;
}

double to_px(double x, int extent) { return (x + 1.0) * 0.5 * (extent - 1); }

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) { return parent[a] == a ? a : parent[a] = find(parent[a]); }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

SynthCollection gen_collection(const SynthSpec& spec) {
  if (spec.n_images < 2) throw ValidationError("gen_collection: need at least 2 images");
  if (spec.n_canonical_kps < 1) throw ValidationError("gen_collection: need keypoints");
  if (spec.width < 2 || spec.height < 2) throw ValidationError("gen_collection: image too small");
  if (spec.outlier_rate < 0.0 || spec.outlier_rate >= 1.0 ||
      spec.flip_rate < 0.0 || spec.flip_rate >= 1.0 ||
      spec.pair_density <= 0.0 || spec.pair_density > 1.0 ||
      spec.noise_std < 0.0 || spec.warp_magnitude < 0.0) {
    throw ValidationError("gen_collection: parameter out of range");
  }

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> canon_dist(-0.6, 0.6);
  std::uniform_real_distribution<double> warp_dist(-spec.warp_magnitude, spec.warp_magnitude);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> outlier_dist(-0.9, 0.9);
  std::normal_distribution<double> noise(0.0, spec.noise_std > 0 ? spec.noise_std : 1.0);

  SynthCollection out;
  for (int c = 0; c < spec.n_canonical_kps; ++c) {
    out.canonical.push_back(Point2{canon_dist(rng), canon_dist(rng)});
  }

  const int n = spec.n_images;
  // Per-image warps; image keypoints are the canonical points pulled back by
  // exp(-theta*), so the ground-truth warps realign them exactly.
  std::vector<std::vector<Point2>> image_kps(n);
  for (int i = 0; i < n; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      Sl3Vector theta;
      for (int k = 0; k < 8; ++k) {
        theta[k] = warp_dist(rng);
        if (k >= 6) theta[k] *= kProjectiveDamp;
      }
      const Homography inv = sl3_exp(Sl3Vector(-theta));
      std::vector<Point2> kps;
      ok = true;
      try {
        for (const auto& c : out.canonical) {
          const Point2 p = hom_apply(inv, c);
          if (std::abs(p.x) > kSafeBox || std::abs(p.y) > kSafeBox) {
            ok = false;
            break;
          }
          kps.push_back(p);
        }
      } catch (const PointAtInfinity&) {
        ok = false;
      }
      if (ok) {
        out.gt_thetas.push_back(theta);
        image_kps[i] = std::move(kps);
      }
    }
    if (!ok) {
      throw ValidationError("gen_collection: warp_magnitude keeps pushing points outside the frame");
    }
  }

  // Mirrored images: a seeded selection of round(flip_rate * N).
  out.gt_flips.assign(n, 0);
  const int n_flips = static_cast<int>(std::lround(spec.flip_rate * n));
  {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int k = 0; k < n_flips; ++k) out.gt_flips[order[k]] = 1;
  }

  // Pair selection: a random spanning tree keeps the collection connected,
  // then every pair joins with probability pair_density.
  std::set<std::pair<int, int>> pair_set;
  for (int i = 1; i < n; ++i) {
    std::uniform_int_distribution<int> parent(0, i - 1);
    pair_set.emplace(parent(rng), i);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double coin = unit(rng);
      if (coin < spec.pair_density) pair_set.emplace(i, j);
    }
  }
  {
    UnionFind uf(n);
    for (const auto& [i, j] : pair_set) uf.unite(i, j);
    for (int i = 1; i < n; ++i) {
      if (uf.find(i) != uf.find(0)) {
        throw ValidationError("gen_collection: pair graph disconnected");
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    out.images.push_back(ImageMeta{i, spec.width, spec.height});
  }

  // Matches in normalized coordinates first; mirroring and the pixel
  // conversion happen at the end.
  struct NormMatch {
    Point2 a, b;
    double conf;
  };
  std::vector<std::pair<int, int>> pairs(pair_set.begin(), pair_set.end());
  std::vector<std::vector<NormMatch>> pair_matches(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    for (int c = 0; c < spec.n_canonical_kps; ++c) {
      NormMatch m;
      double nax = 0, nay = 0, nbx = 0, nby = 0;
      if (spec.noise_std > 0) {
        nax = noise(rng);
        nay = noise(rng);
        nbx = noise(rng);
        nby = noise(rng);
      }
      m.a = Point2{image_kps[i][c].x + nax, image_kps[i][c].y + nay};
      m.b = Point2{image_kps[j][c].x + nbx, image_kps[j][c].y + nby};
      m.conf = 1.0 - std::min(1.0, std::hypot(nax, nay) + std::hypot(nbx, nby));
      pair_matches[p].push_back(m);
    }
  }

  // Outliers: exactly round(rate * total) seeded picks; the target endpoint
  // is replaced while the confidence stays (a confidently wrong match).
  const long total = static_cast<long>(pairs.size()) * spec.n_canonical_kps;
  const long n_out = std::lround(spec.outlier_rate * static_cast<double>(total));
  if (n_out > 0) {
    std::vector<long> idx(total);
    std::iota(idx.begin(), idx.end(), 0L);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (long k = 0; k < n_out; ++k) {
      const long flat = idx[k];
      const std::size_t p = static_cast<std::size_t>(flat / spec.n_canonical_kps);
      const int c = static_cast<int>(flat % spec.n_canonical_kps);
      pair_matches[p][c].b = Point2{outlier_dist(rng), outlier_dist(rng)};
    }
  }

  auto finalize = [&](int image, Point2 q) {
    if (out.gt_flips[image]) q.x = -q.x;
    q.x = std::clamp(q.x, -0.999, 0.999);
    q.y = std::clamp(q.y, -0.999, 0.999);
    return Point2{to_px(q.x, spec.width), to_px(q.y, spec.height)};
  };

  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    RawMatchSet ms;
    ms.i = i;
    ms.j = j;
    for (const auto& m : pair_matches[p]) {
      ms.points_i.push_back(finalize(i, m.a));
      ms.points_j.push_back(finalize(j, m.b));
      ms.conf.push_back(m.conf);
    }
    out.matches.push_back(std::move(ms));
  }

  for (int i = 0; i < n; ++i) {
    GtImage gi;
    gi.id = i;
    gi.width = spec.width;
    gi.height = spec.height;
    for (int c = 0; c < spec.n_canonical_kps; ++c) {
      gi.keypoints[kp_label(c)] = finalize(i, image_kps[i][c]);
    }
    out.gt.images.push_back(std::move(gi));
  }
  return out;
}

}  // namespace kpalign
