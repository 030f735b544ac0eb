#include "kpalign/graph.hpp"

#include "kpalign/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>

namespace kpalign {

std::vector<int> nms_select(const std::vector<Point2>& points,
                            const std::vector<double>& scores,
                            double window, int k) {
  if (points.size() != scores.size()) {
    throw ValidationError("nms_select: points/scores length mismatch");
  }
  if (window <= 0.0) throw ValidationError("nms_select: window must be positive");
  if (k < 1) throw ValidationError("nms_select: k must be >= 1");

  const int n = static_cast<int>(points.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  const double radius = window / 2.0;
  std::vector<char> suppressed(n, 0);
  std::vector<int> selected;
  for (int idx : order) {
    if (suppressed[idx]) continue;
    selected.push_back(idx);
    if (static_cast<int>(selected.size()) >= k) break;
    for (int other = 0; other < n; ++other) {
      if (suppressed[other] || other == idx) continue;
      const double dx = std::abs(points[other].x - points[idx].x);
      const double dy = std::abs(points[other].y - points[idx].y);
      if (std::max(dx, dy) <= radius) suppressed[other] = 1;
    }
  }
  return selected;
}

namespace {

double sq_dist(Point2 a, Point2 b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

// Farthest-point seeding starting from the lowest-index point. Ties go to
// the lower index.
std::vector<Point2> seed_means(const std::vector<Point2>& points, int count) {
  std::vector<int> seeds = {0};
  std::vector<char> taken(points.size(), 0);
  taken[0] = 1;
  while (static_cast<int>(seeds.size()) < count) {
    int best = -1;
    double best_d = -1.0;
    for (int idx = 0; idx < static_cast<int>(points.size()); ++idx) {
      if (taken[idx]) continue;
      double d = std::numeric_limits<double>::infinity();
      for (int s : seeds) d = std::min(d, sq_dist(points[idx], points[s]));
      if (d > best_d) {
        best_d = d;
        best = idx;
      }
    }
    if (best < 0) break;  // fewer distinct points than requested seeds
    seeds.push_back(best);
    taken[best] = 1;
  }
  std::vector<Point2> means;
  means.reserve(seeds.size());
  for (int s : seeds) means.push_back(points[s]);
  return means;
}

}  // namespace

double dp_means_objective(const std::vector<Point2>& points,
                          const std::vector<Point2>& means,
                          const std::vector<int>& assignments, double penalty) {
  double obj = penalty * static_cast<double>(means.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    obj += sq_dist(points[i], means[assignments[i]]);
  }
  return obj;
}

DpMeansResult dp_means(const std::vector<Point2>& points, double penalty,
                       int init_n, int max_iter) {
  if (points.empty()) throw ValidationError("dp_means: empty input");
  if (penalty <= 0.0) throw ValidationError("dp_means: penalty must be positive");

  const int n = static_cast<int>(points.size());
  DpMeansResult res;
  res.means = seed_means(points, std::min(std::max(init_n, 1), n));

  std::vector<int> prev_assign;
  for (int iter = 1; iter <= max_iter; ++iter) {
    res.iterations = iter;

    // Assignment pass. A freshly opened cluster is immediately available to
    // later points, so the result depends on input order (documented).
    bool created = false;
    std::vector<int> assign(n, -1);
    for (int idx = 0; idx < n; ++idx) {
      int best = 0;
      double best_d = sq_dist(points[idx], res.means[0]);
      for (int c = 1; c < static_cast<int>(res.means.size()); ++c) {
        const double d = sq_dist(points[idx], res.means[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (best_d > penalty) {
        res.means.push_back(points[idx]);
        best = static_cast<int>(res.means.size()) - 1;
        created = true;
      }
      assign[idx] = best;
    }

    // Update pass: centroids; empty clusters are dropped and indices remapped.
    const int k = static_cast<int>(res.means.size());
    std::vector<double> sx(k, 0.0), sy(k, 0.0);
    std::vector<int> cnt(k, 0);
    for (int idx = 0; idx < n; ++idx) {
      sx[assign[idx]] += points[idx].x;
      sy[assign[idx]] += points[idx].y;
      cnt[assign[idx]] += 1;
    }
    std::vector<Point2> new_means;
    std::vector<int> remap(k, -1);
    bool dropped = false;
    for (int c = 0; c < k; ++c) {
      if (cnt[c] == 0) {
        dropped = true;
        continue;
      }
      remap[c] = static_cast<int>(new_means.size());
      new_means.push_back(Point2{sx[c] / cnt[c], sy[c] / cnt[c]});
    }
    for (int idx = 0; idx < n; ++idx) assign[idx] = remap[assign[idx]];
    res.means = std::move(new_means);
    res.assignments = assign;
    res.objective_trace.push_back(
        dp_means_objective(points, res.means, res.assignments, penalty));

    if (!created && !dropped && assign == prev_assign) break;
    prev_assign = std::move(assign);
  }
  return res;
}

namespace {

double normalize_coord(double p, int extent) {
  return 2.0 * p / (extent - 1) - 1.0;
}

}  // namespace

CorrespondenceGraph build_graph(const std::vector<ImageMeta>& images,
                                const std::vector<RawMatchSet>& matches,
                                const BuildConfig& config) {
  CorrespondenceGraph g;
  g.images = images;
  std::sort(g.images.begin(), g.images.end(),
            [](const ImageMeta& a, const ImageMeta& b) { return a.id < b.id; });

  std::map<int, int> ordinal;
  for (int o = 0; o < static_cast<int>(g.images.size()); ++o) {
    const auto& im = g.images[o];
    if (im.width < 2 || im.height < 2) {
      throw ValidationError("image " + std::to_string(im.id) + ": width/height must be >= 2");
    }
    if (!ordinal.emplace(im.id, o).second) {
      throw ValidationError("duplicate image id " + std::to_string(im.id));
    }
  }

  const int n_images = static_cast<int>(g.images.size());
  std::vector<char> in_some_pair(n_images, 0);
  for (std::size_t mi = 0; mi < matches.size(); ++mi) {
    const auto& ms = matches[mi];
    const std::string ctx = "matches[" + std::to_string(mi) + "]";
    if (!ordinal.count(ms.i) || !ordinal.count(ms.j)) {
      throw ValidationError(ctx + ": unknown image id");
    }
    if (ms.i == ms.j) throw ValidationError(ctx + ": pair must join distinct images");
    if (ms.points_i.size() != ms.points_j.size() || ms.points_i.size() != ms.conf.size()) {
      throw ValidationError(ctx + ": points_i/points_j/conf lengths differ");
    }
    in_some_pair[ordinal.at(ms.i)] = 1;
    in_some_pair[ordinal.at(ms.j)] = 1;
  }
  for (int o = 0; o < n_images; ++o) {
    if (!in_some_pair[o]) {
      // An image in no pair has a fully unconstrained warp.
      throw ValidationError("image " + std::to_string(g.images[o].id) +
                            " appears in no match pair");
    }
  }

  // Per-pair NMS on each side; a match survives when both of its endpoints do.
  struct Survivor {
    int pair;        // index into matches
    int entry;       // index into that pair's lists
    int pool_i = 0;  // index into the source image's pool
    int pool_j = 0;
  };
  std::vector<Survivor> survivors;
  std::vector<std::vector<Point2>> pools(n_images);  // pixel units
  for (std::size_t mi = 0; mi < matches.size(); ++mi) {
    const auto& ms = matches[mi];
    if (ms.points_i.empty()) continue;
    const auto sel_i = nms_select(ms.points_i, ms.conf, config.nms_window, config.top_k);
    const auto sel_j = nms_select(ms.points_j, ms.conf, config.nms_window, config.top_k);
    std::set<int> keep(sel_i.begin(), sel_i.end());
    std::set<int> keep_j(sel_j.begin(), sel_j.end());
    const int oi = ordinal.at(ms.i);
    const int oj = ordinal.at(ms.j);
    for (int t = 0; t < static_cast<int>(ms.points_i.size()); ++t) {
      if (!keep.count(t) || !keep_j.count(t)) continue;
      Survivor s;
      s.pair = static_cast<int>(mi);
      s.entry = t;
      s.pool_i = static_cast<int>(pools[oi].size());
      s.pool_j = static_cast<int>(pools[oj].size());
      pools[oi].push_back(ms.points_i[t]);
      pools[oj].push_back(ms.points_j[t]);
      survivors.push_back(s);
    }
  }

  // Per-image clustering; nodes are cluster means in normalized coordinates.
  std::vector<int> node_base(n_images, 0);
  std::vector<std::vector<int>> pool_to_node(n_images);
  for (int o = 0; o < n_images; ++o) {
    const auto& im = g.images[o];
    if (pools[o].empty()) {
      throw ValidationError("image " + std::to_string(im.id) +
                            " has no surviving keypoints; its warp would be unconstrained");
    }
    double penalty = config.dp_penalty;
    if (penalty < 0.0) {
      const double diag = std::hypot(static_cast<double>(im.width),
                                     static_cast<double>(im.height));
      penalty = (0.05 * diag) * (0.05 * diag);
    }
    const auto dp = dp_means(pools[o], penalty, config.dp_init_n, config.dp_max_iter);
    node_base[o] = static_cast<int>(g.nodes.size());
    for (const auto& mean : dp.means) {
      g.nodes.push_back(GraphNode{o, Point2{normalize_coord(mean.x, im.width),
                                            normalize_coord(mean.y, im.height)}});
    }
    pool_to_node[o] = dp.assignments;
  }

  // Snap matches to their cluster-mean nodes; dedupe the edge set only.
  std::set<std::pair<int, int>> inter_set;
  for (const auto& s : survivors) {
    const auto& ms = matches[s.pair];
    const int oi = ordinal.at(ms.i);
    const int oj = ordinal.at(ms.j);
    const int u = node_base[oi] + pool_to_node[oi][s.pool_i];
    const int v = node_base[oj] + pool_to_node[oj][s.pool_j];
    g.matches.push_back(MatchRef{u, v});
    inter_set.emplace(std::min(u, v), std::max(u, v));
  }
  g.inter_edges.assign(inter_set.begin(), inter_set.end());

  if (config.intra_edges) {
    for (int o = 0; o < n_images; ++o) {
      const int begin = node_base[o];
      const int end = (o + 1 < n_images) ? node_base[o + 1] : static_cast<int>(g.nodes.size());
      for (int a = begin; a < end; ++a) {
        for (int b = a + 1; b < end; ++b) g.intra_edges.emplace_back(a, b);
      }
    }
  }

  const int nv = g.num_nodes();
  g.adjacency.setZero(nv, nv);
  g.neighbors.assign(nv, {});
  auto add_edge = [&](int a, int b) {
    if (g.adjacency(a, b)) return;
    g.adjacency(a, b) = 1;
    g.adjacency(b, a) = 1;
    g.neighbors[a].push_back(b);
    g.neighbors[b].push_back(a);
  };
  for (const auto& [a, b] : g.intra_edges) add_edge(a, b);
  for (const auto& [a, b] : g.inter_edges) add_edge(a, b);
  for (auto& nb : g.neighbors) std::sort(nb.begin(), nb.end());

  g.features0.resize(nv, 2);
  for (int v = 0; v < nv; ++v) {
    g.features0(v, 0) = g.nodes[v].pos.x;
    g.features0(v, 1) = g.nodes[v].pos.y;
  }

  // Images whose nodes touch no inter edge cannot be constrained relative to
  // the rest; reported as a warning list rather than an error.
  std::vector<char> has_inter(n_images, 0);
  for (const auto& [a, b] : g.inter_edges) {
    has_inter[g.nodes[a].image] = 1;
    has_inter[g.nodes[b].image] = 1;
  }
  for (int o = 0; o < n_images; ++o) {
    if (!has_inter[o]) g.orphan_images.push_back(g.images[o].id);
  }
  return g;
}

}  // namespace kpalign
