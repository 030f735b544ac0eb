#pragma once

#include "kpalign/sl3.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace kpalign {

struct ImageMeta {
  int id = 0;
  int width = 0;   // pixels, >= 2
  int height = 0;  // pixels, >= 2
};

// One pairwise matcher run: equal-length endpoint lists in pixel units plus
// a confidence per match.
struct RawMatchSet {
  int i = 0;
  int j = 0;
  std::vector<Point2> points_i;
  std::vector<Point2> points_j;
  std::vector<double> conf;
};

struct GraphNode {
  int image = 0;  // ordinal into CorrespondenceGraph::images (id-sorted)
  Point2 pos;     // normalized [-1,1]^2
};

// A surviving match, endpoints snapped to their cluster-mean nodes.
// Multiplicity is preserved; the deduplicated edge lives in inter_edges.
struct MatchRef {
  int u = 0;  // node in image tagged i
  int v = 0;  // node in image tagged j
};

struct CorrespondenceGraph {
  std::vector<ImageMeta> images;  // sorted by id
  std::vector<GraphNode> nodes;   // ordered by image, then cluster creation
  std::vector<std::pair<int, int>> intra_edges;
  std::vector<std::pair<int, int>> inter_edges;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> adjacency;
  std::vector<std::vector<int>> neighbors;  // adjacency lists, ascending
  Eigen::MatrixX2d features0;               // row v = coordinates of node v
  std::vector<MatchRef> matches;
  std::vector<int> orphan_images;  // ids with nodes but no inter edge

  int num_images() const { return static_cast<int>(images.size()); }
  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int image_tag(int node) const { return nodes[node].image; }
};

struct BuildConfig {
  double nms_window = 30.0;  // pixels; suppression radius is window/2
  int top_k = 10;            // per image per pair
  double dp_penalty = -1.0;  // <0: (0.05 * image diagonal)^2 per image
  int dp_init_n = 3;
  int dp_max_iter = 50;
  bool intra_edges = true;
};

// Greedy confidence NMS: repeatedly keep the best unsuppressed point and
// suppress everything within Chebyshev distance window/2. Ties break on
// higher score, then lower index. Stops at k survivors.
std::vector<int> nms_select(const std::vector<Point2>& points,
                            const std::vector<double>& scores,
                            double window, int k);

struct DpMeansResult {
  std::vector<Point2> means;
  std::vector<int> assignments;          // input point -> final mean index
  int iterations = 0;
  std::vector<double> objective_trace;   // after each update step
};

// Batch DP-Means: farthest-point seeding from the lowest-index point,
// then alternate assignment (opening a cluster when the nearest mean is
// further than sqrt(penalty)) and centroid updates until the assignment
// reaches a fixed point or max_iter. Deterministic given input order.
DpMeansResult dp_means(const std::vector<Point2>& points, double penalty,
                       int init_n, int max_iter);

double dp_means_objective(const std::vector<Point2>& points,
                          const std::vector<Point2>& means,
                          const std::vector<int>& assignments, double penalty);

// Full pipeline: per-pair NMS, per-image pooling, DP-Means clustering,
// match snapping, edge assembly. Throws ValidationError on unknown image
// ids, images in no pair, or images left with zero keypoints.
CorrespondenceGraph build_graph(const std::vector<ImageMeta>& images,
                                const std::vector<RawMatchSet>& matches,
                                const BuildConfig& config = {});

}  // namespace kpalign
