#pragma once

#include "kpalign/evaluation.hpp"
#include "kpalign/graph.hpp"
#include "kpalign/objective.hpp"
#include "kpalign/sl3.hpp"

#include <cstdint>
#include <vector>

namespace kpalign {

// Generator spec for a ground-truth collection: canonical keypoints, one
// known warp per image, pairwise matches with noise/outliers/mirroring.
struct SynthSpec {
  int n_images = 20;
  int n_canonical_kps = 15;
  double warp_magnitude = 0.3;  // per-generator bound; projective scaled x0.1
  double noise_std = 0.0;       // normalized units
  double outlier_rate = 0.0;    // fraction of matches with a random target
  double flip_rate = 0.0;       // fraction of images mirrored
  double pair_density = 1.0;    // probability of a pair beyond the spanning tree
  int width = 256;
  int height = 256;
  std::uint64_t seed = 1;
};

struct SynthCollection {
  std::vector<ImageMeta> images;
  std::vector<RawMatchSet> matches;
  GtAnnotations gt;                // noiseless keypoints, one label per canonical point
  std::vector<Sl3Vector> gt_thetas;
  FlipFlags gt_flips;
  std::vector<Point2> canonical;   // shared-frame keypoints in [-0.6, 0.6]^2
};

// Deterministic per spec+seed. The pair graph always contains a spanning
// tree; sampling retries a bounded number of times if warps place points
// outside the safe box.
SynthCollection gen_collection(const SynthSpec& spec);

}  // namespace kpalign
