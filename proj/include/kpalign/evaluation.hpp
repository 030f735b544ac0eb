#pragma once

#include "kpalign/graph.hpp"
#include "kpalign/optimizer.hpp"
#include "kpalign/sl3.hpp"

#include <map>
#include <string>
#include <vector>

namespace kpalign {

// Ground-truth keypoint annotations. A label absent from an image's map is
// not visible there; labels are shared across images.
struct GtImage {
  int id = 0;
  int width = 0;
  int height = 0;
  std::map<std::string, Point2> keypoints;  // label -> pixel position
};

struct GtAnnotations {
  std::vector<GtImage> images;  // sorted by id
};

// Map a pixel in image i to a pixel in image j through the shared frame:
// normalize, flip if flagged, H_i, H_j^-1, unflip, denormalize. Gauge
// cancels in the relative warp. Throws PointAtInfinity on degenerate
// transfers.
Point2 transfer_point(const AlignmentResult& result, const std::vector<ImageMeta>& images,
                      int image_i, int image_j, Point2 p_pixel);

struct PckReport {
  double alpha = 0.1;
  double mean = 0.0;  // over all evaluated transfers
  std::map<std::pair<int, int>, double> per_pair;
  std::map<std::string, double> per_label;
  long evaluated = 0;
  long failed = 0;  // degenerate transfers, counted incorrect
};

// PCK over every ordered image pair and every co-visible label: a transfer
// is correct when it lands within alpha * max(W_j, H_j) pixels of the
// ground truth. Throws ValidationError when no label is co-visible anywhere.
PckReport pck_transfer(const AlignmentResult& result, const std::vector<ImageMeta>& images,
                       const GtAnnotations& gt, double alpha);

// Mean Euclidean transfer error in normalized [-1,1] units over all
// co-visible pairs; degenerate transfers are excluded.
double mean_transfer_error(const AlignmentResult& result, const std::vector<ImageMeta>& images,
                           const GtAnnotations& gt);

}  // namespace kpalign
