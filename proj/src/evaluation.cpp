#include "kpalign/evaluation.hpp"

#include "kpalign/errors.hpp"

#include <algorithm>
#include <cmath>

namespace kpalign {

namespace {

double norm_x(double px, int w) { return 2.0 * px / (w - 1) - 1.0; }
double norm_y(double py, int h) { return 2.0 * py / (h - 1) - 1.0; }
double denorm_x(double x, int w) { return (x + 1.0) * 0.5 * (w - 1); }
double denorm_y(double y, int h) { return (y + 1.0) * 0.5 * (h - 1); }

int ordinal_of(const AlignmentResult& result, int image_id) {
  const auto it = std::find(result.image_ids.begin(), result.image_ids.end(), image_id);
  if (it == result.image_ids.end()) {
    throw ValidationError("unknown image id " + std::to_string(image_id) +
                          " in alignment result");
  }
  return static_cast<int>(it - result.image_ids.begin());
}

const ImageMeta& meta_of(const std::vector<ImageMeta>& images, int image_id) {
  for (const auto& im : images) {
    if (im.id == image_id) return im;
  }
  throw ValidationError("unknown image id " + std::to_string(image_id));
}

// Transfer in the normalized frame of image j (shared by both metrics).
Point2 transfer_normalized(const AlignmentResult& result, int oi, int oj, Point2 p_norm) {
  if (!result.flips.empty() && result.flips[oi]) p_norm.x = -p_norm.x;
  const Eigen::Matrix3d rel =
      result.homographies[oj].m.inverse() * result.homographies[oi].m;
  Point2 q = hom_apply(Homography{rel}, p_norm);
  if (!result.flips.empty() && result.flips[oj]) q.x = -q.x;
  return q;
}

}  // namespace

Point2 transfer_point(const AlignmentResult& result, const std::vector<ImageMeta>& images,
                      int image_i, int image_j, Point2 p_pixel) {
  if (image_i == image_j) throw ValidationError("transfer_point: need distinct images");
  const ImageMeta& mi = meta_of(images, image_i);
  const ImageMeta& mj = meta_of(images, image_j);
  const int oi = ordinal_of(result, image_i);
  const int oj = ordinal_of(result, image_j);
  const Point2 p_norm{norm_x(p_pixel.x, mi.width), norm_y(p_pixel.y, mi.height)};
  const Point2 q = transfer_normalized(result, oi, oj, p_norm);
  return Point2{denorm_x(q.x, mj.width), denorm_y(q.y, mj.height)};
}

PckReport pck_transfer(const AlignmentResult& result, const std::vector<ImageMeta>& images,
                       const GtAnnotations& gt, double alpha) {
  if (alpha <= 0.0) throw ValidationError("pck_transfer: alpha must be positive");
  PckReport report;
  report.alpha = alpha;

  std::map<std::pair<int, int>, std::pair<long, long>> pair_counts;  // correct/total
  std::map<std::string, std::pair<long, long>> label_counts;
  long correct = 0;

  for (const auto& src : gt.images) {
    for (const auto& dst : gt.images) {
      if (src.id == dst.id) continue;
      const double threshold = alpha * std::max(dst.width, dst.height);
      for (const auto& [label, p_src] : src.keypoints) {
        const auto it = dst.keypoints.find(label);
        if (it == dst.keypoints.end()) continue;
        report.evaluated += 1;
        bool ok = false;
        try {
          const Point2 q = transfer_point(result, images, src.id, dst.id, p_src);
          const double err = std::hypot(q.x - it->second.x, q.y - it->second.y);
          ok = err <= threshold;
        } catch (const PointAtInfinity&) {
          report.failed += 1;
        }
        correct += ok ? 1 : 0;
        auto& pc = pair_counts[{src.id, dst.id}];
        pc.first += ok ? 1 : 0;
        pc.second += 1;
        auto& lc = label_counts[label];
        lc.first += ok ? 1 : 0;
        lc.second += 1;
      }
    }
  }

  if (report.evaluated == 0) {
    throw ValidationError("pck_transfer: no co-visible labels in any image pair");
  }
  report.mean = static_cast<double>(correct) / static_cast<double>(report.evaluated);
  for (const auto& [key, counts] : pair_counts) {
    report.per_pair[key] = static_cast<double>(counts.first) / counts.second;
  }
  for (const auto& [label, counts] : label_counts) {
    report.per_label[label] = static_cast<double>(counts.first) / counts.second;
  }
  return report;
}

double mean_transfer_error(const AlignmentResult& result, const std::vector<ImageMeta>& images,
                           const GtAnnotations& gt) {
  double sum = 0.0;
  long count = 0;
  for (const auto& src : gt.images) {
    for (const auto& dst : gt.images) {
      if (src.id == dst.id) continue;
      const ImageMeta& mj = meta_of(images, dst.id);
      const int oi = ordinal_of(result, src.id);
      const int oj = ordinal_of(result, dst.id);
      const ImageMeta& mi = meta_of(images, src.id);
      for (const auto& [label, p_src] : src.keypoints) {
        const auto it = dst.keypoints.find(label);
        if (it == dst.keypoints.end()) continue;
        try {
          const Point2 p_norm{norm_x(p_src.x, mi.width), norm_y(p_src.y, mi.height)};
          const Point2 q = transfer_normalized(result, oi, oj, p_norm);
          const Point2 gt_norm{norm_x(it->second.x, mj.width), norm_y(it->second.y, mj.height)};
          sum += std::hypot(q.x - gt_norm.x, q.y - gt_norm.y);
          count += 1;
        } catch (const PointAtInfinity&) {
          // excluded from the mean
        }
      }
    }
  }
  if (count == 0) {
    throw ValidationError("mean_transfer_error: no successful co-visible transfers");
  }
  return sum / static_cast<double>(count);
}

}  // namespace kpalign
