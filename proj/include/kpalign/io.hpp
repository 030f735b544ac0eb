#pragma once

#include "kpalign/evaluation.hpp"
#include "kpalign/graph.hpp"
#include "kpalign/optimizer.hpp"
#include "kpalign/synthetic.hpp"

#include <string>
#include <vector>

namespace kpalign {

// File-level input: images plus pairwise match lists, pixel units.
struct CollectionManifest {
  std::vector<ImageMeta> images;
  std::vector<RawMatchSet> matches;
};

inline constexpr int kManifestVersion = 1;
inline constexpr int kAlignmentVersion = 1;
inline constexpr int kGtVersion = 1;
inline constexpr int kReportVersion = 1;

// Serialization is JSON with sorted keys; numbers round-trip exactly.
std::string manifest_to_string(const CollectionManifest& m);
CollectionManifest manifest_from_string(const std::string& text);
void save_manifest(const CollectionManifest& m, const std::string& path);
CollectionManifest load_manifest(const std::string& path);

std::string alignment_to_string(const AlignmentResult& r, const TrainConfig& config);
AlignmentResult alignment_from_string(const std::string& text);
void save_alignment(const AlignmentResult& r, const TrainConfig& config,
                    const std::string& path);
AlignmentResult load_alignment(const std::string& path);

// Ground-truth sidecar written next to a synthetic manifest.
struct GtSidecar {
  GtAnnotations annotations;
  std::vector<Sl3Vector> thetas;
  FlipFlags flips;
  std::vector<Point2> canonical;
};

GtSidecar sidecar_from(const SynthCollection& c);
std::string gt_to_string(const GtSidecar& gt);
GtSidecar gt_from_string(const std::string& text);
void save_gt(const GtSidecar& gt, const std::string& path);
GtSidecar load_gt(const std::string& path);

struct MetricReport {
  PckReport pck;
  double mean_transfer_error = 0.0;
};

std::string report_to_string(const MetricReport& r);
void save_report(const MetricReport& r, const std::string& path);

// One binary PPM per image: each pixel mapped through its image's
// homography and colored by the canonical frame's procedural RGB gradient
// (R = (x+1)/2, G = (y+1)/2, B = 0.5); samples outside [-1,1]^2 are black.
// Returns the written paths, one per image in id order.
std::vector<std::string> render_colormaps(const AlignmentResult& result,
                                          const std::vector<ImageMeta>& images,
                                          const std::string& out_dir);

// Renders one image's colormap into an RGB byte buffer (3 bytes per pixel,
// row-major). Exposed for tests.
std::vector<unsigned char> render_colormap_pixels(const AlignmentResult& result,
                                                  const ImageMeta& image);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace kpalign
