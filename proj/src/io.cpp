#include "kpalign/io.hpp"

#include "kpalign/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace kpalign {

using nlohmann::json;

namespace {

json point_list(const std::vector<Point2>& pts) {
  json arr = json::array();
  for (const auto& p : pts) arr.push_back({p.x, p.y});
  return arr;
}

std::vector<Point2> parse_points(const json& arr, const std::string& ctx) {
  std::vector<Point2> out;
  for (const auto& e : arr) {
    if (!e.is_array() || e.size() != 2) {
      throw ValidationError(ctx + ": point must be a [x, y] pair");
    }
    out.push_back(Point2{e[0].get<double>(), e[1].get<double>()});
  }
  return out;
}

void check_version(const json& j, int expected, const std::string& what) {
  if (!j.contains("format_version") || !j["format_version"].is_number_integer()) {
    throw ValidationError(what + ": missing format_version");
  }
  const int v = j["format_version"].get<int>();
  if (v != expected) {
    throw ValidationError(what + ": unsupported format_version " + std::to_string(v));
  }
}

json parse(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(what + ": " + e.what());
  }
}

}  // namespace

std::string manifest_to_string(const CollectionManifest& m) {
  json j;
  j["format_version"] = kManifestVersion;
  j["images"] = json::array();
  for (const auto& im : m.images) {
    j["images"].push_back({{"id", im.id}, {"width", im.width}, {"height", im.height}});
  }
  j["matches"] = json::array();
  for (const auto& ms : m.matches) {
    j["matches"].push_back({{"i", ms.i},
                            {"j", ms.j},
                            {"points_i", point_list(ms.points_i)},
                            {"points_j", point_list(ms.points_j)},
                            {"conf", ms.conf}});
  }
  return j.dump(2) + "\n";
}

CollectionManifest manifest_from_string(const std::string& text) {
  const json j = parse(text, "manifest");
  check_version(j, kManifestVersion, "manifest");
  CollectionManifest m;
  try {
    std::map<int, ImageMeta> by_id;
    for (const auto& ji : j.at("images")) {
      ImageMeta im{ji.at("id").get<int>(), ji.at("width").get<int>(),
                   ji.at("height").get<int>()};
      if (im.width < 2 || im.height < 2) {
        throw ValidationError("manifest: image " + std::to_string(im.id) +
                              " width/height must be >= 2");
      }
      if (!by_id.emplace(im.id, im).second) {
        throw ValidationError("manifest: duplicate image id " + std::to_string(im.id));
      }
      m.images.push_back(im);
    }
    int idx = 0;
    for (const auto& jm : j.at("matches")) {
      const std::string ctx = "manifest: matches[" + std::to_string(idx++) + "]";
      RawMatchSet ms;
      ms.i = jm.at("i").get<int>();
      ms.j = jm.at("j").get<int>();
      if (!by_id.count(ms.i) || !by_id.count(ms.j)) {
        throw ValidationError(ctx + ": unknown image id");
      }
      if (ms.i == ms.j) throw ValidationError(ctx + ": i and j must differ");
      ms.points_i = parse_points(jm.at("points_i"), ctx);
      ms.points_j = parse_points(jm.at("points_j"), ctx);
      ms.conf = jm.at("conf").get<std::vector<double>>();
      if (ms.points_i.size() != ms.points_j.size() || ms.points_i.size() != ms.conf.size()) {
        throw ValidationError(ctx + ": points_i/points_j/conf lengths differ");
      }
      for (double c : ms.conf) {
        if (!(c >= 0.0 && c <= 1.0)) {
          throw ValidationError(ctx + ": confidence outside [0,1]");
        }
      }
      // 1 px slack on the image bounds
      const auto check_bounds = [&](const std::vector<Point2>& pts, int id) {
        const ImageMeta& im = by_id.at(id);
        for (const auto& p : pts) {
          if (p.x < -1.0 || p.x > im.width || p.y < -1.0 || p.y > im.height) {
            throw ValidationError(ctx + ": point outside image " + std::to_string(id) +
                                  " bounds");
          }
        }
      };
      check_bounds(ms.points_i, ms.i);
      check_bounds(ms.points_j, ms.j);
      m.matches.push_back(std::move(ms));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
  return m;
}

std::string alignment_to_string(const AlignmentResult& r, const TrainConfig& config) {
  json j;
  j["format_version"] = kAlignmentVersion;
  j["gauge"] = to_string(r.gauge);
  j["gauge_fallback"] = r.gauge_fallback;
  j["aborted"] = r.aborted;
  if (r.aborted) j["abort_reason"] = r.abort_reason;
  j["config"] = {{"epochs", config.epochs},
                 {"sigma", config.sigma},
                 {"flip_every", config.flip_every},
                 {"seed", config.seed},
                 {"arch", to_string(config.arch)},
                 {"hidden_dim", config.hidden_dim},
                 {"layers", config.layers},
                 {"use_bias", config.use_bias},
                 {"robust", config.robust},
                 {"normalize", config.normalize},
                 {"lr", config.adam.lr},
                 {"beta1", config.adam.beta1},
                 {"beta2", config.adam.beta2},
                 {"eps", config.adam.eps}};
  j["loss"] = {{"final", r.final_loss},
               {"initial", r.loss_history.empty() ? r.final_loss : r.loss_history.front()},
               {"epochs_run", r.loss_history.size()}};
  j["images"] = json::array();
  for (std::size_t i = 0; i < r.image_ids.size(); ++i) {
    json rows = json::array();
    for (int row = 0; row < 3; ++row) {
      rows.push_back({r.homographies[i].m(row, 0), r.homographies[i].m(row, 1),
                      r.homographies[i].m(row, 2)});
    }
    std::vector<double> theta(r.thetas[i].data(), r.thetas[i].data() + 8);
    j["images"].push_back({{"id", r.image_ids[i]},
                           {"homography", rows},
                           {"flip", static_cast<bool>(r.flips[i])},
                           {"theta", theta}});
  }
  return j.dump(2) + "\n";
}

AlignmentResult alignment_from_string(const std::string& text) {
  const json j = parse(text, "alignment");
  check_version(j, kAlignmentVersion, "alignment");
  AlignmentResult r;
  try {
    r.gauge = gauge_mode_from_string(j.at("gauge").get<std::string>());
    r.gauge_fallback = j.value("gauge_fallback", false);
    r.aborted = j.value("aborted", false);
    r.abort_reason = j.value("abort_reason", std::string{});
    r.final_loss = j.at("loss").at("final").get<double>();
    for (const auto& ji : j.at("images")) {
      r.image_ids.push_back(ji.at("id").get<int>());
      Homography h;
      const auto& rows = ji.at("homography");
      for (int row = 0; row < 3; ++row) {
        for (int col = 0; col < 3; ++col) h.m(row, col) = rows.at(row).at(col).get<double>();
      }
      if (std::abs(h.m.determinant() - 1.0) > 1e-9) {
        throw ValidationError("alignment: image " + std::to_string(r.image_ids.back()) +
                              " homography determinant is not 1");
      }
      r.homographies.push_back(h);
      Sl3Vector theta;
      const auto& jt = ji.at("theta");
      for (int k = 0; k < 8; ++k) theta[k] = jt.at(k).get<double>();
      r.thetas.push_back(theta);
      r.flips.push_back(ji.at("flip").get<bool>() ? 1 : 0);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("alignment: ") + e.what());
  }
  return r;
}

GtSidecar sidecar_from(const SynthCollection& c) {
  GtSidecar gt;
  gt.annotations = c.gt;
  gt.thetas = c.gt_thetas;
  gt.flips = c.gt_flips;
  gt.canonical = c.canonical;
  return gt;
}

std::string gt_to_string(const GtSidecar& gt) {
  json j;
  j["format_version"] = kGtVersion;
  j["canonical"] = point_list(gt.canonical);
  j["images"] = json::array();
  for (std::size_t i = 0; i < gt.annotations.images.size(); ++i) {
    const auto& gi = gt.annotations.images[i];
    json kps = json::object();
    for (const auto& [label, p] : gi.keypoints) kps[label] = {p.x, p.y};
    json entry = {{"id", gi.id},
                  {"width", gi.width},
                  {"height", gi.height},
                  {"keypoints", kps}};
    if (i < gt.thetas.size()) {
      entry["theta"] = std::vector<double>(gt.thetas[i].data(), gt.thetas[i].data() + 8);
    }
    if (i < gt.flips.size()) entry["flip"] = static_cast<bool>(gt.flips[i]);
    j["images"].push_back(entry);
  }
  return j.dump(2) + "\n";
}

GtSidecar gt_from_string(const std::string& text) {
  const json j = parse(text, "gt");
  check_version(j, kGtVersion, "gt");
  GtSidecar gt;
  try {
    if (j.contains("canonical")) gt.canonical = parse_points(j["canonical"], "gt");
    for (const auto& ji : j.at("images")) {
      GtImage gi;
      gi.id = ji.at("id").get<int>();
      gi.width = ji.at("width").get<int>();
      gi.height = ji.at("height").get<int>();
      for (const auto& [label, p] : ji.at("keypoints").items()) {
        if (!p.is_array() || p.size() != 2) {
          throw ValidationError("gt: keypoint " + label + " must be [x, y]");
        }
        gi.keypoints[label] = Point2{p[0].get<double>(), p[1].get<double>()};
      }
      gt.annotations.images.push_back(std::move(gi));
      if (ji.contains("theta")) {
        Sl3Vector theta;
        for (int k = 0; k < 8; ++k) theta[k] = ji["theta"].at(k).get<double>();
        gt.thetas.push_back(theta);
      }
      gt.flips.push_back(ji.value("flip", false) ? 1 : 0);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("gt: ") + e.what());
  }
  return gt;
}

std::string report_to_string(const MetricReport& r) {
  json j;
  j["format_version"] = kReportVersion;
  j["alpha"] = r.pck.alpha;
  j["pck_mean"] = r.pck.mean;
  j["mean_transfer_error"] = r.mean_transfer_error;
  j["evaluated"] = r.pck.evaluated;
  j["failed_transfers"] = r.pck.failed;
  j["per_pair"] = json::array();
  for (const auto& [key, value] : r.pck.per_pair) {
    j["per_pair"].push_back({{"i", key.first}, {"j", key.second}, {"pck", value}});
  }
  j["per_label"] = json::object();
  for (const auto& [label, value] : r.pck.per_label) j["per_label"][label] = value;
  return j.dump(2) + "\n";
}

void save_report(const MetricReport& r, const std::string& path) {
  write_text_file(path, report_to_string(r));
}

std::vector<unsigned char> render_colormap_pixels(const AlignmentResult& result,
                                                  const ImageMeta& image) {
  const int oi = [&] {
    for (std::size_t i = 0; i < result.image_ids.size(); ++i) {
      if (result.image_ids[i] == image.id) return static_cast<int>(i);
    }
    throw ValidationError("render: image id " + std::to_string(image.id) +
                          " missing from alignment");
  }();
  const Eigen::Matrix3d& h = result.homographies[oi].m;
  const bool flip = !result.flips.empty() && result.flips[oi];

  std::vector<unsigned char> rgb(static_cast<std::size_t>(image.width) * image.height * 3, 0);
  auto to_byte = [](double c01) {
    return static_cast<unsigned char>(std::clamp<long>(std::lround(c01 * 255.0), 0, 255));
  };
  std::size_t at = 0;
  for (int py = 0; py < image.height; ++py) {
    for (int px = 0; px < image.width; ++px, at += 3) {
      double x = 2.0 * px / (image.width - 1) - 1.0;
      const double y = 2.0 * py / (image.height - 1) - 1.0;
      if (flip) x = -x;
      const double w = h(2, 0) * x + h(2, 1) * y + h(2, 2);
      if (std::abs(w) <= 1e-12) continue;  // black
      const double u = (h(0, 0) * x + h(0, 1) * y + h(0, 2)) / w;
      const double v = (h(1, 0) * x + h(1, 1) * y + h(1, 2)) / w;
      if (u < -1.0 || u > 1.0 || v < -1.0 || v > 1.0) continue;  // outside the frame
      rgb[at] = to_byte((u + 1.0) * 0.5);
      rgb[at + 1] = to_byte((v + 1.0) * 0.5);
      rgb[at + 2] = to_byte(0.5);
    }
  }
  return rgb;
}

std::vector<std::string> render_colormaps(const AlignmentResult& result,
                                          const std::vector<ImageMeta>& images,
                                          const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("render: cannot create " + out_dir + ": " + ec.message());

  std::vector<std::string> paths;
  for (const auto& im : images) {
    const auto rgb = render_colormap_pixels(result, im);
    char name[64];
    std::snprintf(name, sizeof(name), "image_%04d.ppm", im.id);
    const std::string path = out_dir + "/" + name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("render: cannot open " + path);
    f << "P6\n" << im.width << " " << im.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!f) throw IoError("render: write failed for " + path);
    paths.push_back(path);
  }
  return paths;
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  if (!f && !f.eof()) throw IoError("read failed for " + path);
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << content;
  if (!f) throw IoError("write failed for " + path);
}

void save_manifest(const CollectionManifest& m, const std::string& path) {
  write_text_file(path, manifest_to_string(m));
}

CollectionManifest load_manifest(const std::string& path) {
  return manifest_from_string(read_text_file(path));
}

void save_alignment(const AlignmentResult& r, const TrainConfig& config,
                    const std::string& path) {
  write_text_file(path, alignment_to_string(r, config));
}

AlignmentResult load_alignment(const std::string& path) {
  return alignment_from_string(read_text_file(path));
}

void save_gt(const GtSidecar& gt, const std::string& path) {
  write_text_file(path, gt_to_string(gt));
}

GtSidecar load_gt(const std::string& path) {
  return gt_from_string(read_text_file(path));
}

}  // namespace kpalign
