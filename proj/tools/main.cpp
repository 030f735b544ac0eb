#include "kpalign/bench.hpp"
#include "kpalign/errors.hpp"
#include "kpalign/evaluation.hpp"
#include "kpalign/graph.hpp"
#include "kpalign/io.hpp"
#include "kpalign/optimizer.hpp"
#include "kpalign/synthetic.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

namespace {

using namespace kpalign;

struct CliOptions {
  // synth
  SynthSpec synth;
  std::string synth_out;
  std::string synth_gt_out;

  // shared graph construction
  BuildConfig build;
  bool no_intra_edges = false;

  // align
  TrainConfig train;
  std::string arch = "sage";
  std::string gauge = "karcher";
  bool use_l2 = false;
  bool no_bias = false;
  bool deterministic = false;  // accepted for interface stability; the
                               // engine is single-threaded and seeded
  std::string manifest_path;
  std::string align_out;
  std::string loss_log;

  // eval
  std::string alignment_path;
  std::string gt_path;
  double alpha = 0.1;
  std::string pck_norm = "image";
  std::string report_out;

  // render
  std::string render_dir;

  // bench
  std::vector<int> bench_points = {16, 1024, 70756};
  std::vector<int> bench_dims = {2, 25};
  int bench_repeats = 5;
  std::string bench_out;
};

void add_build_flags(CLI::App* cmd, CliOptions& o) {
  cmd->add_option("--nms-window", o.build.nms_window, "NMS window in pixels");
  cmd->add_option("--top-k", o.build.top_k, "keypoints kept per image per pair");
  cmd->add_option("--dp-penalty", o.build.dp_penalty,
                  "DP-Means penalty in px^2 (<0: (0.05*diagonal)^2)");
  cmd->add_flag("--no-intra-edges", o.no_intra_edges, "drop intra-image edges (ablation)");
}

CorrespondenceGraph build_from_manifest(const CliOptions& o, const CollectionManifest& m) {
  BuildConfig cfg = o.build;
  cfg.intra_edges = !o.no_intra_edges;
  CorrespondenceGraph g = build_graph(m.images, m.matches, cfg);
  for (int id : g.orphan_images) {
    std::cerr << "warning: image " << id << " has no inter-image edges; its warp is "
              << "gauge only\n";
  }
  return g;
}

int cmd_synth(const CliOptions& o) {
  const SynthCollection c = gen_collection(o.synth);
  CollectionManifest m;
  m.images = c.images;
  m.matches = c.matches;
  save_manifest(m, o.synth_out);
  std::cout << "wrote " << o.synth_out << " (" << m.images.size() << " images, "
            << m.matches.size() << " pairs)\n";
  if (!o.synth_gt_out.empty()) {
    save_gt(sidecar_from(c), o.synth_gt_out);
    std::cout << "wrote " << o.synth_gt_out << "\n";
  }
  return 0;
}

int cmd_align(CliOptions& o) {
  o.train.arch = arch_from_string(o.arch);
  o.train.gauge = gauge_mode_from_string(o.gauge);
  o.train.robust = !o.use_l2;
  o.train.use_bias = !o.no_bias;

  const CollectionManifest m = load_manifest(o.manifest_path);
  const CorrespondenceGraph g = build_from_manifest(o, m);

  std::ofstream log;
  LossSink sink;
  if (!o.loss_log.empty()) {
    log.open(o.loss_log);
    if (!log) throw IoError("cannot open " + o.loss_log + " for writing");
    sink = [&log](int epoch, double loss, int flips_changed) {
      log << epoch << " " << loss << " " << flips_changed << "\n";
    };
  }

  const AlignmentResult r = align_collection(g, o.train, sink);
  save_alignment(r, o.train, o.align_out);
  int flipped = 0;
  for (auto f : r.flips) flipped += f;
  std::cout << "aligned " << r.image_ids.size() << " images over "
            << r.loss_history.size() << " epochs; final loss " << r.final_loss
            << "; " << flipped << " flipped\n";
  if (r.gauge_fallback) {
    std::cerr << "warning: karcher mean did not converge, gauge fell back to 'first'\n";
  }
  std::cout << "wrote " << o.align_out << "\n";
  if (r.aborted) {
    std::cerr << "error: optimization aborted: " << r.abort_reason << "\n";
    return 3;
  }
  return 0;
}

int cmd_eval(const CliOptions& o) {
  if (o.pck_norm != "image") {
    throw ValidationError("--pck-norm: only 'image' is supported (manifests carry no boxes)");
  }
  const CollectionManifest m = load_manifest(o.manifest_path);
  const AlignmentResult r = load_alignment(o.alignment_path);
  const GtSidecar gt = load_gt(o.gt_path);

  MetricReport report;
  report.pck = pck_transfer(r, m.images, gt.annotations, o.alpha);
  report.mean_transfer_error = mean_transfer_error(r, m.images, gt.annotations);
  std::printf("PCK@%.3g: %.4f over %ld transfers (%ld failed)\n", o.alpha, report.pck.mean,
              report.pck.evaluated, report.pck.failed);
  std::printf("mean transfer error: %.6f (normalized units)\n", report.mean_transfer_error);
  if (!o.report_out.empty()) {
    save_report(report, o.report_out);
    std::cout << "wrote " << o.report_out << "\n";
  }
  return 0;
}

int cmd_render(const CliOptions& o) {
  const CollectionManifest m = load_manifest(o.manifest_path);
  const AlignmentResult r = load_alignment(o.alignment_path);
  const auto paths = render_colormaps(r, m.images, o.render_dir);
  std::cout << "wrote " << paths.size() << " colormaps to " << o.render_dir << "\n";
  return 0;
}

int cmd_graph_stats(const CliOptions& o) {
  const CollectionManifest m = load_manifest(o.manifest_path);
  const CorrespondenceGraph g = build_from_manifest(o, m);
  std::cout << "images: " << g.num_images() << "\n"
            << "nodes: " << g.num_nodes() << "\n"
            << "intra edges: " << g.intra_edges.size() << "\n"
            << "inter edges: " << g.inter_edges.size() << "\n"
            << "matches (with multiplicity): " << g.matches.size() << "\n";
  std::vector<int> per_image(g.num_images(), 0);
  for (const auto& n : g.nodes) per_image[n.image] += 1;
  for (int i = 0; i < g.num_images(); ++i) {
    std::cout << "  image " << g.images[i].id << ": " << per_image[i] << " nodes\n";
  }
  return 0;
}

int cmd_bench(const CliOptions& o) {
  const auto rows = warp_bench(o.bench_points, o.bench_dims, o.bench_repeats);
  const std::string table = bench_table(rows);
  std::cout << table;
  if (!o.bench_out.empty()) {
    std::string json = "[\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      char line[160];
      std::snprintf(line, sizeof(line),
                    "  {\"n_points\": %d, \"dim\": %d, \"interpolation\": %s, "
                    "\"seconds_per_epoch\": %.9e}%s\n",
                    rows[i].config.n_points, rows[i].config.dim,
                    rows[i].config.interpolation ? "true" : "false",
                    rows[i].seconds_per_epoch, i + 1 < rows.size() ? "," : "");
      json += line;
    }
    json += "]\n";
    write_text_file(o.bench_out, json);
    std::cout << "wrote " << o.bench_out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint alignment of image collections from keypoint correspondences"};
  app.require_subcommand(1);
  CliOptions o;

  auto* synth = app.add_subcommand("synth", "generate a synthetic collection with ground truth");
  synth->add_option("--out", o.synth_out, "manifest output path")->required();
  synth->add_option("--gt-out", o.synth_gt_out, "ground-truth sidecar output path");
  synth->add_option("--images", o.synth.n_images, "number of images");
  synth->add_option("--kps", o.synth.n_canonical_kps, "canonical keypoints");
  synth->add_option("--warp-mag", o.synth.warp_magnitude, "per-generator warp bound");
  synth->add_option("--noise", o.synth.noise_std, "keypoint noise (normalized units)");
  synth->add_option("--outliers", o.synth.outlier_rate, "outlier match fraction");
  synth->add_option("--flip-rate", o.synth.flip_rate, "mirrored image fraction");
  synth->add_option("--pair-density", o.synth.pair_density, "pair sampling probability");
  synth->add_option("--width", o.synth.width, "image width in pixels");
  synth->add_option("--height", o.synth.height, "image height in pixels");
  synth->add_option("--seed", o.synth.seed, "generator seed");

  auto* align = app.add_subcommand("align", "optimize one homography per image");
  align->add_option("--manifest", o.manifest_path, "input manifest")->required();
  align->add_option("--out", o.align_out, "alignment output path")->required();
  align->add_option("--loss-log", o.loss_log, "per-epoch loss log path");
  align->add_option("--epochs", o.train.epochs, "optimization epochs");
  align->add_option("--sigma", o.train.sigma, "robust loss scale");
  align->add_option("--lr", o.train.adam.lr, "Adam learning rate");
  align->add_option("--seed", o.train.seed, "weight init seed");
  align->add_option("--flip-every", o.train.flip_every, "epochs between flip checks");
  align->add_option("--hidden-dim", o.train.hidden_dim, "GNN hidden width");
  align->add_option("--layers", o.train.layers, "message-passing layers");
  align->add_option("--arch", o.arch, "sage | mlp | direct | linear");
  align->add_flag("--l2", o.use_l2, "use the squared loss instead of Geman-McClure");
  align->add_flag("--robust", [](std::int64_t) {}, "robust loss (default)");
  align->add_option("--gauge", o.gauge, "karcher | first | none");
  align->add_flag("--normalize", o.train.normalize, "divide the loss by evaluation count");
  align->add_flag("--no-bias", o.no_bias, "drop layer bias terms");
  align->add_flag("--deterministic", o.deterministic, "fixed reduction order (always on)");
  add_build_flags(align, o);

  auto* eval = app.add_subcommand("eval", "score an alignment against ground truth");
  eval->add_option("--manifest", o.manifest_path, "input manifest")->required();
  eval->add_option("--alignment", o.alignment_path, "alignment file")->required();
  eval->add_option("--gt", o.gt_path, "ground-truth sidecar")->required();
  eval->add_option("--alpha", o.alpha, "PCK threshold fraction");
  eval->add_option("--pck-norm", o.pck_norm, "threshold normalizer (image)");
  eval->add_option("--report", o.report_out, "metric report output path");

  auto* render = app.add_subcommand("render", "write per-image canonical colormaps");
  render->add_option("--manifest", o.manifest_path, "input manifest")->required();
  render->add_option("--alignment", o.alignment_path, "alignment file")->required();
  render->add_option("--out-dir", o.render_dir, "output directory")->required();

  auto* stats = app.add_subcommand("graph-stats", "print correspondence graph statistics");
  stats->add_option("--manifest", o.manifest_path, "input manifest")->required();
  add_build_flags(stats, o);

  auto* bench = app.add_subcommand("bench", "time the per-epoch warp cost");
  bench->add_option("--points", o.bench_points, "point counts to time");
  bench->add_option("--dims", o.bench_dims, "payload dimensions to time");
  bench->add_option("--repeats", o.bench_repeats, "timing repeats (min 5)");
  bench->add_option("--out", o.bench_out, "JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(o);
    if (align->parsed()) return cmd_align(o);
    if (eval->parsed()) return cmd_eval(o);
    if (render->parsed()) return cmd_render(o);
    if (stats->parsed()) return cmd_graph_stats(o);
    if (bench->parsed()) return cmd_bench(o);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
