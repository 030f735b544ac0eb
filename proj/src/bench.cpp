#include "kpalign/bench.hpp"

#include "kpalign/errors.hpp"
#include "kpalign/sl3.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace kpalign {

namespace {

constexpr int kImages = 30;
constexpr int kGridSide = 64;  // feature grid for the interpolation pass

struct BenchData {
  std::vector<Sl3Vector> thetas;            // one warp per image
  std::vector<double> points;               // n_points * 2
  std::vector<double> target_points;        // n_points * 2
  std::vector<double> payload;              // n_points * dim
  std::vector<double> target_payload;       // n_points * dim
  std::vector<double> grid;                 // kGridSide^2 * dim
};

BenchData make_data(const BenchCase& c) {
  std::mt19937_64 rng(20240901u);
  std::uniform_real_distribution<double> coord(-0.8, 0.8);
  std::uniform_real_distribution<double> small(-0.05, 0.05);
  std::uniform_real_distribution<double> feat(0.0, 1.0);

  BenchData d;
  d.thetas.resize(kImages);
  for (auto& t : d.thetas) {
    for (int k = 0; k < 8; ++k) t[k] = small(rng) * (k >= 6 ? 0.1 : 1.0);
  }
  d.points.resize(static_cast<std::size_t>(c.n_points) * 2);
  d.target_points.resize(d.points.size());
  for (auto& v : d.points) v = coord(rng);
  for (auto& v : d.target_points) v = coord(rng);
  d.payload.resize(static_cast<std::size_t>(c.n_points) * c.dim);
  d.target_payload.resize(d.payload.size());
  for (auto& v : d.payload) v = feat(rng);
  for (auto& v : d.target_payload) v = feat(rng);
  if (c.interpolation) {
    d.grid.resize(static_cast<std::size_t>(kGridSide) * kGridSide * c.dim);
    for (auto& v : d.grid) v = feat(rng);
  }
  return d;
}

// One epoch of warp work: for every image, exponentiate its warp, push all
// points through (forward), accumulate the loss, and run the adjoint back
// to the warp parameters. Returns a checksum so the work cannot be elided.
double run_epoch(const BenchCase& c, const BenchData& d, std::vector<double>& grid_grad) {
  double checksum = 0.0;
  const int per_batch = (kImages + c.batches - 1) / c.batches;
  for (int batch = 0; batch < c.batches; ++batch) {
    const int begin = batch * per_batch;
    const int end = std::min(kImages, begin + per_batch);
    for (int img = begin; img < end; ++img) {
      const ExpTape tape = sl3_exp_tape(d.thetas[img]);
      const Eigen::Matrix3d& m = tape.value;
      Eigen::Matrix3d adj = Eigen::Matrix3d::Zero();

      for (int p = 0; p < c.n_points; ++p) {
        const double x = d.points[2 * p];
        const double y = d.points[2 * p + 1];
        const double u = m(0, 0) * x + m(0, 1) * y + m(0, 2);
        const double v = m(1, 0) * x + m(1, 1) * y + m(1, 2);
        const double w = m(2, 0) * x + m(2, 1) * y + m(2, 2);
        if (std::abs(w) <= 1e-12) continue;
        const double qx = u / w;
        const double qy = v / w;

        double gqx;
        double gqy;
        if (c.interpolation) {
          // Bilinear sample of a dim-channel grid at q, residual against the
          // payload, then the backward scatter plus the chain into q.
          const double fx = std::clamp((qx + 1.0) * 0.5, 0.0, 1.0) * (kGridSide - 1);
          const double fy = std::clamp((qy + 1.0) * 0.5, 0.0, 1.0) * (kGridSide - 1);
          const int x0 = std::min(static_cast<int>(fx), kGridSide - 2);
          const int y0 = std::min(static_cast<int>(fy), kGridSide - 2);
          const double ax = fx - x0;
          const double ay = fy - y0;
          const double w00 = (1 - ax) * (1 - ay), w10 = ax * (1 - ay);
          const double w01 = (1 - ax) * ay, w11 = ax * ay;
          const std::size_t i00 = (static_cast<std::size_t>(y0) * kGridSide + x0) * c.dim;
          const std::size_t i10 = i00 + c.dim;
          const std::size_t i01 = i00 + static_cast<std::size_t>(kGridSide) * c.dim;
          const std::size_t i11 = i01 + c.dim;
          double dldfx = 0.0;
          double dldfy = 0.0;
          for (int k = 0; k < c.dim; ++k) {
            const double g00 = d.grid[i00 + k], g10 = d.grid[i10 + k];
            const double g01 = d.grid[i01 + k], g11 = d.grid[i11 + k];
            const double sample = w00 * g00 + w10 * g10 + w01 * g01 + w11 * g11;
            const double r = sample - d.payload[static_cast<std::size_t>(p) * c.dim + k];
            checksum += r * r;
            const double dr = 2.0 * r;
            grid_grad[i00 + k] += dr * w00;
            grid_grad[i10 + k] += dr * w10;
            grid_grad[i01 + k] += dr * w01;
            grid_grad[i11 + k] += dr * w11;
            dldfx += dr * ((g10 - g00) * (1 - ay) + (g11 - g01) * ay);
            dldfy += dr * ((g01 - g00) * (1 - ax) + (g11 - g10) * ax);
          }
          gqx = dldfx * 0.5 * (kGridSide - 1);
          gqy = dldfy * 0.5 * (kGridSide - 1);
        } else {
          // Sparse path: the residual is on the warped coordinates plus a
          // direct payload comparison, no gather.
          const double rx = qx - d.target_points[2 * p];
          const double ry = qy - d.target_points[2 * p + 1];
          checksum += rx * rx + ry * ry;
          for (int k = 0; k < c.dim; ++k) {
            const double r = d.payload[static_cast<std::size_t>(p) * c.dim + k] -
                             d.target_payload[static_cast<std::size_t>(p) * c.dim + k];
            checksum += r * r;
          }
          gqx = 2.0 * rx;
          gqy = 2.0 * ry;
        }

        const double du = gqx / w;
        const double dv = gqy / w;
        const double dw = -(gqx * u + gqy * v) / (w * w);
        adj(0, 0) += du * x; adj(0, 1) += du * y; adj(0, 2) += du;
        adj(1, 0) += dv * x; adj(1, 1) += dv * y; adj(1, 2) += dv;
        adj(2, 0) += dw * x; adj(2, 1) += dw * y; adj(2, 2) += dw;
      }

      const Sl3Vector dtheta = sl3_exp_backward(tape, adj);
      checksum += dtheta.sum();
    }
  }
  return checksum;
}

}  // namespace

BenchMeasurement run_bench_case(const BenchCase& c, int repeats) {
  if (c.n_points < 1) throw ValidationError("warp_bench: n_points must be >= 1");
  if (c.dim < 1 || c.batches < 1) throw ValidationError("warp_bench: invalid configuration");
  repeats = std::max(repeats, 5);

  const BenchData data = make_data(c);
  std::vector<double> grid_grad(data.grid.size(), 0.0);
  volatile double sink = 0.0;

  using clock = std::chrono::steady_clock;
  auto time_epochs = [&](int iters) {
    const auto t0 = clock::now();
    for (int it = 0; it < iters; ++it) sink = sink + run_epoch(c, data, grid_grad);
    const auto t1 = clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
  };

  // Calibrate so each timed sample runs at least ~10 ms.
  int iters = 1;
  double probe = time_epochs(1);
  while (probe < 0.01 && iters < 1 << 20) {
    iters *= 4;
    probe = time_epochs(iters);
  }

  std::vector<double> samples;
  for (int r = 0; r < repeats; ++r) samples.push_back(time_epochs(iters) / iters);
  std::nth_element(samples.begin(), samples.begin() + samples.size() / 2, samples.end());

  BenchMeasurement m;
  m.config = c;
  m.seconds_per_epoch = samples[samples.size() / 2];
  m.inner_iterations = iters;
  return m;
}

std::vector<BenchMeasurement> warp_bench(const std::vector<int>& point_counts,
                                         const std::vector<int>& dims, int repeats) {
  std::vector<BenchMeasurement> out;
  const int max_points = *std::max_element(point_counts.begin(), point_counts.end());
  for (int n : point_counts) {
    for (int dim : dims) {
      out.push_back(run_bench_case(BenchCase{n, dim, false, 1}, repeats));
    }
  }
  for (int dim : dims) {
    // The dense regime pays the interpolation pass and batches the images.
    out.push_back(run_bench_case(BenchCase{max_points, dim, true, 3}, repeats));
  }
  return out;
}

std::string bench_table(const std::vector<BenchMeasurement>& rows) {
  std::ostringstream os;
  os << "n_points  dim  interp  batches  sec/epoch\n";
  char line[128];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%8d  %3d  %6s  %7d  %.6e\n", r.config.n_points,
                  r.config.dim, r.config.interpolation ? "yes" : "no", r.config.batches,
                  r.seconds_per_epoch);
    os << line;
  }
  return os.str();
}

}  // namespace kpalign
