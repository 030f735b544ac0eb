#pragma once

#include <string>
#include <vector>

namespace kpalign {

// One timed configuration of the simulated per-epoch warp: n_points warped
// through each of 30 per-image homographies (forward and backward through
// the exponential), with a dim-sized payload residual per point and an
// optional bilinear-interpolation pass like dense feature warping requires.
struct BenchCase {
  int n_points = 16;
  int dim = 2;
  bool interpolation = false;
  int batches = 1;  // partitions the 30 images; total work is unchanged
};

struct BenchMeasurement {
  BenchCase config;
  double seconds_per_epoch = 0.0;  // median over repeats
  int inner_iterations = 0;        // epochs per timed sample
};

BenchMeasurement run_bench_case(const BenchCase& c, int repeats = 5);

// The evaluation grid: every point count crossed with every payload dim,
// without interpolation, plus an interpolated variant per dim for the
// largest point count (the dense regime).
std::vector<BenchMeasurement> warp_bench(const std::vector<int>& point_counts,
                                         const std::vector<int>& dims, int repeats = 5);

std::string bench_table(const std::vector<BenchMeasurement>& rows);

}  // namespace kpalign
