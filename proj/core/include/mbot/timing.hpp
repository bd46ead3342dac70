#pragma once

#include "mbot/minibatch.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mbot {

enum class BenchSolver {
  minibatch,  // U~ with fixed (m, k); cost restricted to each batch
  sinkhorn,   // full n x n Sinkhorn, cost matrix construction included
  exact,      // full n x n assignment
};

BenchSolver parse_bench_solver(std::string_view name);
std::string_view to_string(BenchSolver solver);

struct TimingRow {
  BenchSolver solver;
  Index n;
  int rep;
  double seconds;
};

struct TimingSweep {
  std::vector<BenchSolver> solvers;
  std::vector<Index> sizes;
  int reps = 3;
  Index dim = 2;
  MinibatchConfig batches{};  // m, k, loss for the minibatch solver
  SinkhornParams sinkhorn{};  // full-solver parameters
  std::uint64_t seed = kDefaultSeed;
};

/// Wall-clock time of each solver on uniform clouds of each size.
std::vector<TimingRow> run_timing_sweep(const TimingSweep& sweep);

/// Median seconds for (solver, n) over the rows.
double median_seconds(const std::vector<TimingRow>& rows, BenchSolver solver, Index n);

}  // namespace mbot
