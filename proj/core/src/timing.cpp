#include "mbot/timing.hpp"

#include "mbot/exact.hpp"
#include "mbot/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>
#include <string>

namespace mbot {

BenchSolver parse_bench_solver(std::string_view name) {
  if (name == "minibatch") return BenchSolver::minibatch;
  if (name == "sinkhorn") return BenchSolver::sinkhorn;
  if (name == "exact") return BenchSolver::exact;
  throw std::invalid_argument("unknown solver: " + std::string(name));
}

std::string_view to_string(BenchSolver solver) {
  switch (solver) {
    case BenchSolver::minibatch:
      return "minibatch";
    case BenchSolver::sinkhorn:
      return "sinkhorn";
    case BenchSolver::exact:
      return "exact";
  }
  return "?";
}

std::vector<TimingRow> run_timing_sweep(const TimingSweep& sweep) {
  std::vector<TimingRow> rows;
  CloudGenerator gen;
  gen.dim = sweep.dim;
  const CostSpec cost{CostKind::sq_euclidean};
  for (const Index n : sweep.sizes) {
    CounterRng rng(sweep.seed, static_cast<std::uint64_t>(n));
    const PointCloud a(gen.sample(rng, n));
    const PointCloud b(gen.sample(rng, n));
    for (const BenchSolver solver : sweep.solvers) {
      for (int rep = 0; rep < sweep.reps; ++rep) {
        const auto t0 = std::chrono::steady_clock::now();
        double sink = 0.0;
        switch (solver) {
          case BenchSolver::minibatch: {
            MinibatchConfig cfg = sweep.batches;
            cfg.seed = derive_seed(sweep.seed, static_cast<std::uint64_t>(rep));
            sink = u_stat_subsampled(a, b, cost, cfg).value;
            break;
          }
          case BenchSolver::sinkhorn:
            sink = sinkhorn(cost_matrix(a.points(), b.points(), cost), sweep.sinkhorn).value;
            break;
          case BenchSolver::exact:
            sink = solve_exact_assignment(a, b, cost).value;
            break;
        }
        const auto t1 = std::chrono::steady_clock::now();
        if (sink != sink) throw std::runtime_error("solver returned NaN during timing");
        rows.push_back({solver, n, rep, std::chrono::duration<double>(t1 - t0).count()});
      }
    }
  }
  return rows;
}

double median_seconds(const std::vector<TimingRow>& rows, BenchSolver solver, Index n) {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.solver == solver && r.n == n) v.push_back(r.seconds);
  if (v.empty()) throw std::invalid_argument("no timing rows for the requested solver and size");
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

}  // namespace mbot
