#pragma once

#include "mbot/bounds.hpp"
#include "mbot/minibatch.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace mbot {

/// Synthetic source of i.i.d. clouds for the rate experiments. Every sample is
/// clamped into [0, 1]^dim, so the support diameter is at most sqrt(dim).
struct CloudGenerator {
  enum class Kind { uniform, gaussian_mixture };

  Kind kind = Kind::uniform;
  Index dim = 2;
  /// Mixture: components centred on a fixed pseudo-random grid.
  int components = 3;
  double spread = 0.1;
  std::uint64_t layout_seed = 7;

  Points sample(CounterRng& rng, Index n) const;
  PointSampler sampler() const;
  double diameter_bound() const;
};

CloudGenerator::Kind parse_generator_kind(std::string_view name);

struct GridPoint {
  Index n;
  Index m;
  Index k;
};

struct DeviationExperiment {
  CloudGenerator source;
  CloudGenerator target;
  CostSpec cost{};
  LossKind loss = LossKind::wasserstein;
  SinkhornParams sinkhorn{};
  std::vector<GridPoint> grid;
  double delta = 0.1;
  int reps = 200;
  std::uint64_t seed = kDefaultSeed;
  int jobs = 1;
  std::uint64_t enumeration_cap = kDefaultEnumerationCap;
  /// The surrogate reference uses max(min_reference_draws, 100 k) draws.
  Index min_reference_draws = 100000;
};

enum class ReferenceKind { exact, surrogate, unavailable };

struct ExperimentRecord {
  Index n = 0;
  Index m = 0;
  Index k = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  double estimate = 0.0;
  double reference = 0.0;
  double abs_error = 0.0;
  double bound = 0.0;
  bool within_bound = false;
  ReferenceKind reference_kind = ReferenceKind::exact;
};

/// For each (n, m) of the grid and each repetition: fresh clouds alpha_n,
/// beta_n, the estimate U~_h^k for every k listed for that (n, m), and a
/// reference U_h(alpha_n, beta_n) that is exact when enumeration is within
/// the cap and a high-k surrogate with an independent seed otherwise.
/// Records are sorted by (n, m, k, rep).
std::vector<ExperimentRecord> run_deviation_experiment(const DeviationExperiment& exp);

/// Header n,m,k,rep,seed,estimate,reference,abs_error,bound,within_bound.
void write_records_csv(std::ostream& out, std::span<const ExperimentRecord> records);

struct CoverageSummary {
  Index n;
  Index m;
  Index k;
  double coverage;        // fraction within bound
  double mean_abs_error;
  int flagged;            // records with unavailable reference
};
std::vector<CoverageSummary> summarize_coverage(std::span<const ExperimentRecord> records);

struct MarginalRow {
  Index m = 0;
  Index k = 0;
  /// Mean over repetitions of sum_i |row_i - 1/n_s| and sum_j |col_j - 1/n_t|.
  double row_l1 = 0.0;
  double col_l1 = 0.0;
  double mean_l1 = 0.0;  // (row_l1 + col_l1) / 2
  double bound = 0.0;    // marginal_bound(k, delta)
  /// Fraction of (rep, row or column) deviations within bound.
  double coverage = 0.0;
};

struct MarginalReport {
  std::vector<MarginalRow> rows;
  /// Least-squares slope of log(mean_l1) against log(k), one per m.
  std::vector<std::pair<Index, double>> slopes;
};

/// Marginal error of Pi_k for every (m, k). Only the O(n) marginals are
/// accumulated, never the plan itself.
MarginalReport run_marginal_experiment(const PointCloud& a, const PointCloud& b,
                                       const CostSpec& cost, std::span<const Index> m_list,
                                       std::span<const Index> k_list, int reps,
                                       std::uint64_t seed, double delta = 0.1, int jobs = 1,
                                       LossKind loss = LossKind::wasserstein,
                                       const SinkhornParams& sinkhorn = {});

void write_marginal_csv(std::ostream& out, const MarginalReport& report);

/// Least-squares slope of log(y) on log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

}  // namespace mbot
