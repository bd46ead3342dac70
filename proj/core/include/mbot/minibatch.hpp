#pragma once

#include "mbot/cost.hpp"
#include "mbot/rng.hpp"
#include "mbot/sinkhorn.hpp"
#include "mbot/sparse_plan.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace mbot {

/// The OT loss h evaluated on each pair of minibatches.
enum class LossKind {
  wasserstein,          // W, exact
  entropic,             // W_eps
  sinkhorn_divergence,  // S_eps
};

std::string_view to_string(LossKind loss);
/// Accepts "W", "W_eps", "S_eps" (case-sensitive); throws std::invalid_argument.
LossKind parse_loss_kind(std::string_view name);

enum class PairSampling {
  iid,       // k i.i.d. pairs, drawn with replacement across pairs
  distinct,  // k distinct pairs out of the C(n_s, m) * C(n_t, m) possible
};

inline constexpr std::uint64_t kDefaultEnumerationCap = 1'000'000;

struct MinibatchConfig {
  Index m = 1;
  Index k = 1;
  std::uint64_t seed = kDefaultSeed;
  LossKind loss = LossKind::wasserstein;
  SinkhornParams sinkhorn{};
  PairSampling pair_sampling = PairSampling::iid;
  /// Largest number of subset pairs the exact (enumeration) paths accept.
  std::uint64_t enumeration_cap = kDefaultEnumerationCap;
  /// Worker threads for batch solves; results never depend on this.
  int jobs = 1;

  /// Throws std::invalid_argument unless 1 <= m <= min(n_source, n_target), k >= 1.
  void validate(Index n_source, Index n_target) const;
};

/// Thrown by the enumeration paths when C(n,m)^2 exceeds the configured cap.
class EnumerationCapExceeded : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Source indices A and target indices B of one minibatch pair, each sorted
/// and without repetition.
struct BatchPair {
  std::vector<Index> source;
  std::vector<Index> target;
};

/// Draw number `draw` of the i.i.d. pair stream with the given seed.
BatchPair sample_pair(std::uint64_t seed, std::uint64_t draw, Index n_source,
                      Index n_target, Index m);

/// Coupling between the m points of a batch pair, either a scaled permutation
/// (exact losses) or a dense matrix (entropic losses).
struct BatchCoupling {
  std::vector<Index> match;  // nonempty for permutations
  Matrix dense;              // used otherwise

  bool is_permutation() const { return !match.empty(); }
  Index size() const;

  /// Calls fn(i, j, mass) for every nonzero local entry.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    if (is_permutation()) {
      const double w = 1.0 / static_cast<double>(match.size());
      for (std::size_t i = 0; i < match.size(); ++i) fn(static_cast<Index>(i), match[i], w);
      return;
    }
    for (Index i = 0; i < dense.rows(); ++i)
      for (Index j = 0; j < dense.cols(); ++j)
        if (dense(i, j) != 0.0) fn(i, j, dense(i, j));
  }
};

struct BatchResult {
  double value = 0.0;
  BatchCoupling coupling;
  bool converged = true;
};

/// h(A, B) on restricted clouds of equal size. For S_eps the coupling is the
/// one of the cross term W_eps(A, B).
BatchResult evaluate_loss(const PointCloud& a, const PointCloud& b, const CostSpec& cost,
                          LossKind loss, const SinkhornParams& params);

BatchResult evaluate_batch(const PointCloud& a, const PointCloud& b, const BatchPair& pair,
                           const CostSpec& cost, const MinibatchConfig& cfg);

/// The batch pairs a subsampled estimator with this configuration visits, in
/// draw order.
std::vector<BatchPair> draw_pairs(Index n_source, Index n_target, const MinibatchConfig& cfg);

/// U_h: exact average of h over all C(n,m)^2 batch pairs.
/// Throws EnumerationCapExceeded above cfg.enumeration_cap pairs.
double u_stat_exact(const PointCloud& a, const PointCloud& b, const CostSpec& cost,
                    const MinibatchConfig& cfg);

struct SubsampledEstimate {
  double value = 0.0;
  std::vector<double> per_draw;
  bool converged = true;
};

/// U~_h^k: average of h over k sampled pairs, summed in draw order.
SubsampledEstimate u_stat_subsampled(const PointCloud& a, const PointCloud& b,
                                     const CostSpec& cost, const MinibatchConfig& cfg);

/// Pi_m: average of the embedded batch plans over all batch pairs.
SparsePlan plan_averaged_exact(const PointCloud& a, const PointCloud& b, const CostSpec& cost,
                               const MinibatchConfig& cfg);

/// Pi_k: average of the embedded batch plans over k sampled pairs. Stored
/// densely only when n_s * n_t <= dense_cap.
SparsePlan plan_subsampled(const PointCloud& a, const PointCloud& b, const CostSpec& cost,
                           const MinibatchConfig& cfg,
                           std::uint64_t dense_cap = SparsePlan::kDefaultDenseCap);

/// Draws m i.i.d. points from a model distribution.
using PointSampler = std::function<Points(CounterRng&, Index m)>;

/// Monte-Carlo estimate of U_h(alpha_n, beta) for a continuous target:
/// `draws` iterations of (A uniform, Y ~ beta^m), averaged.
double u_stat_semidiscrete(const PointCloud& a, const PointSampler& beta_sampler,
                           const CostSpec& cost, const MinibatchConfig& cfg, Index draws);

}  // namespace mbot
