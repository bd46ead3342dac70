#pragma once

#include "mbot/cost.hpp"
#include "mbot/transport_plan.hpp"

#include <vector>

namespace mbot {

struct SinkhornParams {
  double epsilon = 0.1;
  int max_iters = 10000;
  /// Threshold on the larger L1 marginal residual.
  double tol = 1e-9;
  /// Force log-domain updates. When false, log-domain is still selected
  /// automatically if epsilon / median(C) < 0.05.
  bool log_domain = false;
  /// Record the dual objective after every iteration.
  bool record_trace = false;

  void validate() const;
};

/// Entropic OT between uniform equal-size marginals.
///
/// `value` is <P, C> - eps * H(P) with the discrete entropy
/// H(P) = -sum P_ij (log P_ij - 1). Relative to the KL convention
/// <P, C> + eps * KL(P | a x b) the two differ by the constant
/// eps * (1 + log(m * m')) for uniform marginals.
struct SinkhornResult {
  double value = 0.0;
  Matrix plan;
  /// Dual potentials: P_ij = exp((f_i + g_j - C_ij) / eps).
  Vector f;
  Vector g;
  int iterations = 0;
  /// L1 residual of the row marginal after the final (column) update; the
  /// column marginal is exact up to rounding.
  double residual = 0.0;
  bool converged = false;
  bool log_domain = false;
  /// Dual objective per iteration when requested. Nondecreasing.
  std::vector<double> trace;

  TransportPlan transport_plan() const { return {plan, value}; }
};

/// Throws std::invalid_argument for eps <= 0, tol <= 0, or empty/non-square input.
/// Non-convergence is reported through `converged`, never thrown.
SinkhornResult sinkhorn(const Matrix& cost, const SinkhornParams& params);

SinkhornResult sinkhorn(const PointCloud& a, const PointCloud& b, const CostSpec& cost,
                        const SinkhornParams& params);

/// Entropic OT of a cloud with itself, given its symmetric cost matrix. Uses
/// the averaged fixed-point update f <- (f + T(f)) / 2 on a single potential,
/// which stays fast when points nearly coincide; f == g on return. The trace
/// (if requested) holds the dual objective but is not guaranteed monotone.
/// Throws std::invalid_argument unless the cost is square and exactly symmetric.
SinkhornResult sinkhorn_symmetric(const Matrix& cost, const SinkhornParams& params);

/// S_eps(a, b) = W_eps(a, b) - (W_eps(a, a) + W_eps(b, b)) / 2, self terms
/// solved with sinkhorn_symmetric.
struct DivergenceResult {
  double value = 0.0;
  SinkhornResult cross;
  SinkhornResult self_a;
  SinkhornResult self_b;
  bool converged() const { return cross.converged && self_a.converged && self_b.converged; }
};

DivergenceResult sinkhorn_divergence_full(const PointCloud& a, const PointCloud& b,
                                          const CostSpec& cost, const SinkhornParams& params);

double sinkhorn_divergence(const PointCloud& a, const PointCloud& b, const CostSpec& cost,
                           const SinkhornParams& params);

}  // namespace mbot
