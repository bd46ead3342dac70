#pragma once

#include "mbot/minibatch.hpp"

#include <cstdint>

namespace mbot {

/// M_h, the uniform bound on |h| over batch pairs.
///
/// `cost_bound` is the largest ground cost over the union of supports (the
/// diameter for distance costs, see cost_bound()). For W this is the bound
/// itself; for W_eps and S_eps it is 3/2 (bound + eps (2 log2(m) + 1)).
double m_h(LossKind loss, double cost_bound, double epsilon, Index m);

struct BoundInputs {
  Index n = 1;
  Index m = 1;
  Index k = 1;
  double delta = 0.1;
  double epsilon = 0.0;
  /// Largest ground cost over the supports (see m_h).
  double cost_bound = 1.0;
  LossKind loss = LossKind::wasserstein;

  void validate() const;
};

/// M_h sqrt(log(2/delta) / (2 floor(n/m))): deviation of the complete
/// two-sample U-statistic from its expectation.
double u_statistic_deviation(Index n, Index m, double delta, double mh);

/// M_h sqrt(2 log(2/delta) / k): deviation of the incomplete U-statistic from
/// the complete one.
double subsample_deviation(Index k, double delta, double mh);

/// Sum of the two terms above with M_h = m_h(loss, cost_bound, epsilon, m).
double hoeffding_deviation(const BoundInputs& bi);

struct BernsteinTail {
  double with_variance = 0.0;  // sigma^2 as given
  double worst_case = 0.0;     // sigma^2 replaced by M_h^2
};

/// 2 exp(-floor(n/m) t^2 / (2 (sigma^2 + M_h t / 3))), t = deviation.
/// Requires t > 0 and 0 <= sigma2 <= M_h^2.
BernsteinTail bernstein_tail(Index n, Index m, double deviation, double sigma2, double mh);

/// sqrt(2 log(2/delta) / k): per-row deviation of Pi_k marginals from 1/n.
double marginal_bound(Index k, double delta);

}  // namespace mbot
