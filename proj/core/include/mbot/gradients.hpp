#pragma once

#include "mbot/minibatch.hpp"

namespace mbot {

/// Per-point gradient, same row indexing as the cloud whose points move.
struct GradField {
  Points grad;
  /// Set when some Sinkhorn solve behind the field did not reach tolerance.
  bool stale = false;
};

/// d/dy W_eps(a, b) for the points y of `moving`, by the envelope theorem:
/// row j is sum_i P*_ij grad_y c(x_i, y_j) with the converged plan held fixed.
GradField grad_entropic_positions(const PointCloud& fixed, const PointCloud& moving,
                                  const CostSpec& cost, const SinkhornParams& params);

/// d/dy [W_eps(a, b) - W_eps(b, b) / 2]. The self term moves through both of
/// its arguments; W_eps(a, a) does not depend on y.
GradField grad_divergence_positions(const PointCloud& fixed, const PointCloud& moving,
                                    const CostSpec& cost, const SinkhornParams& params);

struct MinibatchGradient {
  GradField field;
  /// U~_h^k over the same batch pairs.
  double loss = 0.0;
};

/// (1/k) sum over sampled pairs of the batch gradient, scattered into full
/// rows. Rows of points never sampled stay exactly zero.
/// Throws std::invalid_argument for loss = W (not differentiable).
MinibatchGradient grad_minibatch(const PointCloud& fixed, const PointCloud& moving,
                                 const CostSpec& cost, const MinibatchConfig& cfg);

/// Gradient of U_h by enumerating all batch pairs; the reference for the
/// unbiasedness check. Throws EnumerationCapExceeded past cfg.enumeration_cap.
GradField grad_minibatch_exact(const PointCloud& fixed, const PointCloud& moving,
                               const CostSpec& cost, const MinibatchConfig& cfg);

}  // namespace mbot
