#pragma once

#include "mbot/point_cloud.hpp"

namespace mbot {

/// Averaged minibatch plan Pi_m between two sorted 1D uniform clouds of size n.
///
/// Entry (j, k) (0-based ranks) is
///   (1/m) C(n,m)^-2 sum_i C(j,i-1) C(k,i-1) C(n-1-j,m-i) C(n-1-k,m-i),
/// i.e. the probability-weighted count of batch pairs in which rank j and rank
/// k land at the same position i of their sorted batches. The result does not
/// depend on the point positions. Exact 128-bit integer sums for n <= 64,
/// log-gamma arithmetic above. Throws std::invalid_argument unless 1 <= m <= n.
Matrix closed_form_1d(Index n, Index m);

}  // namespace mbot
