#pragma once

#include "mbot/point_cloud.hpp"

#include <vector>

namespace mbot {

/// Dense coupling between two uniform clouds together with its objective.
struct TransportPlan {
  Matrix mass;
  double value = 0.0;

  Index rows() const { return mass.rows(); }
  Index cols() const { return mass.cols(); }
  Vector row_sums() const { return mass.rowwise().sum(); }
  Vector col_sums() const { return mass.colwise().sum().transpose(); }

  /// Largest |row sum - 1/rows| and |col sum - 1/cols|.
  double max_marginal_deviation() const;
};

/// Optimal assignment between two equal-size clouds. `match[i]` is the index
/// of the target point receiving source point i; each pair carries mass 1/m.
struct ExactSolution {
  double value = 0.0;
  std::vector<Index> match;

  Index size() const { return static_cast<Index>(match.size()); }
  TransportPlan plan() const;
};

}  // namespace mbot
