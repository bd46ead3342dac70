#pragma once

#include <Eigen/Core>

#include <span>
#include <vector>

namespace mbot {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// One point per row, so a single support point is contiguous in memory.
using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Uniform empirical measure: n support points in R^d, each carrying mass 1/n.
///
/// Duplicated points are allowed. The weights are never stored since every
/// routine in this library works with uniform marginals.
class PointCloud {
 public:
  PointCloud() = default;

  /// Throws std::invalid_argument when `points` has no rows or no columns.
  explicit PointCloud(Points points);

  static PointCloud from_values(std::span<const double> values);

  Index size() const { return points_.rows(); }
  Index dim() const { return points_.cols(); }
  bool empty() const { return points_.rows() == 0; }

  const Points& points() const { return points_; }
  Points& points() { return points_; }

  auto point(Index i) const { return points_.row(i); }

  /// Restriction to the listed rows, in the listed order.
  PointCloud subset(std::span<const Index> indices) const;

 private:
  Points points_;
};

}  // namespace mbot
