#include "mbot/point_cloud.hpp"

#include <stdexcept>

namespace mbot {

PointCloud::PointCloud(Points points) : points_(std::move(points)) {
  if (points_.rows() == 0 || points_.cols() == 0) {
    throw std::invalid_argument("point cloud needs at least one point of positive dimension");
  }
}

PointCloud PointCloud::from_values(std::span<const double> values) {
  Points p(static_cast<Index>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) p(static_cast<Index>(i), 0) = values[i];
  return PointCloud(std::move(p));
}

PointCloud PointCloud::subset(std::span<const Index> indices) const {
  Points p(static_cast<Index>(indices.size()), dim());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const Index i = indices[r];
    if (i < 0 || i >= size()) throw std::out_of_range("subset index outside the cloud");
    p.row(static_cast<Index>(r)) = points_.row(i);
  }
  return PointCloud(std::move(p));
}

}  // namespace mbot
