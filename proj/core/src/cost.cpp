#include "mbot/cost.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mbot {

std::string_view to_string(CostKind kind) {
  switch (kind) {
    case CostKind::abs:
      return "abs";
    case CostKind::euclidean:
      return "euclidean";
    case CostKind::sq_euclidean:
      return "sq_euclidean";
  }
  return "?";
}

CostKind parse_cost_kind(std::string_view name) {
  if (name == "abs") return CostKind::abs;
  if (name == "euclidean") return CostKind::euclidean;
  if (name == "sq_euclidean" || name == "sqeuclidean") return CostKind::sq_euclidean;
  throw std::invalid_argument("unknown cost kind: " + std::string(name));
}

void CostSpec::check_dimension(Index dim) const {
  if (kind == CostKind::abs && dim != 1) {
    throw std::invalid_argument("abs cost is defined for one-dimensional supports only");
  }
}

Matrix cost_matrix(const Points& x, const Points& y, const CostSpec& cost) {
  if (x.cols() != y.cols()) throw std::invalid_argument("cost_matrix: dimension mismatch");
  cost.check_dimension(x.cols());
  Matrix c(x.rows(), y.rows());
  for (Index j = 0; j < y.rows(); ++j)
    for (Index i = 0; i < x.rows(); ++i) c(i, j) = cost(x.row(i), y.row(j));
  return c;
}

Matrix cost_matrix(const Points& x, std::span<const Index> rows, const Points& y,
                   std::span<const Index> cols, const CostSpec& cost) {
  if (x.cols() != y.cols()) throw std::invalid_argument("cost_matrix: dimension mismatch");
  cost.check_dimension(x.cols());
  Matrix c(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < rows.size(); ++i)
      c(static_cast<Index>(i), static_cast<Index>(j)) = cost(x.row(rows[i]), y.row(cols[j]));
  return c;
}

double support_diameter(const Points& x, const Points& y, Index exact_limit) {
  if (x.cols() != y.cols()) throw std::invalid_argument("support_diameter: dimension mismatch");
  const Index n = x.rows() + y.rows();
  if (n == 0) return 0.0;
  auto at = [&](Index i) { return i < x.rows() ? x.row(i) : y.row(i - x.rows()); };
  if (n <= exact_limit) {
    double best = 0.0;
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) best = std::max(best, (at(i) - at(j)).squaredNorm());
    return std::sqrt(best);
  }
  Eigen::RowVectorXd lo = at(0), hi = at(0);
  for (Index i = 1; i < n; ++i) {
    lo = lo.cwiseMin(at(i));
    hi = hi.cwiseMax(at(i));
  }
  return (hi - lo).norm();
}

double cost_bound(CostKind kind, double diameter) {
  return kind == CostKind::sq_euclidean ? diameter * diameter : diameter;
}

}  // namespace mbot
