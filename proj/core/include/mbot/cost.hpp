#pragma once

#include "mbot/point_cloud.hpp"

#include <span>
#include <string_view>

namespace mbot {

enum class CostKind {
  abs,           // |x - y|, one-dimensional supports only
  euclidean,     // ||x - y||
  sq_euclidean,  // ||x - y||^2
};

std::string_view to_string(CostKind kind);
/// Accepts "abs", "euclidean", "sq_euclidean"; throws std::invalid_argument otherwise.
CostKind parse_cost_kind(std::string_view name);

/// Ground cost c(x, y) with its gradient in the second argument.
///
/// All kinds are symmetric, nonnegative and vanish on the diagonal.
struct CostSpec {
  CostKind kind = CostKind::euclidean;

  template <typename A, typename B>
  double operator()(const A& x, const B& y) const {
    switch (kind) {
      case CostKind::abs:
      case CostKind::euclidean:
        return (x - y).norm();
      case CostKind::sq_euclidean:
        return (x - y).squaredNorm();
    }
    return 0.0;
  }

  /// Writes d/dy c(x, y) into `out`. The euclidean gradient at x == y is
  /// defined as zero (the subgradient of smallest norm).
  template <typename A, typename B, typename Out>
  void grad_y(const A& x, const B& y, Out&& out) const {
    switch (kind) {
      case CostKind::abs:
      case CostKind::euclidean: {
        const double r = (y - x).norm();
        if (r == 0.0) {
          out.setZero();
        } else {
          out = (y - x) / r;
        }
        return;
      }
      case CostKind::sq_euclidean:
        out = 2.0 * (y - x);
        return;
    }
  }

  /// Throws std::invalid_argument if the kind cannot be used in dimension `dim`.
  void check_dimension(Index dim) const;
};

/// Dense m x m' matrix C_ij = c(x_i, y_j).
Matrix cost_matrix(const Points& x, const Points& y, const CostSpec& cost);

/// Restricted matrix C_{A,B}: rows of x listed in `rows`, rows of y listed in `cols`.
Matrix cost_matrix(const Points& x, std::span<const Index> rows, const Points& y,
                   std::span<const Index> cols, const CostSpec& cost);

/// Diameter of the union of both supports. Exact pairwise maximum when the
/// union has at most `exact_limit` points, bounding-box diagonal otherwise
/// (never smaller than the exact value).
double support_diameter(const Points& x, const Points& y, Index exact_limit = 2000);

/// Upper bound on c over a set of the given diameter: diam for distances,
/// diam^2 for the squared euclidean cost.
double cost_bound(CostKind kind, double diameter);

}  // namespace mbot
