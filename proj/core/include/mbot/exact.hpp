#pragma once

#include "mbot/cost.hpp"
#include "mbot/transport_plan.hpp"

namespace mbot {

/// Exact OT between two one-dimensional clouds of equal size by sorted
/// matching. Valid for every cost that is a convex function of |x - y|
/// (abs, euclidean and sq_euclidean in 1D).
///
/// Both supports are sorted with a stable sort, so ties keep their original
/// order; the returned match is expressed in the original index order.
/// Throws std::invalid_argument on size mismatch or dim != 1.
ExactSolution solve_exact_1d(const PointCloud& a, const PointCloud& b, const CostSpec& cost);

/// Exact OT between equal-size uniform clouds as a linear assignment problem.
///
/// Shortest augmenting paths with dual potentials (Jonker-Volgenant style),
/// O(m^3). Among all optimal permutations the lexicographically smallest one
/// is returned, so plans do not depend on the solver's visiting order.
ExactSolution solve_exact_assignment(const PointCloud& a, const PointCloud& b,
                                     const CostSpec& cost);

/// Same on a precomputed square cost matrix; value is mean of matched costs.
ExactSolution solve_assignment(const Matrix& cost);

/// Dispatches to the sorted solver for 1D inputs, the assignment solver otherwise.
ExactSolution solve_exact(const PointCloud& a, const PointCloud& b, const CostSpec& cost);

}  // namespace mbot
