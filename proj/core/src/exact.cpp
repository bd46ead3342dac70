#include "mbot/exact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mbot {

double TransportPlan::max_marginal_deviation() const {
  double worst = 0.0;
  if (rows() == 0 || cols() == 0) return worst;
  const Vector r = row_sums();
  const Vector c = col_sums();
  for (Index i = 0; i < r.size(); ++i)
    worst = std::max(worst, std::abs(r(i) - 1.0 / static_cast<double>(rows())));
  for (Index j = 0; j < c.size(); ++j)
    worst = std::max(worst, std::abs(c(j) - 1.0 / static_cast<double>(cols())));
  return worst;
}

TransportPlan ExactSolution::plan() const {
  const Index m = size();
  TransportPlan p{Matrix::Zero(m, m), value};
  const double w = 1.0 / static_cast<double>(m);
  for (Index i = 0; i < m; ++i) p.mass(i, match[static_cast<std::size_t>(i)]) = w;
  return p;
}

namespace {

void check_pair(const PointCloud& a, const PointCloud& b) {
  if (a.size() != b.size()) throw std::invalid_argument("exact OT requires equal support sizes");
  if (a.dim() != b.dim()) throw std::invalid_argument("exact OT requires equal dimensions");
}

std::vector<Index> stable_order(const Points& p) {
  std::vector<Index> order(static_cast<std::size_t>(p.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index l, Index r) { return p(l, 0) < p(r, 0); });
  return order;
}

// Square assignment on a row-major cost buffer. Shortest augmenting path with
// potentials; on return row_of_col[j] is the row matched to column j and
// cost(i,j) - u[i] - v[j] >= 0 with equality on matched pairs.
struct Potentials {
  std::vector<double> u;
  std::vector<double> v;
  std::vector<Index> match;  // column of each row
};

Potentials augmenting_paths(const std::vector<double>& cost, Index m) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const auto n = static_cast<std::size_t>(m);
  // 1-based with a virtual column 0, as in the classical formulation.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> row_of(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    row_of[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = row_of[j0];
      const double* row = cost.data() + (i0 - 1) * n;
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[row_of[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      row_of[j0] = row_of[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Potentials out;
  out.u.assign(u.begin() + 1, u.end());
  out.v.assign(v.begin() + 1, v.end());
  out.match.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) out.match[row_of[j] - 1] = static_cast<Index>(j - 1);
  return out;
}

// Rewrites `pot.match` into the lexicographically smallest permutation that
// uses only tight edges (zero reduced cost). With optimal potentials these are
// exactly the optimal assignments.
void canonicalize(const std::vector<double>& cost, Index m, Potentials& pot) {
  const auto n = static_cast<std::size_t>(m);
  double scale = 1.0;
  for (double c : cost) scale = std::max(scale, std::abs(c));
  const double tol = 1e-11 * scale;
  auto tight = [&](std::size_t i, std::size_t j) {
    return cost[i * n + j] - pot.u[i] - pot.v[j] <= tol;
  };

  std::vector<Index>& match = pot.match;
  std::vector<std::size_t> owner(n);
  for (std::size_t i = 0; i < n; ++i) owner[static_cast<std::size_t>(match[i])] = i;

  std::vector<char> fixed_col(n, 0);
  std::vector<std::size_t> next_col(n);
  std::vector<char> in_reach(n);
  std::vector<std::size_t> queue;
  for (std::size_t i = 0; i < n; ++i) {
    const auto current = static_cast<std::size_t>(match[i]);
    bool has_smaller = false;
    for (std::size_t j = 0; j < current && !has_smaller; ++j)
      has_smaller = !fixed_col[j] && tight(i, j);
    if (has_smaller) {
      // Rows (other than i, not yet fixed) that can hand their column on along
      // tight edges until the column `current` is taken over.
      std::fill(in_reach.begin(), in_reach.end(), 0);
      queue.clear();
      auto absorb = [&](std::size_t col) {
        for (std::size_t r = i + 1; r < n; ++r) {
          if (in_reach[r] || static_cast<std::size_t>(match[r]) == col || !tight(r, col)) continue;
          in_reach[r] = 1;
          next_col[r] = col;
          queue.push_back(r);
        }
      };
      absorb(current);
      for (std::size_t q = 0; q < queue.size(); ++q) absorb(static_cast<std::size_t>(match[queue[q]]));

      for (std::size_t j = 0; j < current; ++j) {
        if (fixed_col[j] || !tight(i, j) || !in_reach[owner[j]]) continue;
        // Shift columns along the path, then give j to row i.
        std::size_t r = owner[j];
        while (true) {
          const std::size_t col = next_col[r];
          const std::size_t displaced = owner[col];
          match[r] = static_cast<Index>(col);
          owner[col] = r;
          if (col == current) break;
          r = displaced;
        }
        match[i] = static_cast<Index>(j);
        owner[j] = i;
        break;
      }
    }
    fixed_col[static_cast<std::size_t>(match[i])] = 1;
  }
}

}  // namespace

ExactSolution solve_exact_1d(const PointCloud& a, const PointCloud& b, const CostSpec& cost) {
  check_pair(a, b);
  if (a.dim() != 1) throw std::invalid_argument("solve_exact_1d requires one-dimensional supports");
  const auto oa = stable_order(a.points());
  const auto ob = stable_order(b.points());
  ExactSolution s;
  s.match.assign(oa.size(), 0);
  double total = 0.0;
  for (std::size_t r = 0; r < oa.size(); ++r) {
    s.match[static_cast<std::size_t>(oa[r])] = ob[r];
    total += cost(a.point(oa[r]), b.point(ob[r]));
  }
  s.value = total / static_cast<double>(oa.size());
  return s;
}

ExactSolution solve_assignment(const Matrix& cost) {
  if (cost.rows() != cost.cols() || cost.rows() == 0) {
    throw std::invalid_argument("assignment requires a nonempty square cost matrix");
  }
  const Index m = cost.rows();
  std::vector<double> buf(static_cast<std::size_t>(m * m));
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) buf[static_cast<std::size_t>(i * m + j)] = cost(i, j);
  Potentials pot = augmenting_paths(buf, m);
  canonicalize(buf, m, pot);
  ExactSolution s;
  s.match = std::move(pot.match);
  double total = 0.0;
  for (Index i = 0; i < m; ++i) total += cost(i, s.match[static_cast<std::size_t>(i)]);
  s.value = total / static_cast<double>(m);
  return s;
}

ExactSolution solve_exact_assignment(const PointCloud& a, const PointCloud& b,
                                     const CostSpec& cost) {
  check_pair(a, b);
  return solve_assignment(cost_matrix(a.points(), b.points(), cost));
}

ExactSolution solve_exact(const PointCloud& a, const PointCloud& b, const CostSpec& cost) {
  check_pair(a, b);
  if (a.dim() == 1) return solve_exact_1d(a, b, cost);
  return solve_exact_assignment(a, b, cost);
}

}  // namespace mbot
