#pragma once

#include "mbot/point_cloud.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace mbot {

/// Accumulator for couplings on the full n_s x n_t index space.
///
/// Entries are kept in a dense buffer when n_s * n_t is at most the dense cap
/// and in a hash map otherwise, so memory is O(min(touched entries, n_s * n_t)).
class SparsePlan {
 public:
  static constexpr std::uint64_t kDefaultDenseCap = std::uint64_t{1} << 22;

  SparsePlan(Index rows, Index cols, std::uint64_t dense_cap = kDefaultDenseCap);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  bool is_dense() const { return !dense_.empty() || rows_ * cols_ == 0; }

  void add(Index i, Index j, double mass);
  double at(Index i, Index j) const;
  void scale(double factor);

  /// Number of batch plans folded in.
  std::uint64_t draw_count() const { return draw_count_; }
  void set_draw_count(std::uint64_t k) { draw_count_ = k; }

  Vector row_sums() const;
  Vector col_sums() const;
  double total_mass() const;
  std::size_t stored_entries() const;

  /// Calls fn(i, j, mass) for each stored nonzero entry in row-major order.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    if (is_dense()) {
      for (Index i = 0; i < rows_; ++i)
        for (Index j = 0; j < cols_; ++j) {
          const double v = dense_[static_cast<std::size_t>(i * cols_ + j)];
          if (v != 0.0) fn(i, j, v);
        }
      return;
    }
    for (const auto& [key, v] : sorted_entries()) fn(key.first, key.second, v);
  }

  Matrix to_dense() const;

  /// <Pi, C> without materialising C; cost(i, j) is called on stored entries.
  template <typename CostFn>
  double inner(CostFn&& cost) const {
    double acc = 0.0;
    for_each([&](Index i, Index j, double v) { acc += v * cost(i, j); });
    return acc;
  }

 private:
  std::vector<std::pair<std::pair<Index, Index>, double>> sorted_entries() const;

  Index rows_;
  Index cols_;
  std::vector<double> dense_;
  std::unordered_map<std::uint64_t, double> sparse_;
  std::uint64_t draw_count_ = 0;
};

/// Flags word of the binary plan layout.
enum PlanFlags : std::uint32_t {
  kPlanEnumerated = 1u << 0,
  kPlanSubsampled = 1u << 1,
  kPlanClosedForm = 1u << 2,
};

/// CSV triplets "i,j,mass" with header, one line per nonzero, 17 significant digits.
void write_plan_csv(std::ostream& out, const SparsePlan& plan);
void write_plan_csv(std::ostream& out, const Matrix& plan);

/// Binary layout: 8 bytes "MBOTPLAN", u32 n, u32 flags (little-endian), then
/// n*n little-endian float64 in row-major order. Square plans only.
void write_plan_binary(std::ostream& out, const Matrix& plan, std::uint32_t flags);

struct BinaryPlan {
  Matrix plan;
  std::uint32_t flags = 0;
};
/// Throws std::runtime_error on bad magic or truncated data.
BinaryPlan read_plan_binary(std::istream& in);

}  // namespace mbot
