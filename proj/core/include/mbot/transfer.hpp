#pragma once

#include "mbot/image.hpp"
#include "mbot/minibatch.hpp"

#include <cstdint>
#include <vector>

namespace mbot {

enum class Normalization {
  /// (n / k) Y, unsampled pixels end up black.
  draw_scaling,
  /// Y_i / mass_i, unsampled pixels keep their original color.
  per_pixel_mass,
};

Normalization parse_normalization(std::string_view name);

/// Running barycentric sums for one side of the transfer, O(n) memory.
class TransferAccumulator {
 public:
  TransferAccumulator(Index n, Index dim);

  /// Y_i += mass * color, mass_i += mass.
  void deposit(Index i, double mass, const auto& color) {
    sums_.row(i) += mass * color;
    mass_[static_cast<std::size_t>(i)] += mass;
  }
  void finish_draw() { ++draws_; }

  Index size() const { return sums_.rows(); }
  std::uint64_t draws() const { return draws_; }
  const Points& sums() const { return sums_; }
  const std::vector<double>& mass() const { return mass_; }
  double uncovered_fraction() const;

  /// Mapped colors, clamped to [0, 1]. `original` fills unsampled pixels in
  /// per_pixel_mass mode.
  Points result(Normalization normalization, const Points& original) const;

 private:
  Points sums_;
  std::vector<double> mass_;
  std::uint64_t draws_ = 0;
};

struct TransferOptions {
  MinibatchConfig batches{};
  CostSpec cost{CostKind::sq_euclidean};
  Normalization normalization = Normalization::per_pixel_mass;
};

struct TransferResult {
  PixelCloud source_mapped;  // source recolored with target colors
  PixelCloud target_mapped;  // target recolored with source colors
  std::vector<double> source_mass;
  std::vector<double> target_mass;
  double source_uncovered = 0.0;
  double target_uncovered = 0.0;
  /// Largest single buffer the batch loop allocated (cost matrix, coupling).
  std::size_t peak_batch_bytes = 0;
};

/// Incremental barycentric color transfer. For each of k draws, solves OT
/// between m source and m target pixels on the restricted m x m cost and
/// deposits G X_t|B into the source sums and G^T X_s|A into the target sums.
/// Memory is O(n_s + n_t + m^2); no n_s x n_t object is ever built.
TransferResult incremental_transfer(const PixelCloud& source, const PixelCloud& target,
                                    const TransferOptions& options);

}  // namespace mbot
