#include "mbot/transfer.hpp"

#include "mbot/exact.hpp"
#include "mbot/parallel.hpp"
#include "mbot/subsets.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace mbot {

Normalization parse_normalization(std::string_view name) {
  if (name == "draw_scaling") return Normalization::draw_scaling;
  if (name == "per_pixel_mass") return Normalization::per_pixel_mass;
  throw std::invalid_argument("unknown normalization: " + std::string(name));
}

TransferAccumulator::TransferAccumulator(Index n, Index dim)
    : sums_(Points::Zero(n, dim)), mass_(static_cast<std::size_t>(n), 0.0) {}

double TransferAccumulator::uncovered_fraction() const {
  const auto zero = std::count(mass_.begin(), mass_.end(), 0.0);
  return static_cast<double>(zero) / static_cast<double>(mass_.size());
}

Points TransferAccumulator::result(Normalization normalization, const Points& original) const {
  Points out(sums_.rows(), sums_.cols());
  if (normalization == Normalization::draw_scaling) {
    const double factor =
        draws_ == 0 ? 0.0 : static_cast<double>(sums_.rows()) / static_cast<double>(draws_);
    out = factor * sums_;
  } else {
    for (Index i = 0; i < sums_.rows(); ++i) {
      const double w = mass_[static_cast<std::size_t>(i)];
      if (w > 0.0) {
        out.row(i) = sums_.row(i) / w;
      } else {
        out.row(i) = original.row(i);
      }
    }
  }
  return out.cwiseMax(0.0).cwiseMin(1.0);
}

TransferResult incremental_transfer(const PixelCloud& source, const PixelCloud& target,
                                    const TransferOptions& options) {
  source.validate();
  target.validate();
  const MinibatchConfig& cfg = options.batches;
  cfg.validate(source.size(), target.size());

  TransferAccumulator ys(source.size(), 3);
  TransferAccumulator yt(target.size(), 3);
  TransferResult result;
  result.peak_batch_bytes = sizeof(double) * static_cast<std::size_t>(cfg.m * cfg.m);

  const std::size_t chunk = static_cast<std::size_t>(4 * resolve_jobs(cfg.jobs));
  std::vector<BatchPair> pairs;
  std::vector<BatchCoupling> couplings;
  for (Index start = 0; start < cfg.k; start += static_cast<Index>(chunk)) {
    const auto len = static_cast<std::size_t>(std::min<Index>(static_cast<Index>(chunk), cfg.k - start));
    pairs.resize(len);
    couplings.assign(len, BatchCoupling{});
    for (std::size_t i = 0; i < len; ++i)
      pairs[i] = sample_pair(cfg.seed, static_cast<std::uint64_t>(start) + i, source.size(),
                             target.size(), cfg.m);
    parallel_for(len, cfg.jobs, [&](std::size_t i) {
      const Matrix c = cost_matrix(source.rgb, pairs[i].source, target.rgb, pairs[i].target,
                                   options.cost);
      if (cfg.loss == LossKind::wasserstein) {
        couplings[i].match = solve_assignment(c).match;
      } else {
        couplings[i].dense = sinkhorn(c, cfg.sinkhorn).plan;
      }
    });
    // Accumulation in draw order keeps the result independent of `jobs`.
    for (std::size_t t = 0; t < len; ++t) {
      const BatchPair& p = pairs[t];
      couplings[t].for_each([&](Index i, Index j, double w) {
        const Index s = p.source[static_cast<std::size_t>(i)];
        const Index d = p.target[static_cast<std::size_t>(j)];
        ys.deposit(s, w, target.rgb.row(d));
        yt.deposit(d, w, source.rgb.row(s));
      });
      ys.finish_draw();
      yt.finish_draw();
    }
  }

  result.source_mapped = {source.width, source.height,
                          ys.result(options.normalization, source.rgb)};
  result.target_mapped = {target.width, target.height,
                          yt.result(options.normalization, target.rgb)};
  result.source_mass = ys.mass();
  result.target_mass = yt.mass();
  result.source_uncovered = ys.uncovered_fraction();
  result.target_uncovered = yt.uncovered_fraction();
  return result;
}

}  // namespace mbot
