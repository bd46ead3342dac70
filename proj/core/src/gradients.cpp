#include "mbot/gradients.hpp"

#include "batch_runner.hpp"
#include "mbot/parallel.hpp"

#include <stdexcept>

namespace mbot {

namespace {

// sum_i P_ij grad_y c(x_i, y_j), accumulated into `out` with the given sign.
void add_cross_term(const Points& x, const Points& y, const Matrix& plan, const CostSpec& cost,
                    double sign, Points& out) {
  Eigen::RowVectorXd g(y.cols());
  for (Index j = 0; j < y.rows(); ++j)
    for (Index i = 0; i < x.rows(); ++i) {
      const double w = plan(i, j);
      if (w == 0.0) continue;
      cost.grad_y(x.row(i), y.row(j), g);
      out.row(j) += sign * w * g;
    }
}

void check(const PointCloud& fixed, const PointCloud& moving, const CostSpec& cost) {
  if (fixed.dim() != moving.dim()) throw std::invalid_argument("clouds have different dimensions");
  cost.check_dimension(moving.dim());
}

struct BatchGradient {
  Points grad;
  double value = 0.0;
  bool converged = true;
};

BatchGradient batch_gradient(const PointCloud& fixed, const PointCloud& moving,
                             const CostSpec& cost, LossKind loss, const SinkhornParams& params) {
  BatchGradient out;
  if (loss == LossKind::entropic) {
    const SinkhornResult s = sinkhorn(fixed, moving, cost, params);
    out.grad = Points::Zero(moving.size(), moving.dim());
    add_cross_term(fixed.points(), moving.points(), s.plan, cost, 1.0, out.grad);
    out.value = s.value;
    out.converged = s.converged;
    return out;
  }
  const DivergenceResult d = sinkhorn_divergence_full(fixed, moving, cost, params);
  const Points& y = moving.points();
  out.grad = Points::Zero(y.rows(), y.cols());
  add_cross_term(fixed.points(), y, d.cross.plan, cost, 1.0, out.grad);
  // Self term W(b, b): y enters as both source and target.
  add_cross_term(y, y, d.self_b.plan, cost, -0.5, out.grad);
  add_cross_term(y, y, d.self_b.plan.transpose(), cost, -0.5, out.grad);
  out.value = d.value;
  out.converged = d.converged();
  return out;
}

void require_smooth(LossKind loss) {
  if (loss == LossKind::wasserstein) {
    throw std::invalid_argument("the exact Wasserstein loss is not differentiable; use W_eps or S_eps");
  }
}

}  // namespace

GradField grad_entropic_positions(const PointCloud& fixed, const PointCloud& moving,
                                  const CostSpec& cost, const SinkhornParams& params) {
  check(fixed, moving, cost);
  BatchGradient g = batch_gradient(fixed, moving, cost, LossKind::entropic, params);
  return {std::move(g.grad), !g.converged};
}

GradField grad_divergence_positions(const PointCloud& fixed, const PointCloud& moving,
                                    const CostSpec& cost, const SinkhornParams& params) {
  check(fixed, moving, cost);
  BatchGradient g = batch_gradient(fixed, moving, cost, LossKind::sinkhorn_divergence, params);
  return {std::move(g.grad), !g.converged};
}

namespace {

// Averages batch gradients over `pairs`, scattering into full rows in order.
MinibatchGradient average_over(const PointCloud& fixed, const PointCloud& moving,
                               const CostSpec& cost, const MinibatchConfig& cfg,
                               std::uint64_t count, auto&& next_pair) {
  MinibatchGradient out;
  out.field.grad = Points::Zero(moving.size(), moving.dim());
  const std::size_t chunk = detail::chunk_size(cfg.jobs);
  std::vector<BatchPair> pairs;
  std::vector<BatchGradient> grads;
  double sum = 0.0;
  for (std::uint64_t start = 0; start < count; start += chunk) {
    const auto len = static_cast<std::size_t>(std::min<std::uint64_t>(chunk, count - start));
    pairs.resize(len);
    grads.assign(len, BatchGradient{});
    for (std::size_t i = 0; i < len; ++i) next_pair(start + i, pairs[i]);
    parallel_for(len, cfg.jobs, [&](std::size_t i) {
      grads[i] = batch_gradient(fixed.subset(pairs[i].source), moving.subset(pairs[i].target), cost,
                                cfg.loss, cfg.sinkhorn);
    });
    for (std::size_t i = 0; i < len; ++i) {
      sum += grads[i].value;
      out.field.stale = out.field.stale || !grads[i].converged;
      for (std::size_t j = 0; j < pairs[i].target.size(); ++j)
        out.field.grad.row(pairs[i].target[j]) += grads[i].grad.row(static_cast<Index>(j));
    }
  }
  out.field.grad /= static_cast<double>(count);
  out.loss = sum / static_cast<double>(count);
  return out;
}

}  // namespace

MinibatchGradient grad_minibatch(const PointCloud& fixed, const PointCloud& moving,
                                 const CostSpec& cost, const MinibatchConfig& cfg) {
  check(fixed, moving, cost);
  require_smooth(cfg.loss);
  cfg.validate(fixed.size(), moving.size());
  if (cfg.pair_sampling == PairSampling::iid) {
    return average_over(fixed, moving, cost, cfg, static_cast<std::uint64_t>(cfg.k),
                        [&](std::uint64_t t, BatchPair& p) {
                          p = sample_pair(cfg.seed, t, fixed.size(), moving.size(), cfg.m);
                        });
  }
  const auto pairs = draw_pairs(fixed.size(), moving.size(), cfg);
  return average_over(fixed, moving, cost, cfg, pairs.size(),
                      [&](std::uint64_t t, BatchPair& p) { p = pairs[t]; });
}

GradField grad_minibatch_exact(const PointCloud& fixed, const PointCloud& moving,
                               const CostSpec& cost, const MinibatchConfig& cfg) {
  check(fixed, moving, cost);
  require_smooth(cfg.loss);
  cfg.validate(fixed.size(), moving.size());
  const auto total = detail::enumeration_size(fixed.size(), moving.size(), cfg.m, cfg.enumeration_cap);
  detail::PairEnumerator pairs(fixed.size(), moving.size(), cfg.m);
  return average_over(fixed, moving, cost, cfg, total,
                      [&](std::uint64_t, BatchPair& p) { pairs.next(p); })
      .field;
}

}  // namespace mbot
