#include "mbot/minibatch.hpp"

#include "batch_runner.hpp"
#include "mbot/exact.hpp"
#include "mbot/subsets.hpp"

#include <stdexcept>
#include <string>
#include <unordered_set>

namespace mbot {

std::string_view to_string(LossKind loss) {
  switch (loss) {
    case LossKind::wasserstein:
      return "W";
    case LossKind::entropic:
      return "W_eps";
    case LossKind::sinkhorn_divergence:
      return "S_eps";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "W") return LossKind::wasserstein;
  if (name == "W_eps") return LossKind::entropic;
  if (name == "S_eps") return LossKind::sinkhorn_divergence;
  throw std::invalid_argument("unknown loss: " + std::string(name) + " (expected W, W_eps, S_eps)");
}

void MinibatchConfig::validate(Index n_source, Index n_target) const {
  if (m < 1 || m > n_source || m > n_target) {
    throw std::invalid_argument("minibatch size m=" + std::to_string(m) +
                                " must satisfy 1 <= m <= min(n_source, n_target)");
  }
  if (k < 1) throw std::invalid_argument("number of batch pairs k must be at least 1");
  if (loss != LossKind::wasserstein) sinkhorn.validate();
}

Index BatchCoupling::size() const {
  return is_permutation() ? static_cast<Index>(match.size()) : dense.rows();
}

BatchPair sample_pair(std::uint64_t seed, std::uint64_t draw, Index n_source, Index n_target,
                      Index m) {
  if (m > n_source || m > n_target) throw std::invalid_argument("sample_pair: m exceeds n");
  CounterRng rng(seed, draw);
  BatchPair p;
  p.source = sample_subset(rng, n_source, m);
  p.target = sample_subset(rng, n_target, m);
  return p;
}

BatchResult evaluate_loss(const PointCloud& a, const PointCloud& b, const CostSpec& cost,
                          LossKind loss, const SinkhornParams& params) {
  BatchResult r;
  switch (loss) {
    case LossKind::wasserstein: {
      ExactSolution s = solve_exact(a, b, cost);
      r.value = s.value;
      r.coupling.match = std::move(s.match);
      break;
    }
    case LossKind::entropic: {
      SinkhornResult s = sinkhorn(a, b, cost, params);
      r.value = s.value;
      r.converged = s.converged;
      r.coupling.dense = std::move(s.plan);
      break;
    }
    case LossKind::sinkhorn_divergence: {
      DivergenceResult s = sinkhorn_divergence_full(a, b, cost, params);
      r.value = s.value;
      r.converged = s.converged();
      r.coupling.dense = std::move(s.cross.plan);
      break;
    }
  }
  return r;
}

BatchResult evaluate_batch(const PointCloud& a, const PointCloud& b, const BatchPair& pair,
                           const CostSpec& cost, const MinibatchConfig& cfg) {
  return evaluate_loss(a.subset(pair.source), b.subset(pair.target), cost, cfg.loss, cfg.sinkhorn);
}

namespace detail {

std::uint64_t enumeration_size(Index n_source, Index n_target, Index m, std::uint64_t cap) {
  const auto cs = binomial(static_cast<std::uint64_t>(n_source), static_cast<std::uint64_t>(m));
  const auto ct = binomial(static_cast<std::uint64_t>(n_target), static_cast<std::uint64_t>(m));
  const bool over = !cs || !ct || (*cs != 0 && *ct > cap / *cs);
  if (over || *cs * *ct > cap) {
    throw EnumerationCapExceeded("enumerating all batch pairs exceeds the cap of " +
                                 std::to_string(cap) +
                                 " pairs; use u_stat_subsampled / plan_subsampled instead");
  }
  return *cs * *ct;
}

}  // namespace detail

std::vector<BatchPair> draw_pairs(Index n_source, Index n_target, const MinibatchConfig& cfg) {
  cfg.validate(n_source, n_target);
  std::vector<BatchPair> pairs(static_cast<std::size_t>(cfg.k));
  if (cfg.pair_sampling == PairSampling::iid) {
    for (Index t = 0; t < cfg.k; ++t)
      pairs[static_cast<std::size_t>(t)] =
          sample_pair(cfg.seed, static_cast<std::uint64_t>(t), n_source, n_target, cfg.m);
    return pairs;
  }
  const auto total = detail::enumeration_size(n_source, n_target, cfg.m, cfg.enumeration_cap);
  if (static_cast<std::uint64_t>(cfg.k) > total) {
    throw std::invalid_argument("distinct pair sampling: k exceeds the number of batch pairs");
  }
  const auto per_source =
      *binomial(static_cast<std::uint64_t>(n_target), static_cast<std::uint64_t>(cfg.m));
  // Floyd's algorithm on pair ranks, visited in ascending rank order.
  CounterRng rng(cfg.seed, ~std::uint64_t{0});
  std::unordered_set<std::uint64_t> chosen;
  std::vector<std::uint64_t> ranks;
  for (std::uint64_t j = total - static_cast<std::uint64_t>(cfg.k); j < total; ++j) {
    const std::uint64_t t = rng.below(j + 1);
    const std::uint64_t pick = chosen.contains(t) ? j : t;
    chosen.insert(pick);
    ranks.push_back(pick);
  }
  std::sort(ranks.begin(), ranks.end());
  for (std::size_t t = 0; t < ranks.size(); ++t) {
    pairs[t].source = unrank_subset(n_source, cfg.m, ranks[t] / per_source);
    pairs[t].target = unrank_subset(n_target, cfg.m, ranks[t] % per_source);
  }
  return pairs;
}

namespace {

void check_clouds(const PointCloud& a, const PointCloud& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("clouds have different dimensions");
}

}  // namespace

double u_stat_exact(const PointCloud& a, const PointCloud& b, const CostSpec& cost,
                    const MinibatchConfig& cfg) {
  check_clouds(a, b);
  cfg.validate(a.size(), b.size());
  const auto total = detail::enumeration_size(a.size(), b.size(), cfg.m, cfg.enumeration_cap);
  detail::PairEnumerator pairs(a.size(), b.size(), cfg.m);
  double sum = 0.0;
  detail::run_batches(
      total, cfg.jobs, [&](std::uint64_t, BatchPair& p) { pairs.next(p); },
      [&](const BatchPair& p) { return evaluate_batch(a, b, p, cost, cfg); },
      [&](std::uint64_t, const BatchPair&, const BatchResult& r) { sum += r.value; });
  return sum / static_cast<double>(total);
}

SubsampledEstimate u_stat_subsampled(const PointCloud& a, const PointCloud& b,
                                     const CostSpec& cost, const MinibatchConfig& cfg) {
  check_clouds(a, b);
  const std::vector<BatchPair> pairs = draw_pairs(a.size(), b.size(), cfg);
  SubsampledEstimate est;
  est.per_draw.resize(pairs.size());
  double sum = 0.0;
  detail::run_batches(
      pairs.size(), cfg.jobs, [&](std::uint64_t t, BatchPair& p) { p = pairs[t]; },
      [&](const BatchPair& p) { return evaluate_batch(a, b, p, cost, cfg); },
      [&](std::uint64_t t, const BatchPair&, const BatchResult& r) {
        est.per_draw[t] = r.value;
        est.converged = est.converged && r.converged;
        sum += r.value;
      });
  est.value = sum / static_cast<double>(pairs.size());
  return est;
}

namespace {

void embed(SparsePlan& plan, const BatchPair& pair, const BatchCoupling& coupling) {
  coupling.for_each([&](Index i, Index j, double w) {
    plan.add(pair.source[static_cast<std::size_t>(i)], pair.target[static_cast<std::size_t>(j)], w);
  });
}

}  // namespace

SparsePlan plan_averaged_exact(const PointCloud& a, const PointCloud& b, const CostSpec& cost,
                               const MinibatchConfig& cfg) {
  check_clouds(a, b);
  cfg.validate(a.size(), b.size());
  const auto total = detail::enumeration_size(a.size(), b.size(), cfg.m, cfg.enumeration_cap);
  detail::PairEnumerator pairs(a.size(), b.size(), cfg.m);
  SparsePlan plan(a.size(), b.size());
  detail::run_batches(
      total, cfg.jobs, [&](std::uint64_t, BatchPair& p) { pairs.next(p); },
      [&](const BatchPair& p) { return evaluate_batch(a, b, p, cost, cfg); },
      [&](std::uint64_t, const BatchPair& p, const BatchResult& r) { embed(plan, p, r.coupling); });
  plan.scale(1.0 / static_cast<double>(total));
  plan.set_draw_count(total);
  return plan;
}

SparsePlan plan_subsampled(const PointCloud& a, const PointCloud& b, const CostSpec& cost,
                           const MinibatchConfig& cfg, std::uint64_t dense_cap) {
  check_clouds(a, b);
  cfg.validate(a.size(), b.size());
  SparsePlan plan(a.size(), b.size(), dense_cap);
  const bool iid = cfg.pair_sampling == PairSampling::iid;
  // i.i.d. pairs are generated on the fly so memory stays O(m) per draw.
  const std::vector<BatchPair> listed = iid ? std::vector<BatchPair>{} : draw_pairs(a.size(), b.size(), cfg);
  detail::run_batches(
      static_cast<std::uint64_t>(cfg.k), cfg.jobs,
      [&](std::uint64_t t, BatchPair& p) {
        p = iid ? sample_pair(cfg.seed, t, a.size(), b.size(), cfg.m) : listed[t];
      },
      [&](const BatchPair& p) { return evaluate_batch(a, b, p, cost, cfg); },
      [&](std::uint64_t, const BatchPair& p, const BatchResult& r) { embed(plan, p, r.coupling); });
  plan.scale(1.0 / static_cast<double>(cfg.k));
  plan.set_draw_count(static_cast<std::uint64_t>(cfg.k));
  return plan;
}

double u_stat_semidiscrete(const PointCloud& a, const PointSampler& beta_sampler,
                           const CostSpec& cost, const MinibatchConfig& cfg, Index draws) {
  if (draws < 1) throw std::invalid_argument("u_stat_semidiscrete: draws must be positive");
  cfg.validate(a.size(), cfg.m);
  std::vector<double> values(static_cast<std::size_t>(draws));
  parallel_for(values.size(), cfg.jobs, [&](std::size_t t) {
    CounterRng rng(cfg.seed, t);
    const auto source = sample_subset(rng, a.size(), cfg.m);
    PointCloud y(beta_sampler(rng, cfg.m));
    if (y.dim() != a.dim() || y.size() != cfg.m) {
      throw std::invalid_argument("beta sampler returned points of the wrong shape");
    }
    values[t] = evaluate_loss(a.subset(source), y, cost, cfg.loss, cfg.sinkhorn).value;
  });
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(draws);
}

}  // namespace mbot
