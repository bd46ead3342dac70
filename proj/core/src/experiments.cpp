#include "mbot/experiments.hpp"

#include "batch_runner.hpp"
#include "mbot/io.hpp"
#include "mbot/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <tuple>

namespace mbot {

Points CloudGenerator::sample(CounterRng& rng, Index n) const {
  Points p(n, dim);
  if (kind == Kind::uniform) {
    for (Index i = 0; i < n; ++i)
      for (Index d = 0; d < dim; ++d) p(i, d) = rng.uniform();
    return p;
  }
  CounterRng layout(layout_seed, 0);
  Points centers(components, dim);
  for (Index c = 0; c < components; ++c)
    for (Index d = 0; d < dim; ++d) centers(c, d) = 0.2 + 0.6 * layout.uniform();
  for (Index i = 0; i < n; ++i) {
    const auto c = static_cast<Index>(rng.below(static_cast<std::uint64_t>(components)));
    for (Index d = 0; d < dim; ++d)
      p(i, d) = std::clamp(centers(c, d) + spread * rng.normal(), 0.0, 1.0);
  }
  return p;
}

PointSampler CloudGenerator::sampler() const {
  return [gen = *this](CounterRng& rng, Index m) { return gen.sample(rng, m); };
}

double CloudGenerator::diameter_bound() const { return std::sqrt(static_cast<double>(dim)); }

CloudGenerator::Kind parse_generator_kind(std::string_view name) {
  if (name == "uniform") return CloudGenerator::Kind::uniform;
  if (name == "gaussian_mixture" || name == "gaussian") return CloudGenerator::Kind::gaussian_mixture;
  throw std::invalid_argument("unknown generator: " + std::string(name));
}

namespace {

std::uint64_t task_seed(std::uint64_t seed, Index n, Index m, int rep) {
  return derive_seed(derive_seed(derive_seed(seed, static_cast<std::uint64_t>(n)),
                                 static_cast<std::uint64_t>(m)),
                     static_cast<std::uint64_t>(rep));
}

}  // namespace

std::vector<ExperimentRecord> run_deviation_experiment(const DeviationExperiment& exp) {
  if (exp.reps < 1) throw std::invalid_argument("need at least one repetition");
  if (!(exp.delta > 0.0 && exp.delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (exp.source.dim != exp.target.dim) throw std::invalid_argument("generator dimensions differ");

  // Group k values by (n, m): one pair of clouds and one reference per rep.
  std::map<std::pair<Index, Index>, std::vector<Index>> groups;
  for (const auto& g : exp.grid) {
    if (g.m < 1 || g.m > g.n || g.k < 1) throw std::invalid_argument("invalid grid point");
    groups[{g.n, g.m}].push_back(g.k);
  }
  struct Task {
    Index n, m;
    const std::vector<Index>* ks;
    int rep;
  };
  std::vector<Task> tasks;
  for (const auto& [nm, ks] : groups)
    for (int r = 0; r < exp.reps; ++r) tasks.push_back({nm.first, nm.second, &ks, r});

  std::vector<std::vector<ExperimentRecord>> per_task(tasks.size());
  parallel_for(tasks.size(), exp.jobs, [&](std::size_t t) {
    const Task& task = tasks[t];
    const std::uint64_t seed = task_seed(exp.seed, task.n, task.m, task.rep);
    CounterRng rng(seed, 0);
    const PointCloud a(exp.source.sample(rng, task.n));
    const PointCloud b(exp.target.sample(rng, task.n));
    const double bound_c = cost_bound(exp.cost.kind, support_diameter(a.points(), b.points()));

    MinibatchConfig cfg;
    cfg.m = task.m;
    cfg.loss = exp.loss;
    cfg.sinkhorn = exp.sinkhorn;
    cfg.enumeration_cap = exp.enumeration_cap;

    ReferenceKind kind = ReferenceKind::exact;
    double reference = std::nan("");
    try {
      detail::enumeration_size(task.n, task.n, task.m, exp.enumeration_cap);
      reference = u_stat_exact(a, b, exp.cost, cfg);
    } catch (const EnumerationCapExceeded&) {
      kind = ReferenceKind::surrogate;
      const Index k_max = *std::max_element(task.ks->begin(), task.ks->end());
      MinibatchConfig ref = cfg;
      ref.k = std::max(exp.min_reference_draws, 100 * k_max);
      ref.seed = derive_seed(seed, 1);
      try {
        reference = u_stat_subsampled(a, b, exp.cost, ref).value;
      } catch (const std::exception&) {
        kind = ReferenceKind::unavailable;
      }
    }

    for (const Index k : *task.ks) {
      cfg.k = k;
      cfg.seed = derive_seed(seed, 2 + static_cast<std::uint64_t>(k));
      ExperimentRecord rec;
      rec.n = task.n;
      rec.m = task.m;
      rec.k = k;
      rec.rep = task.rep;
      rec.seed = seed;
      rec.estimate = u_stat_subsampled(a, b, exp.cost, cfg).value;
      rec.reference = reference;
      rec.reference_kind = kind;
      rec.bound = hoeffding_deviation(BoundInputs{task.n, task.m, k, exp.delta,
                                                  exp.sinkhorn.epsilon, bound_c, exp.loss});
      if (kind == ReferenceKind::unavailable) {
        rec.abs_error = std::nan("");
        rec.within_bound = false;
      } else {
        rec.abs_error = std::abs(rec.estimate - reference);
        rec.within_bound = rec.abs_error <= rec.bound;
      }
      per_task[t].push_back(rec);
    }
  });

  std::vector<ExperimentRecord> out;
  for (auto& v : per_task) out.insert(out.end(), v.begin(), v.end());
  std::sort(out.begin(), out.end(), [](const auto& l, const auto& r) {
    return std::tie(l.n, l.m, l.k, l.rep) < std::tie(r.n, r.m, r.k, r.rep);
  });
  return out;
}

void write_records_csv(std::ostream& out, std::span<const ExperimentRecord> records) {
  out << "n,m,k,rep,seed,estimate,reference,abs_error,bound,within_bound\n";
  for (const auto& r : records) {
    out << r.n << ',' << r.m << ',' << r.k << ',' << r.rep << ',' << r.seed << ','
        << format_double(r.estimate) << ',' << format_double(r.reference) << ','
        << format_double(r.abs_error) << ',' << format_double(r.bound) << ','
        << (r.within_bound ? 1 : 0) << '\n';
  }
}

std::vector<CoverageSummary> summarize_coverage(std::span<const ExperimentRecord> records) {
  std::map<std::tuple<Index, Index, Index>, CoverageSummary> acc;
  std::map<std::tuple<Index, Index, Index>, int> counts;
  for (const auto& r : records) {
    auto key = std::make_tuple(r.n, r.m, r.k);
    auto [it, fresh] = acc.try_emplace(key, CoverageSummary{r.n, r.m, r.k, 0.0, 0.0, 0});
    auto& s = it->second;
    int& c = counts[key];
    if (r.reference_kind == ReferenceKind::unavailable) {
      ++s.flagged;
      continue;
    }
    ++c;
    s.coverage += r.within_bound ? 1.0 : 0.0;
    s.mean_abs_error += r.abs_error;
  }
  std::vector<CoverageSummary> out;
  for (auto& [key, s] : acc) {
    const int c = counts[key];
    if (c > 0) {
      s.coverage /= c;
      s.mean_abs_error /= c;
    }
    out.push_back(s);
  }
  return out;
}

MarginalReport run_marginal_experiment(const PointCloud& a, const PointCloud& b,
                                       const CostSpec& cost, std::span<const Index> m_list,
                                       std::span<const Index> k_list, int reps,
                                       std::uint64_t seed, double delta, int jobs, LossKind loss,
                                       const SinkhornParams& sinkhorn) {
  if (reps < 1) throw std::invalid_argument("need at least one repetition");
  if (a.dim() != b.dim()) throw std::invalid_argument("clouds have different dimensions");
  struct Task {
    Index m, k;
    int rep;
  };
  struct Outcome {
    double row_l1 = 0.0, col_l1 = 0.0;
    Index within = 0, total = 0;
  };
  std::vector<Task> tasks;
  for (Index m : m_list)
    for (Index k : k_list)
      for (int r = 0; r < reps; ++r) tasks.push_back({m, k, r});

  std::vector<Outcome> outcomes(tasks.size());
  parallel_for(tasks.size(), jobs, [&](std::size_t t) {
    const Task& task = tasks[t];
    MinibatchConfig cfg;
    cfg.m = task.m;
    cfg.k = task.k;
    cfg.loss = loss;
    cfg.sinkhorn = sinkhorn;
    cfg.seed = task_seed(seed, task.m, task.k, task.rep);
    cfg.validate(a.size(), b.size());
    Vector rows = Vector::Zero(a.size());
    Vector cols = Vector::Zero(b.size());
    detail::run_batches(
        static_cast<std::uint64_t>(task.k), 1,
        [&](std::uint64_t i, BatchPair& p) { p = sample_pair(cfg.seed, i, a.size(), b.size(), cfg.m); },
        [&](const BatchPair& p) { return evaluate_batch(a, b, p, cost, cfg); },
        [&](std::uint64_t, const BatchPair& p, const BatchResult& r) {
          r.coupling.for_each([&](Index i, Index j, double w) {
            rows(p.source[static_cast<std::size_t>(i)]) += w;
            cols(p.target[static_cast<std::size_t>(j)]) += w;
          });
        });
    rows /= static_cast<double>(task.k);
    cols /= static_cast<double>(task.k);
    const double bound = marginal_bound(task.k, delta);
    Outcome& o = outcomes[t];
    const double ra = 1.0 / static_cast<double>(a.size());
    const double cb = 1.0 / static_cast<double>(b.size());
    for (Index i = 0; i < rows.size(); ++i) {
      const double dev = std::abs(rows(i) - ra);
      o.row_l1 += dev;
      o.within += dev <= bound;
    }
    for (Index j = 0; j < cols.size(); ++j) {
      const double dev = std::abs(cols(j) - cb);
      o.col_l1 += dev;
      o.within += dev <= bound;
    }
    o.total = rows.size() + cols.size();
  });

  MarginalReport report;
  std::size_t t = 0;
  for (Index m : m_list) {
    std::vector<double> ks, errs;
    for (Index k : k_list) {
      MarginalRow row;
      row.m = m;
      row.k = k;
      row.bound = marginal_bound(k, delta);
      Index within = 0, total = 0;
      for (int r = 0; r < reps; ++r, ++t) {
        row.row_l1 += outcomes[t].row_l1;
        row.col_l1 += outcomes[t].col_l1;
        within += outcomes[t].within;
        total += outcomes[t].total;
      }
      row.row_l1 /= reps;
      row.col_l1 /= reps;
      row.mean_l1 = 0.5 * (row.row_l1 + row.col_l1);
      row.coverage = static_cast<double>(within) / static_cast<double>(total);
      report.rows.push_back(row);
      ks.push_back(static_cast<double>(k));
      errs.push_back(row.mean_l1);
    }
    const bool fittable = ks.size() >= 2 &&
                          std::all_of(errs.begin(), errs.end(), [](double e) { return e > 0.0; });
    report.slopes.emplace_back(m, fittable ? loglog_slope(ks, errs) : std::nan(""));
  }
  return report;
}

void write_marginal_csv(std::ostream& out, const MarginalReport& report) {
  out << "m,k,row_l1,col_l1,mean_l1,bound,coverage\n";
  for (const auto& r : report.rows) {
    out << r.m << ',' << r.k << ',' << format_double(r.row_l1) << ',' << format_double(r.col_l1)
        << ',' << format_double(r.mean_l1) << ',' << format_double(r.bound) << ','
        << format_double(r.coverage) << '\n';
  }
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace mbot
