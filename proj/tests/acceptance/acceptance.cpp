// Acceptance suite: one PASS/FAIL line per criterion.
//
//   mbot_acceptance            run everything
//   mbot_acceptance 4 9        run selected criteria
//
// A report is also written to acceptance_report.txt in the working directory.

#include "heap_probe.hpp"
#include "oracles.hpp"

#include "mbot/bounds.hpp"
#include "mbot/closed_form.hpp"
#include "mbot/exact.hpp"
#include "mbot/experiments.hpp"
#include "mbot/flow.hpp"
#include "mbot/gradients.hpp"
#include "mbot/minibatch.hpp"
#include "mbot/timing.hpp"
#include "mbot/transfer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace mbot;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

// Accumulates sub-checks; the first failing one is named in the detail.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && pass_) {
      pass_ = false;
      failed_ = what;
    }
  }
  void note(const std::string& s) {
    if (!notes_.empty()) notes_ += "; ";
    notes_ += s;
  }
  Verdict verdict() const {
    return {pass_, pass_ ? notes_ : "failed: " + failed_ + (notes_.empty() ? "" : " | " + notes_)};
  }

 private:
  bool pass_ = true;
  std::string failed_;
  std::string notes_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string sci(double v) { return fmt("%.2e", v); }

Verdict exact_oracle() {
  Checks c;
  std::mt19937_64 gen(101);
  const CostKind kinds[] = {CostKind::euclidean, CostKind::sq_euclidean};
  double worst = 0.0, worst_1d = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Index n = 1 + t % 7;
    const Index d = 1 + (t / 7) % 3;
    const Points x = oracle::random_points(gen, n, d);
    const Points y = oracle::random_points(gen, n, d);
    const CostSpec cost{kinds[t % 2]};
    const auto brute = oracle::brute_assignment(cost_matrix(x, y, cost));
    const auto lap = solve_exact_assignment(PointCloud(x), PointCloud(y), cost);
    worst = std::max(worst, std::abs(lap.value - brute.value));
  }
  for (int t = 0; t < 100; ++t) {
    const Index n = 1 + t % 7;
    const Points x = oracle::random_points(gen, n, 1, -5, 5);
    const Points y = oracle::random_points(gen, n, 1, -5, 5);
    for (auto kind : {CostKind::abs, CostKind::sq_euclidean}) {
      const double brute = oracle::brute_assignment(cost_matrix(x, y, {kind})).value;
      const double sorted = solve_exact_1d(PointCloud(x), PointCloud(y), {kind}).value;
      worst_1d = std::max(worst_1d, std::abs(sorted - brute));
    }
  }
  c.expect(worst <= 1e-12, "assignment vs enumeration");
  c.expect(worst_1d <= 1e-12, "1D sorted vs enumeration");
  c.note("100 instances, max |dvalue| " + sci(worst) + ", 1D " + sci(worst_1d));
  return c.verdict();
}

Verdict minibatch_enumeration() {
  Checks c;
  std::mt19937_64 gen(202);
  MinibatchConfig cfg;
  cfg.m = 2;
  double worst_u = 0, worst_plan = 0, worst_inner = 0, worst_marg = 0;
  Index pairs = 0;
  for (int t = 0; t < 10; ++t) {
    // 1D instances use the strictly convex cost so the batch optimum is unique.
    const Index d = 1 + t % 2;
    const CostSpec cost{d == 1 ? CostKind::sq_euclidean : CostKind::euclidean};
    const Points x = oracle::random_points(gen, 4, d);
    const Points y = oracle::random_points(gen, 4, d);
    const auto hand = oracle::enumerate_minibatch_w(x, y, 2, cost);
    pairs = hand.pairs;
    const PointCloud a(x), b(y);
    const double u = u_stat_exact(a, b, cost, cfg);
    const Matrix plan = plan_averaged_exact(a, b, cost, cfg).to_dense();
    const Matrix cm = cost_matrix(x, y, cost);
    worst_u = std::max(worst_u, std::abs(u - hand.u_stat));
    worst_plan = std::max(worst_plan, (plan - hand.plan).cwiseAbs().maxCoeff());
    worst_inner = std::max(worst_inner, std::abs((plan.array() * cm.array()).sum() - u));
    worst_marg = std::max({worst_marg, (plan.rowwise().sum().array() - 0.25).abs().maxCoeff(),
                           (plan.colwise().sum().array() - 0.25).abs().maxCoeff()});
  }
  c.expect(pairs == 36, "36 subset pairs");
  c.expect(worst_u <= 1e-12, "U_W vs hand enumeration");
  c.expect(worst_plan <= 1e-12, "Pi_m vs hand enumeration");
  c.expect(worst_inner <= 1e-10, "<Pi_m, C> = U_W");
  c.expect(worst_marg <= 1e-10, "Pi_m marginals");
  c.note("n=4 m=2, " + std::to_string(pairs) + " pairs x 10 instances; |dU| " + sci(worst_u) +
         ", |dPi| " + sci(worst_plan) + ", |<Pi,C>-U| " + sci(worst_inner) + ", marginals " +
         sci(worst_marg));
  return c.verdict();
}

Verdict closed_form() {
  Checks c;
  std::mt19937_64 gen(303);
  double worst = 0;
  int cases = 0;
  for (Index n = 1; n <= 10; ++n)
    for (Index m = 1; m <= n; ++m) {
      Points x = oracle::random_points(gen, n, 1);
      Points y = oracle::random_points(gen, n, 1);
      std::sort(x.data(), x.data() + n);
      std::sort(y.data(), y.data() + n);
      MinibatchConfig cfg;
      cfg.m = m;
      const Matrix enumerated =
          plan_averaged_exact(PointCloud(x), PointCloud(y), {CostKind::abs}, cfg).to_dense();
      worst = std::max(worst, (enumerated - closed_form_1d(n, m)).cwiseAbs().maxCoeff());
      ++cases;
    }
  double endpoints = 0;
  for (Index n = 1; n <= 10; ++n) {
    endpoints = std::max(endpoints, (closed_form_1d(n, n) - Matrix::Identity(n, n) / double(n))
                                        .cwiseAbs()
                                        .maxCoeff());
    endpoints = std::max(endpoints, (closed_form_1d(n, 1).array() - 1.0 / double(n * n)).abs().maxCoeff());
  }
  c.expect(worst <= 1e-9, "closed form vs enumerated Pi_m");
  c.expect(endpoints <= 1e-15, "m=n identity/n and m=1 flat");
  c.note(std::to_string(cases) + " (n,m) cases, max entry diff " + sci(worst) + ", endpoints " +
         sci(endpoints));
  return c.verdict();
}

Verdict theorem1() {
  Checks c;
  DeviationExperiment e;
  e.grid = {{100, 10, 10}, {100, 10, 100}, {100, 10, 1000}};
  e.reps = 200;
  e.delta = 0.1;
  e.seed = 404;
  e.min_reference_draws = 100000;
  e.jobs = 0;
  const auto recs = run_deviation_experiment(e);
  const auto summary = summarize_coverage(recs);
  std::vector<double> ks, errs;
  std::string cov;
  for (const auto& s : summary) {
    c.expect(s.flagged == 0, "reference available");
    c.expect(s.coverage >= 0.9, "coverage at k=" + std::to_string(s.k));
    ks.push_back(static_cast<double>(s.k));
    errs.push_back(s.mean_abs_error);
    cov += (cov.empty() ? "" : " ") + std::to_string(s.k) + ":" + fmt("%.3f", s.coverage) + "/" +
           sci(s.mean_abs_error);
  }
  for (const auto& r : recs) c.expect(r.reference_kind == ReferenceKind::surrogate, "surrogate reference");
  const double slope = loglog_slope(ks, errs);
  c.expect(std::abs(slope + 0.5) <= 0.1, "error-vs-k slope");
  c.note("k:coverage/mean|err| " + cov + ", slope " + fmt("%.3f", slope));
  return c.verdict();
}

Verdict theorem2() {
  Checks c;
  CloudGenerator g;
  g.dim = 1;
  CounterRng rng(505, 0);
  const PointCloud a(g.sample(rng, 1000));
  const PointCloud b(g.sample(rng, 1000));
  const std::vector<Index> ms{10, 50, 100};
  const std::vector<Index> ks{10, 30, 100, 300, 1000, 3000, 10000};
  const auto rep = run_marginal_experiment(a, b, {CostKind::abs}, ms, ks, 20, 505, 0.1, 0);
  std::string slopes;
  for (const auto& [m, s] : rep.slopes) {
    c.expect(std::abs(s + 0.5) <= 0.1, "slope at m=" + std::to_string(m));
    slopes += (slopes.empty() ? "" : " ") + std::to_string(m) + ":" + fmt("%.3f", s);
  }
  double min_cov = 1.0;
  for (const auto& r : rep.rows) min_cov = std::min(min_cov, r.coverage);
  c.expect(min_cov >= 0.9, "marginal bound coverage");
  // Larger batches give a smaller constant.
  for (std::size_t i = 0; i < ks.size(); ++i)
    c.expect(rep.rows[i].mean_l1 > rep.rows[ks.size() + i].mean_l1 &&
                 rep.rows[ks.size() + i].mean_l1 > rep.rows[2 * ks.size() + i].mean_l1,
             "ordering in m");
  c.note("m:slope " + slopes + ", min coverage " + fmt("%.4f", min_cov));
  return c.verdict();
}

SinkhornParams tight(double eps) {
  SinkhornParams p;
  p.epsilon = eps;
  p.tol = 1e-14;
  p.max_iters = 200000;
  return p;
}

Verdict gradients() {
  Checks c;
  std::mt19937_64 gen(606);
  const CostSpec cost{CostKind::sq_euclidean};
  const double eps_list[] = {0.05, 0.2, 1.0};
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const Index n = 2 + t % 7;
    const Index d = 1 + t % 3;
    const double eps = eps_list[t % 3];
    const PointCloud a(oracle::random_points(gen, n, d));
    const Points y = oracle::random_points(gen, n, d);
    const SinkhornParams p = tight(eps);
    const auto ge = grad_entropic_positions(a, PointCloud(y), cost, p);
    const auto fe = oracle::finite_difference(
        [&](const Points& q) { return sinkhorn(a, PointCloud(q), cost, p).value; }, y, 1e-5);
    const auto gs = grad_divergence_positions(a, PointCloud(y), cost, p);
    const auto fs = oracle::finite_difference(
        [&](const Points& q) { return sinkhorn_divergence(a, PointCloud(q), cost, p); }, y, 1e-5);
    c.expect(!ge.stale && !gs.stale, "converged Sinkhorn");
    worst = std::max(worst, (ge.grad - fe).cwiseAbs().maxCoeff() / fe.cwiseAbs().maxCoeff());
    worst = std::max(worst, (gs.grad - fs).cwiseAbs().maxCoeff() / fs.cwiseAbs().maxCoeff());
  }
  c.expect(worst <= 1e-4, "relative error vs finite differences");
  c.note("20 instances x {W_eps, S_eps}, max relative error " + sci(worst));
  return c.verdict();
}

Verdict theorem3() {
  Checks c;
  std::mt19937_64 gen(707);
  const PointCloud a(oracle::random_points(gen, 6, 2));
  const PointCloud b(oracle::random_points(gen, 6, 2));
  const CostSpec cost{CostKind::sq_euclidean};
  const int draws = 5000;
  double worst_z = 0;
  for (auto loss : {LossKind::entropic, LossKind::sinkhorn_divergence}) {
    MinibatchConfig cfg;
    cfg.m = 2;
    cfg.k = 1;
    cfg.loss = loss;
    cfg.sinkhorn = tight(0.1);
    const Points exact = grad_minibatch_exact(a, b, cost, cfg).grad;
    Points sum = Points::Zero(6, 2), sq = Points::Zero(6, 2);
    for (int t = 0; t < draws; ++t) {
      cfg.seed = derive_seed(707, static_cast<std::uint64_t>(t));
      const Points g = grad_minibatch(a, b, cost, cfg).field.grad;
      sum += g;
      sq += g.cwiseProduct(g);
    }
    const Points mean = sum / draws;
    for (Index i = 0; i < mean.size(); ++i) {
      const double var = (sq.data()[i] - draws * mean.data()[i] * mean.data()[i]) / (draws - 1);
      const double se = std::sqrt(std::max(var, 0.0) / draws);
      const double z = std::abs(mean.data()[i] - exact.data()[i]) / se;
      worst_z = std::max(worst_z, z);
      c.expect(z <= 3.0, std::string(to_string(loss)) + " coordinate " + std::to_string(i));
    }
  }
  c.note("n=6 m=2, 5000 single-pair draws, 12 coords x {W_eps, S_eps}, max |mean-exact|/SE " +
         fmt("%.2f", worst_z));
  return c.verdict();
}

Points disc(CounterRng& rng, Index n, double cx, double cy, double r) {
  Points p(n, 2);
  for (Index i = 0; i < n; ++i) {
    const double rho = r * std::sqrt(rng.uniform());
    const double th = 2 * M_PI * rng.uniform();
    p(i, 0) = cx + rho * std::cos(th);
    p(i, 1) = cy + rho * std::sin(th);
  }
  return p;
}

Verdict gradient_flow_check() {
  Checks c;
  CounterRng rng(808, 0);
  const PointCloud source(disc(rng, 500, 0.25, 0.25, 0.15));
  // Target: a ring around (0.7, 0.6).
  Points ring(500, 2);
  for (Index i = 0; i < 500; ++i) {
    const double th = 2 * M_PI * rng.uniform();
    const double rho = 0.2 + 0.05 * rng.uniform();
    ring(i, 0) = 0.7 + rho * std::cos(th);
    ring(i, 1) = 0.6 + rho * std::sin(th);
  }
  const PointCloud target(ring);
  const CostSpec cost{CostKind::sq_euclidean};
  FlowConfig fc;
  fc.step_size = 0.05;
  fc.iters = 750;
  fc.batches.m = 50;
  fc.batches.k = 10;
  fc.batches.loss = LossKind::sinkhorn_divergence;
  fc.batches.sinkhorn.epsilon = 0.05;
  fc.batches.sinkhorn.tol = 1e-6;
  fc.batches.seed = 808;
  const auto traj = gradient_flow(source, target, cost, fc);

  // Before/after comparison on a common set of evaluation batches.
  MinibatchConfig eval = fc.batches;
  eval.k = 200;
  eval.seed = 8080;
  const double before = u_stat_subsampled(target, source, cost, eval).value;
  const double after = u_stat_subsampled(target, PointCloud(traj.final_points()), cost, eval).value;
  c.expect(!traj.diverged, "no divergence");
  c.expect(after <= 0.1 * before, "loss reduced to 10%");
  c.expect(after > 0.0, "final loss positive for m < n");
  // Fixed-batch monitor, one entry per recorded snapshot.
  const auto& mon = traj.monitor_trace;
  int mon_down = 0;
  for (std::size_t i = 1; i < mon.size(); ++i) mon_down += mon[i] <= mon[i - 1];
  const double mon_frac = mon_down / double(mon.size() - 1);
  c.expect(mon_frac >= 0.9, "monitor trace nonincreasing in >= 90% of recorded steps");
  int decreases = 0;
  for (std::size_t t = 1; t < traj.loss_trace.size(); ++t) decreases += traj.loss_trace[t] <= traj.loss_trace[t - 1];
  c.note("U(before) " + sci(before) + ", U(after) " + sci(after) + ", ratio " +
         fmt("%.4f", after / before) + "; monitor trace nonincreasing " + std::to_string(mon_down) + "/" +
         std::to_string(mon.size() - 1) + "; fresh-batch per-step trace " + sci(traj.loss_trace.front()) +
         " -> " + sci(traj.loss_trace.back()) + ", nonincreasing " +
         fmt("%.1f%%", 100.0 * decreases / double(traj.loss_trace.size() - 1)));
  return c.verdict();
}

PixelCloud random_pixels(std::uint64_t seed, Index w, Index h) {
  CounterRng rng(seed, 0);
  PixelCloud img;
  img.width = w;
  img.height = h;
  img.rgb.resize(w * h, 3);
  for (Index i = 0; i < img.rgb.size(); ++i) img.rgb.data()[i] = static_cast<double>(rng.below(256)) / 255.0;
  return img;
}

Verdict color_transfer() {
  Checks c;
  // (a) one full batch equals the dense barycentric map n * Pi * X_t.
  {
    const auto src = random_pixels(901, 25, 20);
    const auto tgt = random_pixels(902, 20, 25);
    TransferOptions opt;
    opt.batches.m = 500;
    opt.batches.k = 1;
    opt.normalization = Normalization::draw_scaling;
    const auto r = incremental_transfer(src, tgt, opt);
    const Matrix plan = solve_exact_assignment(src.cloud(), tgt.cloud(), opt.cost).plan().mass;
    const Points dense_s = 500.0 * plan * tgt.rgb;
    const Points dense_t = 500.0 * plan.transpose() * src.rgb;
    const double ds = (r.source_mapped.rgb - dense_s).cwiseAbs().maxCoeff();
    const double dt = (r.target_mapped.rgb - dense_t).cwiseAbs().maxCoeff();
    c.expect(std::max(ds, dt) <= 1e-9, "(a) dense barycentric map");
    c.note("(a) max diff " + sci(std::max(ds, dt)));
  }
  // (b) + (c) on 400 x 300 synthetic images.
  {
    const Index w = 400, h = 300, n = w * h, m = 1000, k = 10;
    const auto src = random_pixels(903, w, h);
    const auto tgt = random_pixels(904, h, w);
    TransferOptions opt;
    opt.batches.m = m;
    opt.batches.k = k;
    opt.batches.seed = 905;
    heap_probe::reset_peak();
    const std::size_t base = heap_probe::live_bytes();
    const auto r = incremental_transfer(src, tgt, opt);
    const std::size_t peak = heap_probe::peak_bytes() - base;
    const std::size_t largest = heap_probe::largest_block();
    // Documented budget: 160 bytes per pixel of either image plus 64 m^2.
    const std::size_t budget = 160 * static_cast<std::size_t>(2 * n) + 64 * static_cast<std::size_t>(m * m);
    const std::size_t dense = 8 * static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
    c.expect(peak <= budget, "(b) peak heap within O(n + m^2) budget");
    c.expect(largest < dense / 1000, "(b) no n x n allocation");
    const double expected = std::pow(1.0 - double(m) / n, double(k));
    // Coverage counts are sums of n weakly dependent indicators.
    const double tol = 4.0 * std::sqrt(expected * (1 - expected) / n);
    c.expect(std::abs(r.source_uncovered - expected) <= tol, "(c) source uncovered fraction");
    c.expect(std::abs(r.target_uncovered - expected) <= tol, "(c) target uncovered fraction");
    c.note("(b) n=" + std::to_string(n) + " m=1000 k=10, peak heap " + fmt("%.1f MB", peak / 1e6) +
           " <= budget " + fmt("%.1f MB", budget / 1e6) + ", largest block " +
           fmt("%.2f MB", largest / 1e6) + " (n x n would be " + fmt("%.0f GB", dense / 1e9) + ")");
    c.note("(c) uncovered " + fmt("%.4f", r.source_uncovered) + "/" + fmt("%.4f", r.target_uncovered) +
           " vs (1-m/n)^k " + fmt("%.4f", expected) + " +- " + fmt("%.4f", tol));
  }
  return c.verdict();
}

Verdict benchmark_shape() {
  Checks c;
  TimingSweep mb;
  mb.solvers = {BenchSolver::minibatch};
  mb.sizes = {1000, 10000, 100000};
  mb.reps = 5;
  mb.batches.m = 50;
  mb.batches.k = 100;
  const auto mrows = run_timing_sweep(mb);
  std::vector<double> mt;
  for (Index n : mb.sizes) mt.push_back(median_seconds(mrows, BenchSolver::minibatch, n));
  const double spread = *std::max_element(mt.begin(), mt.end()) / *std::min_element(mt.begin(), mt.end());

  TimingSweep sk;
  sk.solvers = {BenchSolver::sinkhorn};
  sk.sizes = {1000, 10000};
  sk.reps = 1;
  sk.sinkhorn.epsilon = 0.1;
  sk.sinkhorn.max_iters = 20;
  sk.sinkhorn.tol = 1e-300;
  const auto srows = run_timing_sweep(sk);
  const double s3 = median_seconds(srows, BenchSolver::sinkhorn, 1000);
  const double s4 = median_seconds(srows, BenchSolver::sinkhorn, 10000);
  c.expect(spread < 2.0, "minibatch time flat in n");
  c.expect(s4 / s3 >= 10.0, "full Sinkhorn grows >= 10x");
  c.note("minibatch (m=50,k=100) " + fmt("%.4f", mt[0]) + "/" + fmt("%.4f", mt[1]) + "/" +
         fmt("%.4f", mt[2]) + " s at n=1e3/1e4/1e5 (max/min " + fmt("%.2f", spread) +
         "); Sinkhorn (20 iters) " + fmt("%.3f", s3) + " -> " + fmt("%.3f", s4) + " s (x" +
         fmt("%.1f", s4 / s3) + ")");
  return c.verdict();
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  Verdict (*run)();
};

const Criterion kCriteria[] = {
    {1, "exact OT matches permutation enumeration", 10, exact_oracle},
    {2, "minibatch enumeration oracle (n=4, m=2)", 5, minibatch_enumeration},
    {3, "1D closed-form plan", 10, closed_form},
    {4, "deviation bound coverage and k^-1/2 rate", 300, theorem1},
    {5, "marginal error rate of Pi_k", 300, theorem2},
    {6, "Danskin gradients vs finite differences", 120, gradients},
    {7, "unbiased minibatch gradients", 120, theorem3},
    {8, "2D gradient flow", 300, gradient_flow_check},
    {9, "incremental color transfer", 180, color_transfer},
    {10, "benchmark shape", 300, benchmark_shape},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  std::ostringstream report;
  int failures = 0;
  for (const auto& cr : kCriteria) {
    if (!wanted.empty() && !wanted.count(cr.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = cr.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > cr.limit_seconds) {
      v.pass = false;
      v.detail += " | over time limit " + fmt("%.0f s", cr.limit_seconds);
    }
    failures += !v.pass;
    char head[160];
    std::snprintf(head, sizeof head, "[%s] criterion %2d: %s (%.1f s) -- ", v.pass ? "PASS" : "FAIL",
                  cr.id, cr.name, secs);
    const std::string line = head + v.detail;
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    report << line << '\n';
  }
  std::ofstream("acceptance_report.txt") << report.str();
  return failures == 0 ? 0 : 1;
}
