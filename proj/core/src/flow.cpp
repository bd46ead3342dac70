#include "mbot/flow.hpp"

#include "mbot/io.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace mbot {

void FlowConfig::validate() const {
  if (step_size < 0.0) throw std::invalid_argument("step size must be nonnegative");
  if (iters < 1) throw std::invalid_argument("need at least one iteration");
  if (record_every < 1) throw std::invalid_argument("record_every must be positive");
  if (batches.loss == LossKind::wasserstein) {
    throw std::invalid_argument("gradient flow needs a differentiable loss (W_eps or S_eps)");
  }
}

FlowTrajectory gradient_flow(const PointCloud& start, const PointCloud& target,
                             const CostSpec& cost, const FlowConfig& config) {
  config.validate();
  config.batches.validate(target.size(), start.size());
  const double scale =
      config.step_size * (config.scale_by_batch_size ? static_cast<double>(config.batches.m) : 1.0);

  MinibatchConfig monitor = config.batches;
  monitor.seed = derive_seed(config.batches.seed, kMonitorTag);
  FlowTrajectory traj;
  auto snapshot = [&](int t, const PointCloud& x) {
    traj.snapshots.push_back({t, x.points()});
    traj.monitor_trace.push_back(u_stat_subsampled(target, x, cost, monitor).value);
  };
  PointCloud x = start;
  double initial = 0.0;
  for (int t = 0; t < config.iters; ++t) {
    MinibatchConfig step = config.batches;
    step.seed = derive_seed(config.batches.seed, static_cast<std::uint64_t>(t));
    const MinibatchGradient g = grad_minibatch(target, x, cost, step);
    traj.loss_trace.push_back(g.loss);
    traj.stale = traj.stale || g.field.stale;
    if (t == 0) initial = g.loss;
    if (t % config.record_every == 0) snapshot(t, x);
    if (t > 0 && g.loss > 10.0 * std::abs(initial)) {
      traj.diverged = true;
      return traj;
    }
    x.points() -= scale * g.field.grad;
  }
  snapshot(config.iters, x);
  return traj;
}

std::vector<std::filesystem::path> write_trajectory(const FlowTrajectory& trajectory,
                                                    const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& snap : trajectory.snapshots) {
    char name[32];
    std::snprintf(name, sizeof name, "snapshot_%06d.csv", snap.step);
    const auto path = dir / name;
    std::ofstream out(path);
    write_points_csv(out, snap.points);
    if (!out) throw std::runtime_error("failed to write " + path.string());
    written.push_back(path);
  }
  const auto trace_path = dir / "loss_trace.csv";
  std::ofstream out(trace_path);
  out << "step,loss\n";
  for (std::size_t t = 0; t < trajectory.loss_trace.size(); ++t)
    out << t << ',' << format_double(trajectory.loss_trace[t]) << '\n';
  if (!out) throw std::runtime_error("failed to write " + trace_path.string());
  written.push_back(trace_path);

  const auto monitor_path = dir / "monitor_trace.csv";
  std::ofstream mon(monitor_path);
  mon << "step,loss\n";
  for (std::size_t i = 0; i < trajectory.monitor_trace.size(); ++i)
    mon << trajectory.snapshots[i].step << ',' << format_double(trajectory.monitor_trace[i]) << '\n';
  if (!mon) throw std::runtime_error("failed to write " + monitor_path.string());
  written.push_back(monitor_path);
  return written;
}

}  // namespace mbot
