#pragma once

#include "mbot/gradients.hpp"

#include <filesystem>
#include <vector>

namespace mbot {

/// Sinkhorn divergence with k = 10 pairs per step.
inline MinibatchConfig default_flow_batches() {
  MinibatchConfig c;
  c.loss = LossKind::sinkhorn_divergence;
  c.k = 10;
  return c;
}

inline constexpr std::uint64_t kMonitorTag = 0x6d6f6e69746f72ULL;

struct FlowConfig {
  double step_size = 0.05;
  int iters = 750;
  MinibatchConfig batches = default_flow_batches();
  int record_every = 50;
  /// Multiply the minibatch gradient by m (the inverse batch weight).
  bool scale_by_batch_size = true;

  void validate() const;
};

struct FlowSnapshot {
  int step = 0;
  Points points;
};

struct FlowTrajectory {
  std::vector<FlowSnapshot> snapshots;
  /// loss_trace[t] is U~_h^k evaluated on the batches of step t, before the update.
  std::vector<double> loss_trace;
  /// monitor_trace[i] is U~_h^k of snapshots[i] on one fixed set of batch
  /// pairs (seed derive_seed(seed, kMonitorTag)), so consecutive entries
  /// differ only through the points.
  std::vector<double> monitor_trace;
  bool diverged = false;
  bool stale = false;

  const Points& final_points() const { return snapshots.back().points; }
};

/// Explicit Euler on dx/dt = -m grad U~_h^k(target, x), with fresh batch pairs
/// at every step (step t uses seed derive_seed(seed, t)). Stops early, with
/// `diverged` set, if the loss exceeds 10x its initial value.
FlowTrajectory gradient_flow(const PointCloud& start, const PointCloud& target,
                             const CostSpec& cost, const FlowConfig& config);

/// Writes snapshot_<step>.csv (one point per row) for every snapshot and
/// loss_trace.csv (step,loss) and monitor_trace.csv (step,loss). Returns the
/// written paths.
std::vector<std::filesystem::path> write_trajectory(const FlowTrajectory& trajectory,
                                                    const std::filesystem::path& dir);

}  // namespace mbot
