#pragma once

// Internal: solves batch pairs in parallel chunks and hands the results to a
// consumer strictly in draw order.

#include "mbot/minibatch.hpp"
#include "mbot/parallel.hpp"
#include "mbot/subsets.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

namespace mbot::detail {

inline std::size_t chunk_size(int jobs) {
  return static_cast<std::size_t>(64 * resolve_jobs(jobs));
}

/// next(pair) fills the next pair; consume(index, pair, result) runs in order.
template <typename Next, typename Solve, typename Consume>
void run_batches(std::uint64_t count, int jobs, Next&& next, Solve&& solve, Consume&& consume) {
  const std::size_t chunk = chunk_size(jobs);
  std::vector<BatchPair> pairs;
  std::vector<BatchResult> results;
  for (std::uint64_t start = 0; start < count; start += chunk) {
    const auto len = static_cast<std::size_t>(std::min<std::uint64_t>(chunk, count - start));
    pairs.resize(len);
    results.assign(len, BatchResult{});
    for (std::size_t i = 0; i < len; ++i) next(start + i, pairs[i]);
    parallel_for(len, jobs, [&](std::size_t i) { results[i] = solve(pairs[i]); });
    for (std::size_t i = 0; i < len; ++i) consume(start + i, pairs[i], results[i]);
  }
}

/// Walks all C(n_s,m) * C(n_t,m) pairs with the target subset varying fastest.
class PairEnumerator {
 public:
  PairEnumerator(Index n_source, Index n_target, Index m)
      : n_source_(n_source), n_target_(n_target), m_(m) {}

  void next(BatchPair& out) {
    if (!started_) {
      source_ = unrank_subset(n_source_, m_, 0);
      target_ = unrank_subset(n_target_, m_, 0);
      started_ = true;
    } else if (!next_subset(target_, n_target_)) {
      target_ = unrank_subset(n_target_, m_, 0);
      next_subset(source_, n_source_);
    }
    out.source = source_;
    out.target = target_;
  }

 private:
  Index n_source_;
  Index n_target_;
  Index m_;
  bool started_ = false;
  std::vector<Index> source_;
  std::vector<Index> target_;
};

/// Number of pairs, or throws EnumerationCapExceeded.
std::uint64_t enumeration_size(Index n_source, Index n_target, Index m, std::uint64_t cap);

}  // namespace mbot::detail
