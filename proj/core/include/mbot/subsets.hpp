#pragma once

#include "mbot/point_cloud.hpp"
#include "mbot/rng.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace mbot {

/// C(n, k), or nullopt when the result does not fit in 64 bits.
std::optional<std::uint64_t> binomial(std::uint64_t n, std::uint64_t k);

/// Lexicographic rank <-> m-subset of {0, ..., n-1}, subsets sorted ascending.
std::vector<Index> unrank_subset(Index n, Index m, std::uint64_t rank);

/// Advances `subset` to the next m-subset in lexicographic order. Returns false
/// after the last one.
bool next_subset(std::vector<Index>& subset, Index n);

/// Uniform random m-subset of {0, ..., n-1}, sorted ascending. Floyd's
/// algorithm: O(m) expected work, independent of n.
std::vector<Index> sample_subset(CounterRng& rng, Index n, Index m);

}  // namespace mbot
