#include "mbot/subsets.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace mbot {

namespace {
__extension__ typedef unsigned __int128 u128;
}

std::optional<std::uint64_t> binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  u128 r = 1;
  for (std::uint64_t i = 0; i < k; ++i) {
    // r * (n - i) / (i + 1) stays integral at every step.
    r = r * (n - i) / (i + 1);
    if (r > std::numeric_limits<std::uint64_t>::max()) return std::nullopt;
  }
  return static_cast<std::uint64_t>(r);
}

std::vector<Index> unrank_subset(Index n, Index m, std::uint64_t rank) {
  if (m < 0 || m > n) throw std::invalid_argument("unrank_subset: need 0 <= m <= n");
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(m));
  Index c = 0;
  for (Index p = 0; p < m; ++p) {
    while (true) {
      if (c >= n) throw std::out_of_range("unrank_subset: rank out of range");
      const auto count = binomial(static_cast<std::uint64_t>(n - 1 - c),
                                  static_cast<std::uint64_t>(m - 1 - p));
      if (!count) throw std::overflow_error("unrank_subset: binomial overflow");
      if (rank < *count) break;
      rank -= *count;
      ++c;
    }
    out.push_back(c++);
  }
  return out;
}

bool next_subset(std::vector<Index>& subset, Index n) {
  const auto m = static_cast<Index>(subset.size());
  Index p = m - 1;
  while (p >= 0 && subset[static_cast<std::size_t>(p)] == n - m + p) --p;
  if (p < 0) return false;
  ++subset[static_cast<std::size_t>(p)];
  for (Index q = p + 1; q < m; ++q)
    subset[static_cast<std::size_t>(q)] = subset[static_cast<std::size_t>(q - 1)] + 1;
  return true;
}

std::vector<Index> sample_subset(CounterRng& rng, Index n, Index m) {
  if (m < 0 || m > n) throw std::invalid_argument("sample_subset: need 0 <= m <= n");
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(m));
  if (m == n) {
    out.resize(static_cast<std::size_t>(n));
    std::iota(out.begin(), out.end(), Index{0});
    return out;
  }
  std::unordered_set<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(2 * m));
  for (Index j = n - m; j < n; ++j) {
    const auto t = static_cast<Index>(rng.below(static_cast<std::uint64_t>(j + 1)));
    const Index pick = chosen.contains(t) ? j : t;
    chosen.insert(pick);
    out.push_back(pick);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace mbot
