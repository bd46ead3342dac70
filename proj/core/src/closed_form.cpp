#include "mbot/closed_form.hpp"

#include "mbot/subsets.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace mbot {

namespace {

__extension__ typedef unsigned __int128 u128;

// Number of m-subsets of {0..n-1} in which element `rank` sits at (1-based)
// position i once sorted: C(rank, i-1) * C(n-1-rank, m-i).
std::uint64_t position_count(Index n, Index m, Index rank, Index i) {
  if (i - 1 > rank || m - i > n - 1 - rank) return 0;
  const auto lo = binomial(static_cast<std::uint64_t>(rank), static_cast<std::uint64_t>(i - 1));
  const auto hi = binomial(static_cast<std::uint64_t>(n - 1 - rank), static_cast<std::uint64_t>(m - i));
  return static_cast<std::uint64_t>(static_cast<u128>(*lo) * *hi);
}

Matrix exact_integer(Index n, Index m) {
  // counts[rank][i-1]; each is at most C(n-1, m-1) < 2^63 for n <= 64.
  std::vector<std::vector<std::uint64_t>> counts(static_cast<std::size_t>(n));
  for (Index r = 0; r < n; ++r) {
    auto& row = counts[static_cast<std::size_t>(r)];
    row.resize(static_cast<std::size_t>(m));
    for (Index i = 1; i <= m; ++i) row[static_cast<std::size_t>(i - 1)] = position_count(n, m, r, i);
  }
  const u128 c = *binomial(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(m));
  const auto denominator = static_cast<long double>(c * c * static_cast<u128>(m));
  Matrix out(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index k = 0; k < n; ++k) {
      u128 num = 0;
      const auto& x = counts[static_cast<std::size_t>(j)];
      const auto& y = counts[static_cast<std::size_t>(k)];
      for (std::size_t i = 0; i < x.size(); ++i) num += static_cast<u128>(x[i]) * y[i];
      out(j, k) = static_cast<double>(static_cast<long double>(num) / denominator);
    }
  }
  return out;
}

long double log_binomial(Index n, Index k) {
  return std::lgamma(static_cast<long double>(n + 1)) - std::lgamma(static_cast<long double>(k + 1)) -
         std::lgamma(static_cast<long double>(n - k + 1));
}

Matrix log_space(Index n, Index m) {
  constexpr long double kNone = -1e300L;
  std::vector<long double> logc(static_cast<std::size_t>(n * m), kNone);
  for (Index r = 0; r < n; ++r)
    for (Index i = 1; i <= m; ++i) {
      if (i - 1 > r || m - i > n - 1 - r) continue;
      logc[static_cast<std::size_t>(r * m + i - 1)] =
          log_binomial(r, i - 1) + log_binomial(n - 1 - r, m - i);
    }
  const long double log_den = std::log(static_cast<long double>(m)) + 2 * log_binomial(n, m);
  Matrix out(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index k = 0; k < n; ++k) {
      const Index i_min = std::max<Index>({1, m - n + j + 1, m - n + k + 1});
      const Index i_max = std::min<Index>({j + 1, k + 1, m});
      long double acc = 0.0L;
      for (Index i = i_min; i <= i_max; ++i) {
        acc += std::exp(logc[static_cast<std::size_t>(j * m + i - 1)] +
                        logc[static_cast<std::size_t>(k * m + i - 1)] - log_den);
      }
      out(j, k) = static_cast<double>(acc);
    }
  }
  return out;
}

}  // namespace

Matrix closed_form_1d(Index n, Index m) {
  if (m < 1 || m > n) throw std::invalid_argument("closed_form_1d: need 1 <= m <= n");
  return n <= 64 ? exact_integer(n, m) : log_space(n, m);
}

}  // namespace mbot
