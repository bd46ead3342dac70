#include "mbot/bounds.hpp"

#include <cmath>
#include <stdexcept>

namespace mbot {

double m_h(LossKind loss, double cost_bound, double epsilon, Index m) {
  if (cost_bound < 0.0 || epsilon < 0.0 || m < 1) throw std::invalid_argument("m_h: invalid input");
  if (loss == LossKind::wasserstein) return cost_bound;
  return 1.5 * (cost_bound + epsilon * (2.0 * std::log2(static_cast<double>(m)) + 1.0));
}

void BoundInputs::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (m < 1 || m > n) throw std::invalid_argument("need 1 <= m <= n");
  if (k < 1) throw std::invalid_argument("need k >= 1");
  if (cost_bound < 0.0 || epsilon < 0.0) throw std::invalid_argument("negative bound input");
}

double u_statistic_deviation(Index n, Index m, double delta, double mh) {
  const auto blocks = static_cast<double>(n / m);
  return mh * std::sqrt(std::log(2.0 / delta) / (2.0 * blocks));
}

double subsample_deviation(Index k, double delta, double mh) {
  return mh * std::sqrt(2.0 * std::log(2.0 / delta) / static_cast<double>(k));
}

double hoeffding_deviation(const BoundInputs& bi) {
  bi.validate();
  const double mh = m_h(bi.loss, bi.cost_bound, bi.epsilon, bi.m);
  return u_statistic_deviation(bi.n, bi.m, bi.delta, mh) + subsample_deviation(bi.k, bi.delta, mh);
}

BernsteinTail bernstein_tail(Index n, Index m, double deviation, double sigma2, double mh) {
  if (!(deviation > 0.0)) throw std::invalid_argument("bernstein_tail: deviation must be positive");
  if (sigma2 < 0.0 || sigma2 > mh * mh) {
    throw std::invalid_argument("bernstein_tail: need 0 <= sigma2 <= M_h^2");
  }
  if (m < 1 || m > n) throw std::invalid_argument("bernstein_tail: need 1 <= m <= n");
  const auto blocks = static_cast<double>(n / m);
  auto tail = [&](double var) {
    return 2.0 * std::exp(-blocks * deviation * deviation / (2.0 * (var + mh * deviation / 3.0)));
  };
  return {tail(sigma2), tail(mh * mh)};
}

double marginal_bound(Index k, double delta) {
  if (k < 1) throw std::invalid_argument("marginal_bound: need k >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  return std::sqrt(2.0 * std::log(2.0 / delta) / static_cast<double>(k));
}

}  // namespace mbot
