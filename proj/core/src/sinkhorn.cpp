#include "mbot/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace mbot {

void SinkhornParams::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("sinkhorn: epsilon must be positive");
  if (!(tol > 0.0)) throw std::invalid_argument("sinkhorn: tol must be positive");
  if (max_iters < 1) throw std::invalid_argument("sinkhorn: max_iters must be at least 1");
}

namespace {

constexpr double kLogDomainRatio = 0.05;

double median_entry(const Matrix& c) {
  std::vector<double> v(c.data(), c.data() + c.size());
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

bool all_finite_positive(const Vector& x) {
  return x.allFinite() && (x.array() > 0.0).all();
}

struct Marginals {
  double log_a;
  double log_b;
  double a;
  double b;
};

// Plain scaling iterations. Returns false if the scalings under- or overflow,
// in which case the caller restarts in the log domain.
bool run_scaling(const Matrix& cost, const SinkhornParams& p, const Marginals& mg,
                 SinkhornResult& out) {
  const double eps = p.epsilon;
  const Matrix kernel = (-cost / eps).array().exp().matrix();
  const Index rows = cost.rows(), cols = cost.cols();
  Vector u = Vector::Ones(rows), v = Vector::Ones(cols);
  Vector kv = kernel * v;
  out.trace.clear();
  int it = 0;
  double residual = std::numeric_limits<double>::infinity();
  while (true) {
    if (it > 0) {
      residual = (u.cwiseProduct(kv).array() - mg.a).abs().sum();
      if (residual <= p.tol || it >= p.max_iters) break;
    }
    u = (mg.a / kv.array()).matrix();
    const Vector ktu = kernel.transpose() * u;
    v = (mg.b / ktu.array()).matrix();
    if (!all_finite_positive(u) || !all_finite_positive(v)) return false;
    kv = kernel * v;
    ++it;
    if (p.record_trace) {
      // Columns are exact after the v update, so the total mass is 1.
      const double mass = u.dot(kv);
      out.trace.push_back(eps * (mg.a * u.array().log().sum() + mg.b * v.array().log().sum()) -
                          eps * mass);
    }
  }
  out.f = eps * u.array().log().matrix();
  out.g = eps * v.array().log().matrix();
  if (!out.f.allFinite() || !out.g.allFinite()) return false;
  out.plan = u.asDiagonal() * kernel * v.asDiagonal();
  out.iterations = it;
  out.residual = residual;
  out.converged = residual <= p.tol;
  out.log_domain = false;
  return true;
}

// Log-sum-exp of (pot_j - C_j) / eps over a contiguous row of C.
double soft_min(const double* c, const Vector& pot, double eps, Index len) {
  double best = -std::numeric_limits<double>::infinity();
  for (Index j = 0; j < len; ++j) best = std::max(best, (pot(j) - c[j]) / eps);
  double acc = 0.0;
  for (Index j = 0; j < len; ++j) acc += std::exp((pot(j) - c[j]) / eps - best);
  return best + std::log(acc);
}

void run_log_domain(const Matrix& cost, const SinkhornParams& p, const Marginals& mg,
                    SinkhornResult& out) {
  const double eps = p.epsilon;
  const Index rows = cost.rows(), cols = cost.cols();
  // Row-major copy for the f update; `cost` is column-major for the g update.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> cost_rm = cost;
  Vector f = Vector::Zero(rows), g = Vector::Zero(cols);
  out.trace.clear();

  auto row_residual = [&] {
    double r = 0.0;
    for (Index i = 0; i < rows; ++i) {
      const double* c = cost_rm.data() + i * cols;
      double s = 0.0;
      for (Index j = 0; j < cols; ++j) s += std::exp((f(i) + g(j) - c[j]) / eps);
      r += std::abs(s - mg.a);
    }
    return r;
  };

  int it = 0;
  double residual = std::numeric_limits<double>::infinity();
  while (true) {
    if (it > 0) {
      residual = row_residual();
      if (residual <= p.tol || it >= p.max_iters) break;
    }
    for (Index i = 0; i < rows; ++i)
      f(i) = eps * mg.log_a - eps * soft_min(cost_rm.data() + i * cols, g, eps, cols);
    for (Index j = 0; j < cols; ++j)
      g(j) = eps * mg.log_b - eps * soft_min(cost.data() + j * rows, f, eps, rows);
    ++it;
    if (p.record_trace) out.trace.push_back(mg.a * f.sum() + mg.b * g.sum() - eps);
  }
  out.f = f;
  out.g = g;
  out.plan.resize(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) out.plan(i, j) = std::exp((f(i) + g(j) - cost(i, j)) / eps);
  out.iterations = it;
  out.residual = residual;
  out.converged = residual <= p.tol;
  out.log_domain = true;
}

// Symmetric problem (C = C^T, equal marginals): the optimal potentials
// satisfy f = g, and averaging each update with the previous iterate avoids
// the slow alternating drift of plain Sinkhorn when two points nearly
// coincide.
bool run_symmetric_scaling(const Matrix& cost, const SinkhornParams& p, const Marginals& mg,
                           SinkhornResult& out) {
  const double eps = p.epsilon;
  const Matrix kernel = (-cost / eps).array().exp().matrix();
  Vector u = Vector::Constant(cost.rows(), std::sqrt(mg.a));
  Vector ku = kernel * u;
  out.trace.clear();
  int it = 0;
  double residual = std::numeric_limits<double>::infinity();
  while (true) {
    residual = (u.cwiseProduct(ku).array() - mg.a).abs().sum();
    if (residual <= p.tol || it >= p.max_iters) break;
    u = (u.array() * mg.a / ku.array()).sqrt().matrix();
    if (!all_finite_positive(u)) return false;
    ku = kernel * u;
    ++it;
    if (p.record_trace) out.trace.push_back(2.0 * eps * mg.a * u.array().log().sum() - eps * u.dot(ku));
  }
  out.f = eps * u.array().log().matrix();
  if (!out.f.allFinite()) return false;
  out.g = out.f;
  out.plan = u.asDiagonal() * kernel * u.asDiagonal();
  out.iterations = it;
  out.residual = residual;
  out.converged = residual <= p.tol;
  out.log_domain = false;
  return true;
}

void run_symmetric_log(const Matrix& cost, const SinkhornParams& p, const Marginals& mg,
                       SinkhornResult& out) {
  const double eps = p.epsilon;
  const Index n = cost.rows();
  Vector f = Vector::Zero(n), next(n);
  out.trace.clear();
  auto residual_of = [&] {
    double r = 0.0;
    for (Index i = 0; i < n; ++i) {
      double s = 0.0;
      for (Index j = 0; j < n; ++j) s += std::exp((f(i) + f(j) - cost(j, i)) / eps);
      r += std::abs(s - mg.a);
    }
    return r;
  };
  int it = 0;
  double residual = std::numeric_limits<double>::infinity();
  while (true) {
    residual = residual_of();
    if (residual <= p.tol || it >= p.max_iters) break;
    // Column j of a symmetric cost is row j.
    for (Index i = 0; i < n; ++i)
      next(i) = eps * mg.log_a - eps * soft_min(cost.data() + i * n, f, eps, n);
    f = 0.5 * (f + next);
    ++it;
    if (p.record_trace) {
      double mass = 0.0;
      for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i) mass += std::exp((f(i) + f(j) - cost(i, j)) / eps);
      out.trace.push_back(2.0 * mg.a * f.sum() - eps * mass);
    }
  }
  out.f = f;
  out.g = f;
  out.plan.resize(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) out.plan(i, j) = std::exp((f(i) + f(j) - cost(i, j)) / eps);
  out.iterations = it;
  out.residual = residual;
  out.converged = residual <= p.tol;
  out.log_domain = true;
}

}  // namespace

SinkhornResult sinkhorn(const Matrix& cost, const SinkhornParams& params) {
  params.validate();
  if (cost.rows() == 0 || cost.rows() != cost.cols()) {
    throw std::invalid_argument("sinkhorn: cost must be square and nonempty");
  }
  const auto rows = static_cast<double>(cost.rows());
  const auto cols = static_cast<double>(cost.cols());
  const Marginals mg{-std::log(rows), -std::log(cols), 1.0 / rows, 1.0 / cols};

  SinkhornResult out;
  const double med = median_entry(cost);
  const bool use_log = params.log_domain || (med > 0.0 && params.epsilon / med < kLogDomainRatio);
  if (use_log || !run_scaling(cost, params, mg, out)) run_log_domain(cost, params, mg, out);

  // Dual objective <f, a> + <g, b> - eps * sum(P); equals <P, C> - eps H(P)
  // at the optimum and is second-order accurate near it.
  out.value = mg.a * out.f.sum() + mg.b * out.g.sum() - params.epsilon * out.plan.sum();
  return out;
}

SinkhornResult sinkhorn_symmetric(const Matrix& cost, const SinkhornParams& params) {
  params.validate();
  if (cost.rows() == 0 || cost.rows() != cost.cols()) {
    throw std::invalid_argument("sinkhorn_symmetric: cost must be square and nonempty");
  }
  if (cost != cost.transpose()) throw std::invalid_argument("sinkhorn_symmetric: cost is not symmetric");
  const auto n = static_cast<double>(cost.rows());
  const Marginals mg{-std::log(n), -std::log(n), 1.0 / n, 1.0 / n};

  SinkhornResult out;
  const double med = median_entry(cost);
  const bool use_log = params.log_domain || (med > 0.0 && params.epsilon / med < kLogDomainRatio);
  if (use_log || !run_symmetric_scaling(cost, params, mg, out)) run_symmetric_log(cost, params, mg, out);
  out.value = 2.0 * mg.a * out.f.sum() - params.epsilon * out.plan.sum();
  return out;
}

SinkhornResult sinkhorn(const PointCloud& a, const PointCloud& b, const CostSpec& cost,
                        const SinkhornParams& params) {
  if (a.size() != b.size()) throw std::invalid_argument("sinkhorn requires equal support sizes");
  return sinkhorn(cost_matrix(a.points(), b.points(), cost), params);
}

DivergenceResult sinkhorn_divergence_full(const PointCloud& a, const PointCloud& b,
                                          const CostSpec& cost, const SinkhornParams& params) {
  DivergenceResult r;
  r.cross = sinkhorn(a, b, cost, params);
  r.self_a = sinkhorn_symmetric(cost_matrix(a.points(), a.points(), cost), params);
  r.self_b = sinkhorn_symmetric(cost_matrix(b.points(), b.points(), cost), params);
  r.value = r.cross.value - 0.5 * (r.self_a.value + r.self_b.value);
  return r;
}

double sinkhorn_divergence(const PointCloud& a, const PointCloud& b, const CostSpec& cost,
                           const SinkhornParams& params) {
  return sinkhorn_divergence_full(a, b, cost, params).value;
}

}  // namespace mbot
