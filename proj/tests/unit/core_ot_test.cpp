#include "mbot/cost.hpp"
#include "mbot/exact.hpp"
#include "mbot/sinkhorn.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mbot;

namespace {

PointCloud cloud1d(std::initializer_list<double> v) {
  return PointCloud::from_values(std::vector<double>(v));
}

PointCloud cloud(const Points& p) { return PointCloud(p); }

}  // namespace

TEST(PointCloud, RejectsEmpty) {
  EXPECT_THROW(PointCloud(Points(0, 2)), std::invalid_argument);
  EXPECT_THROW(PointCloud(Points(3, 0)), std::invalid_argument);
}

TEST(PointCloud, SubsetKeepsOrder) {
  const auto c = cloud1d({5, 6, 7, 8});
  const std::vector<Index> idx{3, 1};
  const auto s = c.subset(idx);
  EXPECT_EQ(s.size(), 2);
  EXPECT_EQ(s.points()(0, 0), 8);
  EXPECT_EQ(s.points()(1, 0), 6);
}

TEST(Cost, BasicProperties) {
  std::mt19937_64 gen(3);
  const Points x = oracle::random_points(gen, 6, 3, -2, 2);
  for (auto kind : {CostKind::euclidean, CostKind::sq_euclidean}) {
    CostSpec c{kind};
    const Matrix m = cost_matrix(x, x, c);
    EXPECT_TRUE((m.array() >= 0).all());
    EXPECT_NEAR((m - m.transpose()).cwiseAbs().maxCoeff(), 0.0, 0.0);
    EXPECT_EQ(m.diagonal().cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Cost, AbsNeedsOneDimension) {
  CostSpec c{CostKind::abs};
  EXPECT_NO_THROW(c.check_dimension(1));
  EXPECT_THROW(c.check_dimension(2), std::invalid_argument);
}

TEST(Cost, ParseNames) {
  EXPECT_EQ(parse_cost_kind("sq_euclidean"), CostKind::sq_euclidean);
  EXPECT_EQ(to_string(parse_cost_kind("abs")), "abs");
  EXPECT_THROW(parse_cost_kind("l1"), std::invalid_argument);
}

TEST(Cost, DiameterBoundingBoxNeverUnderestimates) {
  std::mt19937_64 gen(5);
  const Points x = oracle::random_points(gen, 30, 2);
  const Points y = oracle::random_points(gen, 30, 2);
  const double exact = support_diameter(x, y);
  EXPECT_GE(support_diameter(x, y, 10), exact);
  EXPECT_DOUBLE_EQ(cost_bound(CostKind::sq_euclidean, 2.0), 4.0);
  EXPECT_DOUBLE_EQ(cost_bound(CostKind::euclidean, 2.0), 2.0);
}

TEST(Exact1D, IdenticalSupports) {
  const auto r = solve_exact_1d(cloud1d({0, 1}), cloud1d({0, 1}), {CostKind::abs});
  EXPECT_EQ(r.value, 0.0);
  Matrix expect(2, 2);
  expect << 0.5, 0, 0, 0.5;
  EXPECT_EQ(r.plan().mass, expect);
}

TEST(Exact1D, TwoPoints) {
  EXPECT_DOUBLE_EQ(solve_exact_1d(cloud1d({0, 2}), cloud1d({1, 5}), {CostKind::abs}).value, 2.0);
}

TEST(Exact1D, SinglePoint) {
  const auto r = solve_exact_1d(cloud1d({3}), cloud1d({7}), {CostKind::abs});
  EXPECT_EQ(r.value, 4.0);
  EXPECT_EQ(r.plan().mass(0, 0), 1.0);
}

TEST(Exact1D, PlanInOriginalOrder) {
  const auto r = solve_exact_1d(cloud1d({2, 0}), cloud1d({5, 1}), {CostKind::abs});
  EXPECT_EQ(r.match, (std::vector<Index>{0, 1}));
  const auto s = solve_exact_1d(cloud1d({2, 0}), cloud1d({1, 5}), {CostKind::abs});
  EXPECT_EQ(s.match, (std::vector<Index>{1, 0}));
}

TEST(Exact1D, Errors) {
  EXPECT_THROW(solve_exact_1d(cloud1d({0, 1}), cloud1d({0}), {CostKind::abs}),
               std::invalid_argument);
  Points p(2, 2);
  p.setZero();
  EXPECT_THROW(solve_exact_1d(cloud(p), cloud(p), {CostKind::euclidean}), std::invalid_argument);
}

TEST(Assignment, IdentityWhenEqual) {
  std::mt19937_64 gen(11);
  const Points x = oracle::random_points(gen, 7, 2);
  for (auto kind : {CostKind::euclidean, CostKind::sq_euclidean}) {
    const auto r = solve_exact_assignment(cloud(x), cloud(x), {kind});
    EXPECT_EQ(r.value, 0.0);
    for (Index i = 0; i < 7; ++i) EXPECT_EQ(r.match[static_cast<std::size_t>(i)], i);
  }
}

TEST(Assignment, SquareCorners) {
  Points a(2, 2), b(2, 2);
  a << 0, 0, 1, 0;
  b << 0, 1, 1, 1;
  const auto r = solve_exact_assignment(cloud(a), cloud(b), {CostKind::sq_euclidean});
  EXPECT_DOUBLE_EQ(r.value, 1.0);
  EXPECT_EQ(r.match, (std::vector<Index>{0, 1}));
}

TEST(Assignment, MatchesPermutationEnumeration) {
  std::mt19937_64 gen(17);
  for (int t = 0; t < 30; ++t) {
    const Points x = oracle::random_integer_points(gen, 6, 2, 0, 9);
    const Points y = oracle::random_integer_points(gen, 6, 2, 0, 9);
    const CostSpec c{CostKind::sq_euclidean};
    const auto r = solve_exact_assignment(cloud(x), cloud(y), c);
    const auto b = oracle::brute_assignment(cost_matrix(x, y, c));
    EXPECT_NEAR(r.value, b.value, 1e-12);
    // Integer costs make ties exact, so the tie-break must agree too.
    EXPECT_EQ(r.match, b.perm);
  }
}

TEST(Assignment, LexicographicTieBreak) {
  // All permutations cost the same.
  const Matrix c = Matrix::Ones(4, 4);
  const auto r = solve_assignment(c);
  EXPECT_EQ(r.match, (std::vector<Index>{0, 1, 2, 3}));
  // Duplicated points: two optimal matchings.
  Points a(2, 1), b(2, 1);
  a << 1, 1;
  b << 2, 2;
  EXPECT_EQ(solve_exact_assignment(cloud(a), cloud(b), {}).match, (std::vector<Index>{0, 1}));
}

TEST(Assignment, MarginalsExact) {
  std::mt19937_64 gen(19);
  const Points x = oracle::random_points(gen, 9, 3);
  const Points y = oracle::random_points(gen, 9, 3);
  const auto plan = solve_exact_assignment(cloud(x), cloud(y), {}).plan();
  EXPECT_EQ(plan.max_marginal_deviation(), 0.0);
}

TEST(Assignment, OneDimensionalAgreesWithSorting) {
  std::mt19937_64 gen(23);
  for (Index n = 1; n <= 7; ++n)
    for (int t = 0; t < 10; ++t) {
      const Points x = oracle::random_points(gen, n, 1, -3, 3);
      const Points y = oracle::random_points(gen, n, 1, -3, 3);
      for (auto kind : {CostKind::abs, CostKind::sq_euclidean}) {
        const double sorted = solve_exact_1d(cloud(x), cloud(y), {kind}).value;
        const double lap = solve_exact_assignment(cloud(x), cloud(y), {kind}).value;
        EXPECT_NEAR(sorted, lap, 1e-12);
      }
    }
}

TEST(Assignment, ZeroIffSameMultiset) {
  std::mt19937_64 gen(29);
  for (int t = 0; t < 20; ++t) {
    const Points x = oracle::random_integer_points(gen, 5, 2, 0, 3);
    Points y = x;
    std::vector<Index> perm{4, 2, 0, 3, 1};
    for (Index i = 0; i < 5; ++i) y.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    EXPECT_EQ(solve_exact_assignment(cloud(x), cloud(y), {}).value, 0.0);
    Points z = y;
    z(2, 1) += 0.5;
    EXPECT_GT(solve_exact_assignment(cloud(x), cloud(z), {}).value, 0.0);
  }
}

TEST(Assignment, SizeMismatch) {
  EXPECT_THROW(solve_exact_assignment(cloud1d({0, 1}), cloud1d({0}), {}), std::invalid_argument);
  EXPECT_THROW(solve_assignment(Matrix::Zero(2, 3)), std::invalid_argument);
}

TEST(Sinkhorn, SelfValueNonzeroButMarginalsTight) {
  std::mt19937_64 gen(31);
  const Points x = oracle::random_points(gen, 6, 2);
  SinkhornParams p;
  p.epsilon = 0.1;
  const auto r = sinkhorn(cloud(x), cloud(x), {CostKind::sq_euclidean}, p);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.residual, p.tol);
  EXPECT_GT(std::abs(r.value), 1e-3);
  EXPECT_LE(r.transport_plan().max_marginal_deviation(), p.tol);
}

TEST(Sinkhorn, LargeEpsilonGivesUniformPlan) {
  std::mt19937_64 gen(37);
  const Points x = oracle::random_points(gen, 5, 2);
  const Points y = oracle::random_points(gen, 5, 2);
  SinkhornParams p;
  p.epsilon = 1e7;
  const auto r = sinkhorn(cloud(x), cloud(y), {}, p);
  EXPECT_LE((r.plan.array() - 1.0 / 25).abs().maxCoeff(), 1e-6);
}

TEST(Sinkhorn, SmallEpsilonApproachesExact) {
  std::mt19937_64 gen(41);
  for (int t = 0; t < 5; ++t) {
    const Points x = oracle::random_points(gen, 5, 2);
    const Points y = oracle::random_points(gen, 5, 2);
    SinkhornParams p;
    p.epsilon = 1e-3;
    p.log_domain = true;
    p.max_iters = 100000;
    const auto r = sinkhorn(cloud(x), cloud(y), {}, p);
    EXPECT_TRUE(r.log_domain);
    EXPECT_NEAR(r.value, solve_exact_assignment(cloud(x), cloud(y), {}).value, 1e-2);
  }
}

TEST(Sinkhorn, ValueMatchesPrimalObjective) {
  std::mt19937_64 gen(43);
  const Points x = oracle::random_points(gen, 7, 2);
  const Points y = oracle::random_points(gen, 7, 2);
  SinkhornParams p;
  p.epsilon = 0.05;
  p.tol = 1e-13;
  const Matrix c = cost_matrix(x, y, {});
  const auto r = sinkhorn(c, p);
  const double entropy = -(r.plan.array() * (r.plan.array().log() - 1.0)).sum();
  EXPECT_NEAR(r.value, (r.plan.array() * c.array()).sum() - p.epsilon * entropy, 1e-10);
  // Plan is the Gibbs form of the potentials.
  for (Index i = 0; i < 7; ++i)
    for (Index j = 0; j < 7; ++j)
      EXPECT_NEAR(r.plan(i, j), std::exp((r.f(i) + r.g(j) - c(i, j)) / p.epsilon), 1e-12);
}

TEST(Sinkhorn, ScalingAndLogDomainAgree) {
  std::mt19937_64 gen(47);
  const Points x = oracle::random_points(gen, 8, 2);
  const Points y = oracle::random_points(gen, 8, 2);
  SinkhornParams p;
  p.epsilon = 0.5;
  p.tol = 1e-12;
  const auto a = sinkhorn(cloud(x), cloud(y), {}, p);
  p.log_domain = true;
  const auto b = sinkhorn(cloud(x), cloud(y), {}, p);
  EXPECT_FALSE(a.log_domain);
  EXPECT_TRUE(b.log_domain);
  EXPECT_NEAR(a.value, b.value, 1e-10);
  EXPECT_LE((a.plan - b.plan).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Sinkhorn, AutoSwitchesToLogDomain) {
  std::mt19937_64 gen(53);
  const Points x = oracle::random_points(gen, 6, 2);
  const Points y = oracle::random_points(gen, 6, 2);
  SinkhornParams p;
  p.epsilon = 1e-4;
  p.max_iters = 200;
  const auto r = sinkhorn(cloud(x), cloud(y), {}, p);
  EXPECT_TRUE(r.log_domain);
  EXPECT_TRUE(r.plan.allFinite());
}

TEST(Sinkhorn, DualTraceNondecreasing) {
  std::mt19937_64 gen(59);
  for (bool log_domain : {false, true}) {
    const Points x = oracle::random_points(gen, 10, 2);
    const Points y = oracle::random_points(gen, 10, 2);
    SinkhornParams p;
    p.epsilon = 0.05;
    p.record_trace = true;
    p.log_domain = log_domain;
    const auto r = sinkhorn(cloud(x), cloud(y), {CostKind::sq_euclidean}, p);
    ASSERT_GT(r.trace.size(), 2u);
    for (std::size_t t = 2; t < r.trace.size(); ++t)
      EXPECT_GE(r.trace[t], r.trace[t - 1] - 1e-12 * std::abs(r.trace[t]));
    EXPECT_NEAR(r.trace.back(), r.value, 1e-9);
  }
}

TEST(Sinkhorn, NonConvergenceIsReported) {
  std::mt19937_64 gen(61);
  const Points x = oracle::random_points(gen, 10, 2);
  const Points y = oracle::random_points(gen, 10, 2);
  SinkhornParams p;
  p.epsilon = 0.01;
  p.max_iters = 2;
  const auto r = sinkhorn(cloud(x), cloud(y), {}, p);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 2);
  EXPECT_GT(r.residual, p.tol);
}

TEST(Sinkhorn, RejectsBadParameters) {
  SinkhornParams p;
  p.epsilon = 0.0;
  EXPECT_THROW(sinkhorn(Matrix::Zero(2, 2), p), std::invalid_argument);
  p.epsilon = -1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.tol = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  EXPECT_THROW(sinkhorn(Matrix::Zero(2, 3), SinkhornParams{}), std::invalid_argument);
}

TEST(Sinkhorn, SinglePoint) {
  const auto r = sinkhorn(Matrix::Constant(1, 1, 2.5), SinkhornParams{});
  EXPECT_DOUBLE_EQ(r.plan(0, 0), 1.0);
  EXPECT_NEAR(r.value, 2.5 + 0.1 * -1.0, 1e-12);
}

TEST(SinkhornSymmetric, AgreesWithAlternatingUpdates) {
  std::mt19937_64 gen(79);
  for (bool log_domain : {false, true}) {
    const Points x = oracle::random_points(gen, 7, 2);
    const Matrix c = cost_matrix(x, x, {CostKind::sq_euclidean});
    SinkhornParams p;
    p.epsilon = 0.1;
    p.tol = 1e-13;
    p.log_domain = log_domain;
    const auto sym = sinkhorn_symmetric(c, p);
    const auto alt = sinkhorn(c, p);
    EXPECT_TRUE(sym.converged);
    EXPECT_EQ(sym.log_domain, log_domain);
    EXPECT_NEAR(sym.value, alt.value, 1e-11);
    EXPECT_LE((sym.plan - alt.plan).cwiseAbs().maxCoeff(), 1e-11);
    EXPECT_EQ(sym.f, sym.g);
  }
}

// Two almost coincident points make alternating updates crawl.
TEST(SinkhornSymmetric, FastOnNearDuplicates) {
  Points x(4, 2);
  x << 0.1, 0.2, 0.8, 0.3, 0.5, 0.9, 0.5, 0.92;
  const Matrix c = cost_matrix(x, x, {});
  const auto r = sinkhorn_symmetric(c, SinkhornParams{});
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.iterations, 200);
  EXPECT_THROW(sinkhorn_symmetric(cost_matrix(x, x.array() + 1.0, {}), SinkhornParams{}),
               std::invalid_argument);
}

TEST(Divergence, SelfIsZero) {
  std::mt19937_64 gen(67);
  for (int t = 0; t < 5; ++t) {
    const Points x = oracle::random_points(gen, 6, 2);
    EXPECT_NEAR(sinkhorn_divergence(cloud(x), cloud(x), {}, SinkhornParams{}), 0.0, 1e-8);
  }
}

TEST(Divergence, Symmetric) {
  std::mt19937_64 gen(71);
  const Points x = oracle::random_points(gen, 6, 2);
  const Points y = oracle::random_points(gen, 6, 2);
  SinkhornParams p;
  p.tol = 1e-12;
  EXPECT_NEAR(sinkhorn_divergence(cloud(x), cloud(y), {}, p),
              sinkhorn_divergence(cloud(y), cloud(x), {}, p), 1e-9);
}

TEST(Divergence, NonNegative) {
  std::mt19937_64 gen(73);
  SinkhornParams p;
  p.epsilon = 0.05;
  for (int t = 0; t < 20; ++t) {
    const Points x = oracle::random_points(gen, 4, 2);
    const Points y = oracle::random_points(gen, 4, 2);
    EXPECT_GE(sinkhorn_divergence(cloud(x), cloud(y), {}, p), -1e-6);
  }
}
