#include "d2oc/transport.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>

using namespace d2oc;

namespace {

void expect_marginals(const TransportPlan& plan, std::span<const double> a, std::span<const double> b) {
  std::vector<double> ra(a.size(), 0.0), rb(b.size(), 0.0);
  for (const auto& e : plan.entries) {
    EXPECT_GE(e.mass, 0.0);
    ra[e.source] += e.mass;
    rb[e.sink] += e.mass;
  }
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(ra[i], a[i], 1e-9);
  for (std::size_t j = 0; j < b.size(); ++j) EXPECT_NEAR(rb[j], b[j], 1e-9);
}

double plan_cost(const TransportPlan& plan, const Eigen::MatrixXd& cost) {
  double c = 0.0;
  for (const auto& e : plan.entries)
    c += e.mass * cost(static_cast<Eigen::Index>(e.source), static_cast<Eigen::Index>(e.sink));
  return c;
}

}  // namespace

TEST(Wasserstein, IdenticalMeasuresCostNothing) {
  std::mt19937_64 rng(1);
  const DiscreteMeasure mu{oracle::random_points(rng, 6, 10.0), oracle::random_simplex(rng, 6)};
  const auto plan = wasserstein_lp(mu, mu);
  EXPECT_NEAR(plan.total_cost, 0.0, 1e-12);
  expect_marginals(plan, mu.weights, mu.weights);
}

TEST(Wasserstein, TwoPointMasses) {
  const DiscreteMeasure a{{Vec2(0, 0)}, {1.0}};
  const DiscreteMeasure b{{Vec2(3, 4)}, {1.0}};
  EXPECT_DOUBLE_EQ(wasserstein_lp(a, b).total_cost, 25.0);
}

TEST(Wasserstein, MatchesVertexEnumeration) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const DiscreteMeasure a{oracle::random_points(rng, 4, 10.0), oracle::random_simplex(rng, 4)};
    const DiscreteMeasure b{oracle::random_points(rng, 5, 10.0), oracle::random_simplex(rng, 5)};
    const auto cost = squared_distance_matrix(a.points, b.points);
    const auto plan = wasserstein_lp(a, b);
    expect_marginals(plan, a.weights, b.weights);
    EXPECT_NEAR(plan.total_cost, plan_cost(plan, cost), 1e-12);
    EXPECT_NEAR(plan.total_cost, oracle::brute_force_transport(a.weights, b.weights, cost), 1e-9);
  }
}

TEST(Wasserstein, DegenerateMarginals) {
  // Equal integer masses produce degenerate bases throughout.
  const std::vector<double> a(6, 1.0 / 6), b(6, 1.0 / 6);
  std::mt19937_64 rng(5);
  Eigen::MatrixXd cost(6, 6);
  std::uniform_int_distribution<int> u(0, 3);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) cost(i, j) = u(rng);
  const auto plan = solve_transport(a, b, cost);
  expect_marginals(plan, a, b);
  std::vector<int> perm{0, 1, 2, 3, 4, 5};
  double best = 1e9;
  do {
    double c = 0.0;
    for (int i = 0; i < 6; ++i) c += cost(i, perm[static_cast<std::size_t>(i)]) / 6.0;
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  // Birkhoff: the assignment polytope's vertices are permutations, so they coincide.
  EXPECT_NEAR(plan.total_cost, best, 1e-12);
}

TEST(Wasserstein, Symmetric) {
  std::mt19937_64 rng(2);
  const DiscreteMeasure a{oracle::random_points(rng, 12, 5.0), oracle::random_simplex(rng, 12)};
  const DiscreteMeasure b{oracle::random_points(rng, 9, 5.0), oracle::random_simplex(rng, 9)};
  EXPECT_NEAR(wasserstein_lp(a, b).total_cost, wasserstein_lp(b, a).total_cost, 1e-9);
}

TEST(Wasserstein, RejectsMassMismatch) {
  const DiscreteMeasure a{{Vec2(0, 0)}, {1.0}};
  const DiscreteMeasure b{{Vec2(1, 0)}, {0.9}};
  EXPECT_THROW(wasserstein_lp(a, b), InfeasibleError);
  const DiscreteMeasure neg{{Vec2(1, 0), Vec2(2, 0)}, {1.5, -0.5}};
  EXPECT_THROW(wasserstein_lp(a, neg), InfeasibleError);
}

TEST(SingleSink, TrivialCases) {
  SampleCloud cloud{{Vec2(3, 4)}, {0.2}, 0.8};
  const auto plan = single_sink_plan(Vec2(0, 0), cloud, 0.2);
  ASSERT_EQ(plan.entries.size(), 1u);
  EXPECT_DOUBLE_EQ(plan.entries[0].mass, 0.2);
  EXPECT_DOUBLE_EQ(plan.total_cost, 0.2 * 25.0);
  EXPECT_TRUE(single_sink_plan(Vec2(0, 0), cloud, 0.0).entries.empty());
  EXPECT_THROW(single_sink_plan(Vec2(0, 0), cloud, 0.3), InfeasibleError);
}

TEST(SingleSink, EquidistantTieGoesToLowestIndex) {
  SampleCloud cloud{{Vec2(1, 0), Vec2(-1, 0), Vec2(0, 1)}, {0.4, 0.4, 0.2}, 0.0};
  const auto plan = single_sink_plan(Vec2(0, 0), cloud, 0.5);
  ASSERT_EQ(plan.entries.size(), 2u);
  EXPECT_EQ(plan.entries[0].sink, 0u);
  EXPECT_DOUBLE_EQ(plan.entries[0].mass, 0.4);
  EXPECT_EQ(plan.entries[1].sink, 1u);
  EXPECT_NEAR(plan.entries[1].mass, 0.1, 1e-15);
}

TEST(SingleSink, MatchesLpPlanMassByMass) {
  std::mt19937_64 rng(20);
  SampleCloud cloud;
  cloud.positions = oracle::random_points(rng, 20, 10.0);
  cloud.weights = oracle::random_simplex(rng, 20);
  const Vec2 y(4.0, 6.0);
  const double alpha = 0.3;
  const auto greedy = single_sink_plan(y, cloud, alpha);

  // LP with a zero-cost dummy source absorbing the mass that stays behind.
  Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(2, 20);
  for (int j = 0; j < 20; ++j) cost(0, j) = (cloud.positions[static_cast<std::size_t>(j)] - y).squaredNorm();
  const std::vector<double> supply{alpha, 1.0 - alpha};
  const auto lp = solve_transport(supply, cloud.weights, cost);

  std::map<std::size_t, double> a, b;
  for (const auto& e : greedy.entries) a[e.sink] += e.mass;
  for (const auto& e : lp.entries)
    if (e.source == 0 && e.mass > 0.0) b[e.sink] += e.mass;
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [j, m] : a) EXPECT_NEAR(m, b[j], 1e-9);
  EXPECT_NEAR(greedy.total_cost, lp.total_cost, 1e-9);
}
