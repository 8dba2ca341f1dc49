#include "gwip/survival.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "gwip/tree.hpp"

namespace gwip {
namespace {

// Closed forms for Z == 2, from the fixed point (1 - p s)^2 = 1 - s:
// g(p) = (2p - 1)/p^2 and g'(p) = (2 - 2p)/p^3.
double g2(double p) { return (2.0 * p - 1.0) / (p * p); }
double g2prime(double p) { return (2.0 - 2.0 * p) / (p * p * p); }

TEST(Survival, ClosedFormBinary) {
  SurvivalSolver solver(OffspringDistribution::deterministic(2));
  EXPECT_NEAR(solver.g(0.75), g2(0.75), 1e-12);
  EXPECT_NEAR(solver.g(0.75), 0.888888888888888888, 1e-12);
  for (double p = 0.505; p < 1.0; p += 0.017) EXPECT_NEAR(solver.g(p), g2(p), 1e-12) << p;
}

TEST(Survival, BoundaryValues) {
  SurvivalSolver solver(OffspringDistribution::two_point(0.4));
  EXPECT_DOUBLE_EQ(solver.g(0.0), 0.0);
  EXPECT_DOUBLE_EQ(solver.g(solver.p_c()), 0.0);
  EXPECT_DOUBLE_EQ(solver.g(0.3), 0.0);
  EXPECT_DOUBLE_EQ(solver.g(1.0), 1.0);
  EXPECT_THROW(solver.g(1.5), std::domain_error);
  EXPECT_THROW(solver.g(-0.1), std::domain_error);
}

TEST(Survival, DerivativeClosedForm) {
  SurvivalSolver solver(OffspringDistribution::deterministic(2));
  EXPECT_NEAR(solver.g_prime(0.75), g2prime(0.75), 1e-10);
  EXPECT_NEAR(solver.g_prime(0.75), 1.185185185185185, 1e-10);
}

TEST(Survival, DerivativeLimitIsK) {
  SurvivalSolver s2(OffspringDistribution::deterministic(2));
  EXPECT_NEAR(s2.g_prime(s2.p_c() + 1e-5), 8.0, 1e-3);
  SurvivalSolver s3(OffspringDistribution::deterministic(3));
  EXPECT_NEAR(s3.g_prime(s3.p_c() + 1e-5), 9.0, 2e-3);
}

TEST(Survival, DerivativeLimitMonotoneInApproach) {
  for (auto dist : {OffspringDistribution::deterministic(2), OffspringDistribution::deterministic(3)}) {
    SurvivalSolver solver(dist);
    double K = solver.constants().K;
    double prev_gap = 1e18;
    for (int k = 2; k <= 6; ++k) {
      double gap = std::fabs(solver.g_prime(solver.p_c() + std::pow(10.0, -k)) - K);
      EXPECT_LT(gap, prev_gap) << "k=" << k;
      prev_gap = gap;
    }
  }
}

TEST(Survival, MonotoneOnGrid) {
  SurvivalSolver solver(OffspringDistribution::two_point(0.4));
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    double p = double(i) / 100.0;
    double g = solver.g(p);
    EXPECT_GE(g, prev - 1e-14);
    EXPECT_GE(g, 0.0);
    EXPECT_LE(g, 1.0);
    prev = g;
  }
  EXPECT_DOUBLE_EQ(solver.g(1.0), 1.0);
}

TEST(Survival, FiniteDifferenceConsistency) {
  for (auto dist : {OffspringDistribution::deterministic(2), OffspringDistribution::deterministic(3),
                    OffspringDistribution::two_point(0.4)}) {
    SurvivalSolver solver(dist);
    double scale = 2.0 * solver.constants().K;  // curvature scale of g near p_c
    const double h = 1e-4;
    for (double p : {solver.p_c() + 0.05, 0.6, 0.8}) {
      if (p <= solver.p_c() + 2.0 * h) continue;
      double fd = (solver.g(p + h) - solver.g(p - h)) / (2.0 * h);
      EXPECT_LE(std::fabs(fd - solver.g_prime(p)), 10.0 * h * h * scale) << p;
    }
  }
}

TEST(Survival, ResidualInvariant) {
  SurvivalSolver solver(OffspringDistribution::poisson_positive(2.0));
  const auto& d = solver.dist();
  for (double p : {0.55, 0.7, 0.9, 0.99}) {
    double s = solver.g(p);
    EXPECT_LE(std::fabs(d.phi(1.0 - p * s) - (1.0 - s)), 1e-12);
  }
}

TEST(Survival, NonConvergenceRaisesSolverError) {
  SurvivalSolver strict(OffspringDistribution::deterministic(2), 1e-13, 0);
  EXPECT_THROW(strict.g(0.75), solver_error);
}

TEST(Survival, InverseRoundTrip) {
  SurvivalSolver solver(OffspringDistribution::deterministic(2));
  for (double y : {0.01, 0.2, 0.5, 0.9, 0.999}) {
    double p = solver.g_inverse(y);
    EXPECT_NEAR(solver.g(p), y, 1e-10);
  }
  EXPECT_DOUBLE_EQ(solver.g_inverse(0.0), solver.p_c());
  EXPECT_DOUBLE_EQ(solver.g_inverse(1.0), 1.0);
}

TEST(Survival, GnDepthOneBinary) {
  SurvivalSolver solver(OffspringDistribution::deterministic(2));
  TreeArena arena(OffspringDistribution::deterministic(2), 42);
  martingale(arena.view(), 1);  // realize depth 1
  // 1 - (1 - 0.75 g)^2 with g = 8/9: 1 - (1/3)^2 = 8/9
  EXPECT_NEAR(solver.g_n(arena.view(), 1, 0.75), 8.0 / 9.0, 1e-12);
}

TEST(Survival, GnDepthZeroIsG) {
  SurvivalSolver solver(OffspringDistribution::two_point(0.4));
  TreeArena arena(OffspringDistribution::two_point(0.4), 7);
  EXPECT_DOUBLE_EQ(solver.g_n(arena.view(), 0, 0.8), solver.g(0.8));
}

TEST(Survival, GnRequiresRealizedPrefix) {
  SurvivalSolver solver(OffspringDistribution::deterministic(2));
  TreeArena arena(OffspringDistribution::deterministic(2), 42);
  EXPECT_THROW(solver.g_n(arena.view(), 3, 0.75), std::invalid_argument);
}

TEST(Survival, GnStaysInUnitInterval) {
  auto dist = OffspringDistribution::two_point(0.4);
  SurvivalSolver solver(dist);
  for (uint64_t seed : {1u, 2u, 3u}) {
    TreeArena arena(dist, seed);
    martingale(arena.view(), 8);
    for (double p : {0.65, 0.8, 0.95}) {
      double v = solver.g_n(arena.view(), 8, p);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Survival, ResistanceBoundPlugIn) {
  auto dist = OffspringDistribution::deterministic(2);
  SurvivalSolver solver(dist);
  TreeArena arena(dist, 1);
  martingale(arena.view(), 5);
  // W == 1 on the binary tree: 2 * 0.1 / (0.4 * 0.5) = 1.0
  EXPECT_NEAR(solver.resistance_upper_bound(arena.view(), 0.1, 5), 1.0, 1e-12);
  // linear in eps near zero
  EXPECT_NEAR(solver.resistance_upper_bound(arena.view(), 1e-6, 5), 2e-6 / (0.5 * 0.5), 1e-9);
  EXPECT_THROW(solver.resistance_upper_bound(arena.view(), 0.6, 5), std::domain_error);
  EXPECT_THROW(solver.resistance_upper_bound(arena.view(), -0.1, 5), std::domain_error);
}

TEST(Survival, ResistanceBoundDominatesGn) {
  auto dist = OffspringDistribution::two_point(0.4);
  SurvivalSolver solver(dist);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    TreeArena arena(dist, 1000 + seed);
    martingale(arena.view(), 14);
    for (double eps : {0.05, 0.1, 0.2}) {
      double bound = solver.resistance_upper_bound(arena.view(), eps, 14);
      double gn = solver.g_n(arena.view(), 14, solver.p_c() + eps);
      EXPECT_LE(gn, bound + 1e-12) << "seed=" << seed << " eps=" << eps;
    }
  }
}

TEST(Survival, EFunctionalVanishesOnRegularTree) {
  auto dist = OffspringDistribution::deterministic(2);
  SurvivalSolver solver(dist);
  TreeArena arena(dist, 3);
  martingale(arena.view(), 20);
  EXPECT_NEAR(solver.e_functional(arena.view(), 0.05, 20), 0.0, 1e-9);
  // deterministic tree: identical across seeds
  TreeArena arena2(dist, 99);
  martingale(arena2.view(), 20);
  EXPECT_DOUBLE_EQ(solver.e_functional(arena.view(), 0.05, 20),
                   solver.e_functional(arena2.view(), 0.05, 20));
  EXPECT_THROW(solver.e_functional(arena.view(), 0.0, 20), std::domain_error);
}

TEST(Survival, StabilizedDepthGrowsAsPShrinks) {
  auto dist = OffspringDistribution::deterministic(2);
  SurvivalSolver solver(dist);
  TreeArena arena(dist, 5);
  int d_low = solver.stabilized_depth(arena.view(), 0.55, 40);
  int d_high = solver.stabilized_depth(arena.view(), 0.7, 40);
  EXPECT_LE(d_low, d_high);  // discounted tail p^d |T_d| shrinks faster for smaller p
  EXPECT_GT(d_low, 0);
}

}  // namespace
}  // namespace gwip
