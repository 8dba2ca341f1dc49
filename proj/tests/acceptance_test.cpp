// Acceptance suite: every validation criterion at its pinned tolerance,
// one pass/fail line per criterion. The same checks back the CLI's
// validate-all subcommand.

#include <gtest/gtest.h>

#include <cstdio>

#include "gwip/validate.hpp"

namespace gwip {
namespace {

void report(const CriterionResult& r) {
  std::printf("[criterion %2d] %s  %s | tolerance: %s | %s\n", r.id, r.pass ? "PASS" : "FAIL",
              r.name.c_str(), r.tolerance.c_str(), r.detail.c_str());
  std::fflush(stdout);
  EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
}

TEST(Acceptance, C01SurvivalOracle) { report(validate::survival_oracle()); }
TEST(Acceptance, C02KLimit) { report(validate::k_limit()); }
TEST(Acceptance, C03PivotLaw) { report(validate::pivot_law()); }
TEST(Acceptance, C04KernelCrossValidation) { report(validate::kernel_cross_validation()); }
TEST(Acceptance, C05ExponentialLimit) { report(validate::exponential_limit()); }
TEST(Acceptance, C06LpeConsistency) { report(validate::lpe_consistency()); }
TEST(Acceptance, C07CouplingCorridor) { report(validate::coupling_corridor_check()); }
TEST(Acceptance, C08DualDecay) { report(validate::dual_decay_check()); }
TEST(Acceptance, C09HeavyWeightFiniteness) { report(validate::heavy_weight_finiteness()); }
TEST(Acceptance, C10MeasureSymmetry) { report(validate::measure_symmetry()); }
TEST(Acceptance, C11TheoremBoundaries) { report(validate::theorem_boundaries()); }
TEST(Acceptance, C12Determinism) { report(validate::determinism()); }

}  // namespace
}  // namespace gwip
