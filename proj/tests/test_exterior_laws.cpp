#include <gtest/gtest.h>

#include "support/oracles.hpp"

namespace {

constexpr int kCases = 200;
constexpr double kTol = 1e-10;

void run_law(double (*law)(oracle::RandomForms&), std::uint64_t salt) {
    oracle::RandomForms g(oracle::law_chart(), oracle::kSeed + salt);
    double worst = 0.0;
    for (int i = 0; i < kCases; ++i) worst = std::max(worst, law(g));
    EXPECT_LT(worst, kTol);
}

}  // namespace

TEST(ExteriorLaws, DSquaredVanishes) { run_law(oracle::law_dd, 0); }
TEST(ExteriorLaws, PullbackCommutesWithD) { run_law(oracle::law_pullback_d, 1); }
TEST(ExteriorLaws, PullbackDistributesOverWedge) { run_law(oracle::law_pullback_wedge, 2); }
TEST(ExteriorLaws, GradedAnticommutativity) { run_law(oracle::law_anticommute, 3); }
TEST(ExteriorLaws, InteriorProductIsAnAntiderivation) { run_law(oracle::law_interior, 4); }
