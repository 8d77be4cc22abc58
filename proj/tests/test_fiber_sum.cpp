#include <gtest/gtest.h>

#include <cmath>

#include "csf/fiber_sum.hpp"
#include "csf/models.hpp"
#include "csf/parse.hpp"
#include "support/oracles.hpp"

using namespace csf;

namespace {

constexpr double kEps = kDefaultSumEpsilon;

/// Random Darboux point (z, r_k, theta_k) with |x| = rho and r_k >= 0.05 eps.
Point annulus_point(oracle::RandomForms& g, int n, double rho) {
    for (;;) {
        Point x(static_cast<std::size_t>(2 * n + 1));
        double s = 0.0;
        x[0] = g.uniform(-1.0, 1.0);
        s += x[0] * x[0];
        for (int k = 1; k <= n; ++k) {
            x[static_cast<std::size_t>(2 * k - 1)] = g.uniform(0.0, 1.0);
            x[static_cast<std::size_t>(2 * k)] = g.uniform(0.0, kTwoPi);
            s += x[static_cast<std::size_t>(2 * k - 1)] * x[static_cast<std::size_t>(2 * k - 1)];
        }
        const double f = rho / std::sqrt(s);
        bool ok = true;
        x[0] *= f;
        for (int k = 1; k <= n; ++k) ok = ok && (x[static_cast<std::size_t>(2 * k - 1)] *= f) >= 0.05 * kEps;
        if (ok) return x;
    }
}

double norm(const Point& x, int n) {
    double s = x[0] * x[0];
    for (int k = 1; k <= n; ++k) s += x[static_cast<std::size_t>(2 * k - 1)] * x[static_cast<std::size_t>(2 * k - 1)];
    return std::sqrt(s);
}

/// Upsilon written out by hand: parity map, then radial rescaling to sqrt(eps^2 - rho^2).
Point upsilon_by_hand(const Point& x, int n) {
    Point y = x;
    if (n % 2 == 1) {
        y[1] = -y[1];
    } else {
        y[0] = -y[0];
        for (int k = 1; k <= n; ++k) y[static_cast<std::size_t>(2 * k)] = -y[static_cast<std::size_t>(2 * k)];
    }
    const double rho = norm(x, n), s = std::sqrt(kEps * kEps - rho * rho) / rho;
    y[0] *= s;
    for (int k = 1; k <= n; ++k) y[static_cast<std::size_t>(2 * k - 1)] *= s;
    return y;
}

struct Sigmas {
    SumSpec spec;
    GluingMaps maps;
    BundleContactForm left, right;
};

Sigmas sum_inputs(int n, bool reversed = true) {
    const DiskFiber f = disk_fiber();
    Sigmas s{darboux_sum_spec(n, f.chart, f.beta, f.exclusions, kEps, reversed), build_phi(n, f.chart, std::nullopt, kEps), {}, {}};
    s.left = assemble_sigma(s.spec.left, 1.0);
    s.right = assemble_sigma(s.spec.right, 1.0);
    return s;
}

}  // namespace

class DarbouxChange : public ::testing::TestWithParam<int> {};

TEST_P(DarbouxChange, PullsBackToDwPlusUdv) {
    const int n = GetParam();
    const SmoothMap m = darboux_change(n);
    DifferentialForm target = DifferentialForm::differential(m.target(), "z");
    DifferentialForm expected = DifferentialForm::differential(m.source(), "w");
    for (int k = 1; k <= n; ++k) {
        const std::string x = indexed("x", k), y = indexed("y", k);
        target = target + var(x) * DifferentialForm::differential(m.target(), y) - var(y) * DifferentialForm::differential(m.target(), x);
        expected = expected + var(indexed("u", k)) * DifferentialForm::differential(m.source(), indexed("v", k));
    }
    EXPECT_TRUE((pullback(m, target) - expected).simplified().is_zero());
}

INSTANTIATE_TEST_SUITE_P(Dimensions, DarbouxChange, ::testing::Values(1, 2, 3));

class GluingMapsTest : public ::testing::TestWithParam<int> {};

TEST_P(GluingMapsTest, NormPreservingAndFiberOrientationReversing) {
    const int n = GetParam();
    const GluingMaps g = build_phi(n, disk_fiber().chart);
    oracle::RandomForms rng(g.darboux);
    for (int i = 0; i < 200; ++i) {
        const Point x = annulus_point(rng, n, rng.uniform(0.55 * kEps, 0.85 * kEps));
        EXPECT_NEAR(norm(g.PhiF(x), n), norm(x, n), 1e-12);
        const auto J = oracle::numeric_jacobian([&](const Point& p) { return g.PhiF(p); }, x);
        EXPECT_LT(oracle::determinant(J), 0.0);
    }
}

TEST_P(GluingMapsTest, UpsilonFixesTheMiddleSphereAndIsAnInvolution) {
    const int n = GetParam();
    const GluingMaps g = build_phi(n, disk_fiber().chart);
    const AnnulusMap ups = build_upsilon(g, kEps);
    oracle::RandomForms rng(g.darboux);
    for (int i = 0; i < 200; ++i) {
        const Point s = annulus_point(rng, n, kEps / std::sqrt(2.0));
        EXPECT_NEAR(norm(ups(s), n), kEps / std::sqrt(2.0), 1e-12);
        const Point x = annulus_point(rng, n, rng.uniform(0.55 * kEps, 0.85 * kEps));
        const Point y = ups(x), hand = upsilon_by_hand(x, n), back = ups(y);
        for (std::size_t k = 0; k < x.size(); ++k) {
            EXPECT_NEAR(y[k], hand[k], 1e-12);
            EXPECT_NEAR(back[k], x[k], 1e-12);
        }
    }
    const GluingProperties p = gluing_properties(g, kEps, 200, oracle::kSeed);
    EXPECT_LT(p.max_determinant, 0.0);
    EXPECT_LE(p.involution_residual, 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Parity, GluingMapsTest, ::testing::Values(1, 2, 3));

TEST(Upsilon, OutsideTheAnnulusIsAnError) {
    const AnnulusMap ups = build_upsilon(build_phi(1, disk_fiber().chart), kEps);
    EXPECT_THROW(ups(Point{0.0, 0.1, 0.0}), Error);
    EXPECT_THROW(ups(Point{0.0, 0.4, 0.0}), Error);
}

TEST(Pullback, OddDimensionGluesExactly) {
    const Sigmas s = sum_inputs(1);
    const PullbackReport r = verify_gluing_pullback(s.spec, s.left.ambient[0], s.right.ambient[0], s.maps);
    EXPECT_TRUE(r.passed);
    EXPECT_LT(r.max_residual, 1e-12);
}

TEST(Pullback, EvenDimensionNeedsTheReversedBase) {
    const Sigmas good = sum_inputs(2, true);
    const PullbackReport r = verify_gluing_pullback(good.spec, good.left.ambient[0], good.right.ambient[0], good.maps);
    EXPECT_TRUE(r.passed);
    EXPECT_LT(r.max_residual, 1e-9);

    const Sigmas bad = sum_inputs(2, false);
    const PullbackReport w = verify_gluing_pullback(bad.spec, bad.left.ambient[0], bad.right.ambient[0], bad.maps);
    EXPECT_FALSE(w.passed);
    // the two sides differ by 2 (dz + sum r^2 dtheta), whose dz coefficient is 2
    EXPECT_NEAR(w.max_residual, 2.0, 1e-9);
    EXPECT_GT(w.max_residual, 1.0);
    EXPECT_FALSE(w.worst_coefficient.empty());
}

class SummedBundle : public ::testing::TestWithParam<int> {};

TEST_P(SummedBundle, RunsTheBundlePipelineAtTheInheritedK) {
    const int n = GetParam();
    const Sigmas s = sum_inputs(n);
    const double K_left = find_admissible_K(s.spec.left).K, K_right = find_admissible_K(s.spec.right).K;
    const FibrationSpec summed = assemble_summed_fibration(s.spec, s.maps);
    EXPECT_TRUE(summed.collars.empty());
    ASSERT_EQ(summed.seams.size(), 1u);
    const KSearchResult k = find_admissible_K(summed);
    EXPECT_TRUE(k.report.passed);
    EXPECT_EQ(k.K, std::max(K_left, K_right));
    EXPECT_LT(k.report.seam_residual, 1e-9);
    const BundleContactForm sigma = assemble_sigma(summed, k.K);
    EXPECT_TRUE(verify_compatibility(sigma, summed).passed);
    // each retained piece carries the original form
    for (std::size_t side = 0; side < 2; ++side) {
        const BundleContactForm orig = assemble_sigma(side == 0 ? s.spec.left : s.spec.right, k.K);
        const SampleGrid g = detail::piece_grid(summed, summed.pieces[side], {});
        EXPECT_LE(form_distance(rebind(sigma.ambient[side], g.chart()), rebind(orig.ambient[0], g.chart()), g), 1e-10);
    }
}

INSTANTIATE_TEST_SUITE_P(Parity, SummedBundle, ::testing::Values(1, 2));

TEST(SummedBundle, RefusesBadInputs) {
    Sigmas bad = sum_inputs(2, false);
    EXPECT_THROW(assemble_summed_fibration(bad.spec, bad.maps), Error);

    Sigmas close = sum_inputs(1);
    close.spec.same_total_space = true;
    close.spec.left_center = {0.0, 0.0, 0.0};
    close.spec.right_center = {0.5, 0.0, 0.0};
    EXPECT_THROW(assemble_summed_fibration(close.spec, close.maps), Error);
    close.spec.right_center = {0.9, 0.0, 0.0};
    EXPECT_NO_THROW(validate_sum(close.spec));

    Sigmas twisted = sum_inputs(1);
    const Chart& F = twisted.spec.left.fiber;
    twisted.spec.fiber_identification = SmoothMap(F, F, {-var("x"), -var("y")});
    EXPECT_THROW(assemble_summed_fibration(twisted.spec, twisted.maps), Error);
}
