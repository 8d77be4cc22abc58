#include <gtest/gtest.h>

#include <cmath>

#include "csf/models.hpp"
#include "csf/parse.hpp"
#include "support/oracles.hpp"

using namespace csf;

namespace {

Chart xyz() { return Chart("R3", {"x", "y", "z"}, std::vector<Interval>(3, {-1.0, 1.0})); }

}  // namespace

TEST(Contact, StandardFormHasUnitDensity) {
    const DifferentialForm a = parse_form("dz + x*dy", xyz());
    const PositivityReport r = verify_contact(a, SampleGrid::uniform(a.chart(), 11));
    EXPECT_TRUE(r.passed);
    // alpha ^ d alpha = dx ^ dy ^ dz everywhere; max coefficient of alpha is 1
    EXPECT_NEAR(r.min_value, 1.0, 1e-15);
    EXPECT_NEAR(r.max_value, 1.0, 1e-15);
}

TEST(Contact, DzIsNotContact) {
    const DifferentialForm a = parse_form("dz", xyz());
    const PositivityReport r = verify_contact(a, SampleGrid::uniform(a.chart(), 11));
    EXPECT_FALSE(r.passed);
    EXPECT_EQ(r.min_value, 0.0);
    EXPECT_EQ(r.argmin_point.size(), 3u);
}

TEST(Contact, PolarDarbouxDensityIsTwoR) {
    const Chart polar("U", {"z", "r1", "theta1"}, {{-1.0, 1.0}, {0.0, 1.0}, {0.0, kTwoPi}}, {false, false, true});
    const DifferentialForm a = parse_form("dz + r1^2*dtheta1", polar);
    const SampleGrid g = SampleGrid::uniform(polar, 9);
    const PositivityReport r = verify_contact(a, g);
    // density 2 r on the grid; the smallest retained radius sits above the polar cut
    double rmin = 1e9;
    for (std::size_t i = 0; i < g.size(); ++i) rmin = std::min(rmin, g.point(i)[1]);
    EXPECT_NEAR(r.raw_min, 2.0 * rmin, 1e-14);
    EXPECT_TRUE(r.passed);
}

TEST(Contact, ReversedOrientationFlipsSign) {
    const Chart c = xyz().with_orientation(-1);
    const DifferentialForm a = parse_form("dz + x*dy", c);
    EXPECT_FALSE(verify_contact(a, SampleGrid::uniform(c, 7)).passed);
    // in dimension 3 alpha and -alpha give the same volume; dz - x dy gives the opposite one
    EXPECT_FALSE(verify_contact(Expr(-1.0) * a, SampleGrid::uniform(c, 7)).passed);
    EXPECT_TRUE(verify_contact(parse_form("dz - x*dy", c), SampleGrid::uniform(c, 7)).passed);
}

TEST(Contact, EvenDimensionalChartIsRejected) {
    const Chart c("P", {"x", "y"}, {{-1.0, 1.0}, {-1.0, 1.0}});
    EXPECT_THROW(verify_contact(parse_form("dx", c), SampleGrid::uniform(c, 5)), Error);
}

TEST(Symplectic, DeterminantOfStandardForm) {
    const Chart c("R4", {"x1", "y1", "x2", "y2"}, std::vector<Interval>(4, {-1.0, 1.0}));
    const DifferentialForm w = parse_form("dx1 wedge dy1 + 3*dx2 wedge dy2", c);
    const Point p{0.0, 0.0, 0.0, 0.0};
    EXPECT_NEAR(nondegeneracy_determinant(w, p), 9.0, 1e-12);
    EXPECT_THROW(nondegeneracy_determinant(parse_form("dx wedge dy", xyz()), Point{0, 0, 0}), Error);
}

TEST(Symplectic, DiskIsExactSymplecticWithOutwardLiouvilleField) {
    const DiskFiber f = disk_fiber();
    const SampleGrid g = SampleGrid::uniform(f.chart, 15, f.exclusions);
    const PositivityReport r = verify_exact_symplectic(f.beta, g, f.boundaries, kDefaultThreshold, true);
    EXPECT_TRUE(r.passed) << r.message;
    // chi = (x, y)/2 has normal component 1/2 on the unit circle
    EXPECT_NEAR(r.details.at("outward_min"), 0.5, 1e-12);
    const LiouvilleField chi = liouville_field(f.beta, g);
    ASSERT_TRUE(chi.symbolic.has_value());
    EXPECT_TRUE(symbolically_equal(chi.symbolic->components[0], Expr(0.5) * var("x")));
    EXPECT_TRUE(symbolically_equal(chi.symbolic->components[1], Expr(0.5) * var("y")));
}

TEST(Symplectic, TranslatedPrimitiveFailsOutwardness) {
    const DiskFiber f = disk_fiber();
    // beta - dy: same d beta, Liouville field ((x - 2)/2, y/2) points inward near (1, 0)
    const DifferentialForm shifted = parse_form("0.5*((x - 2)*dy - y*dx)", f.chart);
    const SampleGrid g = SampleGrid::uniform(f.chart, 9, f.exclusions);
    const PositivityReport r = verify_exact_symplectic(shifted, g, f.boundaries, kDefaultThreshold, true);
    EXPECT_FALSE(r.passed);
    EXPECT_NEAR(r.details.at("outward_min"), -0.5, 1e-12);
}

TEST(Symplectic, DegenerateBetaFails) {
    const DiskFiber f = disk_fiber();
    const DifferentialForm beta = parse_form("x*dx", f.chart);
    const PositivityReport r = verify_exact_symplectic(beta, SampleGrid::uniform(f.chart, 9, f.exclusions));
    EXPECT_FALSE(r.passed);
    EXPECT_THROW(verify_exact_symplectic(f.beta, SampleGrid::uniform(f.chart, 9), {}, kDefaultThreshold, true), Error);
}

TEST(Potential, TranslationHasLinearPotential) {
    const DiskFiber f = disk_fiber();
    const SmoothMap phi(f.chart, f.chart, {var("x") + Expr(0.1), var("y")});
    const PotentialResult r = exact_symplectomorphism_potential(phi, f.beta);
    ASSERT_TRUE(r.psi.has_value());
    // phi^* beta - beta = 0.05 dy, so psi = 0.05 y up to a constant fixed at the base point (the origin)
    EXPECT_TRUE(symbolically_equal(*r.psi, Expr(0.05) * var("y"))) << to_string(*r.psi);
    EXPECT_LT(r.max_closedness_residual, 1e-12);
    EXPECT_LT(r.max_path_discrepancy, 1e-12);
    EXPECT_LT(r.max_potential_residual, 1e-12);
}

TEST(Potential, RotationIsExactWithZeroPotential) {
    const DiskFiber f = disk_fiber();
    const double a = 0.3;
    const SmoothMap rot(f.chart, f.chart,
                        {Expr(std::cos(a)) * var("x") - Expr(std::sin(a)) * var("y"),
                         Expr(std::sin(a)) * var("x") + Expr(std::cos(a)) * var("y")});
    const PotentialResult r = exact_symplectomorphism_potential(rot, f.beta);
    EXPECT_LT(r.max_potential_residual, 1e-12);
    oracle::RandomForms g(f.chart);
    for (int i = 0; i < 20; ++i) {
        const Point p = g.point(-0.6, 0.6);
        const double v = r.psi ? evaluate(*r.psi, f.chart.coords(), p) : r.table->value(p)[0];
        EXPECT_NEAR(v, 0.0, 1e-12);
    }
}

TEST(Potential, NonSymplecticMapIsRejected) {
    const DiskFiber f = disk_fiber();
    const SmoothMap stretch(f.chart, f.chart, {Expr(2.0) * var("x"), var("y")});
    EXPECT_THROW(exact_symplectomorphism_potential(stretch, f.beta), Error);
}
