#include <gtest/gtest.h>

#include <cmath>

#include "csf/parse.hpp"
#include "support/oracles.hpp"

using namespace csf;

namespace {

Chart xyz() { return Chart("R3", {"x", "y", "z"}, std::vector<Interval>(3, {-1.0, 1.0})); }

double coeff_at(const DifferentialForm& a, const std::vector<std::string>& coords, const Point& p) {
    return evaluate(a.coefficient(coords), a.chart().coords(), p);
}

}  // namespace

TEST(Forms, WedgeOfDifferentialsIsAntisymmetric) {
    const Chart c = xyz();
    const auto dx = DifferentialForm::differential(c, "x"), dy = DifferentialForm::differential(c, "y");
    const DifferentialForm a = wedge(dx, dy), b = wedge(dy, dx);
    const Point p{0.1, 0.2, 0.3};
    EXPECT_EQ(coeff_at(a, {"x", "y"}, p), 1.0);
    EXPECT_EQ(coeff_at(b, {"x", "y"}, p), -1.0);
    EXPECT_TRUE(wedge(dx, dx).is_zero());
}

TEST(Forms, ExteriorDerivativeMatchesFiniteDifferences) {
    oracle::RandomForms g(oracle::law_chart());
    for (int i = 0; i < 60; ++i) {
        const DifferentialForm a = g.form(g.pick(3));
        const Point p = g.point(-0.8, 0.8);
        const auto fd = oracle::finite_difference_d(a, p);
        const auto sym = evaluate_coefficients(d(a), p);
        for (const auto& [m, v] : fd) {
            const double s = sym.count(m) ? sym.at(m) : 0.0;
            EXPECT_NEAR(s, v, 1e-6 * std::max(1.0, std::abs(v)));
        }
        for (const auto& [m, v] : sym)
            if (!fd.count(m)) EXPECT_NEAR(v, 0.0, 1e-9);
    }
}

TEST(Forms, PolarPullbackOfAreaForm) {
    const Chart polar("P", {"r", "theta"}, {{0.0, 1.0}, {0.0, kTwoPi}}, {false, true});
    const Chart plane("D", {"x", "y"}, {{-1.0, 1.0}, {-1.0, 1.0}});
    const SmoothMap F(polar, plane, {var("r") * cos(var("theta")), var("r") * sin(var("theta"))});
    const DifferentialForm area = wedge(DifferentialForm::differential(plane, "x"), DifferentialForm::differential(plane, "y"));
    const DifferentialForm pulled = pullback(F, area);
    for (double r : {0.2, 0.5, 0.9})
        for (double th : {0.0, 1.0, 4.0}) EXPECT_NEAR(coeff_at(pulled, {"r", "theta"}, {r, th}), r, 1e-14);
    // x dy - y dx pulls back to r^2 dtheta
    const DifferentialForm lam = parse_form("x*dy - y*dx", plane);
    const DifferentialForm pl = pullback(F, lam);
    EXPECT_NEAR(coeff_at(pl, {"theta"}, {0.7, 2.0}), 0.49, 1e-14);
    EXPECT_NEAR(coeff_at(pl, {"r"}, {0.7, 2.0}), 0.0, 1e-14);
}

TEST(Forms, TopDensityOfStandardContactForm) {
    const Chart c = xyz();
    const DifferentialForm a = parse_form("dz + x*dy", c);
    // a ^ da = dz ^ dx ^ dy = dx ^ dy ^ dz
    const Expr top = top_density(wedge(a, d(a)));
    EXPECT_TRUE(symbolically_equal(top, Expr(1.0)));
}

TEST(Forms, InteriorProductOnMonomials) {
    const Chart c = xyz();
    const VectorField X(c, {Expr(1.0), Expr(2.0), Expr(3.0)});
    const DifferentialForm w = parse_form("dx wedge dy", c);
    const DifferentialForm i = interior_product(X, w);
    const Point p{0.0, 0.0, 0.0};
    // i_X (dx ^ dy) = X^x dy - X^y dx
    EXPECT_EQ(coeff_at(i, {"y"}, p), 1.0);
    EXPECT_EQ(coeff_at(i, {"x"}, p), -2.0);
}

TEST(Forms, ParserBuildsWedgeChainsAndD) {
    const Chart c = xyz();
    const DifferentialForm a = parse_form("d(x*y*dz)", c);
    const DifferentialForm b = parse_form("y*dx wedge dz + x*dy wedge dz", c);
    EXPECT_TRUE((a - b).simplified().is_zero());
    EXPECT_THROW(parse_form("dq", c), ParseError);
    EXPECT_THROW(parse_form("sin(dx)", c), ParseError);
}

TEST(Forms, ChartMismatchIsAnError) {
    const Chart a = xyz();
    const Chart b("B", {"u", "v", "w"}, std::vector<Interval>(3, {-1.0, 1.0}));
    EXPECT_THROW(DifferentialForm::differential(a, "x") + DifferentialForm::differential(b, "u"), ChartError);
    EXPECT_THROW(DifferentialForm::differential(a, "u"), ChartError);
}

TEST(Forms, RebindMovesFormsBetweenChartsWithTheSameNames) {
    const Chart a = xyz();
    const Chart b = a.with_name("other");
    const DifferentialForm f = parse_form("x*dy", a);
    const DifferentialForm g = rebind(f, b);
    EXPECT_EQ(g.chart().name(), "other");
    EXPECT_NEAR(coeff_at(g, {"y"}, {0.5, 0.0, 0.0}), 0.5, 0.0);
}
