#include <gtest/gtest.h>

#include <cmath>

#include "csf/parse.hpp"
#include "support/oracles.hpp"

using namespace csf;

namespace {

Chart xyz() { return Chart("R3", {"x", "y", "z"}, std::vector<Interval>(3, {-1.0, 1.0})); }

}  // namespace

TEST(Expr, ConstantsFold) {
    EXPECT_TRUE((Expr(2.0) * Expr(3.0)).is_const(6.0));
    EXPECT_TRUE((var("x") * Expr(0.0)).is_zero());
    EXPECT_TRUE(simplify(var("x") - var("x")).is_zero());
    EXPECT_TRUE(simplify(var("x") * var("y") - var("y") * var("x")).is_zero());
}

TEST(Expr, EvaluatesHandWrittenFormula) {
    const Expr e = pow(var("x"), 3) * sin(var("y")) + exp(Expr(0.5) * var("z")) / (Expr(2.0) + var("x"));
    const std::vector<std::string> names{"x", "y", "z"};
    const double p[] = {0.3, -0.7, 0.9};
    const double expected = std::pow(0.3, 3) * std::sin(-0.7) + std::exp(0.45) / 2.3;
    EXPECT_NEAR(evaluate(e, names, p), expected, 1e-15);
}

TEST(Expr, DerivativeMatchesFiniteDifferences) {
    oracle::RandomForms g(xyz());
    const std::vector<std::string> names{"x", "y", "z"};
    for (int i = 0; i < 100; ++i) {
        const Expr e = g.scalar(3);
        const std::string x = names[static_cast<std::size_t>(g.pick(3))];
        const std::size_t k = static_cast<std::size_t>(std::find(names.begin(), names.end(), x) - names.begin());
        Point p = g.point(-0.8, 0.8), hi = p, lo = p;
        const double h = 1e-5;
        hi[k] += h;
        lo[k] -= h;
        const double fd = (evaluate(e, names, hi) - evaluate(e, names, lo)) / (2 * h);
        const double sym = evaluate(partial_derivative(e, x), names, p);
        EXPECT_NEAR(sym, fd, 1e-6 * std::max(1.0, std::abs(fd))) << to_string(e);
    }
}

TEST(Expr, SimplifyPreservesValues) {
    oracle::RandomForms g(xyz());
    const std::vector<std::string> names{"x", "y", "z"};
    for (int i = 0; i < 100; ++i) {
        const Expr e = g.scalar(3);
        const Point p = g.point();
        const double a = evaluate(e, names, p), b = evaluate(simplify(e), names, p);
        EXPECT_NEAR(a, b, 1e-12 * std::max(1.0, std::abs(a)));
    }
}

TEST(Expr, TapeAgreesWithTreeEvaluation) {
    oracle::RandomForms g(xyz());
    const std::vector<std::string> names{"x", "y", "z"};
    for (int i = 0; i < 50; ++i) {
        const Expr e = g.scalar(4);
        const Tape t(e, names);
        const Point p = g.point();
        const double a = evaluate(e, names, p);
        EXPECT_NEAR(t(p), a, 1e-13 * std::max(1.0, std::abs(a)));
    }
}

TEST(Expr, PrintedFormParsesBack) {
    oracle::RandomForms g(xyz());
    const std::vector<std::string> names{"x", "y", "z"};
    for (int i = 0; i < 50; ++i) {
        const Expr e = g.scalar(3);
        const Expr back = parse_expression(to_string(e), names);
        const Point p = g.point();
        const double a = evaluate(e, names, p);
        EXPECT_NEAR(evaluate(back, names, p), a, 1e-12 * std::max(1.0, std::abs(a))) << to_string(e);
    }
}

TEST(Expr, BumpAndStepProfiles) {
    const std::vector<std::string> names{"u"};
    const Expr b = bump(var("u")), s = smooth_step(var("u"));
    // exp(-1/u) for u > 0, 0 otherwise
    for (double u : {-2.0, -1.0, 0.0}) EXPECT_EQ(evaluate(b, names, std::span(&u, 1)), 0.0);
    for (double u : {0.25, 1.0, 3.0}) EXPECT_NEAR(evaluate(b, names, std::span(&u, 1)), std::exp(-1.0 / u), 1e-15);
    for (double u : {-1.0, 0.0}) EXPECT_EQ(evaluate(s, names, std::span(&u, 1)), 0.0);
    for (double u : {1.0, 2.0}) EXPECT_EQ(evaluate(s, names, std::span(&u, 1)), 1.0);
    // monotone on (0, 1)
    double prev = 0.0;
    for (int i = 1; i < 100; ++i) {
        double u = i / 100.0;
        const double v = evaluate(s, names, std::span(&u, 1));
        EXPECT_GE(v, prev);
        prev = v;
    }
    // symmetric: step(u) + step(1 - u) = 1
    for (double u : {0.1, 0.37, 0.5, 0.81}) {
        double w = 1.0 - u;
        EXPECT_NEAR(evaluate(s, names, std::span(&u, 1)) + evaluate(s, names, std::span(&w, 1)), 1.0, 1e-14);
    }
}

TEST(Expr, ParseErrorsCarryColumn) {
    try {
        parse_expression("x + * y", {"x", "y"});
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.column(), 5u);
    }
    EXPECT_THROW(parse_expression("foo(x)", {"x"}), ParseError);
    EXPECT_THROW(parse_expression("q + 1", {"x"}), ParseError);
    EXPECT_THROW(parse_expression("(x + 1", {"x"}), ParseError);
}

TEST(Expr, SubstituteReplacesVariables) {
    const Expr e = var("x") * var("x") + var("y");
    const Expr s = simplify(substitute(e, {{"x", var("y") + Expr(1.0)}}));
    EXPECT_TRUE(symbolically_equal(s, pow(var("y"), 2) + Expr(3.0) * var("y") + Expr(1.0)));
}
