#include <gtest/gtest.h>

#include <cmath>

#include "csf/isotopy.hpp"
#include "csf/models.hpp"
#include "csf/parse.hpp"

using namespace csf;

namespace {

constexpr int kSamples = 21;

Chart circle() { return Chart("S1", {"theta"}, {{0.0, kTwoPi}}, {true}); }

ContactFamily rotating() {
    ParseContext ctx{circle(), {}, {"t"}};
    return family_from_expression("rotating", parse_form("(2 + cos(theta - pi*t))*dtheta", ctx));
}

Expr h() { return Expr(2.0) - cos(var("theta")); }

}  // namespace

TEST(Family, NormalizationJoinsAlpha0ToAlpha1OverH) {
    const ContactFamily a = rotating();
    const ContactFamily mu = normalize_family(a, h(), SampleGrid::uniform(circle(), 31));
    const Expr c0 = mu(0.0).coefficient({"theta"}), c1 = mu(1.0).coefficient({"theta"});
    EXPECT_TRUE(symbolically_equal(c0, a(0.0).coefficient({"theta"})));
    // alpha_1 = (2 - cos theta) dtheta, so alpha_1 / h = dtheta
    for (double th : {0.0, 1.0, 2.5, 5.0}) EXPECT_NEAR(evaluate(c1, {"theta"}, std::span(&th, 1)), 1.0, 1e-14);
    // intermediate members are positive multiples of alpha_t
    for (double t : {0.25, 0.5, 0.75})
        for (double th : {0.3, 3.0}) {
            const double ratio = evaluate(mu(t).coefficient({"theta"}), {"theta"}, std::span(&th, 1)) /
                                 evaluate(a(t).coefficient({"theta"}), {"theta"}, std::span(&th, 1));
            EXPECT_NEAR(ratio, 1.0 - t + t / (2.0 - std::cos(th)), 1e-14);
        }
}

TEST(Family, NonPositiveNormalizerIsRejected) {
    EXPECT_THROW(normalize_family(rotating(), cos(var("theta")), SampleGrid::uniform(circle(), 31)), Error);
}

TEST(Family, BaseFamilyIsContactAtEverySample) {
    const PositivityReport r = verify_family_contact(rotating(), SampleGrid::uniform(circle(), 31), kSamples);
    EXPECT_TRUE(r.passed);
    ASSERT_TRUE(r.t.has_value());
}

TEST(Family, DegenerateMemberIsReportedWithItsParameter) {
    ParseContext ctx{circle(), {}, {"t"}};
    const ContactFamily f = family_from_expression("vanishing", parse_form("(1 - 2*t)*dtheta", ctx));
    const PositivityReport r = verify_family_contact(f, SampleGrid::uniform(circle(), 11), 11);
    EXPECT_FALSE(r.passed);
    ASSERT_TRUE(r.t.has_value());
    EXPECT_GE(*r.t, 0.5);
    EXPECT_NE(r.message.find("t = "), std::string::npos);
}

TEST(Lambda, RejectsTooSmallK) {
    const FibrationSpec s = mapping_torus_spec(1.0);
    EXPECT_THROW(concatenate_lambda(rotating(), s, 10.0, 12.0, 11.0), Error);
    EXPECT_THROW(concatenate_lambda(rotating(), s, 0.0, 12.0, 20.0), Error);
}

TEST(Lambda, BranchesMeetAndEndAtTheBundleForms) {
    const FibrationSpec s = mapping_torus_spec(5.0);
    const ContactFamily mu = normalize_family(rotating(), h(), SampleGrid::uniform(circle(), 31));
    const LambdaFamily L = build_lambda_family(s, mu, {}, kSamples);
    EXPECT_GE(L.K(), std::max(L.K0(), L.K1()));
    EXPECT_EQ(bundle_distance(L.lambda1(1.0), L.lambda2(0.0), s), 0.0);
    EXPECT_EQ(bundle_distance(L.lambda2(1.0), L.lambda3(0.0), s), 0.0);
    EXPECT_EQ(bundle_distance(L(0.0), assemble_sigma(s, L.K0(), {mu(0.0)}), s), 0.0);
    EXPECT_EQ(bundle_distance(L(1.0), assemble_sigma(s, L.K1(), {mu(1.0)}), s), 0.0);
    // the linear K ramps: at t = 1/6 the first branch sits halfway between K0 and K
    EXPECT_NEAR(L.member(1.0 / 6.0).K, 0.5 * (L.K0() + L.K()), 1e-12);
    EXPECT_THROW(L(1.5), Error);
}

TEST(Lambda, ConcatenatedFamilyIsContact) {
    const FibrationSpec s = mapping_torus_spec(5.0);
    const ContactFamily mu = normalize_family(rotating(), h(), SampleGrid::uniform(circle(), 31));
    const LambdaFamily L = build_lambda_family(s, mu, {}, kSamples);
    const PositivityReport r = verify_family_contact(L, {}, kSamples);
    EXPECT_TRUE(r.passed) << r.message;
    EXPECT_EQ(r.details.at("K"), L.K());
    // K = max(K0, K1) is too small in the middle branch: the failure lies in [1/3, 2/3]
    ASSERT_GT(L.K(), std::max(L.K0(), L.K1()));
    const LambdaFamily weak = concatenate_lambda(mu, s, L.K0(), L.K1(), std::max(L.K0(), L.K1()));
    const PositivityReport w = verify_family_contact(weak, {}, kSamples);
    EXPECT_FALSE(w.passed);
    ASSERT_TRUE(w.t.has_value());
    EXPECT_GT(*w.t, 1.0 / 3.0);
    EXPECT_LT(*w.t, 2.0 / 3.0);
}
