#pragma once

// One-parameter families: rescaled base families mu_t and the concatenated
// bundle family Lambda_t joining sigma_0 to sigma_1.

#include <functional>
#include <string>
#include <vector>

#include "csf/bundle.hpp"

namespace csf {

inline constexpr int kDefaultTSamples = 101;

struct ContactFamily {
    std::string label;
    Chart chart;
    std::function<DifferentialForm(double)> form_at;

    DifferentialForm operator()(double t) const {
        DifferentialForm a = form_at(t);
        if (a.chart() != chart || a.degree() != 1)
            throw Error("family '" + label + "' must give 1-forms on '" + chart.name() + "'");
        return a;
    }
};

/// Family given by a form whose coefficients contain the parameter t.
inline ContactFamily family_from_expression(std::string label, const DifferentialForm& a, const std::string& param = "t") {
    ContactFamily f;
    f.label = std::move(label);
    f.chart = a.chart();
    f.form_at = [a, param](double t) {
        const Substitution sub{{param, Expr(t)}};
        return a.map_coefficients([&](const Expr& c) { return simplify(substitute(c, sub)); });
    };
    return f;
}

inline std::vector<double> t_grid(int samples) {
    if (samples < 2) throw Error("need at least 2 t-samples");
    std::vector<double> ts(static_cast<std::size_t>(samples));
    for (int i = 0; i < samples; ++i) ts[static_cast<std::size_t>(i)] = static_cast<double>(i) / (samples - 1);
    return ts;
}

/// mu_t = (1 - t + t/h) alpha_t, which joins alpha_0 to alpha_1 / h through
/// positive multiples of alpha_t.
inline ContactFamily normalize_family(const ContactFamily& alpha, const Expr& h, const SampleGrid& grid) {
    if (grid.chart() != alpha.chart) throw ChartError("normalize_family: grid on a different chart");
    const Tape ht(h, grid.chart().coords());
    const ScanResult r = scan(grid, [&](std::span<const double> p) { return ht(p); });
    if (!(r.min > 0.0))
        throw Error("normalize_family: h is not positive at " + format_point(grid.point(r.argmin)));
    ContactFamily out;
    out.label = alpha.label + "/normalized";
    out.chart = alpha.chart;
    out.form_at = [alpha, h](double t) {
        const Expr factor = Expr(1.0 - t) + Expr(t) / h;
        return alpha(t).map_coefficients([&](const Expr& c) { return simplify(factor * c); });
    };
    return out;
}

/// Checks every sampled member; the report carries the worst (t, point).
inline PositivityReport verify_family_contact(const ContactFamily& family, const SampleGrid& grid,
                                              int t_samples = kDefaultTSamples, double threshold = kDefaultThreshold) {
    PositivityReport worst;
    bool first = true;
    for (double t : t_grid(t_samples)) {
        PositivityReport r = verify_contact(family(t), grid, threshold);
        r.t = t;
        if (first || r.min_value < worst.min_value) worst = std::move(r);
        first = false;
    }
    worst.label = family.label;
    if (!worst.passed) worst.message = "not contact at t = " + detail::format_number(*worst.t) + ": " + worst.message;
    return worst;
}

// ---------------------------------------------------------------------------

/// Largest admissible K over sampled members of a base family (single base chart).
inline double upper_K(const FibrationSpec& spec, const ContactFamily& mu, const CheckOptions& opt = {},
                      int t_samples = kDefaultTSamples) {
    if (spec.base_charts.size() != 1) throw Error("families need a fibration with one base chart");
    double K = 0.0;
    for (double t : t_grid(t_samples)) K = std::max(K, find_admissible_K(spec, opt, {mu(t)}).K);
    return K;
}

/// Lambda_t: lambda1 on [0, 1/3], lambda2 on [1/3, 2/3], lambda3 on [2/3, 1], with
///   lambda1_s = ((1-s) K0 + s K) mu_0 + beta + f dPsi
///   lambda2_s = K mu_s + beta + f dPsi
///   lambda3_s = ((1-s) K + s K1) mu_1 + beta + f dPsi.
class LambdaFamily {
public:
    LambdaFamily(FibrationSpec spec, ContactFamily mu, double K0, double K1, double K)
        : spec_(std::move(spec)), mu_(std::move(mu)), K0_(K0), K1_(K1), K_(K) {
        if (spec_.base_charts.size() != 1) throw Error("families need a fibration with one base chart");
        if (mu_.chart != spec_.base_charts.front()) throw ChartError("base family lives on a different chart");
        if (!(K0 > 0.0 && K1 > 0.0)) throw Error("concatenate_lambda: K0 and K1 must be positive");
        if (K < std::max(K0, K1)) throw Error("concatenate_lambda: K must be at least max(K0, K1)");
    }

    const FibrationSpec& spec() const { return spec_; }
    double K0() const { return K0_; }
    double K1() const { return K1_; }
    double K() const { return K_; }

    BundleContactForm lambda1(double s) const { return assemble_sigma(spec_, (1.0 - s) * K0_ + s * K_, {mu_(0.0)}); }
    BundleContactForm lambda2(double s) const { return assemble_sigma(spec_, K_, {mu_(s)}); }
    BundleContactForm lambda3(double s) const { return assemble_sigma(spec_, (1.0 - s) * K_ + s * K1_, {mu_(1.0)}); }

    BundleContactForm operator()(double t) const {
        if (t < 0.0 || t > 1.0) throw Error("Lambda_t needs t in [0, 1]");
        if (t <= 1.0 / 3.0) return lambda1(3.0 * t);
        if (t <= 2.0 / 3.0) return lambda2(3.0 * t - 1.0);
        return lambda3(3.0 * t - 2.0);
    }

    /// Branch, local parameter, K and base form in force at t.
    struct Member {
        int branch;
        double s;
        double K;
        double mu_t;  // parameter of the base family
    };
    Member member(double t) const {
        if (t <= 1.0 / 3.0) return {1, 3.0 * t, (1.0 - 3.0 * t) * K0_ + 3.0 * t * K_, 0.0};
        if (t <= 2.0 / 3.0) return {2, 3.0 * t - 1.0, K_, 3.0 * t - 1.0};
        const double s = 3.0 * t - 2.0;
        return {3, s, (1.0 - s) * K_ + s * K1_, 1.0};
    }

    const ContactFamily& base_family() const { return mu_; }

private:
    FibrationSpec spec_;
    ContactFamily mu_;
    double K0_, K1_, K_;
};

inline LambdaFamily concatenate_lambda(const ContactFamily& mu, const FibrationSpec& spec, double K0, double K1, double K) {
    return LambdaFamily(spec, mu, K0, K1, K);
}

/// K0 = K(mu_0), K1 = K(mu_1), K = max(K0, K_upp).
inline LambdaFamily build_lambda_family(const FibrationSpec& spec, const ContactFamily& mu, const CheckOptions& opt = {},
                                        int t_samples = kDefaultTSamples) {
    const double K0 = find_admissible_K(spec, opt, {mu(0.0)}).K;
    const double K1 = find_admissible_K(spec, opt, {mu(1.0)}).K;
    const double K = std::max(K0, upper_K(spec, mu, opt, t_samples));
    return LambdaFamily(spec, mu, K0, K1, K);
}

/// Contact check of Lambda_t at uniformly spaced t. Members sharing a base
/// form reuse one symbolic density.
inline PositivityReport verify_family_contact(const LambdaFamily& family, const CheckOptions& opt = {},
                                              int t_samples = kDefaultTSamples) {
    PositivityReport worst;
    bool first = true;
    std::optional<BundleProbe> start, end;
    for (double t : t_grid(t_samples)) {
        const LambdaFamily::Member m = family.member(t);
        PositivityReport r;
        if (m.branch == 2) {
            r = BundleProbe(family.spec(), opt, {family.base_family()(m.mu_t)})(m.K);
        } else {
            auto& probe = m.branch == 1 ? start : end;
            if (!probe) probe.emplace(family.spec(), opt, std::vector<DifferentialForm>{family.base_family()(m.mu_t)});
            r = (*probe)(m.K);
        }
        r.t = t;
        if (first || r.min_value < worst.min_value) worst = std::move(r);
        first = false;
    }
    worst.details["K0"] = family.K0();
    worst.details["K1"] = family.K1();
    worst.details["K"] = family.K();
    if (!worst.passed) worst.message = "Lambda_t not contact at t = " + detail::format_number(*worst.t) + " on " + worst.label;
    return worst;
}

}  // namespace csf
