#pragma once

// Fiber connected sum of two bundles over Darboux balls: Darboux charts, the
// parity-dependent maps Phi and Phi_F, the annulus identification Upsilon and
// the check that Upsilon pulls sigma_2 back to sigma_1 on the middle sphere.

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "csf/bundle.hpp"

namespace csf {

inline constexpr double kDefaultSumEpsilon = 0.4;

inline std::string indexed(const char* stem, int k) { return stem + std::to_string(k); }

namespace detail {
inline bool same_form(const DifferentialForm& a, const DifferentialForm& b) {
    for (const auto& [m, c] : (a - b).terms())
        if (!simplify(c).is_zero()) return false;
    return true;
}
}  // namespace detail

/// Coordinates (z, r1, theta1, ..., rn, thetan) over a box containing the
/// annulus eps/2 < |x| < sqrt(3) eps / 2.
inline Chart darboux_chart(int n, double eps, std::string name = "U", int orientation = 1) {
    if (n < 1) throw Error("Darboux chart needs n >= 1");
    const double outer = std::sqrt(3.0) * eps / 2.0;
    std::vector<std::string> coords{"z"};
    std::vector<Interval> bounds{{-outer, outer}};
    std::vector<bool> periodic{false};
    for (int k = 1; k <= n; ++k) {
        coords.push_back(indexed("r", k));
        bounds.push_back({0.0, outer});
        periodic.push_back(false);
        coords.push_back(indexed("theta", k));
        bounds.push_back({0.0, kTwoPi});
        periodic.push_back(true);
    }
    return Chart(std::move(name), std::move(coords), std::move(bounds), std::move(periodic), orientation);
}

inline int darboux_n(const Chart& chart) {
    const int n = static_cast<int>(chart.dim() / 2);
    if (chart.dim() % 2 != 1 || chart.coord(0) != "z") throw ChartError("'" + chart.name() + "' is not a Darboux chart");
    for (int k = 1; k <= n; ++k)
        if (chart.coord(static_cast<std::size_t>(2 * k - 1)) != indexed("r", k) ||
            chart.coord(static_cast<std::size_t>(2 * k)) != indexed("theta", k))
            throw ChartError("'" + chart.name() + "' is not a Darboux chart");
    return n;
}

/// dz + sum r_k^2 dtheta_k.
inline DifferentialForm darboux_form(const Chart& chart) {
    const int n = darboux_n(chart);
    DifferentialForm a = DifferentialForm::differential(chart, "z");
    for (int k = 1; k <= n; ++k)
        a = a + pow(var(indexed("r", k)), 2) * DifferentialForm::differential(chart, indexed("theta", k));
    return a;
}

/// |x|^2 = z^2 + sum r_k^2.
inline Expr darboux_norm_squared(int n) {
    Expr s = pow(var("z"), 2);
    for (int k = 1; k <= n; ++k) s = s + pow(var(indexed("r", k)), 2);
    return s;
}

/// Removes everything outside the open annulus lo < |x| < hi and the polar
/// bands r_k < 0.05 eps.
inline std::vector<Exclusion> annulus_exclusions(int n, double eps, double lo, double hi) {
    const Expr rho2 = darboux_norm_squared(n);
    std::vector<Exclusion> ex{Exclusion::where_negative(rho2 - Expr(lo * lo)),
                              Exclusion::where_negative(Expr(hi * hi) - rho2)};
    for (int k = 1; k <= n; ++k) ex.push_back(Exclusion::band(indexed("r", k), 0.0, 0.05 * eps));
    return ex;
}

// ---------------------------------------------------------------------------

/// (u_k, v_k, w) -> (x_k = (u_k + v_k)/2, y_k = (v_k - u_k)/2, z = w + sum u_k v_k / 2),
/// which pulls dz + sum (x_k dy_k - y_k dx_k) back to dw + sum u_k dv_k.
inline SmoothMap darboux_change(int n) {
    if (n < 1) throw Error("darboux_change needs n >= 1");
    std::vector<std::string> src, dst;
    std::vector<Interval> box;
    for (int k = 1; k <= n; ++k) {
        src.push_back(indexed("u", k));
        src.push_back(indexed("v", k));
        dst.push_back(indexed("x", k));
        dst.push_back(indexed("y", k));
        box.push_back({-1.0, 1.0});
        box.push_back({-1.0, 1.0});
    }
    src.push_back("w");
    dst.push_back("z");
    box.push_back({-1.0, 1.0});
    const Chart source("UVW", src, box), target("XYZ", dst, box);
    std::vector<Expr> comps;
    Expr z = var("w");
    for (int k = 1; k <= n; ++k) {
        const Expr u = var(indexed("u", k)), v = var(indexed("v", k));
        comps.push_back(Expr(0.5) * (u + v));
        comps.push_back(Expr(0.5) * (v - u));
        z = z + Expr(0.5) * u * v;
    }
    comps.push_back(z);
    return SmoothMap(source, target, std::move(comps));
}

// ---------------------------------------------------------------------------

struct GluingMaps {
    int n = 1;
    Chart fiber;
    Chart darboux;
    SmoothMap PhiF;          // darboux -> darboux
    SmoothMap Phi;           // fiber x darboux -> fiber x darboux
    SmoothMap fiber_map;     // fiber identification
};

/// Odd n: (z, r1, theta1, ...) -> (z, -r1, theta1, ...).
/// Even n: (z, r_k, theta_k) -> (-z, r_k, -theta_k).
inline GluingMaps build_phi(int n, const Chart& fiber, const std::optional<SmoothMap>& fiber_id = std::nullopt,
                            double eps = kDefaultSumEpsilon) {
    GluingMaps g;
    g.n = n;
    g.fiber = fiber;
    g.darboux = darboux_chart(n, eps);
    g.fiber_map = fiber_id ? *fiber_id : SmoothMap::identity(fiber);
    if (g.fiber_map.source() != fiber || g.fiber_map.target() != fiber)
        throw ChartError("fiber identification must map the fiber chart to itself");
    std::vector<Expr> comps;
    const bool odd = n % 2 == 1;
    comps.push_back(odd ? var("z") : -var("z"));
    for (int k = 1; k <= n; ++k) {
        const Expr r = var(indexed("r", k)), th = var(indexed("theta", k));
        comps.push_back(odd && k == 1 ? -r : r);
        comps.push_back(odd ? th : -th);
    }
    g.PhiF = SmoothMap(g.darboux, g.darboux, comps);
    const Chart total = product(fiber, g.darboux, fiber.name() + "x" + g.darboux.name());
    std::vector<Expr> all = g.fiber_map.components();
    all.insert(all.end(), comps.begin(), comps.end());
    g.Phi = SmoothMap(total, total, std::move(all));
    return g;
}

/// Upsilon(p, x) = (phi(p), sqrt(eps^2 - |x|^2) / |x| * Phi_F(x)); the scaling
/// acts on z and the radii, the angles pass through Phi_F unchanged.
class AnnulusMap {
public:
    AnnulusMap(const GluingMaps& maps, double eps) : eps_(eps), n_(maps.n), darboux_(maps.darboux) {
        const Expr rho2 = darboux_norm_squared(n_);
        const Expr scale = sqrt(Expr(eps * eps) - rho2) / sqrt(rho2);
        std::vector<Expr> comps;
        for (std::size_t i = 0; i < maps.darboux.dim(); ++i) {
            const Expr& c = maps.PhiF.component(i);
            const bool angle = maps.darboux.periodic()[i];
            comps.push_back(angle ? c : scale * c);
        }
        base_ = SmoothMap(maps.darboux, maps.darboux, comps);
        const Chart total = product(maps.fiber, maps.darboux, maps.fiber.name() + "x" + maps.darboux.name());
        std::vector<Expr> all = maps.fiber_map.components();
        all.insert(all.end(), comps.begin(), comps.end());
        total_ = SmoothMap(total, total, std::move(all));
    }

    const SmoothMap& base() const { return base_; }
    const SmoothMap& map() const { return total_; }
    double epsilon() const { return eps_; }

    /// Base component at a Darboux point inside the annulus.
    Point operator()(std::span<const double> x) const {
        double rho2 = x[0] * x[0];
        for (int k = 1; k <= n_; ++k) rho2 += x[static_cast<std::size_t>(2 * k - 1)] * x[static_cast<std::size_t>(2 * k - 1)];
        const double rho = std::sqrt(rho2);
        if (!(rho > eps_ / 2.0 && rho < std::sqrt(3.0) * eps_ / 2.0))
            throw Error("Upsilon evaluated outside the annulus at " + format_point(x));
        return base_(x);
    }

private:
    double eps_;
    int n_;
    Chart darboux_;
    SmoothMap base_;
    SmoothMap total_;
};

inline AnnulusMap build_upsilon(const GluingMaps& maps, double eps = kDefaultSumEpsilon) { return AnnulusMap(maps, eps); }

/// Random-point checks of the gluing maps on the annulus: |Phi_F(x)| = |x|,
/// det D Phi_F < 0, |Upsilon(x)| = eps/sqrt(2) on the middle sphere and
/// Upsilon(Upsilon(x)) = x.
struct GluingProperties {
    std::size_t samples = 0;
    double norm_residual = 0.0;
    double max_determinant = -std::numeric_limits<double>::infinity();
    double sphere_residual = 0.0;
    double involution_residual = 0.0;
};

inline double darboux_norm(std::span<const double> x, int n) {
    double s = x[0] * x[0];
    for (int k = 1; k <= n; ++k) s += x[static_cast<std::size_t>(2 * k - 1)] * x[static_cast<std::size_t>(2 * k - 1)];
    return std::sqrt(s);
}

inline GluingProperties gluing_properties(const GluingMaps& maps, double eps, std::size_t samples = 200,
                                          std::uint64_t seed = 42) {
    const int n = maps.n;
    const AnnulusMap ups = build_upsilon(maps, eps);
    const auto jac = maps.PhiF.jacobian();
    std::vector<std::vector<Tape>> jt(jac.size());
    for (std::size_t i = 0; i < jac.size(); ++i)
        for (const Expr& e : jac[i]) jt[i].emplace_back(e, maps.darboux.coords());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0), angle(0.0, kTwoPi);
    std::uniform_real_distribution<double> radius(0.55 * eps, 0.85 * eps);
    const std::size_t dim = maps.darboux.dim();
    GluingProperties out;
    out.samples = samples;
    auto direction = [&](double rho) {
        // uniform direction in (z, r_k) with r_k >= 0.05 eps, scaled to rho
        for (;;) {
            Point x(dim);
            double s = 0.0;
            x[0] = unit(rng);
            s += x[0] * x[0];
            for (int k = 1; k <= n; ++k) {
                x[static_cast<std::size_t>(2 * k - 1)] = std::abs(unit(rng));
                x[static_cast<std::size_t>(2 * k)] = angle(rng);
                s += x[static_cast<std::size_t>(2 * k - 1)] * x[static_cast<std::size_t>(2 * k - 1)];
            }
            if (s > 1.0 || s < 1e-4) continue;
            const double f = rho / std::sqrt(s);
            x[0] *= f;
            bool ok = true;
            for (int k = 1; k <= n; ++k) {
                x[static_cast<std::size_t>(2 * k - 1)] *= f;
                ok = ok && x[static_cast<std::size_t>(2 * k - 1)] >= 0.05 * eps;
            }
            if (ok) return x;
        }
    };
    for (std::size_t i = 0; i < samples; ++i) {
        const Point x = direction(radius(rng));
        const double rho = darboux_norm(x, n);
        out.norm_residual = std::max(out.norm_residual, std::abs(darboux_norm(maps.PhiF(x), n) - rho));
        Eigen::MatrixXd J(dim, dim);
        for (std::size_t r = 0; r < dim; ++r)
            for (std::size_t c = 0; c < dim; ++c) J(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = jt[r][c](x);
        out.max_determinant = std::max(out.max_determinant, J.determinant());
        out.involution_residual = std::max(out.involution_residual, [&] {
            const Point back = ups(ups(x));
            double m = 0.0;
            for (std::size_t k = 0; k < dim; ++k) m = std::max(m, std::abs(back[k] - x[k]));
            return m;
        }());
        const Point s = direction(eps / std::sqrt(2.0));
        out.sphere_residual = std::max(out.sphere_residual, std::abs(darboux_norm(ups(s), n) - eps / std::sqrt(2.0)));
    }
    return out;
}

// ---------------------------------------------------------------------------

/// The middle sphere |x| = eps/sqrt(2) as a graph over (z, r1, theta1, ...,
/// r_{n-1}, theta_{n-1}, theta_n) with r_n solved for.
struct MiddleSphere {
    Chart chart;
    SmoothMap embedding;  // into the Darboux chart
    std::vector<Exclusion> exclusions;
};

inline MiddleSphere middle_sphere(int n, double eps, const Chart& darboux) {
    const double R = eps / std::sqrt(2.0);
    std::vector<std::string> coords{"z"};
    std::vector<Interval> bounds{{-R, R}};
    std::vector<bool> periodic{false};
    for (int k = 1; k < n; ++k) {
        coords.push_back(indexed("r", k));
        bounds.push_back({0.0, R});
        periodic.push_back(false);
        coords.push_back(indexed("theta", k));
        bounds.push_back({0.0, kTwoPi});
        periodic.push_back(true);
    }
    coords.push_back(indexed("theta", n));
    bounds.push_back({0.0, kTwoPi});
    periodic.push_back(true);
    MiddleSphere s;
    s.chart = Chart("S1", coords, bounds, periodic);
    Expr rest = Expr(R * R) - pow(var("z"), 2);
    for (int k = 1; k < n; ++k) rest = rest - pow(var(indexed("r", k)), 2);
    std::vector<Expr> comps;
    for (std::size_t i = 0; i < darboux.dim(); ++i) {
        const std::string& c = darboux.coord(i);
        comps.push_back(c == indexed("r", n) ? sqrt(rest) : var(c));
    }
    s.embedding = SmoothMap(s.chart, darboux, std::move(comps));
    const double rmin = 0.05 * eps;
    s.exclusions.push_back(Exclusion::where_negative(rest - Expr(rmin * rmin)));
    for (int k = 1; k < n; ++k) s.exclusions.push_back(Exclusion::band(indexed("r", k), 0.0, rmin));
    return s;
}

struct PullbackReport {
    std::string label;
    double max_residual = 0.0;
    Point worst_point;
    std::string worst_coefficient;
    GridInfo grid;
    double tolerance = 1e-9;
    bool passed = false;
};

struct SumSpec {
    FibrationSpec left;
    FibrationSpec right;
    int n = 1;
    double epsilon = kDefaultSumEpsilon;
    Point left_center;
    Point right_center;
    std::optional<SmoothMap> fiber_identification;
    bool same_total_space = false;
};

/// Checks the sum inputs: Darboux base charts of the right size, a shared
/// fiber model, even-n orientation convention, and disjoint centers.
inline void validate_sum(const SumSpec& s) {
    if (s.n < 1) throw Error("fiber sum: n must be at least 1");
    if (!(s.epsilon > 0.0)) throw Error("fiber sum: epsilon must be positive");
    for (const FibrationSpec* f : {&s.left, &s.right}) {
        validate_spec(*f);
        if (f->base_charts.size() != 1) throw Error("fiber sum: '" + f->name + "' must have one Darboux base chart");
        if (darboux_n(f->base_charts[0]) != s.n) throw Error("fiber sum: '" + f->name + "' has the wrong base dimension");
    }
    if (s.left.fiber.coords() != s.right.fiber.coords() ||
        !detail::same_form(rebind(s.right.beta, s.left.fiber), s.left.beta))
        throw Error("fiber sum: the two fibrations do not share the (F, beta) model");
    if (s.same_total_space) {
        if (s.left_center.size() != s.right_center.size() || s.left_center.empty())
            throw Error("fiber sum: centers must be points of the same dimension");
        double d2 = 0.0;
        for (std::size_t i = 0; i < s.left_center.size(); ++i) d2 += std::pow(s.left_center[i] - s.right_center[i], 2);
        if (!(std::sqrt(d2) > 2.0 * s.epsilon))
            throw Error("fiber sum: embeddings in the same manifold must be disjoint (centers closer than 2 eps)");
    }
}

/// Compares (Upsilon|_S)^* sigma_right with sigma_left coefficient-wise on a
/// grid over S x F, S the sphere |x| = eps/sqrt(2).
inline PullbackReport verify_gluing_pullback(const SumSpec& spec, const DifferentialForm& sigma_left,
                                             const DifferentialForm& sigma_right, const GluingMaps& maps,
                                             const CheckOptions& opt = {}, double tolerance = 1e-9) {
    const AnnulusMap ups = build_upsilon(maps, spec.epsilon);
    const Chart& fiber = maps.fiber;
    const MiddleSphere S = middle_sphere(spec.n, spec.epsilon, maps.darboux);
    const Chart sf = product(S.chart, fiber, "S1x" + fiber.name());

    auto embed = [&](const SmoothMap& base_map, const Chart& target, const SmoothMap& fmap) {
        std::vector<Expr> comps;
        for (std::size_t i = 0; i < target.dim(); ++i) {
            const std::string& c = target.coord(i);
            if (auto k = maps.darboux.find(c)) {
                comps.push_back(base_map.component(*k));
            } else {
                comps.push_back(fmap.component(fiber.index_of(c)));
            }
        }
        return SmoothMap(sf, target, std::move(comps));
    };
    const SmoothMap id_fiber = SmoothMap::identity(fiber);
    const SmoothMap into_left = embed(S.embedding, sigma_left.chart(), id_fiber);
    const SmoothMap through_ups = embed(compose(ups.base(), S.embedding), sigma_right.chart(), maps.fiber_map);

    const DifferentialForm a = pullback(into_left, sigma_left);
    const DifferentialForm b = pullback(through_ups, sigma_right);
    std::vector<Exclusion> ex = S.exclusions;
    // Fiber exclusions from either side are in fiber coordinates, valid on S x F.
    for (const auto& e : spec.left.fiber_exclusions) ex.push_back(e);
    const SampleGrid grid(sf, std::vector<int>(sf.dim(), opt.resolution), ex, opt.cap);

    PullbackReport rep;
    rep.label = "gluing_pullback";
    rep.grid = GridInfo::of(grid);
    rep.tolerance = tolerance;
    const DifferentialForm diff = a - b;
    for (const auto& [m, c] : diff.terms()) {
        const Tape t(c, sf.coords());
        const ScanResult r = scan(grid, [&](std::span<const double> p) { return std::abs(t(p)); });
        if (r.max > rep.max_residual) {
            rep.max_residual = r.max;
            rep.worst_point = grid.point_vector(r.argmax);
            std::string name;
            for (int i : mask_indices(m)) name += (name.empty() ? "d" : "^d") + sf.coord(static_cast<std::size_t>(i));
            rep.worst_coefficient = name;
        }
    }
    rep.passed = rep.max_residual < tolerance;
    return rep;
}

/// Trivial bundle over a Darboux chart with mu = sign * (dz + sum r_k^2 dtheta_k);
/// sign -1 goes with the orientation-reversed chart.
inline FibrationSpec darboux_fibration(std::string name, int n, double eps, const Chart& fiber, const DifferentialForm& beta,
                                       int sign = 1, std::vector<Exclusion> fiber_exclusions = {}) {
    FibrationSpec s;
    s.name = std::move(name);
    const Chart base = darboux_chart(n, eps, "U_" + s.name, sign);
    s.base_charts = {base};
    s.mu = {Expr(static_cast<double>(sign)) * darboux_form(base)};
    s.fiber = fiber;
    s.beta = beta;
    s.fiber_exclusions = std::move(fiber_exclusions);
    s.pieces = {{"annulus", 0, base.bounds(), annulus_exclusions(n, eps, eps / 2.0, std::sqrt(3.0) * eps / 2.0)}};
    return s;
}

/// Sum spec E1 #_Phi E2 (odd n) or E1 #_Phi conj(E2) (even n) of two trivial
/// bundles over Darboux charts.
inline SumSpec darboux_sum_spec(int n, const Chart& fiber, const DifferentialForm& beta,
                                std::vector<Exclusion> fiber_exclusions = {}, double eps = kDefaultSumEpsilon,
                                bool right_reversed = true) {
    SumSpec s;
    s.n = n;
    s.epsilon = eps;
    s.left = darboux_fibration("E1", n, eps, fiber, beta, 1, fiber_exclusions);
    const int sign = (n % 2 == 0 && right_reversed) ? -1 : 1;
    s.right = darboux_fibration("E2", n, eps, fiber, beta, sign, fiber_exclusions);
    return s;
}

/// Pieces: each bundle minus the ball |x| < eps/sqrt(2); one seam along the
/// middle sphere glued by Upsilon. Throws unless the pullback check passes.
inline FibrationSpec assemble_summed_fibration(const SumSpec& spec, const GluingMaps& maps, const CheckOptions& opt = {}) {
    validate_sum(spec);
    if (spec.fiber_identification) {
        const SmoothMap id = SmoothMap::identity(spec.left.fiber);
        for (std::size_t i = 0; i < id.components().size(); ++i)
            if (!symbolically_equal(id.component(i), spec.fiber_identification->component(i)))
                throw Error("fiber sum: assembly supports the identity fiber identification only");
    }
    const double eps = spec.epsilon, R = eps / std::sqrt(2.0), outer = std::sqrt(3.0) * eps / 2.0;
    const BundleContactForm left = assemble_sigma(spec.left, 1.0);
    const BundleContactForm right = assemble_sigma(spec.right, 1.0);
    const PullbackReport check = verify_gluing_pullback(spec, left.ambient[0], right.ambient[0], maps, opt);
    if (!check.passed)
        throw Error("fiber sum: gluing pullback check failed (residual " + detail::format_number(check.max_residual) + ")");

    FibrationSpec out;
    out.name = spec.left.name + "#" + spec.right.name;
    out.base_charts = {spec.left.base_charts[0], spec.right.base_charts[0]};
    out.mu = {spec.left.mu[0], spec.right.mu[0]};
    out.fiber = spec.left.fiber;
    out.beta = spec.left.beta;
    out.fiber_exclusions = spec.left.fiber_exclusions;
    out.fiber_boundaries = spec.left.fiber_boundaries;
    out.pieces = {{spec.left.name + "-ball", 0, out.base_charts[0].bounds(), annulus_exclusions(spec.n, eps, R, outer)},
                  {spec.right.name + "-ball", 1, out.base_charts[1].bounds(), annulus_exclusions(spec.n, eps, R, outer)}};
    const MiddleSphere S = middle_sphere(spec.n, eps, maps.darboux);
    const AnnulusMap ups = build_upsilon(maps, eps);
    auto retarget = [](const SmoothMap& m, const Chart& target) { return SmoothMap(m.source(), target, m.components()); };
    out.seams.push_back({"S1", 0, 1, retarget(S.embedding, out.base_charts[0]),
                         retarget(compose(ups.base(), S.embedding), out.base_charts[1])});
    return out;
}

}  // namespace csf
