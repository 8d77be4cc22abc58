#pragma once

// Bundle contact forms sigma = K mu + beta + f dPsi on a base cut into pieces
// W^1..W^r, patched across collars H_i x [-eps, eps] with cut-off functions.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "csf/contact.hpp"

namespace csf {

struct CutoffProfile {
    enum class Kind { TwoSided, OneSided };
    double epsilon = 0.2;
    double delta = 0.1;
    Kind kind = Kind::TwoSided;
};

/// Smooth cut-off in the variable x. Two-sided: 1 on (-delta, delta), 0 near
/// +-epsilon. One-sided: 1 on (-delta, epsilon], 0 near -epsilon.
inline Expr make_cutoff(const CutoffProfile& profile, const Expr& x) {
    if (!(profile.epsilon > 0.0)) throw Error("cut-off: epsilon must be positive");
    if (!(profile.delta > 0.0) || profile.delta >= profile.epsilon)
        throw Error("cut-off: need 0 < delta < epsilon");
    // S(x) = 1 for x <= delta, 0 for x >= e1, with e1 strictly inside (delta, epsilon).
    const double e1 = profile.delta + 0.8 * (profile.epsilon - profile.delta);
    auto S = [&](const Expr& y) { return smooth_step((Expr(e1) - y) / Expr(e1 - profile.delta)); };
    if (profile.kind == CutoffProfile::Kind::TwoSided) return S(x) * S(-x);
    return S(-x);
}

inline Expr make_cutoff(const CutoffProfile& profile) { return make_cutoff(profile, var("x")); }

// ---------------------------------------------------------------------------

struct BasePiece {
    std::string name;
    std::size_t chart = 0;  // index into FibrationSpec::base_charts
    std::vector<Interval> bounds;
    std::vector<Exclusion> exclusions;
};

/// Collar H x [-eps, eps] around the hypersurface {coord = at} of a base
/// chart. The collar variable is x = direction * (coord - at); the side
/// x in [-eps, 0] lies in the later piece W^{i+1}.
struct Collar {
    std::string name;
    int index = 1;  // i of H_i; index 1 uses the two-sided profile
    std::size_t chart = 0;
    std::string coord;
    double at = 0.0;
    int direction = 1;
    Expr psi;  // over base and fiber coordinates
};

/// Identification of two base charts along a hypersurface S, given by two
/// embeddings of S. The fiber is identified by the identity.
struct Seam {
    std::string name;
    std::size_t left = 0;
    std::size_t right = 0;
    SmoothMap left_embedding;
    SmoothMap right_embedding;
};

struct FibrationSpec {
    std::string name;
    std::vector<Chart> base_charts;
    std::vector<DifferentialForm> mu;  // base contact form, one per base chart
    Chart fiber;
    DifferentialForm beta;
    std::vector<Exclusion> fiber_exclusions;
    std::vector<Boundary> fiber_boundaries;
    std::vector<BasePiece> pieces;
    std::vector<Collar> collars;
    std::vector<Seam> seams;
    double epsilon = 0.2;
    double delta = 0.1;
    bool horizontal_boundary_trivial = false;
    Expr boundary_region;  // fiber region {boundary_region >= 0} near the fiber boundary

    std::size_t base_dim() const { return base_charts.empty() ? 0 : base_charts.front().dim(); }
    std::size_t fiber_dim() const { return fiber.valid() ? fiber.dim() : 0; }
};

struct CheckOptions {
    int resolution = kDefaultResolution;
    double threshold = kDefaultThreshold;
    std::size_t cap = kDefaultPointCap;
    int collar_refinement = 4;  // collar axis gets refinement * resolution + 1 points
};

struct CollarForm {
    std::string name;
    Chart chart;  // collar region x fiber
    Expr cutoff;  // f_i in the base coordinate
    DifferentialForm sigma;
};

struct BundleContactForm {
    double K = 1.0;
    std::vector<Chart> total_charts;         // base chart x fiber
    std::vector<DifferentialForm> ambient;  // K mu + beta, per base chart
    std::vector<CollarForm> collars;
};

namespace detail {

inline Chart total_chart(const Chart& base, const Chart& fiber) { return product(base, fiber, base.name() + "x" + fiber.name()); }

inline bool bands_overlap(const Collar& a, const Collar& b, const Chart& chart, double eps) {
    if (a.chart != b.chart || a.coord != b.coord) return false;
    double gap = std::abs(a.at - b.at);
    if (chart.periodic()[chart.index_of(a.coord)]) gap = std::min(gap, std::abs(kTwoPi - gap));
    return gap < 2.0 * eps;
}

/// Cut-off used on a collar: f(x) for H_1, otherwise g(x) times the cut-offs
/// of earlier collars whose bands overlap this one.
inline Expr collar_cutoff(const FibrationSpec& spec, std::size_t c) {
    const Collar& col = spec.collars[c];
    const Expr x = Expr(static_cast<double>(col.direction)) * (var(col.coord) - Expr(col.at));
    if (col.index <= 1) return make_cutoff({spec.epsilon, spec.delta, CutoffProfile::Kind::TwoSided}, x);
    Expr f = make_cutoff({spec.epsilon, spec.delta, CutoffProfile::Kind::OneSided}, x);
    for (std::size_t j = 0; j < spec.collars.size(); ++j)
        if (spec.collars[j].index < col.index &&
            bands_overlap(spec.collars[j], col, spec.base_charts[col.chart], spec.epsilon))
            f = f * collar_cutoff(spec, j);
    return f;
}

inline Chart collar_chart(const FibrationSpec& spec, const Collar& col) {
    const Chart total = total_chart(spec.base_charts.at(col.chart), spec.fiber);
    std::vector<Interval> box = total.bounds();
    box[total.index_of(col.coord)] = Interval{col.at - spec.epsilon, col.at + spec.epsilon};
    return total.restricted(col.name, box);
}

/// Bands removing the open collars from a base chart's pieces, repeated
/// across the period for angle coordinates.
inline std::vector<Exclusion> collar_bands(const FibrationSpec& spec, std::size_t chart) {
    std::vector<Exclusion> out;
    const Chart& base = spec.base_charts[chart];
    for (const Collar& col : spec.collars) {
        if (col.chart != chart) continue;
        const bool per = base.periodic()[base.index_of(col.coord)];
        for (int k = per ? -1 : 0; k <= (per ? 1 : 0); ++k) {
            const double at = col.at + k * kTwoPi;
            out.push_back(Exclusion::band(col.coord, at - spec.epsilon, at + spec.epsilon));
        }
    }
    return out;
}

inline bool on_piece_face(const FibrationSpec& spec, const BasePiece& piece, const Collar& col) {
    if (piece.chart != col.chart) return false;
    const Chart& base = spec.base_charts[piece.chart];
    const std::size_t k = base.index_of(col.coord);
    const bool per = base.periodic()[k];
    for (double face : {piece.bounds[k].lo, piece.bounds[k].hi}) {
        for (int w = per ? -1 : 0; w <= (per ? 1 : 0); ++w)
            if (std::abs(face + w * kTwoPi - col.at) < 1e-9) return true;
    }
    return false;
}

}  // namespace detail

/// Structural checks on a fibration spec; throws on the first violation.
inline void validate_spec(const FibrationSpec& spec) {
    const std::string where = "fibration '" + spec.name + "': ";
    if (spec.base_charts.empty()) throw Error(where + "no base chart");
    if (spec.mu.size() != spec.base_charts.size()) throw Error(where + "need one base form mu per base chart");
    if (!spec.fiber.valid() || spec.fiber.dim() % 2 != 0) throw Error(where + "fiber chart must be even-dimensional");
    if (!spec.beta.chart().valid() || spec.beta.chart() != spec.fiber || spec.beta.degree() != 1)
        throw Error(where + "beta must be a 1-form on the fiber chart");
    for (std::size_t i = 0; i < spec.base_charts.size(); ++i) {
        const Chart& b = spec.base_charts[i];
        if (b.dim() % 2 != 1) throw Error(where + "base chart '" + b.name() + "' must be odd-dimensional");
        if (b.dim() != spec.base_dim()) throw Error(where + "base charts differ in dimension");
        if (spec.mu[i].chart() != b || spec.mu[i].degree() != 1)
            throw Error(where + "mu #" + std::to_string(i + 1) + " must be a 1-form on '" + b.name() + "'");
        for (const auto& c : b.coords())
            if (spec.fiber.has(c)) throw Error(where + "coordinate '" + c + "' appears in base and fiber");
    }
    if (spec.pieces.empty()) throw Error(where + "no base pieces");
    for (const BasePiece& p : spec.pieces) {
        if (p.chart >= spec.base_charts.size()) throw Error(where + "piece '" + p.name + "' names a missing base chart");
        if (p.bounds.size() != spec.base_charts[p.chart].dim())
            throw Error(where + "piece '" + p.name + "' needs one interval per base coordinate");
    }
    if (!(spec.delta > 0.0 && spec.delta < spec.epsilon)) throw Error(where + "need 0 < delta < epsilon");
    for (const Collar& c : spec.collars) {
        if (c.chart >= spec.base_charts.size()) throw Error(where + "collar '" + c.name + "' names a missing base chart");
        const Chart& base = spec.base_charts[c.chart];
        if (!base.has(c.coord)) throw Error(where + "collar '" + c.name + "' uses unknown coordinate '" + c.coord + "'");
        if (c.direction != 1 && c.direction != -1) throw Error(where + "collar direction must be +1 or -1");
        if (c.index < 1) throw Error(where + "collar index must be at least 1");
        const Chart total = detail::total_chart(base, spec.fiber);
        for (const auto& v : free_variables(c.psi))
            if (!total.has(v)) throw Error(where + "potential of collar '" + c.name + "' uses unknown name '" + v + "'");
        int sides = 0;
        for (const BasePiece& p : spec.pieces) sides += detail::on_piece_face(spec, p, c) ? 1 : 0;
        if (sides < 2) throw Error(where + "collar '" + c.name + "' does not separate two pieces");
    }
    for (const Seam& s : spec.seams) {
        if (s.left >= spec.base_charts.size() || s.right >= spec.base_charts.size())
            throw Error(where + "seam '" + s.name + "' names a missing base chart");
        if (s.left_embedding.target() != spec.base_charts[s.left] || s.right_embedding.target() != spec.base_charts[s.right] ||
            s.left_embedding.source() != s.right_embedding.source())
            throw Error(where + "seam '" + s.name + "' embeddings do not match its charts");
    }
    if (spec.horizontal_boundary_trivial)
        for (const auto& v : free_variables(spec.boundary_region))
            if (!spec.fiber.has(v)) throw Error(where + "boundary region must be written in fiber coordinates");
}

namespace detail {

inline BundleContactForm assemble_with(const FibrationSpec& spec, const Expr& K, const std::vector<DifferentialForm>& mu_override) {
    validate_spec(spec);
    const std::vector<DifferentialForm>& mu = mu_override.empty() ? spec.mu : mu_override;
    if (mu.size() != spec.base_charts.size()) throw Error("assemble_sigma: need one mu per base chart");
    for (std::size_t i = 0; i < mu.size(); ++i)
        if (mu[i].chart() != spec.base_charts[i] || mu[i].degree() != 1)
            throw Error("assemble_sigma: mu #" + std::to_string(i + 1) + " must be a 1-form on its base chart");
    BundleContactForm out;
    for (std::size_t i = 0; i < spec.base_charts.size(); ++i) {
        const Chart total = total_chart(spec.base_charts[i], spec.fiber);
        out.total_charts.push_back(total);
        out.ambient.push_back(K * rebind(mu[i], total) + rebind(spec.beta, total));
    }
    for (std::size_t c = 0; c < spec.collars.size(); ++c) {
        const Collar& col = spec.collars[c];
        const Chart chart = collar_chart(spec, col);
        const Expr f = collar_cutoff(spec, c);
        const DifferentialForm dpsi = exterior_derivative(DifferentialForm::scalar(chart, col.psi));
        DifferentialForm sigma = K * rebind(mu[col.chart], chart) + rebind(spec.beta, chart) + f * dpsi;
        out.collars.push_back({col.name, chart, f, std::move(sigma)});
    }
    return out;
}

}  // namespace detail

/// sigma = K mu + beta away from collars and K mu + beta + f_i dPsi_i on
/// collar i. A non-empty mu_override replaces spec.mu.
inline BundleContactForm assemble_sigma(const FibrationSpec& spec, double K,
                                        const std::vector<DifferentialForm>& mu_override = {}) {
    if (!(K > 0.0)) throw Error("assemble_sigma: K must be positive");
    BundleContactForm out = detail::assemble_with(spec, Expr(K), mu_override);
    out.K = K;
    return out;
}

// ---------------------------------------------------------------------------

struct BundleReport {
    PositivityReport worst;               // the part with the smallest normalized density
    std::vector<PositivityReport> parts;  // one per piece and collar
    double edge_residual = 0.0;           // collar form vs ambient where the cut-off vanishes
    double seam_residual = 0.0;           // pulled-back forms across seams
    double psi_overlap_residual = 0.0;    // overlapping collars' potentials
    double boundary_residual = 0.0;       // |sigma - (K mu + beta)| near the fiber boundary
    bool passed = false;
};

namespace detail {

inline SampleGrid piece_grid(const FibrationSpec& spec, const BasePiece& piece, const CheckOptions& opt) {
    const Chart total = total_chart(spec.base_charts[piece.chart], spec.fiber);
    std::vector<Interval> box = piece.bounds;
    box.insert(box.end(), spec.fiber.bounds().begin(), spec.fiber.bounds().end());
    const Chart chart = total.restricted(spec.name + ":" + piece.name, box);
    std::vector<Exclusion> ex = default_exclusions(chart);
    for (const auto& e : collar_bands(spec, piece.chart)) ex.push_back(e);
    ex.insert(ex.end(), piece.exclusions.begin(), piece.exclusions.end());
    ex.insert(ex.end(), spec.fiber_exclusions.begin(), spec.fiber_exclusions.end());
    return SampleGrid(chart, std::vector<int>(chart.dim(), opt.resolution), std::move(ex), opt.cap);
}

inline SampleGrid collar_grid(const FibrationSpec& spec, const CollarForm& cf, const Collar& col, const CheckOptions& opt) {
    std::vector<int> res(cf.chart.dim(), opt.resolution);
    res[cf.chart.index_of(col.coord)] = opt.collar_refinement * opt.resolution + 1;
    std::vector<Exclusion> ex = default_exclusions(cf.chart);
    ex.insert(ex.end(), spec.fiber_exclusions.begin(), spec.fiber_exclusions.end());
    return SampleGrid(cf.chart, std::move(res), std::move(ex), opt.cap);
}

/// Largest coefficient of a - b over the grid, relative to max(1, |a|).
inline double relative_difference(const DifferentialForm& a, const DifferentialForm& b, const SampleGrid& grid) {
    const DifferentialForm diff = (a - b).simplified();
    if (diff.is_zero()) return 0.0;
    return max_coefficient(diff, grid) / std::max(1.0, max_coefficient(a, grid));
}

inline SmoothMap with_fiber(const SmoothMap& base_map, const Chart& fiber, const Chart& source, const Chart& target) {
    std::vector<Expr> comps = base_map.components();
    for (const auto& c : fiber.coords()) comps.push_back(var(c));
    return SmoothMap(source, target, std::move(comps));
}

}  // namespace detail

/// Positivity of sigma ^ (d sigma)^{n+m} on every piece (outside the collars)
/// and on every collar, plus smoothness of the patching.
inline BundleReport verify_bundle(const BundleContactForm& bundle, const FibrationSpec& spec, const CheckOptions& opt = {}) {
    BundleReport rep;
    auto take = [&](PositivityReport r, const std::string& label) {
        r.label = label;
        if (rep.parts.empty() || r.min_value < rep.worst.min_value) rep.worst = r;
        rep.parts.push_back(std::move(r));
    };
    for (const BasePiece& piece : spec.pieces) {
        const SampleGrid g = detail::piece_grid(spec, piece, opt);
        take(verify_contact(rebind(bundle.ambient[piece.chart], g.chart()), g, opt.threshold), piece.name);
    }
    for (std::size_t c = 0; c < bundle.collars.size(); ++c) {
        const CollarForm& cf = bundle.collars[c];
        const Collar& col = spec.collars[c];
        const SampleGrid g = detail::collar_grid(spec, cf, col, opt);
        take(verify_contact(cf.sigma, g, opt.threshold), cf.name);

        // Faces x = +-eps where the cut-off vanishes must agree with the ambient form.
        const std::size_t k = cf.chart.index_of(col.coord);
        const DifferentialForm ambient = rebind(bundle.ambient[col.chart], cf.chart);
        for (int side : {-1, 1}) {
            const double x_face = side * spec.epsilon;
            const double at = col.at + col.direction * x_face;
            if (std::abs(evaluate(cf.cutoff, {col.coord}, std::vector<double>{at})) > 0.0) continue;
            std::vector<Interval> box = cf.chart.bounds();
            box[k] = Interval{at - 1.0, at + 1.0};
            std::vector<int> res(cf.chart.dim(), opt.resolution);
            res[k] = 1;
            const Chart face = cf.chart.restricted(cf.chart.name(), box);
            std::vector<Exclusion> ex = default_exclusions(face);
            ex.insert(ex.end(), spec.fiber_exclusions.begin(), spec.fiber_exclusions.end());
            const SampleGrid fg(face, res, ex, opt.cap);
            rep.edge_residual = std::max(rep.edge_residual,
                                         detail::relative_difference(rebind(cf.sigma, face), rebind(ambient, face), fg));
        }

        // Potentials of overlapping collars must agree on the overlap.
        for (std::size_t j = 0; j < c; ++j) {
            const Collar& other = spec.collars[j];
            if (!detail::bands_overlap(other, col, spec.base_charts[col.chart], spec.epsilon)) continue;
            const Tape a(col.psi, cf.chart.coords()), b(other.psi, cf.chart.coords());
            const double lo = std::max(col.at, other.at) - spec.epsilon, hi = std::min(col.at, other.at) + spec.epsilon;
            const double mid = 0.5 * (lo + hi);
            const ScanResult r = scan(g, [&](std::span<const double> p) {
                if (std::abs(p[k] - mid) > 0.5 * (hi - lo)) return 0.0;
                return std::abs(a(p) - b(p));
            });
            rep.psi_overlap_residual = std::max(rep.psi_overlap_residual, r.max);
        }

        if (spec.horizontal_boundary_trivial) {
            std::vector<Exclusion> ex = default_exclusions(cf.chart);
            ex.insert(ex.end(), spec.fiber_exclusions.begin(), spec.fiber_exclusions.end());
            ex.push_back(Exclusion::where_negative(spec.boundary_region));
            std::vector<int> res(cf.chart.dim(), opt.resolution);
            res[k] = opt.collar_refinement * opt.resolution + 1;
            const SampleGrid ng(cf.chart, res, ex, opt.cap);
            const DifferentialForm diff = (cf.sigma - ambient).simplified();
            if (!diff.is_zero()) rep.boundary_residual = std::max(rep.boundary_residual, max_coefficient(diff, ng));
        }
    }
    for (const Seam& s : spec.seams) {
        const Chart s_total = product(s.left_embedding.source(), spec.fiber, s.name + "x" + spec.fiber.name());
        std::vector<Exclusion> ex = default_exclusions(s_total);
        ex.insert(ex.end(), spec.fiber_exclusions.begin(), spec.fiber_exclusions.end());
        const SampleGrid g(s_total, std::vector<int>(s_total.dim(), opt.resolution), ex, opt.cap);
        const DifferentialForm a =
            pullback(detail::with_fiber(s.left_embedding, spec.fiber, s_total, bundle.total_charts[s.left]), bundle.ambient[s.left]);
        const DifferentialForm b =
            pullback(detail::with_fiber(s.right_embedding, spec.fiber, s_total, bundle.total_charts[s.right]), bundle.ambient[s.right]);
        rep.seam_residual = std::max(rep.seam_residual, detail::relative_difference(a, b, g));
    }
    rep.worst.details["edge_residual"] = rep.edge_residual;
    rep.worst.details["seam_residual"] = rep.seam_residual;
    rep.worst.details["psi_overlap_residual"] = rep.psi_overlap_residual;
    if (spec.horizontal_boundary_trivial) rep.worst.details["boundary_residual"] = rep.boundary_residual;
    rep.passed = std::all_of(rep.parts.begin(), rep.parts.end(), [](const PositivityReport& r) { return r.passed; }) &&
                 rep.edge_residual < 1e-10 && rep.seam_residual < 1e-9 && rep.psi_overlap_residual < 1e-10 &&
                 (!spec.horizontal_boundary_trivial || rep.boundary_residual < 1e-12);
    if (!rep.passed && rep.worst.passed) {
        if (rep.edge_residual >= 1e-10) rep.worst.message = "collar form does not match the ambient form at a collar end";
        else if (rep.seam_residual >= 1e-9) rep.worst.message = "forms disagree across a seam";
        else if (rep.psi_overlap_residual >= 1e-10) rep.worst.message = "potentials of overlapping collars disagree";
        else rep.worst.message = "correction term does not vanish near the fiber boundary";
    }
    return rep;
}

/// Largest coefficient difference between two bundle forms assembled from
/// the same spec, over the piece and collar grids.
inline double bundle_distance(const BundleContactForm& a, const BundleContactForm& b, const FibrationSpec& spec,
                              const CheckOptions& opt = {}) {
    double worst = 0.0;
    for (const BasePiece& piece : spec.pieces) {
        const SampleGrid g = detail::piece_grid(spec, piece, opt);
        worst = std::max(worst, form_distance(rebind(a.ambient[piece.chart], g.chart()), rebind(b.ambient[piece.chart], g.chart()), g));
    }
    for (std::size_t c = 0; c < a.collars.size(); ++c) {
        const SampleGrid g = detail::collar_grid(spec, a.collars[c], spec.collars[c], opt);
        worst = std::max(worst, form_distance(a.collars[c].sigma, b.collars[c].sigma, g));
    }
    return worst;
}

/// Contact checks of every piece and collar with K left symbolic, so that a
/// K search derives the densities only once.
class BundleProbe {
public:
    BundleProbe(const FibrationSpec& spec, const CheckOptions& opt, const std::vector<DifferentialForm>& mu_override = {})
        : opt_(opt) {
        const BundleContactForm b = detail::assemble_with(spec, var(kParam), mu_override);
        for (const BasePiece& piece : spec.pieces) {
            const SampleGrid g = detail::piece_grid(spec, piece, opt);
            parts_.emplace_back(piece.name, ContactProbe(rebind(b.ambient[piece.chart], g.chart()), g, {kParam}));
        }
        for (std::size_t c = 0; c < b.collars.size(); ++c)
            parts_.emplace_back(b.collars[c].name,
                                ContactProbe(b.collars[c].sigma, detail::collar_grid(spec, b.collars[c], spec.collars[c], opt), {kParam}));
    }

    /// Worst part at this K.
    PositivityReport operator()(double K) const {
        PositivityReport worst;
        bool first = true;
        const double v[1] = {K};
        for (const auto& [label, probe] : parts_) {
            PositivityReport r = probe(v, opt_.threshold);
            r.label = label;
            if (first || r.min_value < worst.min_value) worst = std::move(r);
            first = false;
        }
        return worst;
    }

private:
    static constexpr const char* kParam = "__K";
    CheckOptions opt_;
    std::vector<std::pair<std::string, ContactProbe>> parts_;
};

struct KSearchResult {
    double K = 1.0;
    BundleReport report;  // full verification at the returned K
    std::vector<std::pair<double, double>> trail;  // (K, worst normalized density) in evaluation order
};

inline constexpr double kMaxK = 1099511627776.0;  // 2^40

/// Doubles K from 1 until the assembled form passes, then narrows down by
/// geometric bisection to within a factor 1.1 of the failing value.
inline KSearchResult find_admissible_K(const FibrationSpec& spec, const CheckOptions& opt = {},
                                       const std::vector<DifferentialForm>& mu_override = {}) {
    KSearchResult out;
    const BundleProbe probe(spec, opt, mu_override);
    auto passes = [&](double K) {
        const PositivityReport r = probe(K);
        out.trail.emplace_back(K, r.min_value);
        return r.passed;
    };
    double K = 1.0;
    while (!passes(K)) {
        K *= 2.0;
        if (K > kMaxK) throw Error("dominance not reached: no admissible K up to 2^40 for '" + spec.name + "'");
    }
    double hi = K, lo = K / 2.0;
    if (K > 1.0) {
        while (hi / lo > 1.1) {
            const double mid = std::sqrt(lo * hi);
            (passes(mid) ? hi : lo) = mid;
        }
    }
    out.K = hi;
    out.report = verify_bundle(assemble_sigma(spec, hi, mu_override), spec, opt);
    return out;
}

// ---------------------------------------------------------------------------

/// Base points spread over pieces and collars.
inline std::vector<std::pair<std::size_t, Point>> sample_base_points(const FibrationSpec& spec, std::size_t count) {
    for (int per_axis = 2;; ++per_axis) {
        std::vector<std::pair<std::size_t, Point>> cand;
        for (const BasePiece& piece : spec.pieces) {
            const Chart& base = spec.base_charts[piece.chart];
            const Chart region = base.restricted(base.name(), piece.bounds);
            std::vector<Exclusion> ex = default_exclusions(region);
            ex.insert(ex.end(), piece.exclusions.begin(), piece.exclusions.end());
            try {
                const SampleGrid g(region, std::vector<int>(region.dim(), per_axis), ex);
                for (std::size_t i = 0; i < g.size(); ++i) cand.emplace_back(piece.chart, g.point_vector(i));
            } catch (const Error&) {
            }
        }
        for (const Collar& col : spec.collars) {
            const Chart& base = spec.base_charts[col.chart];
            Point p;
            for (const Interval& b : base.bounds()) p.push_back(0.5 * (b.lo + b.hi));
            const std::size_t k = base.index_of(col.coord);
            for (int i = 0; i < per_axis; ++i) {
                p[k] = col.at - spec.epsilon + 2.0 * spec.epsilon * (i + 0.5) / per_axis;
                cand.emplace_back(col.chart, p);
            }
        }
        if (cand.size() >= count || per_axis > 64) {
            std::vector<std::pair<std::size_t, Point>> out;
            const std::size_t m = std::min(count, cand.size());
            for (std::size_t i = 0; i < m; ++i) out.push_back(cand[i * cand.size() / m]);
            return out;
        }
    }
}

namespace detail {

/// The form in force over a base point, and the point expressed in its chart.
inline std::pair<const DifferentialForm*, Point> form_over(const BundleContactForm& bundle, const FibrationSpec& spec,
                                                          std::size_t chart, Point b) {
    const Chart& base = spec.base_charts[chart];
    for (std::size_t c = 0; c < spec.collars.size(); ++c) {
        const Collar& col = spec.collars[c];
        if (col.chart != chart) continue;
        const std::size_t k = base.index_of(col.coord);
        const bool per = base.periodic()[k];
        for (int w = per ? -1 : 0; w <= (per ? 1 : 0); ++w) {
            const double v = b[k] + w * kTwoPi;
            if (std::abs(v - col.at) <= spec.epsilon) {
                b[k] = v;
                return {&bundle.collars[c].sigma, b};
            }
        }
    }
    return {&bundle.ambient[chart], b};
}

}  // namespace detail

/// Restricts sigma to fiber slices over sampled base points and checks that
/// each restriction is nondegenerate.
inline PositivityReport verify_compatibility(const BundleContactForm& bundle, const FibrationSpec& spec,
                                             const CheckOptions& opt = {}, std::size_t slices = 25) {
    std::vector<Exclusion> ex = default_exclusions(spec.fiber);
    ex.insert(ex.end(), spec.fiber_exclusions.begin(), spec.fiber_exclusions.end());
    const SampleGrid fgrid(spec.fiber, std::vector<int>(spec.fiber.dim(), opt.resolution), ex, opt.cap);
    PositivityReport worst;
    bool first = true;
    std::size_t passed = 0;
    const auto points = sample_base_points(spec, slices);
    for (const auto& [chart, b0] : points) {
        const auto [form, b] = detail::form_over(bundle, spec, chart, b0);
        std::vector<Expr> comps;
        const Chart& base = spec.base_charts[chart];
        for (std::size_t k = 0; k < base.dim(); ++k) comps.push_back(Expr(b[k]));
        for (const auto& c : spec.fiber.coords()) comps.push_back(var(c));
        const SmoothMap inclusion(spec.fiber, form->chart(), std::move(comps));
        PositivityReport r = verify_exact_symplectic(pullback(inclusion, *form), fgrid, {}, opt.threshold);
        if (r.passed) ++passed;
        if (first || r.min_value < worst.min_value) {
            worst = r;
            worst.message = r.passed ? "" : "fiber restriction degenerate over base point " + format_point(b);
            first = false;
        }
    }
    worst.label = "compatibility";
    worst.details["slices"] = static_cast<double>(points.size());
    worst.details["slices_passed"] = static_cast<double>(passed);
    return worst;
}

/// sigma = mu + beta on the product chart.
inline DifferentialForm product_contact(const DifferentialForm& mu, const DifferentialForm& beta) {
    if (mu.chart().dim() % 2 != 1) throw Error("product_contact: base chart must be odd-dimensional");
    if (beta.chart().dim() % 2 != 0) throw Error("product_contact: fiber chart must be even-dimensional");
    if (mu.degree() != 1 || beta.degree() != 1) throw Error("product_contact: expected 1-forms");
    const Chart total = product(mu.chart(), beta.chart());
    return rebind(mu, total) + rebind(beta, total);
}

}  // namespace csf
