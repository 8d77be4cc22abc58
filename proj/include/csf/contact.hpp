#pragma once

// Pointwise certification of contact forms, exact symplectic structures and
// exact symplectomorphisms on sample grids.

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "csf/grid.hpp"

namespace csf {

inline constexpr double kDefaultThreshold = 1e-8;

inline std::string format_point(std::span<const double> p) {
    std::ostringstream os;
    os.precision(6);
    os << "(";
    for (std::size_t i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p[i];
    os << ")";
    return os.str();
}

/// Density of alpha ^ (d alpha)^n on a (2n+1)-chart.
inline Expr contact_density(const DifferentialForm& alpha) {
    const std::size_t dim = alpha.chart().dim();
    if (dim % 2 == 0) throw Error("contact_density: chart '" + alpha.chart().name() + "' is even-dimensional");
    if (alpha.degree() != 1) throw Error("contact_density: expected a 1-form");
    const int n = static_cast<int>(dim / 2);
    return top_density(wedge_product(alpha, form_power(exterior_derivative(alpha), n)));
}

/// Contact check of a form whose coefficients may contain named parameters
/// besides the chart coordinates. The density is derived once; each call
/// binds the parameters and scans the grid.
class ContactProbe {
public:
    ContactProbe(const DifferentialForm& alpha, SampleGrid grid, std::vector<std::string> params = {})
        : grid_(std::move(grid)), params_(std::move(params)), n_(static_cast<int>(alpha.chart().dim() / 2)) {
        if (grid_.chart() != alpha.chart()) throw ChartError("verify_contact: grid and form on different charts");
        std::vector<std::string> slots = grid_.chart().coords();
        slots.insert(slots.end(), params_.begin(), params_.end());
        density_ = Tape(contact_density(alpha), slots);
        for (const auto& [m, c] : alpha.terms()) coefficients_.emplace_back(c, slots);
    }

    const SampleGrid& grid() const { return grid_; }

    PositivityReport operator()(std::span<const double> values = {}, double threshold = kDefaultThreshold) const {
        if (values.size() != params_.size()) throw Error("contact check: wrong number of parameter values");
        const std::size_t dim = grid_.dim();
        auto bind = [&](std::span<const double> p) -> std::span<const double> {
            thread_local std::vector<double> buf;
            buf.assign(p.begin(), p.end());
            buf.insert(buf.end(), values.begin(), values.end());
            return {buf.data(), dim + values.size()};
        };
        const ScanResult sc = scan(grid_, [&](std::span<const double> p) {
            const auto q = bind(p);
            double best = 0.0;
            for (const Tape& t : coefficients_) best = std::max(best, std::abs(t(q)));
            return best;
        });
        const double scale = coefficients_.empty() ? 0.0 : sc.max;
        const ScanResult r = scan(grid_, [&](std::span<const double> p) { return density_(bind(p)); });

        PositivityReport rep;
        rep.label = "contact";
        rep.grid = GridInfo::of(grid_);
        rep.threshold = threshold;
        rep.raw_min = r.min;
        rep.normalization = scale > 0.0 ? std::pow(scale, n_ + 1) : 1.0;
        rep.min_value = scale > 0.0 ? r.min / rep.normalization : 0.0;
        rep.max_value = scale > 0.0 ? r.max / rep.normalization : 0.0;
        rep.argmin_point = grid_.point_vector(r.argmin);
        rep.finalize();
        if (!rep.passed) rep.message = "contact density not positive at " + format_point(rep.argmin_point);
        return rep;
    }

private:
    SampleGrid grid_;
    std::vector<std::string> params_;
    int n_;
    Tape density_;
    std::vector<Tape> coefficients_;
};

/// Scans the contact density after dividing alpha by its largest coefficient
/// magnitude on the grid; passes when the minimum exceeds the threshold.
inline PositivityReport verify_contact(const DifferentialForm& alpha, const SampleGrid& grid,
                                       double threshold = kDefaultThreshold) {
    return ContactProbe(alpha, grid)({}, threshold);
}

// ---------------------------------------------------------------------------

/// Antisymmetric coefficient matrix of a 2-form at p: M(i,j) = omega(d_i, d_j).
inline Eigen::MatrixXd symplectic_matrix(const DifferentialForm& omega, std::span<const double> p) {
    if (omega.degree() != 2) throw Error("symplectic_matrix: expected a 2-form");
    const auto n = static_cast<Eigen::Index>(omega.chart().dim());
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    for (const auto& [m, c] : omega.terms()) {
        const auto idx = mask_indices(m);
        const double v = evaluate(c, omega.chart().coords(), p);
        M(idx[0], idx[1]) = v;
        M(idx[1], idx[0]) = -v;
    }
    return M;
}

/// Determinant of the coefficient matrix; only meaningful on even charts.
inline double nondegeneracy_determinant(const DifferentialForm& omega, std::span<const double> p) {
    if (omega.chart().dim() % 2 != 0)
        throw Error("nondegeneracy requested on odd-dimensional chart '" + omega.chart().name() + "'");
    return symplectic_matrix(omega, p).determinant();
}

namespace detail {

/// Evaluates the coefficient matrix of a 2-form with precompiled tapes.
class MatrixEvaluator {
public:
    explicit MatrixEvaluator(const DifferentialForm& omega) : n_(static_cast<Eigen::Index>(omega.chart().dim())) {
        for (const auto& [m, c] : omega.terms()) {
            const auto idx = mask_indices(m);
            entries_.push_back({idx[0], idx[1], Tape(c, omega.chart().coords())});
        }
    }
    Eigen::MatrixXd operator()(std::span<const double> p) const {
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n_, n_);
        for (const auto& e : entries_) {
            const double v = e.tape(p);
            M(e.i, e.j) = v;
            M(e.j, e.i) = -v;
        }
        return M;
    }

private:
    struct Entry {
        int i, j;
        Tape tape;
    };
    Eigen::Index n_;
    std::vector<Entry> entries_;
};

class OneFormEvaluator {
public:
    explicit OneFormEvaluator(const DifferentialForm& beta) : n_(static_cast<Eigen::Index>(beta.chart().dim())) {
        if (beta.degree() != 1) throw Error("expected a 1-form");
        for (const auto& [m, c] : beta.terms()) entries_.push_back({mask_indices(m)[0], Tape(c, beta.chart().coords())});
    }
    Eigen::VectorXd operator()(std::span<const double> p) const {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(n_);
        for (const auto& e : entries_) v(e.i) = e.tape(p);
        return v;
    }

private:
    struct Entry {
        int i;
        Tape tape;
    };
    Eigen::Index n_;
    std::vector<Entry> entries_;
};

}  // namespace detail

// ---------------------------------------------------------------------------

/// Values on the tensor points of a sample grid with multilinear
/// interpolation. Excluded tensor points hold NaN.
class GridField {
public:
    GridField() = default;
    GridField(std::vector<std::vector<double>> axes, std::size_t components)
        : axes_(std::move(axes)), components_(components) {
        std::size_t total = 1;
        for (const auto& a : axes_) total *= a.size();
        values_.assign(total * components_, std::numeric_limits<double>::quiet_NaN());
    }

    std::size_t components() const noexcept { return components_; }
    std::size_t tensor_size() const noexcept { return components_ ? values_.size() / components_ : 0; }
    const std::vector<std::vector<double>>& axes() const noexcept { return axes_; }

    Point tensor_point(std::size_t flat) const {
        Point p(axes_.size());
        for (std::size_t k = axes_.size(); k-- > 0;) {
            p[k] = axes_[k][flat % axes_[k].size()];
            flat /= axes_[k].size();
        }
        return p;
    }

    double& at(std::size_t flat, std::size_t comp) { return values_[flat * components_ + comp]; }
    double at(std::size_t flat, std::size_t comp) const { return values_[flat * components_ + comp]; }

    /// Multilinear interpolation; the point is clamped into the axis ranges.
    std::vector<double> value(std::span<const double> p) const { return interpolate(p, -1); }

    /// Partial derivatives of the multilinear interpolant along axis k.
    std::vector<double> derivative(std::span<const double> p, int k) const { return interpolate(p, k); }

private:
    std::vector<double> interpolate(std::span<const double> p, int deriv_axis) const {
        const std::size_t n = axes_.size();
        std::vector<std::size_t> lo(n);
        std::vector<double> frac(n), width(n);
        for (std::size_t k = 0; k < n; ++k) {
            const auto& ax = axes_[k];
            if (ax.size() == 1) {
                lo[k] = 0;
                frac[k] = 0.0;
                width[k] = 1.0;
                continue;
            }
            const double x = std::clamp(p[k], ax.front(), ax.back());
            auto it = std::upper_bound(ax.begin(), ax.end(), x);
            std::size_t i = it == ax.begin() ? 0 : static_cast<std::size_t>(it - ax.begin()) - 1;
            i = std::min(i, ax.size() - 2);
            lo[k] = i;
            width[k] = ax[i + 1] - ax[i];
            frac[k] = (x - ax[i]) / width[k];
        }
        std::vector<double> out(components_, 0.0);
        for (std::size_t corner = 0; corner < (std::size_t{1} << n); ++corner) {
            double w = 1.0;
            std::size_t flat = 0;
            bool skip = false;
            for (std::size_t k = 0; k < n; ++k) {
                const bool up = (corner >> k) & 1u;
                if (up && axes_[k].size() == 1) {
                    skip = true;
                    break;
                }
                if (static_cast<int>(k) == deriv_axis)
                    w *= (up ? 1.0 : -1.0) / width[k];
                else
                    w *= up ? frac[k] : 1.0 - frac[k];
                flat = flat * axes_[k].size() + lo[k] + (up ? 1 : 0);
            }
            if (skip || w == 0.0) continue;
            for (std::size_t c = 0; c < components_; ++c) out[c] += w * at(flat, c);
        }
        return out;
    }

    std::vector<std::vector<double>> axes_;
    std::size_t components_ = 0;
    std::vector<double> values_;
};

// ---------------------------------------------------------------------------

struct LiouvilleField {
    std::optional<VectorField> symbolic;
    GridField table;  // components of chi at the grid's tensor points
};

namespace detail {

inline std::optional<VectorField> solve_liouville_symbolically(const DifferentialForm& beta, const DifferentialForm& omega) {
    const Chart& chart = beta.chart();
    const std::size_t n = chart.dim();
    if (n == 2) {
        const Expr w = omega.coefficient(IndexMask{0b11});
        if (w.is_zero()) return std::nullopt;
        return VectorField(chart, {simplify(beta.coefficient(IndexMask{0b10}) / w),
                                   simplify(-beta.coefficient(IndexMask{0b01}) / w)});
    }
    for (const auto& [m, c] : omega.terms())
        if (!c.is_const()) return std::nullopt;
    std::vector<double> dummy(n, 0.0);
    const Eigen::MatrixXd M = symplectic_matrix(omega, dummy);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (!lu.isInvertible()) return std::nullopt;
    const Eigen::MatrixXd A = -lu.inverse();
    std::vector<Expr> comps(n);
    for (std::size_t i = 0; i < n; ++i) {
        Expr s;
        for (std::size_t j = 0; j < n; ++j) {
            const double a = A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (a != 0.0) s = s + Expr(a) * beta.coefficient(IndexMask{1} << j);
        }
        comps[i] = simplify(s);
    }
    return VectorField(chart, std::move(comps));
}

}  // namespace detail

/// Solves i_chi (d beta) = beta at every grid point, plus a closed form when
/// the system solves symbolically (2-dimensional charts, constant d beta).
inline LiouvilleField liouville_field(const DifferentialForm& beta, const SampleGrid& grid) {
    if (beta.chart() != grid.chart()) throw ChartError("liouville_field: grid and form on different charts");
    const DifferentialForm omega = exterior_derivative(beta);
    const detail::MatrixEvaluator mat(omega);
    const detail::OneFormEvaluator vec(beta);
    const std::size_t n = beta.chart().dim();

    std::vector<std::vector<double>> axes;
    for (std::size_t k = 0; k < n; ++k) axes.push_back(grid.axis(k));
    LiouvilleField out;
    out.table = GridField(axes, n);
    for (std::size_t flat = 0; flat < out.table.tensor_size(); ++flat) {
        const Point p = out.table.tensor_point(flat);
        if (grid.excluded(p)) continue;
        const Eigen::MatrixXd M = mat(p);
        const double scale = M.cwiseAbs().maxCoeff();
        Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
        if (scale == 0.0 || !lu.isInvertible() || std::abs(M.determinant()) < 1e-12 * std::pow(scale, n))
            throw Error("liouville_field: d beta is singular at " + format_point(p));
        const Eigen::VectorXd chi = -lu.solve(vec(p));
        for (std::size_t c = 0; c < n; ++c) out.table.at(flat, c) = chi(static_cast<Eigen::Index>(c));
    }
    out.symbolic = detail::solve_liouville_symbolically(beta, omega);
    return out;
}

// ---------------------------------------------------------------------------

/// A boundary piece {level = 0} with outward direction of increasing level,
/// represented by sample points on it.
struct Boundary {
    std::string label;
    Expr level;
    std::vector<Point> points;
};

/// The face coord = upper bound (or lower bound), sampled n points per axis.
inline Boundary coordinate_face(const Chart& chart, const std::string& coord, bool upper, int n = kDefaultResolution) {
    const std::size_t k = chart.index_of(coord);
    if (chart.periodic()[k]) throw Error("periodic coordinate '" + coord + "' has no boundary face");
    const double at = upper ? chart.bounds()[k].hi : chart.bounds()[k].lo;
    Boundary b;
    b.label = coord + (upper ? "=max" : "=min");
    b.level = upper ? var(coord) - Expr(at) : Expr(at) - var(coord);
    std::vector<int> res(chart.dim(), n);
    res[k] = 1;
    std::vector<Interval> box = chart.bounds();
    box[k] = Interval{at - 1.0, at + 1.0};
    const Chart face = chart.restricted(chart.name() + "|" + b.label, box);
    const SampleGrid g(face, res, default_exclusions(chart));
    for (std::size_t i = 0; i < g.size(); ++i) b.points.push_back(g.point_vector(i));
    return b;
}

/// Boundary {level = 0} sampled through a parametrization.
inline Boundary level_boundary(std::string label, const Expr& level, const SmoothMap& param, const SampleGrid& param_grid) {
    Boundary b{std::move(label), level, {}};
    for (std::size_t i = 0; i < param_grid.size(); ++i) b.points.push_back(param(param_grid.point(i)));
    return b;
}

/// Checks that d beta is nondegenerate on the grid (normalized determinant
/// above threshold) and, when boundaries are given, that the Liouville field
/// points strictly outward along them (unit-normal component above threshold).
inline PositivityReport verify_exact_symplectic(const DifferentialForm& beta, const SampleGrid& grid,
                                                const std::vector<Boundary>& boundaries = {},
                                                double threshold = kDefaultThreshold, bool require_outward = false) {
    if (beta.chart() != grid.chart()) throw ChartError("verify_exact_symplectic: grid and form on different charts");
    const Chart& chart = beta.chart();
    if (chart.dim() % 2 != 0) throw Error("verify_exact_symplectic: chart '" + chart.name() + "' is odd-dimensional");
    if (beta.degree() != 1) throw Error("verify_exact_symplectic: expected a 1-form");
    if (require_outward && boundaries.empty()) throw Error("verify_exact_symplectic: outwardness requested but no boundary declared");

    const DifferentialForm omega = exterior_derivative(beta);
    const detail::MatrixEvaluator mat(omega);
    const double scale = max_coefficient(omega, grid);
    const double norm = scale > 0.0 ? std::pow(scale, static_cast<double>(chart.dim())) : 1.0;
    const ScanResult det = scan(grid, [&](std::span<const double> p) {
        return scale > 0.0 ? mat(p).determinant() / norm : 0.0;
    });

    PositivityReport rep;
    rep.label = "exact_symplectic";
    rep.grid = GridInfo::of(grid);
    rep.threshold = threshold;
    rep.normalization = norm;
    rep.raw_min = det.min * norm;
    rep.min_value = det.min;
    rep.max_value = det.max;
    rep.argmin_point = grid.point_vector(det.argmin);
    rep.details["determinant_min"] = det.min;
    rep.message = "";
    rep.finalize();
    if (!rep.passed) rep.message = "d beta degenerate at " + format_point(rep.argmin_point);

    if (!boundaries.empty()) {
        const detail::OneFormEvaluator vec(beta);
        double outward = std::numeric_limits<double>::infinity();
        Point where;
        std::string where_label;
        for (const Boundary& b : boundaries) {
            std::vector<Tape> grad;
            for (const auto& c : chart.coords()) grad.emplace_back(partial_derivative(b.level, c), chart.coords());
            for (const Point& p : b.points) {
                const Eigen::MatrixXd M = mat(p);
                Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
                double v = -std::numeric_limits<double>::infinity();
                if (lu.isInvertible()) {
                    const Eigen::VectorXd chi = -lu.solve(vec(p));
                    double dot = 0.0, len = 0.0;
                    for (std::size_t k = 0; k < chart.dim(); ++k) {
                        const double gk = grad[k](p);
                        dot += gk * chi(static_cast<Eigen::Index>(k));
                        len += gk * gk;
                    }
                    v = len > 0.0 ? dot / std::sqrt(len) : -std::numeric_limits<double>::infinity();
                }
                if (v < outward) {
                    outward = v;
                    where = p;
                    where_label = b.label;
                }
            }
        }
        rep.details["outward_min"] = outward;
        if (outward < rep.min_value) {
            rep.min_value = outward;
            rep.argmin_point = where;
        }
        rep.finalize();
        if (!rep.passed && outward <= threshold)
            rep.message = "Liouville field not outward on boundary " + where_label + " at " + format_point(where);
    }
    return rep;
}

// ---------------------------------------------------------------------------

struct PotentialOptions {
    Point basepoint;  // empty: chart box center
    int resolution = kDefaultResolution;
    double tolerance = kDefaultThreshold;
    int loops = 20;
    std::uint64_t seed = 42;
};

struct PotentialResult {
    std::optional<Expr> psi;        // closed form, when found
    std::optional<GridField> table;  // tabulated values otherwise
    double max_closedness_residual = 0.0;
    double max_path_discrepancy = 0.0;
    double max_potential_residual = 0.0;  // max |d psi - (phi^* beta - beta)| for a closed-form psi
};

namespace detail {

/// Integral of a 1-form along the straight segment a -> b.
inline double segment_integral(const OneFormEvaluator& gamma, std::span<const double> a, std::span<const double> b) {
    using Quadrature = boost::math::quadrature::gauss<double, 20>;
    const std::size_t n = a.size();
    Point p(n);
    Eigen::VectorXd dir(static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) dir(static_cast<Eigen::Index>(k)) = b[k] - a[k];
    return Quadrature::integrate(
        [&](double s) {
            for (std::size_t k = 0; k < n; ++k) p[k] = a[k] + s * (b[k] - a[k]);
            return gamma(p).dot(dir);
        },
        0.0, 1.0);
}

/// Closed-form line integral from the basepoint when all coefficients are
/// polynomials in the coordinates.
inline std::optional<Expr> polynomial_potential(const DifferentialForm& gamma, const Point& base) {
    const Chart& chart = gamma.chart();
    const std::string s_name = "__s";
    Substitution sub;
    for (std::size_t k = 0; k < chart.dim(); ++k)
        sub[chart.coord(k)] = Expr(base[k]) + var(s_name) * (var(chart.coord(k)) - Expr(base[k]));
    Expr integrand;
    for (const auto& [m, c] : gamma.terms()) {
        const std::size_t k = static_cast<std::size_t>(mask_indices(m)[0]);
        integrand = integrand + substitute(c, sub) * (var(chart.coord(k)) - Expr(base[k]));
    }
    Normalizer norm;
    const Polynomial poly = norm.to_polynomial(integrand);
    const auto s_id = norm.find_variable(s_name);
    Polynomial result;
    for (const auto& [mono, coef] : poly.terms) {
        Polynomial::Monomial rest;
        int s_power = 0;
        for (const auto& [id, e] : mono) {
            if (norm.atom(id).op() != Op::Var || e < 0) return std::nullopt;
            if (s_id && id == *s_id)
                s_power = e;
            else
                rest.emplace_back(id, e);
        }
        result.add(rest, coef / (s_power + 1));
    }
    return norm.rebuild(result);
}

}  // namespace detail

/// For phi with phi^* beta - beta closed, builds psi with phi^* beta - beta = d psi
/// by integrating along rays from the basepoint, after checking closedness on
/// a grid and path independence on random closed polygons.
inline PotentialResult exact_symplectomorphism_potential(const SmoothMap& phi, const DifferentialForm& beta,
                                                         const PotentialOptions& opt = {}) {
    const Chart& chart = phi.source();
    if (beta.chart() != phi.target()) throw ChartError("potential: beta does not live on the map target");
    if (chart.coords() != phi.target().coords())
        throw ChartError("potential: source and target must carry the same coordinate model");
    const DifferentialForm gamma = (pullback(phi, beta) - rebind(beta, chart)).simplified();
    const std::size_t n = chart.dim();

    Point base = opt.basepoint;
    if (base.empty())
        for (const Interval& b : chart.bounds()) base.push_back(0.5 * (b.lo + b.hi));
    if (base.size() != n) throw Error("potential: basepoint has the wrong dimension");

    const SampleGrid grid = SampleGrid::uniform(chart, opt.resolution);
    PotentialResult out;

    const DifferentialForm dgamma = exterior_derivative(gamma);
    const double scale = std::max({max_coefficient(gamma, grid), max_coefficient(dgamma, grid), 1.0});
    out.max_closedness_residual = max_coefficient(dgamma, grid) / scale;
    if (out.max_closedness_residual > opt.tolerance)
        throw Error("not symplectic: phi^*(d beta) differs from d beta by " +
                    std::to_string(out.max_closedness_residual));

    const detail::OneFormEvaluator g(gamma);
    std::mt19937_64 rng(opt.seed);
    for (int loop = 0; loop < opt.loops; ++loop) {
        std::vector<Point> vertices(4, Point(n));
        for (auto& v : vertices)
            for (std::size_t k = 0; k < n; ++k)
                v[k] = std::uniform_real_distribution<double>(chart.bounds()[k].lo, chart.bounds()[k].hi)(rng);
        double total = 0.0;
        for (std::size_t i = 0; i < vertices.size(); ++i)
            total += detail::segment_integral(g, vertices[i], vertices[(i + 1) % vertices.size()]);
        out.max_path_discrepancy = std::max(out.max_path_discrepancy, std::abs(total) / scale);
    }
    if (out.max_path_discrepancy > std::max(opt.tolerance, 1e-8))
        throw Error("not exact on this chart: loop integral " + std::to_string(out.max_path_discrepancy));

    if (auto psi = detail::polynomial_potential(gamma, base)) {
        out.psi = simplify(*psi);
        DifferentialForm residual = (exterior_derivative(DifferentialForm::scalar(chart, *out.psi)) - gamma).simplified();
        out.max_potential_residual = residual.is_zero() ? 0.0 : max_coefficient(residual, grid) / scale;
        return out;
    }

    std::vector<std::vector<double>> axes;
    for (std::size_t k = 0; k < n; ++k) axes.push_back(grid.axis(k));
    GridField table(axes, 1);
    for (std::size_t flat = 0; flat < table.tensor_size(); ++flat) {
        const Point p = table.tensor_point(flat);
        table.at(flat, 0) = detail::segment_integral(g, base, p);
    }
    out.table = std::move(table);
    return out;
}

}  // namespace csf
