#pragma once

// Differential forms on a coordinate chart. A k-form is a sparse map from
// strictly increasing index sets (stored as bit masks) to coefficient
// expressions; absent entries are zero and zero entries are never stored.

#include <bit>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "csf/chart.hpp"
#include "csf/expr.hpp"
#include "csf/tape.hpp"

namespace csf {

using IndexMask = std::uint32_t;
using Point = std::vector<double>;

inline int mask_degree(IndexMask m) { return std::popcount(m); }

inline std::vector<int> mask_indices(IndexMask m) {
    std::vector<int> out;
    for (int i = 0; m; ++i, m >>= 1)
        if (m & 1u) out.push_back(i);
    return out;
}

/// Sign of dx^A ^ dx^B relative to the sorted index set A|B (0 if they overlap).
inline int wedge_sign(IndexMask a, IndexMask b) {
    if (a & b) return 0;
    int swaps = 0;
    for (IndexMask rest = b; rest; rest &= rest - 1) {
        const int j = std::countr_zero(rest);
        swaps += std::popcount(a >> (j + 1));
    }
    return (swaps & 1) ? -1 : 1;
}

class DifferentialForm {
public:
    using Terms = std::map<IndexMask, Expr>;

    DifferentialForm() = default;

    DifferentialForm(Chart chart, int degree) : chart_(std::move(chart)), degree_(degree) {
        if (degree < 0 || static_cast<std::size_t>(degree) > chart_.dim())
            throw Error("form degree " + std::to_string(degree) + " out of range on chart '" + chart_.name() + "'");
    }

    static DifferentialForm scalar(const Chart& chart, const Expr& f) {
        DifferentialForm out(chart, 0);
        out.add(0u, f);
        return out;
    }

    static DifferentialForm differential(const Chart& chart, const std::string& coord) {
        DifferentialForm out(chart, 1);
        out.add(IndexMask{1} << chart.index_of(coord), Expr(1.0));
        return out;
    }

    /// coefficient * dx^{coords[0]} ^ ... with the given coordinate names (any order).
    static DifferentialForm monomial(const Chart& chart, const Expr& coefficient,
                                     const std::vector<std::string>& coords) {
        DifferentialForm out = scalar(chart, coefficient);
        for (const auto& c : coords) out = wedge_product(out, differential(chart, c));
        return out;
    }

    const Chart& chart() const { return chart_; }
    int degree() const noexcept { return degree_; }
    const Terms& terms() const noexcept { return terms_; }
    bool is_zero() const noexcept { return terms_.empty(); }

    Expr coefficient(IndexMask m) const {
        auto it = terms_.find(m);
        return it == terms_.end() ? Expr() : it->second;
    }

    Expr coefficient(const std::vector<std::string>& coords) const {
        IndexMask m = 0;
        for (const auto& c : coords) m |= IndexMask{1} << chart_.index_of(c);
        if (mask_degree(m) != static_cast<int>(coords.size())) return Expr();
        DifferentialForm probe = monomial(chart_, Expr(1.0), coords);
        const int sign = probe.is_zero() ? 0 : (probe.terms_.begin()->second.value() > 0 ? 1 : -1);
        return Expr(static_cast<double>(sign)) * coefficient(m);
    }

    /// Adds c to the coefficient of the index set m (no simplification).
    void add(IndexMask m, const Expr& c) {
        if (mask_degree(m) != degree_) throw Error("index set does not match form degree");
        if (m >> chart_.dim()) throw Error("index set out of range for chart '" + chart_.name() + "'");
        if (c.is_zero()) return;
        auto [it, inserted] = terms_.emplace(m, c);
        if (!inserted) {
            it->second = it->second + c;
            if (it->second.is_zero()) terms_.erase(it);
        }
    }

    /// Simplifies every coefficient and drops the ones that vanish.
    DifferentialForm simplified() const {
        DifferentialForm out(chart_, degree_);
        for (const auto& [m, c] : terms_) out.add(m, simplify(c));
        return out;
    }

    DifferentialForm map_coefficients(const auto& fn) const {
        DifferentialForm out(chart_, degree_);
        for (const auto& [m, c] : terms_) out.add(m, fn(c));
        return out;
    }

    friend DifferentialForm wedge_product(const DifferentialForm& a, const DifferentialForm& b);

private:
    Chart chart_;
    int degree_ = 0;
    Terms terms_;
};

namespace detail {
inline void require_same_chart(const DifferentialForm& a, const DifferentialForm& b, const char* what) {
    if (a.chart() != b.chart())
        throw ChartError(std::string(what) + ": forms live on different charts ('" + a.chart().name() + "' vs '" +
                         b.chart().name() + "')");
}
}  // namespace detail

inline DifferentialForm operator+(const DifferentialForm& a, const DifferentialForm& b) {
    detail::require_same_chart(a, b, "sum");
    if (a.degree() != b.degree()) throw Error("sum of forms of different degree");
    DifferentialForm out = a;
    for (const auto& [m, c] : b.terms()) out.add(m, c);
    return out.simplified();
}

inline DifferentialForm operator*(const Expr& f, const DifferentialForm& a) {
    return a.map_coefficients([&](const Expr& c) { return simplify(f * c); });
}

inline DifferentialForm operator-(const DifferentialForm& a) { return Expr(-1.0) * a; }
inline DifferentialForm operator-(const DifferentialForm& a, const DifferentialForm& b) { return a + (-b); }

/// Alternating product. Degrees beyond the chart dimension give the zero form
/// of the top degree.
inline DifferentialForm wedge_product(const DifferentialForm& a, const DifferentialForm& b) {
    detail::require_same_chart(a, b, "wedge");
    const int deg = a.degree() + b.degree();
    const int dim = static_cast<int>(a.chart().dim());
    if (deg > dim) return DifferentialForm(a.chart(), dim);
    std::map<IndexMask, std::vector<Expr>> acc;
    for (const auto& [ma, ca] : a.terms()) {
        for (const auto& [mb, cb] : b.terms()) {
            const int s = wedge_sign(ma, mb);
            if (s == 0) continue;
            Expr p = ca * cb;
            acc[ma | mb].push_back(s > 0 ? p : -p);
        }
    }
    DifferentialForm out(a.chart(), deg);
    for (auto& [m, parts] : acc) {
        Expr sum;
        for (const Expr& p : parts) sum = sum + p;
        out.terms_.emplace(m, sum);
    }
    return out.simplified();
}

inline DifferentialForm wedge(const DifferentialForm& a, const DifferentialForm& b) { return wedge_product(a, b); }

inline DifferentialForm exterior_derivative(const DifferentialForm& a) {
    const Chart& chart = a.chart();
    const int dim = static_cast<int>(chart.dim());
    if (a.degree() >= dim) return DifferentialForm(chart, dim);
    std::map<IndexMask, std::vector<Expr>> acc;
    for (const auto& [m, c] : a.terms()) {
        for (int i = 0; i < dim; ++i) {
            const IndexMask bit = IndexMask{1} << i;
            if (m & bit) continue;
            Expr dc = diff(c, chart.coord(static_cast<std::size_t>(i)));
            if (dc.is_zero()) continue;
            const int below = std::popcount(m & (bit - 1));
            acc[m | bit].push_back((below & 1) ? -dc : dc);
        }
    }
    DifferentialForm out(chart, a.degree() + 1);
    for (auto& [m, parts] : acc) {
        Expr sum;
        for (const Expr& p : parts) sum = sum + p;
        out.add(m, simplify(sum));
    }
    return out;
}

inline DifferentialForm d(const DifferentialForm& a) { return exterior_derivative(a); }

/// k-fold wedge power; k = 0 gives the constant 1.
inline DifferentialForm form_power(const DifferentialForm& a, int k) {
    if (k < 0) throw Error("negative form power");
    DifferentialForm out = DifferentialForm::scalar(a.chart(), Expr(1.0));
    for (int i = 0; i < k; ++i) {
        out = wedge_product(out, a);
        if (out.is_zero()) {
            const int deg = std::min<int>(a.degree() * k, static_cast<int>(a.chart().dim()));
            return DifferentialForm(a.chart(), deg);
        }
    }
    return out;
}

/// The coefficient of a top-degree form in the chart's coordinate order,
/// multiplied by the chart orientation sign.
inline Expr top_density(const DifferentialForm& a) {
    const std::size_t dim = a.chart().dim();
    if (static_cast<std::size_t>(a.degree()) != dim)
        throw Error("top_density needs a form of degree " + std::to_string(dim) + ", got " +
                    std::to_string(a.degree()));
    const IndexMask full = dim == 32 ? ~IndexMask{0} : (IndexMask{1} << dim) - 1;
    return simplify(Expr(static_cast<double>(a.chart().orientation())) * a.coefficient(full));
}

/// Moves a form to another chart that contains the same coordinate names.
inline DifferentialForm rebind(const DifferentialForm& a, const Chart& target) {
    if (a.chart() == target) return a;
    std::vector<int> remap(a.chart().dim());
    for (std::size_t i = 0; i < a.chart().dim(); ++i)
        remap[i] = static_cast<int>(target.index_of(a.chart().coord(i)));
    DifferentialForm out(target, a.degree());
    for (const auto& [m, c] : a.terms()) {
        DifferentialForm piece = DifferentialForm::scalar(target, c);
        for (int i : mask_indices(m))
            piece = wedge_product(piece, DifferentialForm::differential(target, target.coord(static_cast<std::size_t>(remap[static_cast<std::size_t>(i)]))));
        for (const auto& [pm, pc] : piece.terms()) out.add(pm, pc);
    }
    return out;
}

/// Coefficient values at a point, keyed by index set.
inline std::map<IndexMask, double> evaluate_coefficients(const DifferentialForm& a, std::span<const double> p) {
    std::map<IndexMask, double> out;
    for (const auto& [m, c] : a.terms()) out[m] = evaluate(c, a.chart().coords(), p);
    return out;
}

inline std::string to_string(const DifferentialForm& a) {
    if (a.is_zero()) return "0";
    std::string s;
    for (const auto& [m, c] : a.terms()) {
        if (!s.empty()) s += " + ";
        std::string basis;
        for (int i : mask_indices(m)) {
            if (!basis.empty()) basis += " wedge ";
            basis += "d" + a.chart().coord(static_cast<std::size_t>(i));
        }
        if (basis.empty())
            s += "(" + to_string(c) + ")";
        else
            s += "(" + to_string(c) + ")*" + basis;
    }
    return s;
}

// ---------------------------------------------------------------------------

struct VectorField {
    Chart chart;
    std::vector<Expr> components;

    VectorField() = default;
    VectorField(Chart c, std::vector<Expr> comps) : chart(std::move(c)), components(std::move(comps)) {
        if (components.size() != chart.dim())
            throw Error("vector field on '" + chart.name() + "' needs " + std::to_string(chart.dim()) + " components");
    }
};

/// Contraction i_X a. Degree drops by one.
inline DifferentialForm interior_product(const VectorField& X, const DifferentialForm& a) {
    if (X.chart != a.chart()) throw ChartError("interior product: vector field and form on different charts");
    if (a.degree() == 0) throw Error("interior product of a 0-form is undefined");
    std::map<IndexMask, std::vector<Expr>> acc;
    for (const auto& [m, c] : a.terms()) {
        const auto idx = mask_indices(m);
        for (std::size_t p = 0; p < idx.size(); ++p) {
            const Expr& xi = X.components[static_cast<std::size_t>(idx[p])];
            if (xi.is_zero()) continue;
            Expr term = xi * c;
            acc[m & ~(IndexMask{1} << idx[p])].push_back((p & 1) ? -term : term);
        }
    }
    DifferentialForm out(a.chart(), a.degree() - 1);
    for (auto& [m, parts] : acc) {
        Expr sum;
        for (const Expr& p : parts) sum = sum + p;
        out.add(m, simplify(sum));
    }
    return out;
}

// ---------------------------------------------------------------------------

/// Chart-to-chart map given by one component expression per target coordinate,
/// written in the source coordinates.
class SmoothMap {
public:
    SmoothMap() = default;
    SmoothMap(Chart source, Chart target, std::vector<Expr> components)
        : source_(std::move(source)), target_(std::move(target)), components_(std::move(components)) {
        if (components_.size() != target_.dim())
            throw Error("map into '" + target_.name() + "' needs " + std::to_string(target_.dim()) + " components");
        for (const Expr& c : components_)
            for (const auto& v : free_variables(c))
                if (!source_.has(v))
                    throw ChartError("map component uses '" + v + "', not a coordinate of '" + source_.name() + "'");
    }

    static SmoothMap identity(const Chart& chart) {
        std::vector<Expr> comps;
        for (const auto& c : chart.coords()) comps.push_back(var(c));
        return SmoothMap(chart, chart, std::move(comps));
    }

    const Chart& source() const { return source_; }
    const Chart& target() const { return target_; }
    const std::vector<Expr>& components() const { return components_; }
    const Expr& component(std::size_t i) const { return components_.at(i); }

    Substitution substitution() const {
        Substitution s;
        for (std::size_t j = 0; j < target_.dim(); ++j) s.emplace(target_.coord(j), components_[j]);
        return s;
    }

    Point operator()(std::span<const double> p) const {
        Point out(components_.size());
        for (std::size_t j = 0; j < components_.size(); ++j) out[j] = evaluate(components_[j], source_.coords(), p);
        return out;
    }

    /// Jacobian entries d(component j)/d(source coordinate i), row j.
    std::vector<std::vector<Expr>> jacobian() const {
        std::vector<std::vector<Expr>> J(target_.dim(), std::vector<Expr>(source_.dim()));
        for (std::size_t j = 0; j < target_.dim(); ++j)
            for (std::size_t i = 0; i < source_.dim(); ++i)
                J[j][i] = partial_derivative(components_[j], source_.coord(i));
        return J;
    }

private:
    Chart source_;
    Chart target_;
    std::vector<Expr> components_;
};

/// g after f.
inline SmoothMap compose(const SmoothMap& g, const SmoothMap& f) {
    if (f.target() != g.source()) throw ChartError("compose: '" + f.target().name() + "' is not '" + g.source().name() + "'");
    const Substitution s = f.substitution();
    std::vector<Expr> comps;
    for (const Expr& c : g.components()) comps.push_back(simplify(substitute(c, s)));
    return SmoothMap(f.source(), g.target(), std::move(comps));
}

inline DifferentialForm pullback(const SmoothMap& F, const DifferentialForm& a) {
    if (a.chart() != F.target())
        throw ChartError("pullback: form lives on '" + a.chart().name() + "', map targets '" + F.target().name() + "'");
    const Chart& src = F.source();
    const Substitution sub = F.substitution();
    std::map<std::size_t, DifferentialForm> dF;
    auto differential_of = [&](std::size_t j) -> const DifferentialForm& {
        auto it = dF.find(j);
        if (it != dF.end()) return it->second;
        DifferentialForm g(src, 1);
        for (std::size_t i = 0; i < src.dim(); ++i)
            g.add(IndexMask{1} << i, partial_derivative(F.component(j), src.coord(i)));
        return dF.emplace(j, std::move(g)).first->second;
    };
    const int deg = std::min<int>(a.degree(), static_cast<int>(src.dim()));
    DifferentialForm out(src, deg);
    if (a.degree() > static_cast<int>(src.dim())) return out;
    for (const auto& [m, c] : a.terms()) {
        DifferentialForm piece = DifferentialForm::scalar(src, substitute(c, sub));
        for (int j : mask_indices(m)) {
            piece = wedge_product(piece, differential_of(static_cast<std::size_t>(j)));
            if (piece.is_zero()) break;
        }
        for (const auto& [pm, pc] : piece.terms()) out.add(pm, pc);
    }
    return out.simplified();
}

}  // namespace csf
