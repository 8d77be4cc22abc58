#pragma once

// Scalar expression trees over named variables with exact symbolic
// differentiation, simultaneous substitution and a normalizing simplifier.

#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <unordered_map>
#include <vector>

#include "csf/error.hpp"

namespace csf {

enum class Op : std::uint8_t { Const, Var, Add, Mul, Neg, Div, Pow, Sqrt, Sin, Cos, Exp, Bump };

class Expr;

struct ExprNode {
    Op op = Op::Const;
    double value = 0.0;  // Const
    std::string name;    // Var
    int order = 0;       // Pow exponent; Bump polynomial order p in exp(-1/u) u^-p
    std::vector<Expr> args;
};

/// Immutable, cheaply copyable handle to an expression tree.
class Expr {
public:
    Expr() : node_(zero_node()) {}
    Expr(double c) : node_(make_const(c)) {}  // NOLINT(google-explicit-constructor)

    static Expr variable(std::string name) {
        auto n = std::make_shared<ExprNode>();
        n->op = Op::Var;
        n->name = std::move(name);
        return Expr(std::move(n));
    }

    static Expr node(Op op, std::vector<Expr> args, int order = 0) {
        auto n = std::make_shared<ExprNode>();
        n->op = op;
        n->order = order;
        n->args = std::move(args);
        return Expr(std::move(n));
    }

    Op op() const noexcept { return node_->op; }
    double value() const noexcept { return node_->value; }
    const std::string& name() const noexcept { return node_->name; }
    int order() const noexcept { return node_->order; }
    const std::vector<Expr>& args() const noexcept { return node_->args; }
    const Expr& arg(std::size_t i) const { return node_->args.at(i); }

    bool is_const() const noexcept { return node_->op == Op::Const; }
    bool is_const(double c) const noexcept { return is_const() && node_->value == c; }
    bool is_zero() const noexcept { return is_const(0.0); }

    const ExprNode* raw() const noexcept { return node_.get(); }

private:
    explicit Expr(std::shared_ptr<const ExprNode> n) : node_(std::move(n)) {}

    static std::shared_ptr<const ExprNode> make_const(double c) {
        if (c == 0.0) return zero_node();
        auto n = std::make_shared<ExprNode>();
        n->value = c;
        return n;
    }
    static const std::shared_ptr<const ExprNode>& zero_node() {
        static const std::shared_ptr<const ExprNode> z = std::make_shared<ExprNode>();
        return z;
    }

    std::shared_ptr<const ExprNode> node_;
};

// ---------------------------------------------------------------------------
// Builders. Each folds constants and drops neutral elements; nothing deeper.

inline Expr constant(double c) { return Expr(c); }
inline Expr var(const std::string& name) { return Expr::variable(name); }

inline Expr operator-(const Expr& a) {
    if (a.is_const()) return Expr(-a.value());
    if (a.op() == Op::Neg) return a.arg(0);
    return Expr::node(Op::Neg, {a});
}

inline Expr operator+(const Expr& a, const Expr& b) {
    if (a.is_const() && b.is_const()) return Expr(a.value() + b.value());
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    return Expr::node(Op::Add, {a, b});
}

inline Expr operator-(const Expr& a, const Expr& b) { return a + (-b); }

inline Expr operator*(const Expr& a, const Expr& b) {
    if (a.is_const() && b.is_const()) return Expr(a.value() * b.value());
    if (a.is_zero() || b.is_zero()) return Expr();
    if (a.is_const(1.0)) return b;
    if (b.is_const(1.0)) return a;
    if (a.is_const(-1.0)) return -b;
    if (b.is_const(-1.0)) return -a;
    if (b.is_const()) return b * a;
    if (a.is_const() && b.op() == Op::Mul && b.arg(0).is_const())
        return Expr(a.value() * b.arg(0).value()) * b.arg(1);
    return Expr::node(Op::Mul, {a, b});
}

inline Expr operator/(const Expr& a, const Expr& b) {
    if (b.is_zero()) throw Error("division by the zero expression");
    if (a.is_zero()) return Expr();
    if (b.is_const()) return Expr(1.0 / b.value()) * a;
    return Expr::node(Op::Div, {a, b});
}

inline Expr& operator+=(Expr& a, const Expr& b) { return a = a + b; }
inline Expr& operator*=(Expr& a, const Expr& b) { return a = a * b; }

inline Expr pow(const Expr& a, int k) {
    if (k == 0) return Expr(1.0);
    if (k == 1) return a;
    if (a.is_const()) return Expr(std::pow(a.value(), k));
    if (a.op() == Op::Pow) return pow(a.arg(0), a.order() * k);
    return Expr::node(Op::Pow, {a}, k);
}

inline double bump_value(double u, int p) {
    if (!(u > 0.0)) return 0.0;
    const double v = -1.0 / u - p * std::log(u);
    return v < -745.0 ? 0.0 : std::exp(v);
}

inline Expr sqrt(const Expr& a) {
    if (a.is_const()) return Expr(std::sqrt(a.value()));
    return Expr::node(Op::Sqrt, {a});
}
inline Expr sin(const Expr& a) {
    if (a.is_const()) return Expr(std::sin(a.value()));
    return Expr::node(Op::Sin, {a});
}
inline Expr cos(const Expr& a) {
    if (a.is_const()) return Expr(std::cos(a.value()));
    return Expr::node(Op::Cos, {a});
}
inline Expr exp(const Expr& a) {
    if (a.is_const()) return Expr(std::exp(a.value()));
    return Expr::node(Op::Exp, {a});
}

/// exp(-1/u) * u^-order for u > 0, and 0 for u <= 0. order 0 is the C-infinity
/// bump primitive; the higher orders close it under differentiation.
inline Expr bump(const Expr& u, int order = 0) {
    if (u.is_const()) return Expr(bump_value(u.value(), order));
    return Expr::node(Op::Bump, {u}, order);
}

/// Smooth step: 0 for u <= 0, 1 for u >= 1, strictly monotone in between.
inline Expr smooth_step(const Expr& u) {
    const Expr a = bump(u);
    return a / (a + bump(Expr(1.0) - u));
}

// ---------------------------------------------------------------------------
// Printing. Output is re-parseable by csf::parse_expression.

namespace detail {

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline int precedence(const Expr& e) {
    switch (e.op()) {
        case Op::Add: return 1;
        case Op::Neg: return 2;
        case Op::Mul:
        case Op::Div: return 3;
        case Op::Pow: return 4;
        case Op::Const: return e.value() < 0 ? 2 : 5;
        default: return 5;
    }
}

}  // namespace detail

inline std::string to_string(const Expr& e);

namespace detail {
inline std::string wrap(const Expr& e, int min_prec) {
    std::string s = to_string(e);
    return precedence(e) < min_prec ? "(" + s + ")" : s;
}
}  // namespace detail

inline std::string to_string(const Expr& e) {
    using detail::wrap;
    switch (e.op()) {
        case Op::Const: return detail::format_number(e.value());
        case Op::Var: return e.name();
        case Op::Add: {
            const Expr& b = e.arg(1);
            if (b.op() == Op::Neg) return to_string(e.arg(0)) + " - " + wrap(b.arg(0), 2);
            return to_string(e.arg(0)) + " + " + to_string(b);
        }
        case Op::Neg: return "-" + wrap(e.arg(0), 3);
        case Op::Mul: return wrap(e.arg(0), 3) + "*" + wrap(e.arg(1), 3);
        case Op::Div: return wrap(e.arg(0), 3) + "/" + wrap(e.arg(1), 4);
        case Op::Pow: {
            const std::string k = e.order() < 0 ? "(" + std::to_string(e.order()) + ")"
                                                : std::to_string(e.order());
            return wrap(e.arg(0), 5) + "^" + k;
        }
        case Op::Sqrt: return "sqrt(" + to_string(e.arg(0)) + ")";
        case Op::Sin: return "sin(" + to_string(e.arg(0)) + ")";
        case Op::Cos: return "cos(" + to_string(e.arg(0)) + ")";
        case Op::Exp: return "exp(" + to_string(e.arg(0)) + ")";
        case Op::Bump:
            if (e.order() == 0) return "bump(" + to_string(e.arg(0)) + ")";
            return "bumpk(" + to_string(e.arg(0)) + ", " + std::to_string(e.order()) + ")";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Structural queries.

inline void collect_variables(const Expr& e, std::set<std::string>& out) {
    if (e.op() == Op::Var) {
        out.insert(e.name());
        return;
    }
    for (const Expr& a : e.args()) collect_variables(a, out);
}

inline std::set<std::string> free_variables(const Expr& e) {
    std::set<std::string> out;
    collect_variables(e, out);
    return out;
}

inline bool depends_on(const Expr& e, const std::string& name) {
    if (e.op() == Op::Var) return e.name() == name;
    for (const Expr& a : e.args())
        if (depends_on(a, name)) return true;
    return false;
}

// ---------------------------------------------------------------------------
// Differentiation.

inline Expr diff(const Expr& e, const std::string& x) {
    switch (e.op()) {
        case Op::Const: return Expr();
        case Op::Var: return Expr(e.name() == x ? 1.0 : 0.0);
        case Op::Add: return diff(e.arg(0), x) + diff(e.arg(1), x);
        case Op::Neg: return -diff(e.arg(0), x);
        case Op::Mul: {
            const Expr& a = e.arg(0);
            const Expr& b = e.arg(1);
            return diff(a, x) * b + a * diff(b, x);
        }
        case Op::Div: {
            const Expr& a = e.arg(0);
            const Expr& b = e.arg(1);
            const Expr da = diff(a, x);
            const Expr db = diff(b, x);
            if (db.is_zero()) return da / b;
            return (da * b - a * db) / pow(b, 2);
        }
        case Op::Pow: {
            const Expr& a = e.arg(0);
            const int k = e.order();
            return Expr(static_cast<double>(k)) * pow(a, k - 1) * diff(a, x);
        }
        case Op::Sqrt: return diff(e.arg(0), x) / (Expr(2.0) * e);
        case Op::Sin: return cos(e.arg(0)) * diff(e.arg(0), x);
        case Op::Cos: return -(sin(e.arg(0)) * diff(e.arg(0), x));
        case Op::Exp: return e * diff(e.arg(0), x);
        case Op::Bump: {
            // d/du [exp(-1/u) u^-p] = exp(-1/u) u^-(p+2) - p exp(-1/u) u^-(p+1)
            const Expr& u = e.arg(0);
            const int p = e.order();
            Expr outer = bump(u, p + 2);
            if (p != 0) outer = outer - Expr(static_cast<double>(p)) * bump(u, p + 1);
            return outer * diff(u, x);
        }
    }
    return Expr();
}

// ---------------------------------------------------------------------------
// Simultaneous substitution of variables.

using Substitution = std::map<std::string, Expr>;

inline Expr rebuild_node(const Expr& e, std::vector<Expr> args) {
    switch (e.op()) {
        case Op::Add: return args[0] + args[1];
        case Op::Neg: return -args[0];
        case Op::Mul: return args[0] * args[1];
        case Op::Div: return args[0] / args[1];
        case Op::Pow: return pow(args[0], e.order());
        case Op::Sqrt: return sqrt(args[0]);
        case Op::Sin: return sin(args[0]);
        case Op::Cos: return cos(args[0]);
        case Op::Exp: return exp(args[0]);
        case Op::Bump: return bump(args[0], e.order());
        default: return e;
    }
}

inline Expr substitute(const Expr& e, const Substitution& sub) {
    if (e.op() == Op::Var) {
        auto it = sub.find(e.name());
        return it == sub.end() ? e : it->second;
    }
    if (e.args().empty()) return e;
    std::vector<Expr> args;
    args.reserve(e.args().size());
    bool changed = false;
    for (const Expr& a : e.args()) {
        args.push_back(substitute(a, sub));
        changed = changed || args.back().raw() != a.raw();
    }
    return changed ? rebuild_node(e, std::move(args)) : e;
}

// ---------------------------------------------------------------------------
// Normalization. Expressions are expanded into sums of monomials over
// "atoms" (variables and irreducible function applications), like terms are
// combined, and the result is rebuilt. Integer exponents of atoms may be
// negative, so quotients by monomials cancel.

class Polynomial {
public:
    using Monomial = std::vector<std::pair<int, int>>;  // (atom id, exponent), sorted by id

    std::map<Monomial, double> terms;

    static Polynomial constant(double c) {
        Polynomial p;
        if (c != 0.0) p.terms[{}] = c;
        return p;
    }
    static Polynomial atom(int id, int exponent = 1) {
        Polynomial p;
        p.terms[{{id, exponent}}] = 1.0;
        return p;
    }

    bool is_constant() const { return terms.empty() || (terms.size() == 1 && terms.begin()->first.empty()); }
    double constant_value() const { return terms.empty() ? 0.0 : terms.begin()->second; }

    void add(const Monomial& m, double c) {
        if (c == 0.0) return;
        auto [it, inserted] = terms.emplace(m, c);
        if (!inserted) {
            it->second += c;
            if (it->second == 0.0) terms.erase(it);
        }
    }

    Polynomial operator+(const Polynomial& o) const {
        Polynomial r = *this;
        for (const auto& [m, c] : o.terms) r.add(m, c);
        return r;
    }
    Polynomial scaled(double s) const {
        Polynomial r;
        if (s == 0.0) return r;
        for (const auto& [m, c] : terms) r.terms[m] = c * s;
        return r;
    }

    static Monomial multiply(const Monomial& a, const Monomial& b) {
        Monomial out;
        out.reserve(a.size() + b.size());
        std::size_t i = 0, j = 0;
        while (i < a.size() || j < b.size()) {
            if (j == b.size() || (i < a.size() && a[i].first < b[j].first)) {
                out.push_back(a[i++]);
            } else if (i == a.size() || b[j].first < a[i].first) {
                out.push_back(b[j++]);
            } else {
                const int e = a[i].second + b[j].second;
                if (e != 0) out.emplace_back(a[i].first, e);
                ++i;
                ++j;
            }
        }
        return out;
    }

    Polynomial operator*(const Polynomial& o) const {
        Polynomial r;
        for (const auto& [ma, ca] : terms)
            for (const auto& [mb, cb] : o.terms) r.add(multiply(ma, mb), ca * cb);
        return r;
    }
};

class Normalizer {
public:
    static constexpr std::size_t kExpansionLimit = 400;

    Polynomial to_polynomial(const Expr& e) {
        switch (e.op()) {
            case Op::Const: return Polynomial::constant(e.value());
            case Op::Var: return Polynomial::atom(intern(e));
            case Op::Add: return to_polynomial(e.arg(0)) + to_polynomial(e.arg(1));
            case Op::Neg: return to_polynomial(e.arg(0)).scaled(-1.0);
            case Op::Mul: {
                Polynomial a = to_polynomial(e.arg(0));
                Polynomial b = to_polynomial(e.arg(1));
                if (a.terms.size() * b.terms.size() > kExpansionLimit)
                    return opaque(rebuild(a) * rebuild(b));
                return a * b;
            }
            case Op::Div: {
                Polynomial a = to_polynomial(e.arg(0));
                Polynomial b = to_polynomial(e.arg(1));
                return a * inverse(b);
            }
            case Op::Pow: return power(to_polynomial(e.arg(0)), e.order());
            default: {
                Expr inner = rebuild(to_polynomial(e.arg(0)));
                Expr folded = rebuild_node(e, {inner});
                if (folded.is_const()) return Polynomial::constant(folded.value());
                return Polynomial::atom(intern(folded));
            }
        }
    }

    Expr rebuild(const Polynomial& p) const {
        Expr sum;
        for (const auto& [m, c] : p.terms) {
            Expr num;
            Expr den;
            bool has_num = false, has_den = false;
            for (const auto& [id, k] : m) {
                const Expr& a = atoms_[static_cast<std::size_t>(id)];
                if (k > 0) {
                    num = has_num ? num * pow(a, k) : pow(a, k);
                    has_num = true;
                } else {
                    den = has_den ? den * pow(a, -k) : pow(a, -k);
                    has_den = true;
                }
            }
            Expr term = has_num ? Expr(c) * num : Expr(c);
            if (has_den) term = term / den;
            sum = sum.is_zero() ? term : sum + term;
        }
        return sum;
    }

    const Expr& atom(int id) const { return atoms_.at(static_cast<std::size_t>(id)); }

    std::optional<int> find_variable(const std::string& name) const {
        auto it = ids_.find("$" + name);
        if (it == ids_.end()) return std::nullopt;
        return it->second;
    }

    int intern(const Expr& a) {
        const std::string key = a.op() == Op::Var ? "$" + a.name() : "#" + std::to_string(structural_id(a));
        auto it = ids_.find(key);
        if (it != ids_.end()) return it->second;
        const int id = static_cast<int>(atoms_.size());
        atoms_.push_back(a);
        ids_.emplace(key, id);
        return id;
    }

private:
    // Hash-consing: equal ids for structurally equal subtrees.
    int structural_id(const Expr& e) {
        if (auto it = node_ids_.find(e.raw()); it != node_ids_.end()) return it->second;
        NodeKey key{static_cast<int>(e.op()), e.value(), e.name(), e.order(), {}};
        for (const Expr& a : e.args()) key.kids.push_back(structural_id(a));
        auto [it, inserted] = structures_.emplace(std::move(key), static_cast<int>(structures_.size()));
        node_ids_.emplace(e.raw(), it->second);
        keep_.push_back(e);
        return it->second;
    }

    struct NodeKey {
        int op;
        double value;
        std::string name;
        int order;
        std::vector<int> kids;
        auto operator<=>(const NodeKey&) const = default;
    };

    Polynomial opaque(const Expr& e) {
        if (e.is_const()) return Polynomial::constant(e.value());
        return Polynomial::atom(intern(e));
    }

    Polynomial inverse(const Polynomial& b) {
        if (b.terms.empty()) throw Error("division by an expression that simplifies to zero");
        if (b.terms.size() == 1) {
            const auto& [m, c] = *b.terms.begin();
            Polynomial::Monomial inv = m;
            for (auto& f : inv) f.second = -f.second;
            Polynomial r;
            r.terms[inv] = 1.0 / c;
            return r;
        }
        return Polynomial::atom(intern(rebuild(b)), -1);
    }

    Polynomial power(const Polynomial& b, int k) {
        if (k == 0) return Polynomial::constant(1.0);
        if (b.terms.empty()) {
            if (k < 0) throw Error("negative power of an expression that simplifies to zero");
            return {};
        }
        if (b.terms.size() == 1) {
            const auto& [m, c] = *b.terms.begin();
            Polynomial::Monomial mk = m;
            for (auto& f : mk) f.second *= k;
            Polynomial r;
            r.terms[mk] = std::pow(c, k);
            return r;
        }
        double size = 1.0;
        for (int i = 0; i < k; ++i) size *= static_cast<double>(b.terms.size());
        if (k > 0 && k <= 4 && size <= static_cast<double>(kExpansionLimit)) {
            Polynomial r = b;
            for (int i = 1; i < k; ++i) r = r * b;
            return r;
        }
        return Polynomial::atom(intern(rebuild(b)), k);
    }

    std::vector<Expr> atoms_;
    std::map<std::string, int> ids_;
    std::map<NodeKey, int> structures_;
    std::unordered_map<const ExprNode*, int> node_ids_;
    std::vector<Expr> keep_;  // pins nodes so their addresses stay unique
};

/// Expands and collects like terms. Equal functions of the same arguments are
/// merged; x/x cancels to 1 (the removable singularity is ignored).
inline Expr simplify(const Expr& e) {
    if (e.is_const() || e.op() == Op::Var) return e;
    Normalizer n;
    return n.rebuild(n.to_polynomial(e));
}

/// True when a - b normalizes to the zero expression.
inline bool symbolically_equal(const Expr& a, const Expr& b) { return simplify(a - b).is_zero(); }

inline Expr partial_derivative(const Expr& e, const std::string& x) { return simplify(diff(e, x)); }

}  // namespace csf
