#pragma once

// Text syntax for scalar expressions and differential forms.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/' | 'wedge') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' integer)?
//   primary := number | name | name '(' args ')' | '(' expr ')'
//
// Names resolve to chart coordinates, declared constants, extra variables
// (such as the family parameter t) or, for "d<coord>", coordinate
// differentials. Functions: sin cos exp sqrt bump bumpk(u,p) step d(form).
// A product with a 0-form is scalar multiplication; "wedge" is the exterior
// product.

#include <cctype>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "csf/form.hpp"

namespace csf {

struct ParseContext {
    Chart chart;
    std::map<std::string, double> constants;
    std::set<std::string> variables;  // free parameters that are not coordinates
};

namespace detail {

class FormParser {
public:
    FormParser(std::string_view text, const ParseContext& ctx) : text_(text), ctx_(ctx) {}

    DifferentialForm parse() {
        next();
        DifferentialForm v = expr();
        if (tok_.kind != Tok::End) fail("unexpected '" + tok_.text + "'");
        return v;
    }

private:
    enum class Tok { Num, Name, Sym, End };
    struct Token {
        Tok kind = Tok::End;
        std::string text;
        double num = 0.0;
        std::size_t col = 0;
    };

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, tok_.col); }

    void next() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        tok_ = Token{};
        tok_.col = pos_ + 1;
        if (pos_ >= text_.size()) return;
        const char c = text_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t used = 0;
            const std::string rest(text_.substr(pos_));
            try {
                tok_.num = std::stod(rest, &used);
            } catch (const std::exception&) {
                throw ParseError("malformed number", pos_ + 1);
            }
            tok_.kind = Tok::Num;
            tok_.text = rest.substr(0, used);
            pos_ += used;
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < text_.size() &&
                   (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
                ++pos_;
            tok_.kind = Tok::Name;
            tok_.text = std::string(text_.substr(start, pos_ - start));
            return;
        }
        if (std::string_view("+-*/^(),").find(c) == std::string_view::npos)
            throw ParseError(std::string("unexpected character '") + c + "'", pos_ + 1);
        tok_.kind = Tok::Sym;
        tok_.text = std::string(1, c);
        ++pos_;
    }

    bool sym(char c) const { return tok_.kind == Tok::Sym && tok_.text[0] == c; }

    void expect(char c) {
        if (!sym(c)) fail(std::string("expected '") + c + "'");
        next();
    }

    DifferentialForm scalar(const Expr& e) const { return DifferentialForm::scalar(ctx_.chart, e); }

    Expr as_scalar(const DifferentialForm& f, const char* where) const {
        if (f.degree() != 0) fail(std::string(where) + " needs a scalar, got a " + std::to_string(f.degree()) + "-form");
        return f.coefficient(0u);
    }

    DifferentialForm expr() {
        DifferentialForm v = term();
        while (sym('+') || sym('-')) {
            const bool minus = sym('-');
            const std::size_t col = tok_.col;
            next();
            DifferentialForm rhs = term();
            if (rhs.degree() != v.degree())
                throw ParseError("cannot add a " + std::to_string(v.degree()) + "-form and a " +
                                     std::to_string(rhs.degree()) + "-form",
                                 col);
            v = minus ? v - rhs : v + rhs;
        }
        return v;
    }

    DifferentialForm term() {
        DifferentialForm v = unary();
        for (;;) {
            if (sym('*') || (tok_.kind == Tok::Name && tok_.text == "wedge")) {
                next();
                v = wedge_product(v, unary());
            } else if (sym('/')) {
                next();
                const Expr den = as_scalar(unary(), "division");
                v = v.map_coefficients([&](const Expr& c) { return simplify(c / den); });
            } else {
                return v;
            }
        }
    }

    DifferentialForm unary() {
        if (sym('-')) {
            next();
            return -unary();
        }
        if (sym('+')) {
            next();
            return unary();
        }
        return power();
    }

    DifferentialForm power() {
        DifferentialForm base = primary();
        if (!sym('^')) return base;
        next();
        int sign = 1;
        if (sym('-')) {
            sign = -1;
            next();
        } else if (sym('(')) {
            next();
            if (sym('-')) {
                sign = -1;
                next();
            }
            const int k = integer();
            expect(')');
            return scalar(pow(as_scalar(base, "'^'"), sign * k));
        }
        const int k = integer();
        return scalar(pow(as_scalar(base, "'^'"), sign * k));
    }

    int integer() {
        if (tok_.kind != Tok::Num || tok_.num != static_cast<double>(static_cast<int>(tok_.num)))
            fail("exponent must be an integer");
        const int k = static_cast<int>(tok_.num);
        next();
        return k;
    }

    DifferentialForm primary() {
        if (tok_.kind == Tok::Num) {
            const double v = tok_.num;
            next();
            return scalar(Expr(v));
        }
        if (sym('(')) {
            next();
            DifferentialForm v = expr();
            expect(')');
            return v;
        }
        if (tok_.kind != Tok::Name) fail(tok_.kind == Tok::End ? "unexpected end of input" : "unexpected '" + tok_.text + "'");
        const std::string name = tok_.text;
        const std::size_t col = tok_.col;
        next();
        if (sym('(')) return call(name, col);
        if (ctx_.chart.has(name)) return scalar(var(name));
        if (ctx_.variables.count(name)) return scalar(var(name));
        if (auto it = ctx_.constants.find(name); it != ctx_.constants.end()) return scalar(Expr(it->second));
        if (name == "pi") return scalar(Expr(std::numbers::pi));
        if (name.size() > 1 && name[0] == 'd' && ctx_.chart.has(name.substr(1)))
            return DifferentialForm::differential(ctx_.chart, name.substr(1));
        throw ParseError("unknown name '" + name + "'", col);
    }

    DifferentialForm call(const std::string& fn, std::size_t col) {
        next();  // '('
        std::vector<DifferentialForm> args;
        if (!sym(')')) {
            args.push_back(expr());
            while (sym(',')) {
                next();
                args.push_back(expr());
            }
        }
        expect(')');
        auto arity = [&](std::size_t n) {
            if (args.size() != n) throw ParseError(fn + " takes " + std::to_string(n) + " argument(s)", col);
        };
        if (fn == "d") {
            arity(1);
            return exterior_derivative(args[0]);
        }
        if (fn == "bumpk") {
            arity(2);
            const Expr k = as_scalar(args[1], "bumpk order");
            if (!k.is_const() || k.value() != static_cast<double>(static_cast<int>(k.value())))
                throw ParseError("bumpk order must be an integer constant", col);
            return scalar(bump(as_scalar(args[0], "bumpk"), static_cast<int>(k.value())));
        }
        arity(1);
        const Expr a = as_scalar(args[0], fn.c_str());
        if (fn == "sin") return scalar(sin(a));
        if (fn == "cos") return scalar(cos(a));
        if (fn == "exp") return scalar(exp(a));
        if (fn == "sqrt") return scalar(sqrt(a));
        if (fn == "bump") return scalar(bump(a));
        if (fn == "step") return scalar(smooth_step(a));
        throw ParseError("unknown function '" + fn + "'", col);
    }

    std::string_view text_;
    const ParseContext& ctx_;
    std::size_t pos_ = 0;
    Token tok_;
};

}  // namespace detail

inline DifferentialForm parse_form(std::string_view text, const ParseContext& ctx) {
    if (!ctx.chart.valid()) throw Error("parse_form needs a chart");
    return detail::FormParser(text, ctx).parse();
}

inline DifferentialForm parse_form(std::string_view text, const Chart& chart) {
    return parse_form(text, ParseContext{chart, {}, {}});
}

/// Parses a scalar expression over the given variable names.
inline Expr parse_expression(std::string_view text, const std::vector<std::string>& variables,
                             const std::map<std::string, double>& constants = {}) {
    std::vector<std::string> names = variables;
    if (names.empty()) names.push_back("_");
    std::vector<Interval> box(names.size(), Interval{0.0, 1.0});
    ParseContext ctx{Chart("scalar", names, box), constants, {}};
    DifferentialForm f = parse_form(text, ctx);
    if (f.degree() != 0) throw ParseError("expected a scalar expression, got a " + std::to_string(f.degree()) + "-form", 1);
    return f.coefficient(0u);
}

}  // namespace csf
