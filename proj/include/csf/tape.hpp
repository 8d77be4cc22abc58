#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <tuple>
#include <cmath>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "csf/expr.hpp"

namespace csf {

/// Straight-line program for repeated evaluation of one expression with
/// variables bound to fixed slots. Structurally equal subexpressions are
/// computed once. Evaluation is pure; a Tape may be shared across threads.
class Tape {
public:
    Tape() = default;

    Tape(const Expr& e, const std::vector<std::string>& slots) {
        std::unordered_map<std::string, int> index;
        for (std::size_t i = 0; i < slots.size(); ++i) index.emplace(slots[i], static_cast<int>(i));
        std::unordered_map<const ExprNode*, int> seen;
        std::map<Key, int> structural;
        result_ = emit(e, index, seen, structural);
    }

    double operator()(std::span<const double> x) const {
        if (code_.empty()) return 0.0;
        thread_local std::vector<double> reg;
        if (reg.size() < code_.size()) reg.resize(code_.size());
        for (std::size_t i = 0; i < code_.size(); ++i) {
            const Instr& in = code_[i];
            double v = 0.0;
            switch (in.op) {
                case Op::Const: v = in.value; break;
                case Op::Var: v = x[static_cast<std::size_t>(in.order)]; break;
                case Op::Add: v = reg[in.a] + reg[in.b]; break;
                case Op::Mul: v = reg[in.a] * reg[in.b]; break;
                case Op::Div: v = reg[in.a] / reg[in.b]; break;
                case Op::Neg: v = -reg[in.a]; break;
                case Op::Pow: v = ipow(reg[in.a], in.order); break;
                case Op::Sqrt: v = std::sqrt(reg[in.a]); break;
                case Op::Sin: v = std::sin(reg[in.a]); break;
                case Op::Cos: v = std::cos(reg[in.a]); break;
                case Op::Exp: v = std::exp(reg[in.a]); break;
                case Op::Bump: v = bump_value(reg[in.a], in.order); break;
            }
            reg[i] = v;
        }
        return reg[static_cast<std::size_t>(result_)];
    }

    std::size_t size() const noexcept { return code_.size(); }

private:
    struct Instr {
        Op op;
        int order = 0;  // Pow exponent, Bump order, or variable slot
        std::uint32_t a = 0, b = 0;
        double value = 0.0;
    };
    using Key = std::tuple<int, double, int, std::uint32_t, std::uint32_t>;

    static double ipow(double b, int k) {
        if (k < 0) return 1.0 / ipow(b, -k);
        double r = 1.0;
        while (k) {
            if (k & 1) r *= b;
            b *= b;
            k >>= 1;
        }
        return r;
    }

    int emit(const Expr& e, const std::unordered_map<std::string, int>& index,
             std::unordered_map<const ExprNode*, int>& seen, std::map<Key, int>& structural) {
        if (auto it = seen.find(e.raw()); it != seen.end()) return it->second;
        Instr in{e.op()};
        switch (e.op()) {
            case Op::Const: in.value = e.value(); break;
            case Op::Var: {
                auto it = index.find(e.name());
                if (it == index.end()) throw ChartError("unbound variable '" + e.name() + "' in " + to_string(e));
                in.order = it->second;
                break;
            }
            default:
                in.order = e.order();
                in.a = static_cast<std::uint32_t>(emit(e.arg(0), index, seen, structural));
                if (e.args().size() > 1) in.b = static_cast<std::uint32_t>(emit(e.arg(1), index, seen, structural));
        }
        const Key key{static_cast<int>(in.op), in.value, in.order, in.a, in.b};
        int slot;
        if (auto it = structural.find(key); it != structural.end()) {
            slot = it->second;
        } else {
            slot = static_cast<int>(code_.size());
            code_.push_back(in);
            structural.emplace(key, slot);
        }
        seen.emplace(e.raw(), slot);
        return slot;
    }

    std::vector<Instr> code_;
    int result_ = 0;
};

/// One-off evaluation with explicit bindings.
inline double evaluate(const Expr& e, const std::vector<std::string>& names, std::span<const double> values) {
    return Tape(e, names)(values);
}

}  // namespace csf
