#pragma once

#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lnared/errors.hpp"
#include "lnared/types.hpp"

namespace lnared::expr {

/// Value plus gradient with respect to the species vector (forward mode).
struct Dual {
    double v = 0.0;
    Vec g;
};

/// Parsed rate expression over species and (already bound) parameters.
///
/// Grammar: infix + - * / ^ with parentheses and sqrt(.); '^' is
/// right-associative and binds above unary minus. Identifiers resolve to
/// species first, then to parameters (bound to constants at parse time);
/// anything else raises UnboundParameter.
class Expression {
    enum class Kind { kConst, kSpecies, kAdd, kSub, kMul, kDiv, kPow, kNeg, kSqrt };

    struct Node {
        Kind kind;
        double value = 0.0;      // kConst
        Eigen::Index species = 0; // kSpecies
        std::shared_ptr<const Node> a;
        std::shared_ptr<const Node> b;
    };
    using NodePtr = std::shared_ptr<const Node>;

public:
    Expression() = default;

    [[nodiscard]] static Expression parse(const std::string& text,
                                          const std::vector<std::string>& species,
                                          const std::map<std::string, double>& parameters) {
        Parser p{text, 0, &species, &parameters};
        Expression e;
        e.root_ = p.parse_expr();
        p.skip_ws();
        if (p.pos != text.size())
            throw ParseError("rate '" + text + "': trailing input at position " +
                             std::to_string(p.pos));
        return e;
    }

    /// Evaluates at a species state; throws EvalError on domain violations.
    [[nodiscard]] double eval(const Vec& x) const {
        const double v = eval_node(root_.get(), x);
        if (!std::isfinite(v)) throw EvalError("expression produced a non-finite value");
        return v;
    }

    /// Value and gradient with respect to every species.
    [[nodiscard]] Dual eval_dual(const Vec& x) const {
        Dual d = eval_dual_node(root_.get(), x);
        if (!std::isfinite(d.v) || !d.g.allFinite())
            throw EvalError("expression derivative produced a non-finite value");
        return d;
    }

private:
    NodePtr root_;

    static NodePtr make(Kind k, NodePtr a = nullptr, NodePtr b = nullptr) {
        auto n = std::make_shared<Node>();
        n->kind = k;
        n->a = std::move(a);
        n->b = std::move(b);
        return n;
    }

    struct Parser {
        const std::string& s;
        size_t pos;
        const std::vector<std::string>* species;
        const std::map<std::string, double>* parameters;

        void skip_ws() {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        }

        bool peek(char c) {
            skip_ws();
            return pos < s.size() && s[pos] == c;
        }

        bool accept(char c) {
            if (peek(c)) {
                ++pos;
                return true;
            }
            return false;
        }

        NodePtr parse_expr() {
            NodePtr lhs = parse_term();
            for (;;) {
                if (accept('+')) lhs = make(Kind::kAdd, lhs, parse_term());
                else if (accept('-')) lhs = make(Kind::kSub, lhs, parse_term());
                else return lhs;
            }
        }

        NodePtr parse_term() {
            NodePtr lhs = parse_unary();
            for (;;) {
                if (accept('*')) lhs = make(Kind::kMul, lhs, parse_unary());
                else if (accept('/')) lhs = make(Kind::kDiv, lhs, parse_unary());
                else return lhs;
            }
        }

        NodePtr parse_unary() {
            if (accept('-')) return make(Kind::kNeg, parse_unary());
            if (accept('+')) return parse_unary();
            return parse_power();
        }

        NodePtr parse_power() {
            NodePtr base = parse_atom();
            if (accept('^')) return make(Kind::kPow, base, parse_unary());
            return base;
        }

        NodePtr parse_atom() {
            skip_ws();
            if (pos >= s.size()) throw ParseError("rate '" + s + "': unexpected end of input");
            const char c = s[pos];
            if (c == '(') {
                ++pos;
                NodePtr e = parse_expr();
                if (!accept(')'))
                    throw ParseError("rate '" + s + "': missing ')' at position " +
                                     std::to_string(pos));
                return e;
            }
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
            throw ParseError("rate '" + s + "': unexpected character '" + std::string(1, c) +
                             "' at position " + std::to_string(pos));
        }

        NodePtr parse_number() {
            const char* begin = s.c_str() + pos;
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin) throw ParseError("rate '" + s + "': bad number at position " +
                                               std::to_string(pos));
            pos += static_cast<size_t>(end - begin);
            auto n = std::make_shared<Node>();
            n->kind = Kind::kConst;
            n->value = v;
            return n;
        }

        NodePtr parse_ident() {
            const size_t start = pos;
            while (pos < s.size() &&
                   (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
                ++pos;
            const std::string name = s.substr(start, pos - start);
            if (name == "sqrt") {
                if (!accept('('))
                    throw ParseError("rate '" + s + "': sqrt requires parentheses");
                NodePtr arg = parse_expr();
                if (!accept(')'))
                    throw ParseError("rate '" + s + "': missing ')' after sqrt argument");
                return make(Kind::kSqrt, arg);
            }
            for (size_t i = 0; i < species->size(); ++i) {
                if ((*species)[i] == name) {
                    auto n = std::make_shared<Node>();
                    n->kind = Kind::kSpecies;
                    n->species = static_cast<Eigen::Index>(i);
                    return n;
                }
            }
            auto it = parameters->find(name);
            if (it != parameters->end()) {
                auto n = std::make_shared<Node>();
                n->kind = Kind::kConst;
                n->value = it->second;
                return n;
            }
            throw UnboundParameter("rate '" + s + "': unknown identifier '" + name + "'");
        }
    };

    static double eval_node(const Node* n, const Vec& x) {
        switch (n->kind) {
            case Kind::kConst: return n->value;
            case Kind::kSpecies:
                if (n->species >= x.size()) throw EvalError("species index out of range");
                return x(n->species);
            case Kind::kAdd: return eval_node(n->a.get(), x) + eval_node(n->b.get(), x);
            case Kind::kSub: return eval_node(n->a.get(), x) - eval_node(n->b.get(), x);
            case Kind::kMul: return eval_node(n->a.get(), x) * eval_node(n->b.get(), x);
            case Kind::kDiv: {
                const double d = eval_node(n->b.get(), x);
                if (d == 0.0) throw EvalError("division by zero");
                return eval_node(n->a.get(), x) / d;
            }
            case Kind::kPow: {
                const double a = eval_node(n->a.get(), x);
                const double b = eval_node(n->b.get(), x);
                if (a == 0.0 && b < 0.0) throw EvalError("zero raised to a negative power");
                if (a < 0.0 && b != std::floor(b))
                    throw EvalError("negative base with non-integer exponent");
                return std::pow(a, b);
            }
            case Kind::kNeg: return -eval_node(n->a.get(), x);
            case Kind::kSqrt: {
                const double a = eval_node(n->a.get(), x);
                if (a < 0.0) throw EvalError("sqrt of a negative value");
                return std::sqrt(a);
            }
        }
        throw EvalError("corrupt expression node");
    }

    static Dual eval_dual_node(const Node* n, const Vec& x) {
        const Eigen::Index nx = x.size();
        switch (n->kind) {
            case Kind::kConst: return {n->value, Vec::Zero(nx)};
            case Kind::kSpecies: {
                if (n->species >= nx) throw EvalError("species index out of range");
                Dual d{x(n->species), Vec::Zero(nx)};
                d.g(n->species) = 1.0;
                return d;
            }
            case Kind::kAdd: {
                Dual a = eval_dual_node(n->a.get(), x), b = eval_dual_node(n->b.get(), x);
                return {a.v + b.v, a.g + b.g};
            }
            case Kind::kSub: {
                Dual a = eval_dual_node(n->a.get(), x), b = eval_dual_node(n->b.get(), x);
                return {a.v - b.v, a.g - b.g};
            }
            case Kind::kMul: {
                Dual a = eval_dual_node(n->a.get(), x), b = eval_dual_node(n->b.get(), x);
                return {a.v * b.v, a.v * b.g + b.v * a.g};
            }
            case Kind::kDiv: {
                Dual a = eval_dual_node(n->a.get(), x), b = eval_dual_node(n->b.get(), x);
                if (b.v == 0.0) throw EvalError("division by zero");
                return {a.v / b.v, (a.g * b.v - a.v * b.g) / (b.v * b.v)};
            }
            case Kind::kPow: {
                Dual a = eval_dual_node(n->a.get(), x), b = eval_dual_node(n->b.get(), x);
                if (b.g.isZero(0.0)) {
                    // constant exponent: d(a^p) = p a^{p-1} da
                    if (a.v == 0.0 && b.v < 1.0 && b.v != 0.0)
                        throw EvalError("power derivative singular at zero base");
                    if (a.v < 0.0 && b.v != std::floor(b.v))
                        throw EvalError("negative base with non-integer exponent");
                    const double v = std::pow(a.v, b.v);
                    return {v, b.v == 0.0 ? Vec(Vec::Zero(nx))
                                          : Vec(b.v * std::pow(a.v, b.v - 1.0) * a.g)};
                }
                if (a.v <= 0.0) throw EvalError("variable exponent requires a positive base");
                const double v = std::pow(a.v, b.v);
                return {v, v * (b.g * std::log(a.v) + b.v / a.v * a.g)};
            }
            case Kind::kNeg: {
                Dual a = eval_dual_node(n->a.get(), x);
                return {-a.v, -a.g};
            }
            case Kind::kSqrt: {
                Dual a = eval_dual_node(n->a.get(), x);
                if (a.v < 0.0) throw EvalError("sqrt of a negative value");
                if (a.v == 0.0 && !a.g.isZero(0.0))
                    throw EvalError("sqrt derivative singular at zero");
                const double v = std::sqrt(a.v);
                return {v, v > 0.0 ? Vec(0.5 / v * a.g) : Vec(Vec::Zero(nx))};
            }
        }
        throw EvalError("corrupt expression node");
    }
};

} // namespace lnared::expr
