#pragma once

// Small arithmetic expression compiler used for coefficient pieces, data
// functions and test functions given as strings in configuration files.
//
// Grammar (lowest to highest precedence):
//   or      := and ('||' and)*
//   and     := cmp ('&&' cmp)*
//   cmp     := sum (('<'|'<='|'>'|'>='|'=='|'!=') sum)?
//   sum     := product (('+'|'-') product)*
//   product := unary (('*'|'/') unary)*
//   unary   := ('-'|'+'|'!') unary | power
//   power   := atom ('^' unary)?
//   atom    := number | name | name '(' args ')' | '(' or ')'
// Comparisons and logical operators evaluate to 1 or 0.

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stefan {

class ExpressionError : public std::invalid_argument {
public:
    ExpressionError(const std::string& what, std::size_t position)
        : std::invalid_argument(what + " at position " + std::to_string(position)), position_(position) {}
    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

class Expression {
public:
    Expression() = default;

    /// Compiles `text`; `variables` names the slots of the argument span passed to eval.
    static Expression compile(std::string_view text, std::vector<std::string> variables) {
        Expression e;
        e.text_ = std::string(text);
        e.vars_ = std::move(variables);
        Parser p{e.text_, e.vars_, e.nodes_, 0};
        e.root_ = p.parse_or();
        p.skip();
        if (p.pos != e.text_.size()) throw ExpressionError("unexpected '" + std::string(1, e.text_[p.pos]) + "'", p.pos);
        return e;
    }

    double operator()(std::span<const double> args) const {
        if (args.size() < vars_.size()) throw std::invalid_argument("expression '" + text_ + "' needs " +
                                                                    std::to_string(vars_.size()) + " arguments");
        return eval(root_, args);
    }
    double operator()(std::initializer_list<double> args) const {
        return (*this)(std::span<const double>(args.begin(), args.size()));
    }

    const std::string& text() const { return text_; }
    const std::vector<std::string>& variables() const { return vars_; }
    bool empty() const { return nodes_.empty(); }

    /// True when the expression references variable `name`.
    bool uses(std::string_view name) const {
        for (const auto& n : nodes_)
            if (n.op == Op::var && vars_[static_cast<std::size_t>(n.index)] == name) return true;
        return false;
    }

private:
    enum class Op {
        num, var, neg, lnot, add, sub, mul, div, pow, lt, le, gt, ge, eq, ne, land, lor,
        sin, cos, tan, exp, log, sqrt, abs, tanh, sinh, cosh, atan, asin, acos, erf, erfc,
        floor, ceil, step, min, max, atan2, fpow
    };
    struct Node {
        Op op;
        double value = 0.0;
        int index = -1;
        int a = -1, b = -1;
    };

    struct Parser {
        const std::string& s;
        const std::vector<std::string>& vars;
        std::vector<Node>& nodes;
        std::size_t pos;

        void skip() {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        }
        bool eat(std::string_view tok) {
            skip();
            if (s.compare(pos, tok.size(), tok) == 0) {
                pos += tok.size();
                return true;
            }
            return false;
        }
        int push(Node n) {
            nodes.push_back(n);
            return static_cast<int>(nodes.size() - 1);
        }
        int binary(Op op, int a, int b) { return push({op, 0.0, -1, a, b}); }

        int parse_or() {
            int a = parse_and();
            while (eat("||")) a = binary(Op::lor, a, parse_and());
            return a;
        }
        int parse_and() {
            int a = parse_cmp();
            while (eat("&&")) a = binary(Op::land, a, parse_cmp());
            return a;
        }
        int parse_cmp() {
            int a = parse_sum();
            if (eat("<=")) return binary(Op::le, a, parse_sum());
            if (eat(">=")) return binary(Op::ge, a, parse_sum());
            if (eat("==")) return binary(Op::eq, a, parse_sum());
            if (eat("!=")) return binary(Op::ne, a, parse_sum());
            if (eat("<")) return binary(Op::lt, a, parse_sum());
            if (eat(">")) return binary(Op::gt, a, parse_sum());
            return a;
        }
        int parse_sum() {
            int a = parse_product();
            while (true) {
                if (eat("+")) a = binary(Op::add, a, parse_product());
                else if (eat("-")) a = binary(Op::sub, a, parse_product());
                else return a;
            }
        }
        int parse_product() {
            int a = parse_unary();
            while (true) {
                if (eat("*")) a = binary(Op::mul, a, parse_unary());
                else if (eat("/")) a = binary(Op::div, a, parse_unary());
                else return a;
            }
        }
        int parse_unary() {
            if (eat("-")) return push({Op::neg, 0.0, -1, parse_unary(), -1});
            if (eat("+")) return parse_unary();
            skip();
            if (pos < s.size() && s[pos] == '!' && (pos + 1 >= s.size() || s[pos + 1] != '=')) {
                ++pos;
                return push({Op::lnot, 0.0, -1, parse_unary(), -1});
            }
            return parse_power();
        }
        int parse_power() {
            int a = parse_atom();
            if (eat("^")) return binary(Op::pow, a, parse_unary());
            return a;
        }
        int parse_atom() {
            skip();
            if (pos >= s.size()) throw ExpressionError("unexpected end of expression", pos);
            const char c = s[pos];
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                const char* begin = s.c_str() + pos;
                char* end = nullptr;
                const double v = std::strtod(begin, &end);
                if (end == begin) throw ExpressionError("malformed number", pos);
                pos += static_cast<std::size_t>(end - begin);
                return push({Op::num, v});
            }
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                const std::size_t start = pos;
                while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
                const std::string name = s.substr(start, pos - start);
                if (eat("(")) return parse_call(name, start);
                for (std::size_t i = 0; i < vars.size(); ++i)
                    if (vars[i] == name) return push({Op::var, 0.0, static_cast<int>(i)});
                if (name == "pi") return push({Op::num, 3.14159265358979323846});
                if (name == "e") return push({Op::num, 2.71828182845904523536});
                throw ExpressionError("unknown name '" + name + "'", start);
            }
            if (eat("(")) {
                const int a = parse_or();
                if (!eat(")")) throw ExpressionError("expected ')'", pos);
                return a;
            }
            throw ExpressionError("unexpected '" + std::string(1, c) + "'", pos);
        }
        int parse_call(const std::string& name, std::size_t at) {
            std::vector<int> args;
            if (!eat(")")) {
                do args.push_back(parse_or());
                while (eat(","));
                if (!eat(")")) throw ExpressionError("expected ')' after arguments", pos);
            }
            struct Fn {
                const char* name;
                Op op;
                std::size_t arity;
            };
            static constexpr Fn table[] = {
                {"sin", Op::sin, 1},   {"cos", Op::cos, 1},     {"tan", Op::tan, 1},   {"exp", Op::exp, 1},
                {"log", Op::log, 1},   {"sqrt", Op::sqrt, 1},   {"abs", Op::abs, 1},   {"tanh", Op::tanh, 1},
                {"sinh", Op::sinh, 1}, {"cosh", Op::cosh, 1},   {"atan", Op::atan, 1}, {"asin", Op::asin, 1},
                {"acos", Op::acos, 1}, {"erf", Op::erf, 1},     {"erfc", Op::erfc, 1}, {"floor", Op::floor, 1},
                {"ceil", Op::ceil, 1}, {"step", Op::step, 1},   {"min", Op::min, 2},   {"max", Op::max, 2},
                {"atan2", Op::atan2, 2}, {"pow", Op::fpow, 2},
            };
            for (const auto& f : table) {
                if (name != f.name) continue;
                if (args.size() != f.arity)
                    throw ExpressionError(name + " takes " + std::to_string(f.arity) + " argument(s)", at);
                return push({f.op, 0.0, -1, args[0], f.arity == 2 ? args[1] : -1});
            }
            throw ExpressionError("unknown function '" + name + "'", at);
        }
    };

    double eval(int i, std::span<const double> x) const {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        switch (n.op) {
            case Op::num: return n.value;
            case Op::var: return x[static_cast<std::size_t>(n.index)];
            case Op::neg: return -eval(n.a, x);
            case Op::lnot: return eval(n.a, x) == 0.0 ? 1.0 : 0.0;
            case Op::add: return eval(n.a, x) + eval(n.b, x);
            case Op::sub: return eval(n.a, x) - eval(n.b, x);
            case Op::mul: return eval(n.a, x) * eval(n.b, x);
            case Op::div: return eval(n.a, x) / eval(n.b, x);
            case Op::pow:
            case Op::fpow: return std::pow(eval(n.a, x), eval(n.b, x));
            case Op::lt: return eval(n.a, x) < eval(n.b, x) ? 1.0 : 0.0;
            case Op::le: return eval(n.a, x) <= eval(n.b, x) ? 1.0 : 0.0;
            case Op::gt: return eval(n.a, x) > eval(n.b, x) ? 1.0 : 0.0;
            case Op::ge: return eval(n.a, x) >= eval(n.b, x) ? 1.0 : 0.0;
            case Op::eq: return eval(n.a, x) == eval(n.b, x) ? 1.0 : 0.0;
            case Op::ne: return eval(n.a, x) != eval(n.b, x) ? 1.0 : 0.0;
            case Op::land: return (eval(n.a, x) != 0.0 && eval(n.b, x) != 0.0) ? 1.0 : 0.0;
            case Op::lor: return (eval(n.a, x) != 0.0 || eval(n.b, x) != 0.0) ? 1.0 : 0.0;
            case Op::sin: return std::sin(eval(n.a, x));
            case Op::cos: return std::cos(eval(n.a, x));
            case Op::tan: return std::tan(eval(n.a, x));
            case Op::exp: return std::exp(eval(n.a, x));
            case Op::log: return std::log(eval(n.a, x));
            case Op::sqrt: return std::sqrt(eval(n.a, x));
            case Op::abs: return std::abs(eval(n.a, x));
            case Op::tanh: return std::tanh(eval(n.a, x));
            case Op::sinh: return std::sinh(eval(n.a, x));
            case Op::cosh: return std::cosh(eval(n.a, x));
            case Op::atan: return std::atan(eval(n.a, x));
            case Op::asin: return std::asin(eval(n.a, x));
            case Op::acos: return std::acos(eval(n.a, x));
            case Op::erf: return std::erf(eval(n.a, x));
            case Op::erfc: return std::erfc(eval(n.a, x));
            case Op::floor: return std::floor(eval(n.a, x));
            case Op::ceil: return std::ceil(eval(n.a, x));
            case Op::step: return eval(n.a, x) > 0.0 ? 1.0 : 0.0;
            case Op::min: return std::min(eval(n.a, x), eval(n.b, x));
            case Op::max: return std::max(eval(n.a, x), eval(n.b, x));
            case Op::atan2: return std::atan2(eval(n.a, x), eval(n.b, x));
        }
        return 0.0;
    }

    std::string text_;
    std::vector<std::string> vars_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

}  // namespace stefan
