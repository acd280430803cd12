#pragma once

#include <array>
#include <cctype>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "finsler/common.hpp"
#include "finsler/jet.hpp"

namespace finsler {

/// Byte range [begin, end) into the source text of an expression.
struct SourceSpan {
    int begin = 0;
    int end = 0;
};

struct ParseError : ConfigError {
    ParseError(const std::string& msg, SourceSpan s)
        : ConfigError(msg + " (at offset " + std::to_string(s.begin) + ".." + std::to_string(s.end) + ")"),
          span(s) {}
    SourceSpan span;
};

struct ExprEvalError : EvalError {
    ExprEvalError(const std::string& msg, SourceSpan s)
        : EvalError(msg + " (at offset " + std::to_string(s.begin) + ".." + std::to_string(s.end) + ")"),
          span(s) {}
    SourceSpan span;
};

// ---------------------------------------------------------------------------
// Tokens
// ---------------------------------------------------------------------------

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Comma, End };

struct Token {
    Tok kind;
    SourceSpan span;
    double number = 0;
    std::string text;
};

inline std::vector<Token> tokenize(std::string_view src) {
    std::vector<Token> out;
    int i = 0;
    const int n = static_cast<int>(src.size());
    auto push = [&](Tok k, int b, int e) { out.push_back({k, {b, e}, 0, std::string(src.substr(b, e - b))}); };
    while (i < n) {
        char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            int b = i;
            while (i < n && std::isdigit(static_cast<unsigned char>(src[i]))) ++i;
            if (i < n && src[i] == '.') {
                ++i;
                if (i >= n || !std::isdigit(static_cast<unsigned char>(src[i])))
                    throw ParseError("malformed number: digits required after decimal point", {b, i});
                while (i < n && std::isdigit(static_cast<unsigned char>(src[i]))) ++i;
            }
            if (i < n && (src[i] == 'e' || src[i] == 'E')) {
                ++i;
                if (i < n && (src[i] == '+' || src[i] == '-')) ++i;
                if (i >= n || !std::isdigit(static_cast<unsigned char>(src[i])))
                    throw ParseError("malformed number: exponent digits missing", {b, i});
                while (i < n && std::isdigit(static_cast<unsigned char>(src[i]))) ++i;
            }
            Token t{Tok::Number, {b, i}, 0, std::string(src.substr(b, i - b))};
            t.number = std::stod(t.text);
            out.push_back(std::move(t));
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            int b = i;
            while (i < n && (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_')) ++i;
            push(Tok::Ident, b, i);
            continue;
        }
        switch (c) {
            case '+': push(Tok::Plus, i, i + 1); break;
            case '-': push(Tok::Minus, i, i + 1); break;
            case '*': push(Tok::Star, i, i + 1); break;
            case '/': push(Tok::Slash, i, i + 1); break;
            case '^': push(Tok::Caret, i, i + 1); break;
            case '(': push(Tok::LParen, i, i + 1); break;
            case ')': push(Tok::RParen, i, i + 1); break;
            case ',': push(Tok::Comma, i, i + 1); break;
            default:
                throw ParseError(std::string("unexpected character '") + c + "'", {i, i + 1});
        }
        ++i;
    }
    out.push_back({Tok::End, {n, n}, 0, ""});
    return out;
}

// ---------------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------------

struct Ast;
using AstPtr = std::shared_ptr<const Ast>;

struct Ast {
    enum class Kind { Number, Var, Add, Sub, Mul, Div, Neg, Pow, Sqrt };

    Kind kind;
    SourceSpan span;
    double number = 0;       // Number
    char block = 0;          // Var: 'x' or 'y'
    int index = 0;           // Var: 1-based coordinate index
    Rational exponent{1, 1}; // Pow
    AstPtr a, b;             // children (unary nodes use only a)
};

namespace detail {

class Parser {
public:
    explicit Parser(std::string_view src) : toks_(tokenize(src)) {}

    AstPtr parse() {
        AstPtr e = expression();
        if (peek().kind != Tok::End) throw ParseError("unexpected trailing input", peek().span);
        return e;
    }

private:
    const Token& peek() const { return toks_[pos_]; }
    const Token& advance() { return toks_[pos_++]; }
    bool accept(Tok k) {
        if (peek().kind == k) {
            ++pos_;
            return true;
        }
        return false;
    }
    const Token& expect(Tok k, const char* what) {
        if (peek().kind != k) throw ParseError(std::string("expected ") + what, peek().span);
        return advance();
    }

    static AstPtr make_binary(Ast::Kind k, AstPtr a, AstPtr b) {
        Ast node;
        node.kind = k;
        node.span = {a->span.begin, b->span.end};
        node.a = std::move(a);
        node.b = std::move(b);
        return std::make_shared<const Ast>(std::move(node));
    }

    AstPtr expression() {
        AstPtr lhs = term();
        while (true) {
            if (accept(Tok::Plus))
                lhs = make_binary(Ast::Kind::Add, lhs, term());
            else if (accept(Tok::Minus))
                lhs = make_binary(Ast::Kind::Sub, lhs, term());
            else
                return lhs;
        }
    }

    AstPtr term() {
        AstPtr lhs = unary();
        while (true) {
            if (accept(Tok::Star))
                lhs = make_binary(Ast::Kind::Mul, lhs, unary());
            else if (accept(Tok::Slash))
                lhs = make_binary(Ast::Kind::Div, lhs, unary());
            else
                return lhs;
        }
    }

    AstPtr unary() {
        if (peek().kind == Tok::Minus) {
            SourceSpan s = advance().span;
            AstPtr inner = unary();
            Ast node;
            node.kind = Ast::Kind::Neg;
            node.span = {s.begin, inner->span.end};
            node.a = std::move(inner);
            return std::make_shared<const Ast>(std::move(node));
        }
        return power();
    }

    AstPtr power() {
        AstPtr base = atom();
        if (!accept(Tok::Caret)) return base;
        auto [r, span_end] = exponent();
        Ast node;
        node.kind = Ast::Kind::Pow;
        node.span = {base->span.begin, span_end};
        node.exponent = r;
        node.a = std::move(base);
        return std::make_shared<const Ast>(std::move(node));
    }

    // rational exponent: [-]number or ([-]p / q)
    std::pair<Rational, int> exponent() {
        bool neg = false;
        if (accept(Tok::LParen)) {
            if (accept(Tok::Minus)) neg = true;
            const Token& p = expect(Tok::Number, "a number in the exponent");
            Rational r = number_to_rational(p);
            if (accept(Tok::Slash)) {
                const Token& q = expect(Tok::Number, "an integer denominator");
                Rational rd = number_to_rational(q);
                if (!rd.is_integer() || rd.num <= 0)
                    throw ParseError("exponent denominator must be a positive integer", q.span);
                r.den *= rd.num;
            }
            const Token& close = expect(Tok::RParen, "')' closing the exponent");
            if (neg) r.num = -r.num;
            return {check_rational(r, {p.span.begin, close.span.end}), close.span.end};
        }
        if (accept(Tok::Minus)) neg = true;
        const Token& p = expect(Tok::Number, "a rational exponent");
        Rational r = number_to_rational(p);
        if (neg) r.num = -r.num;
        return {check_rational(r, p.span), p.span.end};
    }

    /// Converts a decimal literal to an exact rational (mantissa over a power
    /// of ten), so "0.25" and "2.5e-1" both mean 1/4.
    static Rational number_to_rational(const Token& t) {
        long long mant = 0;
        long long den = 1;
        int exp10 = 0;
        std::size_t i = 0;
        const std::string& s = t.text;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])))
            mant = mant * 10 + (s[i++] - '0');
        if (i < s.size() && s[i] == '.') {
            ++i;
            while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
                mant = mant * 10 + (s[i++] - '0');
                den *= 10;
            }
        }
        if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
            ++i;
            bool eneg = false;
            if (s[i] == '+' || s[i] == '-') eneg = (s[i++] == '-');
            int e = 0;
            while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) e = e * 10 + (s[i++] - '0');
            exp10 = eneg ? -e : e;
        }
        Rational r{mant, den};
        for (int k = 0; k < exp10; ++k) r.num *= 10;
        for (int k = 0; k < -exp10; ++k) r.den *= 10;
        r.reduce();
        return r;
    }

    static Rational check_rational(Rational r, SourceSpan s) {
        r.reduce();
        if (r.den > 8)
            throw ParseError("exponent must be a rational with denominator at most 8, got " +
                                 std::to_string(r.num) + "/" + std::to_string(r.den),
                             s);
        return r;
    }

    AstPtr atom() {
        const Token& t = peek();
        switch (t.kind) {
            case Tok::Number: {
                advance();
                Ast node;
                node.kind = Ast::Kind::Number;
                node.span = t.span;
                node.number = t.number;
                return std::make_shared<const Ast>(std::move(node));
            }
            case Tok::Ident: {
                advance();
                if (t.text == "sqrt") {
                    expect(Tok::LParen, "'(' after sqrt");
                    AstPtr arg = expression();
                    const Token& close = expect(Tok::RParen, "')' closing sqrt");
                    Ast node;
                    node.kind = Ast::Kind::Sqrt;
                    node.span = {t.span.begin, close.span.end};
                    node.a = std::move(arg);
                    return std::make_shared<const Ast>(std::move(node));
                }
                if ((t.text[0] == 'x' || t.text[0] == 'y') && t.text.size() > 1) {
                    bool digits = true;
                    for (std::size_t k = 1; k < t.text.size(); ++k)
                        digits = digits && std::isdigit(static_cast<unsigned char>(t.text[k]));
                    if (digits) {
                        int idx = std::stoi(t.text.substr(1));
                        if (idx >= 1) {
                            Ast node;
                            node.kind = Ast::Kind::Var;
                            node.span = t.span;
                            node.block = t.text[0];
                            node.index = idx;
                            return std::make_shared<const Ast>(std::move(node));
                        }
                    }
                }
                throw ParseError("unknown identifier '" + t.text + "' (expected x<i>, y<i> or sqrt)", t.span);
            }
            case Tok::LParen: {
                advance();
                AstPtr inner = expression();
                expect(Tok::RParen, "')'");
                return inner;
            }
            case Tok::End:
                throw ParseError("unexpected end of expression", t.span);
            default:
                throw ParseError("unexpected token '" + t.text + "'", t.span);
        }
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline AstPtr parse_expression(std::string_view src) { return detail::Parser(src).parse(); }

// ---------------------------------------------------------------------------
// Printing and structural equality
// ---------------------------------------------------------------------------

inline int precedence_of(Ast::Kind k) {
    switch (k) {
        case Ast::Kind::Add:
        case Ast::Kind::Sub: return 1;
        case Ast::Kind::Mul:
        case Ast::Kind::Div: return 2;
        case Ast::Kind::Neg: return 3;
        case Ast::Kind::Pow: return 4;
        default: return 5;
    }
}

inline void print_ast_rec(const Ast& n, std::string& out) {
    auto child = [&](const Ast& c, bool strict) {
        bool parens = precedence_of(c.kind) < precedence_of(n.kind) ||
                      (strict && precedence_of(c.kind) == precedence_of(n.kind));
        if (parens) out += '(';
        print_ast_rec(c, out);
        if (parens) out += ')';
    };
    switch (n.kind) {
        case Ast::Kind::Number: out += fmt_double(n.number); break;
        case Ast::Kind::Var:
            out += n.block;
            out += std::to_string(n.index);
            break;
        case Ast::Kind::Add:
            child(*n.a, false);
            out += " + ";
            child(*n.b, true);
            break;
        case Ast::Kind::Sub:
            child(*n.a, false);
            out += " - ";
            child(*n.b, true);
            break;
        case Ast::Kind::Mul:
            child(*n.a, false);
            out += "*";
            child(*n.b, true);
            break;
        case Ast::Kind::Div:
            child(*n.a, false);
            out += "/";
            child(*n.b, true);
            break;
        case Ast::Kind::Neg:
            out += "-";
            child(*n.a, true);
            break;
        case Ast::Kind::Pow:
            child(*n.a, true);
            out += "^";
            if (n.exponent.den == 1 && n.exponent.num >= 0) {
                out += std::to_string(n.exponent.num);
            } else {
                out += '(';
                out += std::to_string(n.exponent.num);
                if (n.exponent.den != 1) {
                    out += '/';
                    out += std::to_string(n.exponent.den);
                }
                out += ')';
            }
            break;
        case Ast::Kind::Sqrt:
            out += "sqrt(";
            print_ast_rec(*n.a, out);
            out += ')';
            break;
    }
}

inline std::string print_ast(const Ast& n) {
    std::string out;
    print_ast_rec(n, out);
    return out;
}

inline bool ast_equal(const Ast& a, const Ast& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case Ast::Kind::Number: return a.number == b.number;
        case Ast::Kind::Var: return a.block == b.block && a.index == b.index;
        case Ast::Kind::Pow: return a.exponent == b.exponent && ast_equal(*a.a, *b.a);
        case Ast::Kind::Neg:
        case Ast::Kind::Sqrt: return ast_equal(*a.a, *b.a);
        default: return ast_equal(*a.a, *b.a) && ast_equal(*a.b, *b.b);
    }
}

/// Checks that all variable indices fit the chart dimension; optionally bans
/// fiber variables (for fields that must depend on x only).
inline void validate_variables(const Ast& n, int dim, bool allow_y) {
    if (n.kind == Ast::Kind::Var) {
        if (n.index > dim)
            throw ParseError("variable " + std::string(1, n.block) + std::to_string(n.index) +
                                 " exceeds chart dimension " + std::to_string(dim),
                             n.span);
        if (!allow_y && n.block == 'y')
            throw ParseError("fiber variable y" + std::to_string(n.index) +
                                 " is not allowed in this field (x-dependence only)",
                             n.span);
        return;
    }
    if (n.a) validate_variables(*n.a, dim, allow_y);
    if (n.b) validate_variables(*n.b, dim, allow_y);
}

// ---------------------------------------------------------------------------
// Evaluation over an arbitrary scalar algebra
// ---------------------------------------------------------------------------

/// env holds the 2n coordinate values/jets in the order x1..xn, y1..yn.
template <class T>
struct EvalEnv {
    std::span<const T> env;
    int dim;
};

namespace detail {

inline double alg_pow(double v, const Rational& r, SourceSpan span) {
    if (r.den == 1) {
        if (r.num < 0 && v == 0.0) throw ExprEvalError("division by zero value", span);
        return std::pow(v, static_cast<double>(r.num));
    }
    if (v <= 0.0)
        throw ExprEvalError("fractional power of non-positive value " + fmt_double(v, 6), span);
    return std::pow(v, r.as_double());
}

inline Jet alg_pow(const Jet& v, const Rational& r, SourceSpan span) {
    try {
        return v.pow(r.num, r.den);
    } catch (const EvalError& e) {
        throw ExprEvalError(e.what(), span);
    }
}

inline double alg_sqrt(double v, SourceSpan span) {
    if (v <= 0.0) throw ExprEvalError("sqrt of non-positive value " + fmt_double(v, 6), span);
    return std::sqrt(v);
}

inline Jet alg_sqrt(const Jet& v, SourceSpan span) {
    try {
        return v.sqrt();
    } catch (const EvalError& e) {
        throw ExprEvalError(e.what(), span);
    }
}

inline double alg_div(double a, double b, SourceSpan span) {
    if (b == 0.0) throw ExprEvalError("division by zero value", span);
    return a / b;
}

inline Jet alg_div(const Jet& a, const Jet& b, SourceSpan span) {
    if (b.value() == 0.0) throw ExprEvalError("division by a jet with zero value", span);
    return a / b;
}

inline double alg_const(double v, const EvalEnv<double>&) { return v; }
inline Jet alg_const(double v, const EvalEnv<Jet>& env) { return Jet::constant(env.env[0].space(), v); }

}  // namespace detail

template <class T>
T evaluate(const Ast& n, const EvalEnv<T>& env) {
    switch (n.kind) {
        case Ast::Kind::Number: return detail::alg_const(n.number, env);
        case Ast::Kind::Var: {
            int slot = (n.block == 'x' ? 0 : env.dim) + n.index - 1;
            if (n.index > env.dim)
                throw ExprEvalError("variable index exceeds chart dimension", n.span);
            return env.env[slot];
        }
        case Ast::Kind::Add: return evaluate(*n.a, env) + evaluate(*n.b, env);
        case Ast::Kind::Sub: return evaluate(*n.a, env) - evaluate(*n.b, env);
        case Ast::Kind::Mul: return evaluate(*n.a, env) * evaluate(*n.b, env);
        case Ast::Kind::Div: return detail::alg_div(evaluate(*n.a, env), evaluate(*n.b, env), n.span);
        case Ast::Kind::Neg: return -evaluate(*n.a, env);
        case Ast::Kind::Pow: return detail::alg_pow(evaluate(*n.a, env), n.exponent, n.span);
        case Ast::Kind::Sqrt: return detail::alg_sqrt(evaluate(*n.a, env), n.span);
    }
    throw InternalError("unhandled AST node kind");
}

// ---------------------------------------------------------------------------
// Fiber homogeneity validation
// ---------------------------------------------------------------------------

struct HomogeneityFailure {
    std::vector<double> x, y;
    double t = 0;
    double error = 0;
    std::string message;  // nonempty for evaluation failures
};

struct HomogeneityCheck {
    bool pass = true;
    double worst = 0;
    int samples = 0;
    int eval_failures = 0;
    std::vector<HomogeneityFailure> failures;
};

/// Samples |F(x, t*y) - t*F(x, y)| over random points of box x [0.1,10)
/// scalings; tolerance 1e-9 * (1 + |F|).
inline HomogeneityCheck validate_homogeneity(const Ast& ast, int dim,
                                             std::span<const std::array<double, 2>> box,
                                             int samples = 50, std::uint64_t seed = 20240901) {
    HomogeneityCheck report;
    report.samples = samples;
    Rng rng(seed);
    for (int s = 0; s < samples; ++s) {
        std::vector<double> env(2 * dim);
        for (int i = 0; i < dim; ++i)
            env[i] = box.empty() ? rng.uniform(-1, 1)
                                 : rng.uniform(box[i][0], box[i][1]);
        double norm = 0;
        for (int i = 0; i < dim; ++i) {
            env[dim + i] = rng.normal();
            norm += env[dim + i] * env[dim + i];
        }
        norm = std::sqrt(norm);
        for (int i = 0; i < dim; ++i) env[dim + i] /= norm;
        double t = rng.uniform(0.1, 10.0);
        try {
            double f = evaluate<double>(ast, {env, dim});
            std::vector<double> scaled = env;
            for (int i = 0; i < dim; ++i) scaled[dim + i] *= t;
            double ft = evaluate<double>(ast, {scaled, dim});
            double err = std::abs(ft - t * f);
            double tol = 1e-9 * (1.0 + std::abs(ft));
            report.worst = std::max(report.worst, err / (1.0 + std::abs(ft)));
            if (err > tol) {
                report.pass = false;
                report.failures.push_back({{env.begin(), env.begin() + dim},
                                           {env.begin() + dim, env.end()},
                                           t,
                                           err,
                                           ""});
            }
        } catch (const EvalError& e) {
            report.eval_failures++;
            report.failures.push_back({{env.begin(), env.begin() + dim},
                                       {env.begin() + dim, env.end()},
                                       t,
                                       0,
                                       e.what()});
        }
    }
    return report;
}

}  // namespace finsler
