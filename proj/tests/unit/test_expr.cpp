#include <catch2/catch_amalgamated.hpp>

#include "finsler/expr.hpp"

using namespace finsler;

TEST_CASE("tokenizer recognises the calculator vocabulary") {
    auto toks = tokenize("sqrt(y1^2 + y2^2)");
    std::vector<Tok> kinds;
    for (const auto& t : toks) kinds.push_back(t.kind);
    CHECK(kinds == std::vector<Tok>{Tok::Ident, Tok::LParen, Tok::Ident, Tok::Caret, Tok::Number,
                                    Tok::Plus, Tok::Ident, Tok::Caret, Tok::Number, Tok::RParen,
                                    Tok::End});
    CHECK(toks[0].text == "sqrt");
    CHECK(toks[2].span.begin == 5);
    CHECK(toks[2].span.end == 7);
}

TEST_CASE("scientific notation parses to the right value") {
    auto toks = tokenize("2.5e-1");
    REQUIRE(toks.size() == 2);
    CHECK(toks[0].number == Catch::Approx(0.25));
}

TEST_CASE("lexical errors carry spans inside the source") {
    try {
        tokenize("y1 + $");
        FAIL("expected a lexical error");
    } catch (const ParseError& e) {
        CHECK(e.span.begin == 5);
        CHECK(e.span.end == 6);
    }
    CHECK_THROWS_AS(tokenize("1.e3"), ParseError);
    CHECK_THROWS_AS(tokenize("1e+"), ParseError);
}

TEST_CASE("precedence: product binds tighter than sum") {
    auto ast = parse_expression("y1 + y2 * y3");
    REQUIRE(ast->kind == Ast::Kind::Add);
    CHECK(ast->a->kind == Ast::Kind::Var);
    REQUIRE(ast->b->kind == Ast::Kind::Mul);
    CHECK(ast->b->a->index == 2);
    CHECK(ast->b->b->index == 3);
}

TEST_CASE("quartic root exponent") {
    auto ast = parse_expression("(y1^4 + y2^4)^(1/4)");
    REQUIRE(ast->kind == Ast::Kind::Pow);
    CHECK(ast->exponent.num == 1);
    CHECK(ast->exponent.den == 4);
}

TEST_CASE("decimal exponents reduce to small rationals") {
    auto ast = parse_expression("y1^0.5");
    REQUIRE(ast->kind == Ast::Kind::Pow);
    CHECK(ast->exponent.num == 1);
    CHECK(ast->exponent.den == 2);
    CHECK_THROWS_AS(parse_expression("y1^0.3"), ParseError);   // 3/10: denominator too large
    CHECK_THROWS_AS(parse_expression("y1^(1/16)"), ParseError);
    auto neg = parse_expression("y1^-2");
    CHECK(neg->exponent.num == -2);
}

TEST_CASE("parse errors: truncated input and unbalanced parens") {
    CHECK_THROWS_AS(parse_expression("y1 +"), ParseError);
    CHECK_THROWS_AS(parse_expression("(y1 + y2"), ParseError);
    CHECK_THROWS_AS(parse_expression("y1 y2"), ParseError);
    CHECK_THROWS_AS(parse_expression("foo(y1)"), ParseError);
}

TEST_CASE("out-of-range variables tokenize and parse but fail validation") {
    auto ast = parse_expression("x3 + y1");
    CHECK_THROWS_AS(validate_variables(*ast, 2, true), ParseError);
    CHECK_NOTHROW(validate_variables(*ast, 3, true));
    auto xonly = parse_expression("x1*y2");
    CHECK_THROWS_AS(validate_variables(*xonly, 2, false), ParseError);
}

TEST_CASE("jet evaluation of expressions") {
    auto env = seed_variables(std::vector<double>{0, 0}, std::vector<double>{3, 4}, 2);
    EvalEnv<Jet> e{env, 2};
    auto f = parse_expression("sqrt(y1^2 + y2^2)");
    CHECK(evaluate<Jet>(*f, e).value() == Catch::Approx(5.0));

    auto env2 = seed_variables(std::vector<double>{0, 0}, std::vector<double>{2, 1}, 2);
    EvalEnv<Jet> e2{env2, 2};
    auto y1 = parse_expression("y1");
    Jet jy1 = evaluate<Jet>(*y1, e2);
    CHECK(jy1.value() == 2.0);
    CHECK(jy1.deriv(2).value() == 1.0);

    auto env3 = seed_variables(std::vector<double>{0, 0}, std::vector<double>{1, 0}, 2);
    EvalEnv<Jet> e3{env3, 2};
    auto randers = parse_expression("sqrt(y1^2 + y2^2) + 0.3*y1");
    CHECK(evaluate<Jet>(*randers, e3).value() == Catch::Approx(1.3));
}

TEST_CASE("evaluation errors carry the failing node's span") {
    auto f = parse_expression("y1 / x1");
    std::vector<double> env{0.0, 1.0, 2.0, 3.0};  // x1 = 0
    try {
        evaluate<double>(*f, {env, 2});
        FAIL("expected division failure");
    } catch (const ExprEvalError& e) {
        CHECK(e.span.begin >= 0);
        CHECK(e.span.end <= 7);
    }
}

TEST_CASE("jet and plain floating-point evaluation agree") {
    Rng rng(99);
    auto ast = parse_expression("sqrt(y1^2 + 2*y2^2 + x1^2*y1^2) + 0.2*x2*y1 - y2/(3 + x1)");
    for (int i = 0; i < 100; ++i) {
        std::vector<double> v{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.3, 2),
                              rng.uniform(0.3, 2)};
        double plain = evaluate<double>(*ast, {v, 2});
        auto env = seed_variables(std::span<const double>(v.data(), 2),
                                  std::span<const double>(v.data() + 2, 2), 1);
        double viajets = evaluate<Jet>(*ast, {env, 2}).value();
        CHECK(viajets == Catch::Approx(plain).epsilon(1e-12));
    }
}

TEST_CASE("parse-print-parse is stable") {
    std::vector<std::string> sources = {
        "sqrt(y1^2 + y2^2)",
        "(y1^4 + y2^4)^(1/4)",
        "-y1 + y2*-y1",
        "2*sqrt(y1^2 + y2^2)/(1 + x1^2 + x2^2)",
        "y1 - y2 - y1/(x1 - 2)",
        "x1*x2/(1 - x1^2 - x2^2)^2",
        "y1^-2*y2^3",
    };
    for (const auto& src : sources) {
        auto once = parse_expression(src);
        auto printed = print_ast(*once);
        auto twice = parse_expression(printed);
        INFO(src << "  ->  " << printed);
        CHECK(ast_equal(*once, *twice));
        CHECK(print_ast(*twice) == printed);
    }
}

TEST_CASE("homogeneity validation distinguishes degree 1 from degree 2") {
    std::vector<std::array<double, 2>> box{{-1, 1}, {-1, 1}};
    auto good = parse_expression("sqrt(y1^2 + y2^2)");
    CHECK(validate_homogeneity(*good, 2, box).pass);
    auto bad = parse_expression("y1^2");
    auto rep = validate_homogeneity(*bad, 2, box);
    CHECK_FALSE(rep.pass);
    CHECK_FALSE(rep.failures.empty());
    auto xdep = parse_expression("sqrt(y1^2 + y2^2) + x1*y2");
    CHECK(validate_homogeneity(*xdep, 2, box).pass);
}
