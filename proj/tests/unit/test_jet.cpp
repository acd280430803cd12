#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "finsler/jet.hpp"

using namespace finsler;

namespace {

Exponents mi(std::initializer_list<int> e) {
    Exponents out;
    for (int v : e) out.push_back(static_cast<std::uint8_t>(v));
    return out;
}

// Nested central finite difference for a mixed partial; Richardson at the top.
double fd_partial(const std::function<double(const std::vector<double>&)>& f, std::vector<double> pt,
                  Exponents m, double h) {
    std::function<double(std::vector<double>, Exponents, double)> rec =
        [&](std::vector<double> p, Exponents idx, double step) -> double {
        for (std::size_t v = 0; v < idx.size(); ++v) {
            if (idx[v] > 0) {
                Exponents next = idx;
                next[v]--;
                std::vector<double> hi = p, lo = p;
                hi[v] += step;
                lo[v] -= step;
                return (rec(hi, next, step) - rec(lo, next, step)) / (2 * step);
            }
        }
        return f(p);
    };
    double coarse = rec(pt, m, h);
    double fine = rec(pt, m, h / 2);
    return (4 * fine - coarse) / 3;
}

}  // namespace

TEST_CASE("seeded variables expose coordinate jets") {
    std::vector<double> x{0, 0}, y{1, 0};
    auto env = seed_variables(x, y, 2);
    REQUIRE(env.size() == 4);
    // jet of x^1: value 0, d/dx1 = 1, everything else 0
    CHECK(env[0].value() == 0.0);
    CHECK(env[0].partial(mi({1, 0, 0, 0})) == 1.0);
    CHECK(env[0].partial(mi({0, 1, 0, 0})) == 0.0);
    CHECK(env[0].partial(mi({0, 0, 1, 0})) == 0.0);
    CHECK(env[0].partial(mi({1, 1, 0, 0})) == 0.0);
    // Kronecker delta on the fiber block
    CHECK(env[2].partial(mi({0, 0, 1, 0})) == 1.0);
    CHECK(env[2].partial(mi({0, 0, 0, 1})) == 0.0);

    auto env2 = seed_variables(std::vector<double>{0, 0}, std::vector<double>{2, 3}, 2);
    CHECK(env2[3].value() == 3.0);
}

TEST_CASE("seed rejects bad input") {
    CHECK_THROWS_AS(seed_variables(std::vector<double>{0, 0}, std::vector<double>{0, 0}, 2), EvalError);
    CHECK_THROWS_AS(seed_variables(std::vector<double>{0, 0}, std::vector<double>{1, 0}, 0), ConfigError);
    CHECK_THROWS_AS(seed_variables(std::vector<double>{0, 0}, std::vector<double>{1, 0}, 99), ConfigError);
    CHECK_THROWS_AS(seed_variables(std::vector<double>{0}, std::vector<double>{1}, 2), ConfigError);
}

TEST_CASE("multiplication matches polynomial calculus") {
    auto env = seed_variables(std::vector<double>{0, 0}, std::vector<double>{2, 5}, 3);
    Jet y1 = env[2];
    Jet sq = y1 * y1;
    CHECK(sq.value() == 4.0);
    CHECK(sq.partial(mi({0, 0, 1, 0})) == 4.0);          // d(y^2)/dy = 2y
    CHECK(sq.coeff(sq.space()->index_of(mi({0, 0, 2, 0}))) == 1.0);  // Taylor coefficient of (y1-2)^2
    CHECK(sq.partial(mi({0, 0, 2, 0})) == 2.0);

    Jet cube = sq * y1;
    CHECK(cube.partial(mi({0, 0, 3, 0})) == 6.0);  // d^3(t^3)/dt^3 with value at y1=2... constant 6
    Jet mixed = env[0] * env[2];
    CHECK(mixed.partial(mi({1, 0, 1, 0})) == 1.0);
    CHECK(mixed.partial(mi({0, 0, 0, 0})) == 0.0);
}

TEST_CASE("sqrt of a constant jet is constant") {
    auto sp = JetSpace::get(4, 3);
    Jet c = Jet::constant(sp, 4.0);
    Jet r = c.sqrt();
    CHECK(r.value() == 2.0);
    for (int i = 1; i < sp->size(); ++i) CHECK(r.coeff(i) == 0.0);
}

TEST_CASE("reciprocal reproduces the geometric series") {
    auto env = seed_variables(std::vector<double>{0, 0}, std::vector<double>{0, 1}, 3);
    // note y = (0,1) so y1 seeds at value 0
    Jet d = 1.0 / (1.0 + env[2]);
    auto sp = d.space();
    CHECK(d.coeff(sp->index_of(mi({0, 0, 0, 0}))) == Catch::Approx(1.0));
    CHECK(d.coeff(sp->index_of(mi({0, 0, 1, 0}))) == Catch::Approx(-1.0));
    CHECK(d.coeff(sp->index_of(mi({0, 0, 2, 0}))) == Catch::Approx(1.0));
    CHECK(d.coeff(sp->index_of(mi({0, 0, 3, 0}))) == Catch::Approx(-1.0));
}

TEST_CASE("division and fractional powers reject bad values") {
    auto sp = JetSpace::get(4, 2);
    Jet zero = Jet::constant(sp, 0.0);
    Jet one = Jet::constant(sp, 1.0);
    Jet neg = Jet::constant(sp, -2.0);
    CHECK_THROWS_AS(one / zero, EvalError);
    CHECK_THROWS_AS(neg.sqrt(), EvalError);
    CHECK_THROWS_AS(neg.pow(1, 4), EvalError);
    CHECK_NOTHROW(neg.pow(3, 1));
    CHECK(neg.pow(3, 1).value() == -8.0);
    CHECK(neg.pow(-1, 1).value() == -0.5);
}

TEST_CASE("mismatched jet spaces are rejected") {
    auto a = Jet::constant(JetSpace::get(4, 3), 1.0);
    auto b = Jet::constant(JetSpace::get(4, 2), 1.0);
    CHECK_THROWS_AS(a + b, EvalError);
}

TEST_CASE("derivative extraction checks the valid order") {
    auto env = seed_variables(std::vector<double>{0, 0}, std::vector<double>{1, 1}, 2);
    Jet f = env[2] * env[3];
    Jet d1 = f.deriv(2);
    CHECK(d1.valid_order() == 1);
    Jet d2 = d1.deriv(3);
    CHECK(d2.valid_order() == 0);
    CHECK(d2.value() == 1.0);
    CHECK_THROWS_AS(d2.deriv(2), EvalError);
    CHECK_THROWS_AS(d1.partial(mi({0, 0, 1, 1})), EvalError);
}

TEST_CASE("product rule holds exactly on random polynomial jets") {
    Rng rng(7);
    auto env = seed_variables(std::vector<double>{0.3, -0.7}, std::vector<double>{1.1, 0.4}, 4);
    auto sp = env[0].space();

    auto random_poly = [&]() {
        Jet acc = Jet::constant(sp, rng.uniform(-1, 1));
        for (int t = 0; t < 6; ++t) {
            Jet term = Jet::constant(sp, rng.uniform(-1, 1));
            int deg = rng.uniform_int(1, 3);
            for (int d = 0; d < deg; ++d) term = term * env[rng.uniform_int(0, 3)];
            acc = acc + term;
        }
        return acc;
    };

    auto binom = [](int nn, int kk) {
        double r = 1;
        for (int i = 0; i < kk; ++i) r = r * (nn - i) / (i + 1);
        return r;
    };

    for (int rep = 0; rep < 3; ++rep) {
        Jet A = random_poly();
        Jet B = random_poly();
        Jet P = A * B;
        for (int idx = 0; idx < sp->size(); ++idx) {
            const Exponents& m = sp->exponents(idx);
            // Leibniz: sum over sub-multi-indices
            double expected = 0;
            Exponents a(4, 0);
            std::function<void(int)> loop = [&](int v) {
                if (v == 4) {
                    double coeff = 1;
                    Exponents b(4, 0);
                    for (int i = 0; i < 4; ++i) {
                        coeff *= binom(m[i], a[i]);
                        b[i] = static_cast<std::uint8_t>(m[i] - a[i]);
                    }
                    expected += coeff * A.partial(a) * B.partial(b);
                    return;
                }
                for (a[v] = 0; a[v] <= m[v]; ++a[v]) loop(v + 1);
                a[v] = 0;
            };
            loop(0);
            double got = P.partial(m);
            CHECK(got == Catch::Approx(expected).margin(1e-9 * (1 + std::abs(expected))));
        }
    }
}

TEST_CASE("sqrt is a coefficientwise left inverse of squaring") {
    Rng rng(11);
    auto env = seed_variables(std::vector<double>{0.2, 0.5}, std::vector<double>{0.9, -0.3}, 5);
    auto sp = env[0].space();
    Jet a = Jet::constant(sp, 2.0) + 0.3 * env[0] + 0.7 * env[2] * env[3] - 0.2 * env[1] * env[1];
    Jet r = (a * a).sqrt();
    for (int idx = 0; idx < sp->size(); ++idx)
        CHECK(r.coeff(idx) == Catch::Approx(a.coeff(idx)).margin(1e-12 * (1 + std::abs(a.coeff(idx)))));
}

TEST_CASE("extracted partials agree with finite differences to order 4") {
    // rational-and-root test function with known smoothness
    auto f = [](const std::vector<double>& v) {
        double x1 = v[0], x2 = v[1], y1 = v[2], y2 = v[3];
        return std::sqrt(1.0 + x1 * x1 + y1 * y2 + 0.5 * y2 * y2) + x2 * y1 / (2.0 + x1);
    };
    std::vector<double> pt{0.3, -0.4, 0.8, 0.6};
    auto env = seed_variables(std::span<const double>(pt.data(), 2), std::span<const double>(pt.data() + 2, 2), 6);
    Jet jf = (1.0 + env[0] * env[0] + env[2] * env[3] + 0.5 * env[3] * env[3]).sqrt() +
             env[1] * env[2] / (2.0 + env[0]);

    std::vector<Exponents> probes = {
        mi({1, 0, 0, 0}), mi({0, 0, 1, 0}), mi({1, 0, 1, 0}), mi({0, 1, 1, 0}),
        mi({2, 0, 0, 0}), mi({0, 0, 2, 1}), mi({1, 0, 1, 1}), mi({0, 0, 2, 2}),
        mi({2, 0, 1, 1}), mi({0, 0, 4, 0}),
    };
    for (const auto& m : probes) {
        double expected = fd_partial(f, pt, m, 0.05);
        double got = jf.partial(m);
        INFO("multi-index degree " << degree_of(m));
        CHECK(got == Catch::Approx(expected).epsilon(1e-5).margin(1e-5));
    }
}

TEST_CASE("fiber homogeneity detector for a 1-homogeneous function") {
    Rng rng(23);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-1, 1)};
        std::vector<double> y{rng.uniform(0.2, 2), rng.uniform(0.2, 2)};
        auto env = seed_variables(x, y, 3);
        Jet F = (env[2] * env[2] + env[3] * env[3]).sqrt() + 0.3 * env[2];
        double euler = 0;
        for (int k = 0; k < 2; ++k) euler += F.deriv(2 + k).value() * y[k];
        CHECK(euler == Catch::Approx(F.value()).epsilon(1e-10));
    }
}
