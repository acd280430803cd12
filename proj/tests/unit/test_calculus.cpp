#include <catch2/catch_amalgamated.hpp>

#include "finsler/calculus.hpp"
#include "finsler/fd_oracle.hpp"
#include "finsler/verify.hpp"

using namespace finsler;

namespace {

std::string metrics_dir() { return FINSLER_METRICS_DIR; }
MetricSpec load(const std::string& name) { return load_metric_file(metrics_dir() + "/" + name + ".json"); }

double ladder_entry(PointGeometry& geo, const std::string& id) {
    for (const auto& e : jet_identity_ladder(geo))
        if (e.id == id) return e.residual;
    throw std::runtime_error("no ladder entry " + id);
}

}  // namespace

TEST_CASE("fundamental tensor of flat space is the identity") {
    MetricSpec eu = load("euclidean2");
    PointGeometry geo(eu, {{0.4, -0.2}, {0.6, 0.8}}, 4);
    Tensor g = value_of(geo.g_jets());
    CHECK(g(0, 0) == Catch::Approx(1.0).margin(1e-14));
    CHECK(g(1, 1) == Catch::Approx(1.0).margin(1e-14));
    CHECK(g(0, 1) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("g_ij y^i y^j recovers F^2 on every spec") {
    for (const char* name : {"euclidean2", "ellipsoid", "sphere-projective", "randers-const-beta",
                             "funk-disk", "quartic-minkowski"}) {
        MetricSpec spec = load(name);
        SampleSet s = sample(spec, 6, 99);
        for (const auto& p : s.points) {
            PointGeometry geo(spec, p, 2);
            Tensor g = value_of(geo.g_jets());
            double quad = 0;
            for (int i = 0; i < spec.dim; ++i)
                for (int j = 0; j < spec.dim; ++j) quad += g(i, j) * p.y[i] * p.y[j];
            CHECK(quad == Catch::Approx(geo.F2()).epsilon(1e-10));
        }
    }
}

TEST_CASE("fundamental tensor matches the finite-difference Hessian on a Randers point") {
    MetricSpec rd = load("randers-const-beta");
    EvalPoint p{{0, 0, 0}, {1, 0, 0}};
    PointGeometry geo(rd, p, 2);
    FdOracle fd(rd);
    Tensor gj = value_of(geo.g_jets());
    Tensor gf = fd.g(p);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(gj(i, j) == Catch::Approx(gf(i, j)).margin(1e-6));
}

TEST_CASE("angular metric projects out the fiber direction") {
    MetricSpec eu = load("euclidean2");
    PointGeometry geo(eu, {{0, 0}, {1, 0}}, 4);
    Tensor h = value_of(geo.h_jets());
    CHECK(h(0, 0) == Catch::Approx(0.0).margin(1e-14));
    CHECK(h(0, 1) == Catch::Approx(0.0).margin(1e-14));
    CHECK(h(1, 1) == Catch::Approx(1.0).margin(1e-14));

    for (const char* name : {"funk-disk", "quartic-minkowski"}) {
        MetricSpec spec = load(name);
        SampleSet s = sample(spec, 5, 7);
        for (const auto& p : s.points) {
            PointGeometry g2(spec, p, 6);
            CHECK(ladder_entry(g2, "ykill_h") < 1e-12);
            CHECK(ladder_entry(g2, "trace_gh") < 1e-12);
        }
    }
}

TEST_CASE("Cartan torsion vanishes exactly on Riemannian-kind metrics") {
    for (const char* name : {"euclidean3", "ellipsoid"}) {
        MetricSpec spec = load(name);
        SampleSet s = sample(spec, 5, 13);
        for (const auto& p : s.points) {
            PointGeometry geo(spec, p, 4);
            CHECK(geo.norm_lower(value_of(geo.cartan_jets())) * geo.F() <= 1e-12);
        }
    }
}

TEST_CASE("Cartan torsion of the quartic norm against finite differences") {
    MetricSpec q = load("quartic-minkowski");
    // away from the symmetry rays, where the torsion is genuinely nonzero
    EvalPoint p{{0, 0, 0}, {2, 1, 0.5}};
    PointGeometry geo(q, p, 4);
    FdOracle fd(q);
    Tensor Cj = value_of(geo.cartan_jets());
    Tensor Cf = fd.cartan(p);
    CHECK(Cj.max_abs() > 0.01);
    for (std::size_t i = 0; i < Cj.data().size(); ++i)
        CHECK(Cj.data()[i] == Catch::Approx(Cf.data()[i]).margin(1e-4 * (1 + Cj.max_abs())));
    PointGeometry geo6(q, p, 6);  // full ladder needs the stretch order
    CHECK(ladder_entry(geo6, "ykill_C") < 1e-12);
    CHECK(ladder_entry(geo6, "ykill_I") < 1e-12);
}

TEST_CASE("spray vanishes for position-independent metrics") {
    for (const char* name : {"euclidean2", "randers-const-beta", "quartic-minkowski"}) {
        MetricSpec spec = load(name);
        SampleSet s = sample(spec, 4, 3);
        for (const auto& p : s.points) {
            PointGeometry geo(spec, p, 6);
            CHECK(value_of(geo.spray_jets()).max_abs() <= 1e-14);
            CHECK(value_of(geo.berwald_curvature_jets()).max_abs() <= 1e-14);
        }
    }
}

TEST_CASE("spray of a Riemannian metric matches the Christoffel oracle") {
    MetricSpec el = load("ellipsoid");
    FdOracle fd(el);
    SampleSet s = sample(el, 4, 21);
    for (const auto& p : s.points) {
        PointGeometry geo(el, p, 4);
        Tensor Gj = value_of(geo.spray_jets());
        auto Gc = fd.spray_from_christoffel(p.x, p.y);
        for (int i = 0; i < 3; ++i)
            CHECK(Gj(i) == Catch::Approx(Gc[i]).margin(1e-5 * (1 + std::abs(Gc[i]))));
    }
}

TEST_CASE("conformally flat sphere metric has critical spray at the origin") {
    MetricSpec sp = load("sphere-projective");
    EvalPoint p{{0, 0}, {0.7, -0.4}};
    PointGeometry geo(sp, p, 4);
    CHECK(value_of(geo.spray_jets()).max_abs() <= 1e-13);
    FdOracle fd(sp);
    auto Gc = fd.spray_from_christoffel(p.x, p.y);
    CHECK(std::abs(Gc[0]) <= 1e-6);
    CHECK(std::abs(Gc[1]) <= 1e-6);
}

TEST_CASE("connection homogeneity and metricity facts") {
    for (const char* name : {"funk-disk", "sphere-projective", "ellipsoid"}) {
        MetricSpec spec = load(name);
        SampleSet s = sample(spec, 5, 37);
        for (const auto& p : s.points) {
            PointGeometry geo(spec, p, 6);
            CHECK(ladder_entry(geo, "conn_Ny_2G") < 1e-11);
            CHECK(ladder_entry(geo, "conn_Gy_N") < 1e-11);
            CHECK(ladder_entry(geo, "metricity_F") < 1e-11);
            CHECK(ladder_entry(geo, "metricity_gy") < 1e-11);
            CHECK(ladder_entry(geo, "metricity_ylow") < 1e-11);
        }
    }
}

TEST_CASE("covariant derivatives vanish identically on flat space") {
    MetricSpec eu = load("euclidean2");
    PointGeometry geo(eu, {{0.3, 0.1}, {0.5, -0.9}}, 6);
    CHECK(value_of(geo.cov_deriv(geo.g_jets())).max_abs() == 0.0);
    CHECK(value_of(geo.cov_deriv(geo.cartan_jets())).max_abs() == 0.0);
    CHECK(value_of(geo.landsberg_jets()).max_abs() == 0.0);
}

TEST_CASE("Landsberg tensor: zero cases and transported-Cartan cross-check") {
    // Riemannian and locally Minkowski specs are Landsberg
    for (const char* name : {"ellipsoid", "quartic-minkowski", "randers-const-beta"}) {
        MetricSpec spec = load(name);
        SampleSet s = sample(spec, 4, 5);
        for (const auto& p : s.points) {
            PointGeometry geo(spec, p, 6);
            double F = geo.F();
            CHECK(geo.norm_lower(value_of(geo.landsberg_jets())) * F * F <= 1e-12);
            CHECK(geo.norm_lower(value_of(geo.mean_landsberg_jets())) * F * F <= 1e-12);
        }
    }
    // randers spec: the finite-difference transport of C along the flow
    // agrees (trivially, both vanish)
    MetricSpec rd = load("randers-const-beta");
    EvalPoint p{{0.2, 0.1, -0.3}, {0.9, 0.4, 0.2}};
    FdOracle fd(rd);
    Tensor Lf = fd.landsberg(p);
    CHECK(Lf.max_abs() <= 1e-7);
    // funk: both routes nonzero, flow finite differences against jets
    MetricSpec funk = load("funk-disk");
    EvalPoint pf{{0.15, -0.1}, {0.8, 0.5}};
    PointGeometry geo(funk, pf, 6);
    Tensor Lj = value_of(geo.landsberg_jets());
    Tensor Lfd = FdOracle(funk).landsberg(pf);
    CHECK(Lj.max_abs() > 0.01);
    for (std::size_t i = 0; i < Lj.data().size(); ++i)
        CHECK(Lj.data()[i] == Catch::Approx(Lfd.data()[i]).margin(1e-4 * (1 + Lj.max_abs())));
}

TEST_CASE("Matsumoto torsion vanishes for Randers metrics and persists for the quartic") {
    for (const char* name : {"randers-const-beta", "funk-disk"}) {
        MetricSpec spec = load(name);
        SampleSet s = sample(spec, 8, 11);
        for (const auto& p : s.points) {
            PointGeometry geo(spec, p, 6);
            CHECK(geo.norm_lower(value_of(geo.matsumoto_jets())) * geo.F() <= 1e-7);
        }
    }
    MetricSpec q = load("quartic-minkowski");
    EvalPoint p{{0, 0, 0}, {1.3, 0.8, -0.6}};
    PointGeometry geo(q, p, 6);
    Tensor Mj = value_of(geo.matsumoto_jets());
    CHECK(geo.norm_lower(Mj) * geo.F() > 1e-2);
    // cross-check against the jet-free pipeline
    Tensor Mf = FdOracle(q).matsumoto(p);
    for (std::size_t i = 0; i < Mj.data().size(); ++i)
        CHECK(Mj.data()[i] == Catch::Approx(Mf.data()[i]).margin(1e-4 * (1 + Mj.max_abs())));
    // trace-free and y-kill
    CHECK(ladder_entry(geo, "trace_M") < 1e-12);
    CHECK(ladder_entry(geo, "ykill_M") < 1e-12);
}

TEST_CASE("trace-free parts are trace-free on every spec") {
    for (const char* name : {"euclidean2", "ellipsoid", "sphere-projective", "randers-const-beta",
                             "funk-disk", "quartic-minkowski"}) {
        MetricSpec spec = load(name);
        SampleSet s = sample(spec, 5, 23);
        for (const auto& p : s.points) {
            PointGeometry geo(spec, p, 6);
            CHECK(ladder_entry(geo, "trace_M") < 1e-11);
            CHECK(ladder_entry(geo, "trace_Mbar") < 1e-11);
            CHECK(ladder_entry(geo, "transport_Mbar") < 1e-7);
        }
    }
}

TEST_CASE("stretch tensor: antisymmetry, zero cases, and FD cross-checks") {
    // exact antisymmetry in the last two slots
    MetricSpec funk = load("funk-disk");
    EvalPoint pf{{0.1, 0.2}, {0.7, -0.5}};
    PointGeometry geo(funk, pf, 6);
    Tensor S = value_of(geo.stretch_jets());
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                for (int l = 0; l < 2; ++l) CHECK(S(i, j, k, l) == -S(i, j, l, k));

    for (const char* name : {"ellipsoid", "quartic-minkowski"}) {
        MetricSpec spec = load(name);
        SampleSet s = sample(spec, 4, 5);
        for (const auto& p : s.points) {
            PointGeometry g2(spec, p, 6);
            CHECK(value_of(g2.stretch_jets()).max_abs() <= 1e-12);
        }
    }

    // funk: contraction with y against a flow finite-difference of L
    {
        Tensor rate = detail::flow_covariant_rate(
            funk, geo, 1e-3, 5, [](PointGeometry& gg) { return value_of(gg.landsberg_jets()); });
        Tensor Sy = contract_last(S, pf.y);
        for (std::size_t i = 0; i < Sy.data().size(); ++i)
            CHECK(Sy.data()[i] ==
                  Catch::Approx(2.0 * rate.data()[i]).margin(1e-5 * (1 + Sy.max_abs())));
    }

    // funk: full coordinate-direction FD of L plus connection terms
    {
        FdOracle fd(funk);
        const int n = 2;
        auto Lfield = [&](const EvalPoint& q) { return fd.landsberg(q); };
        Tensor L0 = Lfield(pf);
        Tensor Nf = fd.nonlinear_connection(pf);
        Tensor Gjkf(3, n);
        for (int l = 0; l < n; ++l) {
            Tensor dNl = FdOracle::tensor_d1(
                [&](double s) {
                    EvalPoint q = pf;
                    q.y[l] += s;
                    return fd.nonlinear_connection(q);
                },
                0.04);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) Gjkf.at(i, j, l) = dNl(i, j);
        }
        Tensor covL(4, n);
        for (int l = 0; l < n; ++l) {
            Tensor dxl = FdOracle::tensor_d1(
                [&](double s) {
                    EvalPoint q = pf;
                    q.x[l] += s;
                    return Lfield(q);
                },
                0.04);
            Tensor dyl[2];
            for (int m = 0; m < n; ++m)
                dyl[m] = FdOracle::tensor_d1(
                    [&](double s) {
                        EvalPoint q = pf;
                        q.y[m] += s;
                        return Lfield(q);
                    },
                    0.04);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k) {
                        double acc = dxl(i, j, k);
                        for (int m = 0; m < n; ++m) acc -= Nf(m, l) * dyl[m](i, j, k);
                        for (int m = 0; m < n; ++m) {
                            acc -= L0(m, j, k) * Gjkf(m, i, l);
                            acc -= L0(i, m, k) * Gjkf(m, j, l);
                            acc -= L0(i, j, m) * Gjkf(m, k, l);
                        }
                        covL.at(i, j, k, l) = acc;
                    }
        }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l) {
                        double sfd = 2.0 * (covL(i, j, k, l) - covL(i, j, l, k));
                        CHECK(S(i, j, k, l) == Catch::Approx(sfd).margin(2e-3 * (1 + S.max_abs())));
                    }
    }
}

TEST_CASE("flat space has zero Riemann curvature") {
    MetricSpec eu = load("euclidean2");
    PointGeometry geo(eu, {{0.1, 0.7}, {0.4, 0.5}}, 6);
    CHECK(value_of(geo.riemann_jets()).max_abs() == 0.0);
    auto fit = geo.scalar_fit();
    CHECK(fit.K == 0.0);
    CHECK(fit.residual == 0.0);
}

TEST_CASE("sphere flag curvature is 1 and matches the sectional oracle") {
    MetricSpec sp = load("sphere-projective");
    FdOracle fd(sp);
    SampleSet s = sample(sp, 5, 77);
    Rng rng(123);
    for (const auto& p : s.points) {
        PointGeometry geo(sp, p, 6);
        for (int rep = 0; rep < 3; ++rep) {
            std::vector<double> u{rng.normal(), rng.normal()};
            double k = geo.flag_curvature(u);
            CHECK(k == Catch::Approx(1.0).margin(1e-8));
            CHECK(fd.sectional_curvature(p.x, p.y, u) == Catch::Approx(k).margin(1e-5));
        }
    }
}

TEST_CASE("ellipsoid flag curvature equals Riemannian sectional curvature") {
    MetricSpec el = load("ellipsoid");
    FdOracle fd(el);
    SampleSet s = sample(el, 4, 55);
    Rng rng(9);
    for (const auto& p : s.points) {
        PointGeometry geo(el, p, 6);
        std::vector<double> u{rng.normal(), rng.normal(), rng.normal()};
        double k = geo.flag_curvature(u);
        double sec = fd.sectional_curvature(p.x, p.y, u);
        CHECK(k == Catch::Approx(sec).margin(1e-5 * (1 + std::abs(sec))));
    }
}

TEST_CASE("funk metric has constant flag curvature -1/4") {
    MetricSpec funk = load("funk-disk");
    SampleSet s = sample(funk, 6, 41);
    for (const auto& p : s.points) {
        PointGeometry geo(funk, p, 6);
        auto fit = geo.scalar_fit();
        CHECK(fit.K == Catch::Approx(-0.25).margin(1e-9));
        CHECK(fit.residual <= 1e-10);
    }
}

TEST_CASE("degenerate flags are rejected") {
    MetricSpec eu = load("euclidean2");
    PointGeometry geo(eu, {{0, 0}, {1, 0}}, 6);
    std::vector<double> parallel{2.0, 0.0};
    CHECK_THROWS_AS(geo.flag_curvature(parallel), EvalError);
}

TEST_CASE("geodesics: straight lines in flat space, conserved speed everywhere") {
    MetricSpec eu = load("euclidean2");
    auto path = trace_geodesic(eu, std::vector<double>{0, 0}, std::vector<double>{1, 0}, 50, 0.01);
    REQUIRE(path.samples.size() == 51);
    for (const auto& s : path.samples) {
        CHECK(s.x[0] == Catch::Approx(s.t).margin(1e-12));
        CHECK(std::abs(s.x[1]) <= 1e-12);
    }
    CHECK(path.max_F_drift <= 1e-12);

    MetricSpec funk = load("funk-disk");
    auto fpath = trace_geodesic(funk, std::vector<double>{0.1, -0.1}, std::vector<double>{0.5, 0.4},
                                100, 0.01);
    CHECK(fpath.max_F_drift <= 1e-6);

    // conformally flat sphere: geodesics through the chart origin are straight
    MetricSpec sp = load("sphere-projective");
    auto spath = trace_geodesic(sp, std::vector<double>{0, 0}, std::vector<double>{0.3, 0.4}, 60, 0.01);
    for (const auto& s : spath.samples) CHECK(std::abs(s.x[0] * 0.4 - s.x[1] * 0.3) <= 1e-9);
    CHECK(spath.max_F_drift <= 1e-8);
}

TEST_CASE("path leaving the domain box is truncated and flagged") {
    MetricSpec funk = load("funk-disk");
    auto path = trace_geodesic(funk, std::vector<double>{0.3, 0.0}, std::vector<double>{1.0, 0.0}, 400,
                               0.01);
    CHECK(path.exited_domain);
    CHECK(path.samples.size() < 401);
    for (const auto& s : path.samples) CHECK(funk.domain.contains(s.x));
}

TEST_CASE("pipeline recomputation yields identical values") {
    MetricSpec funk = load("funk-disk");
    EvalPoint p{{0.2, -0.1}, {0.9, 0.7}};
    PointGeometry a(funk, p, 6), b(funk, p, 6);
    Tensor sa = value_of(a.stretch_jets()), sb = value_of(b.stretch_jets());
    for (std::size_t i = 0; i < sa.data().size(); ++i) CHECK(sa.data()[i] == sb.data()[i]);
    Tensor ra = value_of(a.riemann_jets()), rb = value_of(b.riemann_jets());
    for (std::size_t i = 0; i < ra.data().size(); ++i) CHECK(ra.data()[i] == rb.data()[i]);
}

TEST_CASE("non-positive F is reported") {
    std::string bad = R"({"name":"linear","dim":2,"kind":"expression",
        "domain":[[-1,1],[-1,1]],"expression":{"F":"y1"}})";
    MetricSpec spec = load_metric_text(bad, "inline");
    CHECK_THROWS_AS(PointGeometry(spec, {{0, 0}, {-1.0, 0.5}}, 2), EvalError);
}
