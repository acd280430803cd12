#include <catch2/catch_amalgamated.hpp>

#include "finsler/classify.hpp"
#include "finsler/report.hpp"

using namespace finsler;

namespace {

MetricSpec load(const std::string& name) {
    return load_metric_file(std::string(FINSLER_METRICS_DIR) + "/" + name + ".json");
}

ClassificationReport run(const std::string& name, int count = 15, std::uint64_t seed = 11) {
    MetricSpec spec = load(name);
    return classify(spec, sample(spec, count, seed));
}

}  // namespace

TEST_CASE("flat space belongs to every class") {
    auto rep = run("euclidean2");
    for (const char* cls : {"riemannian", "c_reducible", "p_reducible", "gen_p_reducible", "berwald",
                            "landsberg", "weakly_landsberg", "stretch", "scalar_flag_curvature"})
        CHECK(rep.verdict(cls));
    CHECK(rep.implication_violations.empty());
}

TEST_CASE("funk-disk: Randers, curved, not Landsberg") {
    auto rep = run("funk-disk");
    CHECK_FALSE(rep.verdict("riemannian"));
    CHECK(rep.verdict("c_reducible"));
    CHECK(rep.verdict("p_reducible"));
    CHECK(rep.verdict("gen_p_reducible"));
    CHECK_FALSE(rep.verdict("berwald"));
    CHECK_FALSE(rep.verdict("landsberg"));
    CHECK_FALSE(rep.verdict("weakly_landsberg"));
    CHECK_FALSE(rep.verdict("stretch"));
    CHECK(rep.verdict("scalar_flag_curvature"));
    CHECK(rep.implication_violations.empty());
}

TEST_CASE("quartic norm: Berwald but not C-reducible") {
    auto rep = run("quartic-minkowski");
    CHECK_FALSE(rep.verdict("riemannian"));
    CHECK_FALSE(rep.verdict("c_reducible"));
    CHECK(rep.verdict("p_reducible"));
    CHECK(rep.verdict("gen_p_reducible"));
    CHECK(rep.verdict("berwald"));
    CHECK(rep.verdict("landsberg"));
    CHECK(rep.verdict("stretch"));
    CHECK(rep.verdict("scalar_flag_curvature"));
    CHECK(rep.worst("c_reducible") > 1e-2);
    CHECK(rep.implication_violations.empty());
}

TEST_CASE("anisotropic Riemannian metric is not of scalar flag curvature") {
    auto rep = run("ellipsoid");
    CHECK(rep.verdict("riemannian"));
    CHECK(rep.verdict("berwald"));
    CHECK_FALSE(rep.verdict("scalar_flag_curvature"));
    CHECK(rep.worst("scalar_flag_curvature") > 1e-3);
}

TEST_CASE("verdicts are deterministic given (spec, seed, count)") {
    auto a = run("funk-disk", 10, 5);
    auto b = run("funk-disk", 10, 5);
    CHECK(classification_json(a).dump() == classification_json(b).dump());
}

TEST_CASE("classification aborts when too many points fail") {
    // a metric positive only on a half-space of directions: most samples die
    std::string text = R"({"name":"halfspace","dim":2,"kind":"expression",
        "domain":[[-1,1],[-1,1]],"expression":{"F":"y1"}})";
    MetricSpec spec = load_metric_text(text, "inline");
    SampleSet s;
    s.seed = 0;
    Rng rng(3);
    for (int i = 0; i < 10; ++i)
        s.points.push_back({{rng.uniform(-1, 1), rng.uniform(-1, 1)}, {-1.0, rng.uniform(-1, 1)}});
    CHECK_THROWS_AS(classify(spec, s), EvalError);
}

TEST_CASE("gp fit: degenerate branch on C-reducible metrics") {
    MetricSpec funk = load("funk-disk");
    SampleSet s = sample(funk, 8, 17);
    for (const auto& p : s.points) {
        PointGeometry geo(funk, p, 6);
        GpFit fit = fit_gp_point(geo, {});
        CHECK_FALSE(fit.lambda_defined);
        CHECK(fit.residual <= 1e-10);
        CHECK(fit.a_y <= 1e-9);
    }
}

TEST_CASE("gp fit on flat space recovers zero data") {
    MetricSpec eu = load("euclidean2");
    PointGeometry geo(eu, {{0.3, 0.3}, {0.8, -0.2}}, 6);
    GpFit fit = fit_gp_point(geo, {});
    CHECK_FALSE(fit.lambda_defined);  // M vanishes
    for (double ai : fit.a) CHECK(std::abs(ai) <= 1e-14);
    CHECK(fit.residual <= 1e-14);
}

TEST_CASE("gp fit on the quartic: lambda* = 0, a = 0, zero defect") {
    MetricSpec q = load("quartic-minkowski");
    SampleSet s = sample(q, 8, 29);
    for (const auto& p : s.points) {
        PointGeometry geo(q, p, 6);
        GpFit fit = fit_gp_point(geo, {});
        REQUIRE(fit.lambda_defined);
        CHECK(std::abs(fit.lambda) <= 1e-12);
        for (double ai : fit.a) CHECK(std::abs(ai) <= 1e-12);
        CHECK(fit.residual <= 1e-12);
        CHECK(fit.a_y <= 1e-9);
    }
}

TEST_CASE("lambda* is the least-squares minimiser") {
    // need nonzero M: use a random 3D metric
    MetricSpec spec = make_random_regular_metric(3, 4242);
    SampleSet s = sample(spec, 4, 4242);
    for (const auto& p : s.points) {
        PointGeometry geo(spec, p, 6);
        GpFit fit = fit_gp_point(geo, {});
        REQUIRE(fit.lambda_defined);
        Tensor M = value_of(geo.matsumoto_jets());
        Tensor Mbar = value_of(geo.pbar_jets());
        const auto& gi = geo.ginv_mat();
        double best = g_norm(Mbar - M * fit.lambda, gi);
        for (double eps : {1e-3, -1e-3, 0.05, -0.05})
            CHECK(g_norm(Mbar - M * (fit.lambda + eps), gi) > best);
        CHECK(fit.a_y <= 1e-9);
    }
}

TEST_CASE("lambda* is invariant under common positive rescaling, residual scales linearly") {
    MetricSpec spec = make_random_regular_metric(3, 515);
    SampleSet s = sample(spec, 3, 515);
    for (const auto& p : s.points) {
        PointGeometry geo(spec, p, 6);
        Tensor M = value_of(geo.matsumoto_jets());
        Tensor Mbar = value_of(geo.pbar_jets());
        const auto& gi = geo.ginv_mat();
        double lambda = g_dot(Mbar, M, gi) / g_dot(M, M, gi);
        double phi = 3.7;
        double lambda_scaled = g_dot(Mbar * phi, M * phi, gi) / g_dot(M * phi, M * phi, gi);
        CHECK(lambda_scaled == Catch::Approx(lambda).epsilon(1e-12));
        double r = g_norm(Mbar - M * lambda, gi);
        double r_scaled = g_norm(Mbar * phi - (M * phi) * lambda_scaled, gi);
        CHECK(r_scaled == Catch::Approx(phi * r).epsilon(1e-10));
    }
}

TEST_CASE("theorem-1 condition bookkeeping") {
    // funk: M vanishes everywhere, so the condition is not evaluable but the
    // product vanishes regardless
    {
        MetricSpec funk = load("funk-disk");
        SampleSet s = sample(funk, 8, 3);
        auto rep = theorem1_condition(funk, s);
        CHECK_FALSE(rep.evaluable);
        CHECK(rep.note.find("non-degenerate") != std::string::npos);
        for (const auto& row : rep.points) {
            CHECK_FALSE(row.lambda_defined);
            CHECK(row.product <= 1e-10);
        }
    }
    // flat space: K = 0 and lambda indeterminate, product 0
    {
        MetricSpec eu = load("euclidean2");
        SampleSet s = sample(eu, 6, 3);
        auto rep = theorem1_condition(eu, s);
        CHECK_FALSE(rep.evaluable);
        for (const auto& row : rep.points) {
            CHECK(row.K == 0.0);
            CHECK(row.product <= 1e-12);
        }
    }
    // quartic: lambda* = 0, K = 0, so v = 0 while M persists; the theorem's
    // hypothesis v != 0 fails and the nonvanishing torsion is consistent
    {
        MetricSpec q = load("quartic-minkowski");
        SampleSet s = sample(q, 8, 3);
        auto rep = theorem1_condition(q, s);
        CHECK(rep.evaluable);
        CHECK(rep.nondegenerate_points >= 5);
        for (const auto& row : rep.points) {
            if (!row.lambda_defined) continue;
            CHECK(std::abs(*row.v) <= 1e-6);
            CHECK(row.product <= 1e-5);
            CHECK(row.MF > 1e-2);
        }
    }
}
