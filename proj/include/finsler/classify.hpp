#pragma once

#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "finsler/calculus.hpp"
#include "finsler/metric.hpp"

namespace finsler {

struct Thresholds {
    double verdict = 1e-7;     // scale-free residual bound for class verdicts
    double degenerate = 1e-6;  // ||M||F floor below which the lambda fit is indeterminate
};

/// Pointwise recovery of the generalized P-reducibility data: lambda from the
/// least-squares fit of pbar against the Matsumoto torsion, a_i from the
/// trace relation. When ||M||F is below the degeneracy floor (every
/// C-reducible point), lambda is indeterminate and a_i is reported with the
/// lambda = 0 convention.
struct GpFit {
    bool lambda_defined = false;
    double lambda = 0;
    std::vector<double> a;
    double residual = 0;  // ||Mbar - lambda* M|| F^2  (||Mbar|| F^2 when degenerate)
    double a_y = 0;       // scale-free |a_i y^i|, vanishes by construction
    double MF = 0;        // ||M|| F
};

inline GpFit fit_gp_point(PointGeometry& geo, const Thresholds& thr) {
    GpFit fit;
    const int n = geo.dim();
    const double F = geo.F();
    Tensor M = value_of(geo.matsumoto_jets());
    Tensor Mbar = value_of(geo.pbar_jets());
    Tensor I = value_of(geo.mean_cartan_jets());
    Tensor J = value_of(geo.mean_landsberg_jets());
    const Eigen::MatrixXd& gi = geo.ginv_mat();
    fit.MF = g_norm(M, gi) * F;
    if (fit.MF > thr.degenerate) {
        fit.lambda_defined = true;
        fit.lambda = g_dot(Mbar, M, gi) / g_dot(M, M, gi);
    }
    double lambda = fit.lambda_defined ? fit.lambda : 0.0;
    fit.residual = g_norm(Mbar - M * lambda, gi) * F * F;
    fit.a.resize(n);
    double ay = 0, anorm2 = 0;
    Tensor a_t(1, n);
    for (int i = 0; i < n; ++i) {
        fit.a[i] = (J(i) - lambda * I(i)) / (n + 1);
        a_t.at(i) = fit.a[i];
        ay += fit.a[i] * geo.point().y[i];
    }
    anorm2 = g_norm(a_t, gi);
    fit.a_y = std::abs(ay) / F / (1.0 + anorm2);
    return fit;
}

struct PointClassification {
    EvalPoint p;
    double F = 0;
    // scale-free norms, already weighted by the documented F powers
    double C = 0, M = 0, Mbar = 0, L = 0, J = 0, Sigma = 0, B = 0;
    ScalarCurvatureFit fit;
    GpFit gp;
    bool failed = false;
    std::string error;
};

struct ClassificationReport {
    std::string spec_name;
    std::uint64_t seed = 0;
    int samples = 0;
    int order = 6;
    Thresholds thresholds;
    std::vector<PointClassification> points;
    int failures = 0;
    /// (class name, verdict, worst residual) in a fixed order.
    std::vector<std::tuple<std::string, bool, double>> verdicts;
    std::vector<std::string> implication_violations;

    bool verdict(const std::string& name) const {
        for (const auto& [n, v, r] : verdicts)
            if (n == name) return v;
        throw InternalError("unknown class name " + name);
    }
    double worst(const std::string& name) const {
        for (const auto& [n, v, r] : verdicts)
            if (n == name) return r;
        throw InternalError("unknown class name " + name);
    }
};

/// Sample-based classification: every verdict means "the scale-free residual
/// stays below the threshold at all sampled points", with the worst residual
/// always reported next to it. Points are independent; `threads` shards them
/// with slot-indexed output, so the report does not depend on the thread
/// count.
inline ClassificationReport classify(const MetricSpec& spec, const SampleSet& samples,
                                     Thresholds thr = {}, int order = 6, int threads = 1) {
    ClassificationReport rep;
    rep.spec_name = spec.name;
    rep.seed = samples.seed;
    rep.samples = static_cast<int>(samples.points.size());
    rep.order = order;
    rep.thresholds = thr;
    rep.points.resize(samples.points.size());

    parallel_for(rep.samples, threads, [&](int idx) {
        PointClassification& pc = rep.points[idx];
        pc.p = samples.points[idx];
        try {
            PointGeometry geo(spec, pc.p, order);
            const double F = geo.F();
            pc.F = F;
            pc.C = geo.norm_lower(value_of(geo.cartan_jets())) * F;
            pc.M = geo.norm_lower(value_of(geo.matsumoto_jets())) * F;
            pc.Mbar = geo.norm_lower(value_of(geo.pbar_jets())) * F * F;
            pc.L = geo.norm_lower(value_of(geo.landsberg_jets())) * F * F;
            pc.J = geo.norm_lower(value_of(geo.mean_landsberg_jets())) * F * F;
            pc.Sigma = geo.norm_lower(value_of(geo.stretch_jets())) * F * F * F;
            pc.B = geo.norm_lower(geo.lower_first(value_of(geo.berwald_curvature_jets()))) * F;
            pc.fit = geo.scalar_fit();
            pc.gp = fit_gp_point(geo, thr);
        } catch (const Error& e) {
            pc.failed = true;
            pc.error = e.what();
        }
    });

    double wC = 0, wM = 0, wMbar = 0, wL = 0, wJ = 0, wSigma = 0, wB = 0, wFit = 0, wGp = 0;
    for (const auto& pc : rep.points) {
        if (pc.failed) {
            rep.failures++;
            continue;
        }
        wC = std::max(wC, pc.C);
        wM = std::max(wM, pc.M);
        wMbar = std::max(wMbar, pc.Mbar);
        wL = std::max(wL, pc.L);
        wJ = std::max(wJ, pc.J);
        wSigma = std::max(wSigma, pc.Sigma);
        wB = std::max(wB, pc.B);
        wFit = std::max(wFit, pc.fit.residual);
        wGp = std::max(wGp, pc.gp.residual);
    }
    if (rep.failures > 0.2 * rep.samples)
        throw EvalError("classification aborted: " + std::to_string(rep.failures) + "/" +
                        std::to_string(rep.samples) + " points failed to evaluate");

    const double tau = thr.verdict;
    rep.verdicts = {
        {"riemannian", wC <= tau, wC},
        {"c_reducible", wM <= tau, wM},
        {"p_reducible", wMbar <= tau, wMbar},
        {"gen_p_reducible", wGp <= tau, wGp},
        {"berwald", wB <= tau, wB},
        {"landsberg", wL <= tau, wL},
        {"weakly_landsberg", wJ <= tau, wJ},
        {"stretch", wSigma <= tau, wSigma},
        {"scalar_flag_curvature", wFit <= tau, wFit},
    };

    auto imply = [&](const char* from, const char* to) {
        if (rep.verdict(from) && !rep.verdict(to))
            rep.implication_violations.push_back(std::string(from) + " holds but " + to + " does not");
    };
    imply("riemannian", "c_reducible");
    imply("c_reducible", "p_reducible");
    imply("p_reducible", "gen_p_reducible");
    imply("berwald", "landsberg");
    imply("landsberg", "weakly_landsberg");
    imply("landsberg", "stretch");
    return rep;
}

// ---------------------------------------------------------------------------
// Theorem-style condition bookkeeping
// ---------------------------------------------------------------------------

struct Theorem1Point {
    EvalPoint p;
    bool lambda_defined = false;
    double lambda = 0;
    double lambda_prime = 0;  // flow derivative of the fitted lambda
    double K = 0;
    double F2 = 0;
    std::optional<double> v;  // lambda' + lambda^2 + K F^2 when lambda is defined
    double MF = 0;
    double product = 0;  // |v| * ||M|| F (||M|| F when v is undefined)
    std::string branch;
};

struct Theorem1Report {
    std::string spec_name;
    bool evaluable = false;
    std::string note;
    int nondegenerate_points = 0;
    std::vector<Theorem1Point> points;
};

/// Evaluates v = lambda' + lambda^2 + K F^2 pointwise. lambda is a fitted
/// scalar field with no jet, so lambda' is obtained by central differencing
/// the fit along the geodesic flow.
inline Theorem1Report theorem1_condition(const MetricSpec& spec, const SampleSet& samples,
                                         Thresholds thr = {}, int order = 6, double step = 1e-3) {
    Theorem1Report rep;
    rep.spec_name = spec.name;
    for (const auto& pt : samples.points) {
        Theorem1Point row;
        row.p = pt;
        PointGeometry geo(spec, pt, order);
        GpFit fit = fit_gp_point(geo, thr);
        auto sf = geo.scalar_fit();
        row.K = sf.K;
        row.F2 = geo.F2();
        row.MF = fit.MF;
        row.lambda_defined = fit.lambda_defined;
        if (fit.lambda_defined) {
            rep.nondegenerate_points++;
            row.lambda = fit.lambda;
            auto lambda_at = [&](double h) {
                EvalPoint q = flow_step(spec, pt, h);
                PointGeometry adv(spec, q, 4);
                GpFit f = fit_gp_point(adv, thr);
                if (!f.lambda_defined)
                    throw EvalError("lambda fit degenerates along the flow near a sample point");
                return f.lambda;
            };
            row.lambda_prime = (lambda_at(step) - lambda_at(-step)) / (2 * step);
            row.v = row.lambda_prime + fit.lambda * fit.lambda + sf.K * row.F2;
            row.product = std::abs(*row.v) * fit.MF;
            row.branch = "lambda fit non-degenerate";
        } else {
            row.product = fit.MF;  // M vanishes, so the product vanishes regardless of v
            row.branch = "Matsumoto torsion vanishes; lambda indeterminate";
        }
        rep.points.push_back(std::move(row));
    }
    if (rep.nondegenerate_points < 5) {
        rep.evaluable = false;
        rep.note = "fewer than 5 points with non-degenerate Matsumoto torsion; condition not evaluable";
    } else {
        rep.evaluable = true;
        rep.note = "";
    }
    return rep;
}

}  // namespace finsler
