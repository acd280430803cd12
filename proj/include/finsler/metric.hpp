#pragma once

#include <Eigen/Dense>
#include <array>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "finsler/common.hpp"
#include "finsler/expr.hpp"
#include "finsler/jet.hpp"

namespace finsler {

enum class MetricKind { Riemannian, Randers, Expression };

inline const char* kind_name(MetricKind k) {
    switch (k) {
        case MetricKind::Riemannian: return "riemannian";
        case MetricKind::Randers: return "randers";
        case MetricKind::Expression: return "expression";
    }
    return "?";
}

struct DomainBox {
    std::vector<std::array<double, 2>> axes;

    bool contains(std::span<const double> x) const {
        for (std::size_t i = 0; i < axes.size(); ++i)
            if (x[i] < axes[i][0] || x[i] > axes[i][1]) return false;
        return true;
    }
};

struct RiemannianPayload {
    std::vector<AstPtr> a;  // n*n entries, row-major, x-dependent only
};

struct RandersPayload {
    RiemannianPayload alpha;
    std::vector<AstPtr> b;  // n entries, x-dependent only
};

struct ExpressionPayload {
    AstPtr F;
};

/// Declarative description of a Finsler metric on one chart.
struct MetricSpec {
    std::string name;
    int dim = 0;
    MetricKind kind = MetricKind::Expression;
    DomainBox domain;
    std::string notes;
    RiemannianPayload riemannian;
    RandersPayload randers;
    ExpressionPayload expression;
};

struct EvalPoint {
    std::vector<double> x, y;
};

struct SampleSet {
    std::vector<EvalPoint> points;
    std::uint64_t seed = 0;
    int requested = 0;
    int rejections = 0;
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
T quadratic_form(const RiemannianPayload& payload, const EvalEnv<T>& env) {
    const int n = env.dim;
    std::optional<T> acc;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            // symmetric part of the declared matrix
            T aij = evaluate<T>(*payload.a[i * n + j], env);
            T aji = evaluate<T>(*payload.a[j * n + i], env);
            T term = (aij + aji) * 0.5 * env.env[n + i] * env.env[n + j];
            if (acc)
                acc = *acc + term;
            else
                acc = term;
        }
    return *acc;
}

template <class T>
T one_form(const std::vector<AstPtr>& b, const EvalEnv<T>& env) {
    const int n = env.dim;
    std::optional<T> acc;
    for (int i = 0; i < n; ++i) {
        T term = evaluate<T>(*b[i], env) * env.env[n + i];
        if (acc)
            acc = *acc + term;
        else
            acc = term;
    }
    return *acc;
}

inline double scalar_sqrt_checked(double v, const char* what) {
    if (v <= 0.0) throw EvalError(std::string(what) + " is non-positive");
    return std::sqrt(v);
}

}  // namespace detail

inline void check_point_dim(const MetricSpec& spec, std::size_t nx, std::size_t ny) {
    if (static_cast<int>(nx) != spec.dim || static_cast<int>(ny) != spec.dim)
        throw ConfigError("evaluation point has dimension " + std::to_string(nx) + ";" +
                          std::to_string(ny) + " but metric '" + spec.name + "' has dim " +
                          std::to_string(spec.dim));
}

/// Jet of F at the point; the riemannian kind assembles sqrt(a_ij y^i y^j) in
/// jet arithmetic, randers adds the one-form.
inline Jet F_jet(const MetricSpec& spec, const EvalPoint& p, int order) {
    check_point_dim(spec, p.x.size(), p.y.size());
    std::vector<Jet> env = seed_variables(p.x, p.y, order);
    EvalEnv<Jet> e{env, spec.dim};
    Jet f;
    switch (spec.kind) {
        case MetricKind::Expression: f = evaluate<Jet>(*spec.expression.F, e); break;
        case MetricKind::Riemannian: f = detail::quadratic_form<Jet>(spec.riemannian, e).sqrt(); break;
        case MetricKind::Randers:
            f = detail::quadratic_form<Jet>(spec.randers.alpha, e).sqrt() + detail::one_form<Jet>(spec.randers.b, e);
            break;
    }
    if (f.value() <= 0.0)
        throw EvalError("F(x,y) = " + fmt_double(f.value(), 6) + " is not positive at the evaluation point");
    return f;
}

/// Jet of F^2; exact (no sqrt round trip) for the riemannian kind.
inline Jet F2_jet(const MetricSpec& spec, const EvalPoint& p, int order) {
    check_point_dim(spec, p.x.size(), p.y.size());
    if (spec.kind == MetricKind::Riemannian) {
        std::vector<Jet> env = seed_variables(p.x, p.y, order);
        EvalEnv<Jet> e{env, spec.dim};
        Jet a = detail::quadratic_form<Jet>(spec.riemannian, e);
        if (a.value() <= 0.0) throw EvalError("quadratic form is not positive at the evaluation point");
        return a;
    }
    Jet f = F_jet(spec, p, order);
    return f * f;
}

/// Plain floating-point evaluation of F (no jets); the finite-difference
/// oracle is built entirely on this path.
inline double F_value(const MetricSpec& spec, std::span<const double> x, std::span<const double> y) {
    check_point_dim(spec, x.size(), y.size());
    std::vector<double> env(x.begin(), x.end());
    env.insert(env.end(), y.begin(), y.end());
    EvalEnv<double> e{env, spec.dim};
    switch (spec.kind) {
        case MetricKind::Expression: return evaluate<double>(*spec.expression.F, e);
        case MetricKind::Riemannian:
            return detail::scalar_sqrt_checked(detail::quadratic_form<double>(spec.riemannian, e),
                                               "quadratic form");
        case MetricKind::Randers:
            return detail::scalar_sqrt_checked(detail::quadratic_form<double>(spec.randers.alpha, e),
                                               "quadratic form") +
                   detail::one_form<double>(spec.randers.b, e);
    }
    throw InternalError("unhandled metric kind");
}

inline double F2_value(const MetricSpec& spec, std::span<const double> x, std::span<const double> y) {
    if (spec.kind == MetricKind::Riemannian) {
        std::vector<double> env(x.begin(), x.end());
        env.insert(env.end(), y.begin(), y.end());
        return detail::quadratic_form<double>(spec.riemannian, {env, spec.dim});
    }
    double f = F_value(spec, x, y);
    return f * f;
}

/// Numeric fundamental tensor at (x, y) from an order-2 jet of F^2.
inline Eigen::MatrixXd metric_g_value(const MetricSpec& spec, const EvalPoint& p) {
    Jet f2 = F2_jet(spec, p, 2);
    const int n = spec.dim;
    Eigen::MatrixXd g(n, n);
    for (int i = 0; i < n; ++i) {
        Jet di = f2.deriv(n + i);
        for (int j = i; j < n; ++j) {
            g(i, j) = 0.5 * di.deriv(n + j).value();
            g(j, i) = g(i, j);
        }
    }
    return g;
}

struct ConvexityReport {
    double F = 0;
    double min_eigenvalue = 0;
    double max_eigenvalue = 0;
    bool positive_definite = false;
};

/// Smallest eigenvalue of g_ij = (1/2) d^2 F^2 / dy^i dy^j at the point.
inline ConvexityReport check_strong_convexity(const MetricSpec& spec, const EvalPoint& p) {
    ConvexityReport rep;
    rep.F = F_value(spec, p.x, p.y);
    Eigen::MatrixXd g = metric_g_value(spec, p);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
    rep.min_eigenvalue = es.eigenvalues().minCoeff();
    rep.max_eigenvalue = es.eigenvalues().maxCoeff();
    rep.positive_definite = rep.min_eigenvalue > 0;
    return rep;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Regularity floor for sampled points: beyond plain positive-definiteness,
/// directions where g is nearly degenerate (quartic metrics near coordinate
/// axes) are rejected to keep the identity suite well conditioned.
inline constexpr double kMinEigenvalueRatio = 1e-3;

inline bool point_is_regular(const MetricSpec& spec, const EvalPoint& p) {
    try {
        double f = F_value(spec, p.x, p.y);
        if (!(f > 0)) return false;
        ConvexityReport c = check_strong_convexity(spec, p);
        return c.positive_definite && c.min_eigenvalue > kMinEigenvalueRatio * c.max_eigenvalue;
    } catch (const EvalError&) {
        return false;
    }
}

/// Deterministic pseudorandom sample of regular points: x uniform in the
/// domain box, y uniform on the unit sphere scaled by a factor in [0.5, 2].
inline SampleSet sample(const MetricSpec& spec, int count, std::uint64_t seed) {
    if (count < 1) throw ConfigError("sample count must be at least 1");
    SampleSet set;
    set.seed = seed;
    set.requested = count;
    Rng rng(seed);
    int attempts = 0;
    while (static_cast<int>(set.points.size()) < count) {
        ++attempts;
        EvalPoint p;
        p.x.resize(spec.dim);
        p.y.resize(spec.dim);
        for (int i = 0; i < spec.dim; ++i) p.x[i] = rng.uniform(spec.domain.axes[i][0], spec.domain.axes[i][1]);
        double norm = 0;
        for (int i = 0; i < spec.dim; ++i) {
            p.y[i] = rng.normal();
            norm += p.y[i] * p.y[i];
        }
        norm = std::sqrt(norm);
        double scale = rng.uniform(0.5, 2.0);
        for (int i = 0; i < spec.dim; ++i) p.y[i] = p.y[i] / norm * scale;
        if (point_is_regular(spec, p)) {
            set.points.push_back(std::move(p));
        } else {
            set.rejections++;
            if (attempts >= 50 && set.rejections > 0.9 * attempts)
                throw EvalError("sampling aborted: rejection rate " + std::to_string(set.rejections) + "/" +
                                std::to_string(attempts) + " exceeds 90% for metric '" + spec.name + "'");
        }
    }
    return set;
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

namespace detail {

inline AstPtr parse_field(const std::string& text, const std::string& where, int dim, bool allow_y) {
    try {
        AstPtr ast = parse_expression(text);
        validate_variables(*ast, dim, allow_y);
        return ast;
    } catch (const ParseError& e) {
        throw ConfigError("in " + where + ": " + e.what());
    }
}

inline RiemannianPayload parse_riemannian(const nlohmann::json& j, const std::string& where, int dim) {
    if (!j.is_object() || !j.contains("a"))
        throw ConfigError(where + " must be an object with an n-by-n matrix 'a'");
    const auto& a = j.at("a");
    if (!a.is_array() || static_cast<int>(a.size()) != dim)
        throw ConfigError(where + ".a must have " + std::to_string(dim) + " rows");
    RiemannianPayload out;
    out.a.resize(static_cast<std::size_t>(dim) * dim);
    for (int i = 0; i < dim; ++i) {
        const auto& row = a.at(i);
        if (!row.is_array() || static_cast<int>(row.size()) != dim)
            throw ConfigError(where + ".a[" + std::to_string(i) + "] must have " + std::to_string(dim) +
                              " entries");
        for (int jcol = 0; jcol < dim; ++jcol) {
            std::string key = where + ".a[" + std::to_string(i) + "][" + std::to_string(jcol) + "]";
            if (!row.at(jcol).is_string()) throw ConfigError(key + " must be an expression string");
            out.a[i * dim + jcol] = parse_field(row.at(jcol).get<std::string>(), key, dim, false);
        }
    }
    return out;
}

/// alpha-norm of the randers one-form at x; must stay below 1.
inline double randers_beta_norm(const RandersPayload& payload, int dim, std::span<const double> x) {
    std::vector<double> env(x.begin(), x.end());
    env.resize(2 * dim, 0.0);
    EvalEnv<double> e{env, dim};
    Eigen::MatrixXd a(dim, dim);
    Eigen::VectorXd b(dim);
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) {
            double aij = evaluate<double>(*payload.alpha.a[i * dim + j], e);
            double aji = evaluate<double>(*payload.alpha.a[j * dim + i], e);
            a(i, j) = 0.5 * (aij + aji);
        }
        b(i) = evaluate<double>(*payload.b[i], e);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success)
        throw ConfigError("randers alpha matrix is not positive definite inside the domain box");
    return std::sqrt(b.dot(llt.solve(b)));
}

}  // namespace detail

inline MetricSpec load_metric_text(const std::string& text, const std::string& origin) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        // nlohmann reports line and column in the message
        throw ConfigError(origin + ": " + e.what());
    }
    try {
        MetricSpec spec;
        if (!j.contains("name") || !j.at("name").is_string())
            throw ConfigError("missing string key 'name'");
        spec.name = j.at("name").get<std::string>();
        if (!j.contains("dim") || !j.at("dim").is_number_integer())
            throw ConfigError("missing integer key 'dim'");
        spec.dim = j.at("dim").get<int>();
        if (spec.dim < 2) throw ConfigError("dim must be at least 2");
        std::string kind = j.value("kind", "");
        if (kind == "riemannian")
            spec.kind = MetricKind::Riemannian;
        else if (kind == "randers")
            spec.kind = MetricKind::Randers;
        else if (kind == "expression")
            spec.kind = MetricKind::Expression;
        else
            throw ConfigError("kind must be one of riemannian|randers|expression, got '" + kind + "'");

        if (!j.contains("domain") || !j.at("domain").is_array() ||
            static_cast<int>(j.at("domain").size()) != spec.dim)
            throw ConfigError("'domain' must be an array of " + std::to_string(spec.dim) + " [min,max] pairs");
        for (const auto& axis : j.at("domain")) {
            if (!axis.is_array() || axis.size() != 2) throw ConfigError("each domain axis must be [min,max]");
            double lo = axis.at(0).get<double>(), hi = axis.at(1).get<double>();
            if (!(lo < hi)) throw ConfigError("domain axis must satisfy min < max");
            spec.domain.axes.push_back({lo, hi});
        }
        spec.notes = j.value("notes", "");

        switch (spec.kind) {
            case MetricKind::Expression: {
                if (!j.contains("expression") || !j.at("expression").contains("F"))
                    throw ConfigError("expression kind needs key expression.F");
                spec.expression.F = detail::parse_field(j.at("expression").at("F").get<std::string>(),
                                                        "expression.F", spec.dim, true);
                break;
            }
            case MetricKind::Riemannian:
                if (!j.contains("riemannian")) throw ConfigError("riemannian kind needs key 'riemannian'");
                spec.riemannian = detail::parse_riemannian(j.at("riemannian"), "riemannian", spec.dim);
                break;
            case MetricKind::Randers: {
                if (!j.contains("randers") || !j.at("randers").contains("alpha") ||
                    !j.at("randers").contains("b"))
                    throw ConfigError("randers kind needs keys randers.alpha and randers.b");
                spec.randers.alpha =
                    detail::parse_riemannian(j.at("randers").at("alpha"), "randers.alpha", spec.dim);
                const auto& b = j.at("randers").at("b");
                if (!b.is_array() || static_cast<int>(b.size()) != spec.dim)
                    throw ConfigError("randers.b must have " + std::to_string(spec.dim) + " entries");
                for (int i = 0; i < spec.dim; ++i)
                    spec.randers.b.push_back(detail::parse_field(
                        b.at(i).get<std::string>(), "randers.b[" + std::to_string(i) + "]", spec.dim, false));
                // ||beta||_alpha < 1 across the domain box (corners plus a
                // fixed random sample)
                std::vector<std::vector<double>> probes;
                const int corners = 1 << spec.dim;
                for (int mask = 0; mask < corners; ++mask) {
                    std::vector<double> x(spec.dim);
                    for (int i = 0; i < spec.dim; ++i)
                        x[i] = spec.domain.axes[i][(mask >> i) & 1];
                    probes.push_back(std::move(x));
                }
                Rng rng(20240902);
                for (int s = 0; s < 32; ++s) {
                    std::vector<double> x(spec.dim);
                    for (int i = 0; i < spec.dim; ++i)
                        x[i] = rng.uniform(spec.domain.axes[i][0], spec.domain.axes[i][1]);
                    probes.push_back(std::move(x));
                }
                for (const auto& x : probes) {
                    double norm = detail::randers_beta_norm(spec.randers, spec.dim, x);
                    if (norm >= 1.0)
                        throw ConfigError("randers one-form violates the norm bound: ||beta||_alpha = " +
                                          fmt_double(norm, 6) + " >= 1 at a domain point");
                }
                break;
            }
        }
        return spec;
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
}

inline MetricSpec load_metric_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open metric file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_metric_text(ss.str(), path);
}

// ---------------------------------------------------------------------------
// Random regular metrics (adversarial inputs for the identity suite)
// ---------------------------------------------------------------------------

/// A randomly perturbed metric of the form
///   F = sqrt(Q(x,y)) + B(x,y) + q(x) * (sum_i y_i^4)^(1/4),
/// with Q a mildly x-dependent positive quadratic form, B a small one-form
/// and q a small positive factor. Regular on the returned domain box and
/// genuinely non-Riemannian.
inline MetricSpec make_random_regular_metric(int dim, std::uint64_t seed) {
    Rng rng(seed);
    auto coeff = [&](double lo, double hi) {
        double v = rng.uniform(lo, hi);
        return fmt_double(std::round(v * 1e4) / 1e4, 10);
    };
    auto field = [&](double amp) {
        // c0 + c1*x_a + c2*x_a*x_b
        int a = rng.uniform_int(1, dim), b = rng.uniform_int(1, dim);
        std::string s = "(" + coeff(-amp, amp);
        s += " + " + coeff(-amp, amp) + "*x" + std::to_string(a);
        s += " + " + coeff(-amp, amp) + "*x" + std::to_string(a) + "*x" + std::to_string(b) + ")";
        return s;
    };
    std::string Q;
    for (int i = 1; i <= dim; ++i) {
        if (!Q.empty()) Q += " + ";
        Q += "(1 + " + field(0.2) + ")*y" + std::to_string(i) + "^2";
    }
    for (int i = 1; i <= dim; ++i)
        for (int j = i + 1; j <= dim; ++j)
            Q += " + 2*" + field(0.1) + "*y" + std::to_string(i) + "*y" + std::to_string(j);
    std::string B;
    for (int i = 1; i <= dim; ++i) {
        if (!B.empty()) B += " + ";
        B += field(0.12) + "*y" + std::to_string(i);
    }
    std::string quartic;
    for (int i = 1; i <= dim; ++i) {
        if (!quartic.empty()) quartic += " + ";
        quartic += "y" + std::to_string(i) + "^4";
    }
    std::string q = "(" + coeff(0.05, 0.15) + " + " + coeff(-0.04, 0.04) + "*x1^2)";
    std::string F = "sqrt(" + Q + ") + " + B + " + " + q + "*(" + quartic + ")^(1/4)";

    MetricSpec spec;
    spec.name = "random-" + std::to_string(seed);
    spec.dim = dim;
    spec.kind = MetricKind::Expression;
    for (int i = 0; i < dim; ++i) spec.domain.axes.push_back({-0.6, 0.6});
    spec.notes = "randomly generated regular metric";
    spec.expression.F = parse_expression(F);
    validate_variables(*spec.expression.F, dim, true);
    return spec;
}

}  // namespace finsler
