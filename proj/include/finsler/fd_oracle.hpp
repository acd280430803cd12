#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "finsler/calculus.hpp"
#include "finsler/metric.hpp"
#include "finsler/tensor.hpp"

namespace finsler {

struct FdConfig {
    double hy = 0.02;  // fiber step
    double hx = 0.02;  // position step
};

/// Finite-difference recomputation of the tensor pipeline. Shares nothing
/// with the jet path except the metric definition itself: every quantity is
/// built from central differences of plain floating-point evaluations of F^2,
/// Richardson-extrapolated once.
class FdOracle {
public:
    explicit FdOracle(const MetricSpec& spec, FdConfig cfg = {}) : spec_(&spec), cfg_(cfg), n_(spec.dim) {}

    double F2(std::span<const double> x, std::span<const double> y) const { return F2_value(*spec_, x, y); }

    /// Fiber steps follow the length of y: the metric is 1-homogeneous, so
    /// its feature scale along the fiber is proportional to |y|.
    double ystep(const EvalPoint& p) const {
        double norm = 0;
        for (double v : p.y) norm += v * v;
        norm = std::sqrt(norm);
        return cfg_.hy * std::clamp(norm, 0.25, 4.0);
    }

    // -- primitives -----------------------------------------------------------

    Tensor g(const EvalPoint& p) const {
        Tensor t(2, n_);
        const double h = ystep(p);
        for (int i = 0; i < n_; ++i) {
            for (int j = i; j < n_; ++j) {
                double v;
                if (i == j) {
                    v = 0.5 * d2([&](double s) {
                        EvalPoint q = p;
                        q.y[i] += s;
                        return F2(q.x, q.y);
                    }, h);
                } else {
                    v = 0.5 * d11(
                            [&](double s, double u) {
                                EvalPoint q = p;
                                q.y[i] += s;
                                q.y[j] += u;
                                return F2(q.x, q.y);
                            },
                            h);
                }
                t.at(i, j) = v;
                t.at(j, i) = v;
            }
        }
        return t;
    }

    Eigen::MatrixXd g_mat(const EvalPoint& p) const {
        Tensor t = g(p);
        Eigen::MatrixXd m(n_, n_);
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) m(i, j) = t(i, j);
        return m;
    }

    Tensor h(const EvalPoint& p) const {
        Tensor gm = g(p);
        double f2 = F2(p.x, p.y);
        Tensor t(2, n_);
        std::vector<double> ylow(n_, 0.0);
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) ylow[i] += gm(i, j) * p.y[j];
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) t.at(i, j) = gm(i, j) - ylow[i] * ylow[j] / f2;
        return t;
    }

    Tensor cartan(const EvalPoint& p) const {
        Tensor t(3, n_);
        const double h = 2 * ystep(p);
        for (int k = 0; k < n_; ++k) {
            Tensor dk = tensor_d1(
                [&](double s) {
                    EvalPoint q = p;
                    q.y[k] += s;
                    return g(q);
                },
                h);
            for (int i = 0; i < n_; ++i)
                for (int j = 0; j < n_; ++j) t.at(i, j, k) = 0.5 * dk(i, j);
        }
        return t;
    }

    Tensor mean_cartan(const EvalPoint& p) const {
        Eigen::MatrixXd gi = g_mat(p).inverse();
        return trace_slots(cartan(p), gi, 1, 2);
    }

    /// Spray coefficients G^i (upper index).
    Tensor spray(const EvalPoint& p) const {
        Eigen::MatrixXd gm = g_mat(p);
        Eigen::VectorXd rhs(n_);
        for (int l = 0; l < n_; ++l) {
            double acc = 0;
            for (int k = 0; k < n_; ++k) {
                acc += d11(
                           [&](double s, double u) {
                               EvalPoint q = p;
                               q.x[k] += s;
                               q.y[l] += u;
                               return F2(q.x, q.y);
                           },
                           cfg_.hx) *
                       p.y[k];
            }
            acc -= d1(
                [&](double s) {
                    EvalPoint q = p;
                    q.x[l] += s;
                    return F2(q.x, q.y);
                },
                cfg_.hx);
            rhs(l) = acc;
        }
        Eigen::VectorXd G = gm.partialPivLu().solve(rhs) * 0.25;
        Tensor t(1, n_);
        t.variance() = "u";
        for (int i = 0; i < n_; ++i) t.at(i) = G(i);
        return t;
    }

    /// N^i_j (first slot upper).
    Tensor nonlinear_connection(const EvalPoint& p) const {
        Tensor t(2, n_);
        t.variance() = "ul";
        const double h = 2 * ystep(p);
        for (int j = 0; j < n_; ++j) {
            Tensor dj = tensor_d1(
                [&](double s) {
                    EvalPoint q = p;
                    q.y[j] += s;
                    return spray(q);
                },
                h);
            for (int i = 0; i < n_; ++i) t.at(i, j) = dj(i);
        }
        return t;
    }

    /// Geodesic transport T_{I|l} y^l of an all-lower tensor field given as a
    /// callback, using the finite-difference spray and connection.
    Tensor transport(const std::function<Tensor(const EvalPoint&)>& field, const EvalPoint& p) const {
        Tensor T = field(p);
        const int rank = T.rank();
        Tensor G = spray(p);
        Tensor N = nonlinear_connection(p);
        Tensor out(rank, n_);
        // flow part: sum_l y^l dT/dx^l - 2 sum_m G^m dT/dy^m
        for (int l = 0; l < n_; ++l) {
            Tensor dx = tensor_d1(
                [&](double s) {
                    EvalPoint q = p;
                    q.x[l] += s;
                    return field(q);
                },
                2 * cfg_.hx);
            for (std::size_t f = 0; f < out.data().size(); ++f) out.data()[f] += p.y[l] * dx.data()[f];
        }
        for (int m = 0; m < n_; ++m) {
            Tensor dy = tensor_d1(
                [&](double s) {
                    EvalPoint q = p;
                    q.y[m] += s;
                    return field(q);
                },
                2 * ystep(p));
            for (std::size_t f = 0; f < out.data().size(); ++f) out.data()[f] -= 2.0 * G(m) * dy.data()[f];
        }
        // connection corrections
        std::vector<int> idx(rank, 0);
        for (std::size_t f = 0; f < out.data().size(); ++f) {
            std::size_t rem = f;
            for (int s = rank - 1; s >= 0; --s) {
                idx[s] = static_cast<int>(rem % n_);
                rem /= n_;
            }
            double corr = 0;
            for (int a = 0; a < rank; ++a) {
                std::size_t stride = 1;
                for (int s = rank - 1; s > a; --s) stride *= n_;
                std::size_t base = f - static_cast<std::size_t>(idx[a]) * stride;
                for (int m = 0; m < n_; ++m) corr += T.data()[base + m * stride] * N(m, idx[a]);
            }
            out.data()[f] -= corr;
        }
        return out;
    }

    Tensor landsberg(const EvalPoint& p) const {
        return transport([this](const EvalPoint& q) { return cartan(q); }, p);
    }

    Tensor mean_landsberg(const EvalPoint& p) const {
        Eigen::MatrixXd gi = g_mat(p).inverse();
        return trace_slots(landsberg(p), gi, 1, 2);
    }

    Tensor matsumoto(const EvalPoint& p) const {
        return trace_free_part(cartan(p), mean_cartan(p), h(p));
    }

    Tensor pbar(const EvalPoint& p) const {
        return trace_free_part(landsberg(p), mean_landsberg(p), h(p));
    }

    Tensor trace_free_part(const Tensor& T3, const Tensor& t1, const Tensor& hm) const {
        Tensor out(3, n_);
        const double c = 1.0 / (n_ + 1);
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j)
                for (int k = 0; k < n_; ++k)
                    out.at(i, j, k) =
                        T3(i, j, k) - c * (t1(i) * hm(j, k) + t1(j) * hm(i, k) + t1(k) * hm(i, j));
        return out;
    }

    // -- Christoffel route (independent check for Riemannian metrics) ------------

    /// Underlying Riemannian matrix a_ij(x): evaluated from the payload when
    /// the spec is riemannian-kind, otherwise recovered as g(x, y_ref), which
    /// is y-independent exactly when the metric is Riemannian.
    Eigen::MatrixXd a_matrix(std::span<const double> x) const {
        if (spec_->kind == MetricKind::Riemannian) {
            std::vector<double> env(x.begin(), x.end());
            env.resize(2 * n_, 0.0);
            EvalEnv<double> e{env, n_};
            Eigen::MatrixXd a(n_, n_);
            for (int i = 0; i < n_; ++i)
                for (int j = 0; j < n_; ++j) {
                    double aij = evaluate<double>(*spec_->riemannian.a[i * n_ + j], e);
                    double aji = evaluate<double>(*spec_->riemannian.a[j * n_ + i], e);
                    a(i, j) = 0.5 * (aij + aji);
                }
            return a;
        }
        EvalPoint probe;
        probe.x.assign(x.begin(), x.end());
        probe.y.resize(n_);
        for (int i = 0; i < n_; ++i) probe.y[i] = 0.6 + 0.13 * i;
        return g_mat(probe);
    }

    /// Christoffel symbols of a_ij via finite differences in x.
    Tensor christoffel(std::span<const double> x) const {
        const double h = cfg_.hx;
        std::vector<Eigen::MatrixXd> da(n_);
        for (int l = 0; l < n_; ++l) {
            da[l] = mat_d1(
                [&](double s) {
                    std::vector<double> q(x.begin(), x.end());
                    q[l] += s;
                    return a_matrix(q);
                },
                h);
        }
        Eigen::MatrixXd ainv = a_matrix(x).inverse();
        Tensor t(3, n_);
        t.variance() = "ull";
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j)
                for (int k = 0; k < n_; ++k) {
                    double acc = 0;
                    for (int l = 0; l < n_; ++l)
                        acc += ainv(i, l) * (da[j](l, k) + da[k](j, l) - da[l](j, k));
                    t.at(i, j, k) = 0.5 * acc;
                }
        return t;
    }

    /// G^i = (1/2) Gamma^i_jk y^j y^k.
    std::vector<double> spray_from_christoffel(std::span<const double> x, std::span<const double> y) const {
        Tensor gamma = christoffel(x);
        std::vector<double> out(n_, 0.0);
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j)
                for (int k = 0; k < n_; ++k) out[i] += 0.5 * gamma(i, j, k) * y[j] * y[k];
        return out;
    }

    /// Sectional curvature of the plane spanned by (u, v) for the underlying
    /// Riemannian metric, via R(u,v)v contracted with u.
    double sectional_curvature(std::span<const double> x, std::span<const double> u,
                               std::span<const double> v) const {
        const double h = 2 * cfg_.hx;
        // R^l_{ijk} = d_i Gamma^l_{jk} - d_j Gamma^l_{ik}
        //           + Gamma^l_{im} Gamma^m_{jk} - Gamma^l_{jm} Gamma^m_{ik}
        std::vector<Tensor> dG(n_);
        for (int i = 0; i < n_; ++i) {
            dG[i] = tensor_d1(
                [&](double s) {
                    std::vector<double> q(x.begin(), x.end());
                    q[i] += s;
                    return christoffel(q);
                },
                h);
        }
        Tensor gamma = christoffel(x);
        Eigen::MatrixXd a = a_matrix(x);
        // Rvec^l = R^l_{ijk} u^i v^j v^k
        Eigen::VectorXd Rvec = Eigen::VectorXd::Zero(n_);
        for (int l = 0; l < n_; ++l)
            for (int i = 0; i < n_; ++i)
                for (int j = 0; j < n_; ++j)
                    for (int k = 0; k < n_; ++k) {
                        double Rlijk = dG[i](l, j, k) - dG[j](l, i, k);
                        for (int m = 0; m < n_; ++m)
                            Rlijk += gamma(l, i, m) * gamma(m, j, k) - gamma(l, j, m) * gamma(m, i, k);
                        Rvec(l) += Rlijk * u[i] * v[j] * v[k];
                    }
        Eigen::VectorXd uv(n_), vv(n_);
        for (int i = 0; i < n_; ++i) {
            uv(i) = u[i];
            vv(i) = v[i];
        }
        double num = Rvec.dot(a * uv);
        double den = uv.dot(a * uv) * vv.dot(a * vv) - sqr(uv.dot(a * vv));
        return num / den;
    }

    // -- difference stencils -----------------------------------------------------

    static double d1(const std::function<double(double)>& f, double h) {
        double coarse = (f(h) - f(-h)) / (2 * h);
        double fine = (f(h / 2) - f(-h / 2)) / h;
        return (4 * fine - coarse) / 3;
    }

    static double d2(const std::function<double(double)>& f, double h) {
        double f0 = f(0);
        double coarse = (f(h) - 2 * f0 + f(-h)) / (h * h);
        double fine = (f(h / 2) - 2 * f0 + f(-h / 2)) / (h * h / 4);
        return (4 * fine - coarse) / 3;
    }

    static double d11(const std::function<double(double, double)>& f, double h) {
        auto cross = [&](double s) { return (f(s, s) - f(s, -s) - f(-s, s) + f(-s, -s)) / (4 * s * s); };
        double coarse = cross(h);
        double fine = cross(h / 2);
        return (4 * fine - coarse) / 3;
    }

    static Tensor tensor_d1(const std::function<Tensor(double)>& f, double h) {
        Tensor ph = f(h), mh = f(-h), ph2 = f(h / 2), mh2 = f(-h / 2);
        Tensor out(ph.rank(), ph.dim());
        for (std::size_t i = 0; i < out.data().size(); ++i) {
            double coarse = (ph.data()[i] - mh.data()[i]) / (2 * h);
            double fine = (ph2.data()[i] - mh2.data()[i]) / h;
            out.data()[i] = (4 * fine - coarse) / 3;
        }
        return out;
    }

    static Eigen::MatrixXd mat_d1(const std::function<Eigen::MatrixXd(double)>& f, double h) {
        Eigen::MatrixXd coarse = (f(h) - f(-h)) / (2 * h);
        Eigen::MatrixXd fine = (f(h / 2) - f(-h / 2)) / h;
        return (4 * fine - coarse) / 3;
    }

    const MetricSpec& spec() const { return *spec_; }
    const FdConfig& config() const { return cfg_; }

    /// Dispatch by quantity name (the CLI/spec-facing entry point).
    Tensor eval(const std::string& quantity, const EvalPoint& p) const {
        if (quantity == "g") return g(p);
        if (quantity == "h") return h(p);
        if (quantity == "C") return cartan(p);
        if (quantity == "I") return mean_cartan(p);
        if (quantity == "G") return spray(p);
        if (quantity == "N") return nonlinear_connection(p);
        if (quantity == "L") return landsberg(p);
        if (quantity == "J") return mean_landsberg(p);
        if (quantity == "M") return matsumoto(p);
        if (quantity == "Mbar") return pbar(p);
        throw ConfigError("finite-difference oracle has no quantity '" + quantity + "'");
    }

    struct FdResult {
        Tensor value;
        double error_estimate = 0;  // step-halving comparison, componentwise max
        bool step_warning = false;  // estimate exceeded the requested tolerance
    };

    /// Recomputes the quantity with halved steps and uses the discrepancy as
    /// an error estimate; flags cancellation / step-size trouble against the
    /// requested tolerance.
    FdResult eval_with_estimate(const std::string& quantity, const EvalPoint& p,
                                double tolerance) const {
        Tensor coarse = eval(quantity, p);
        FdOracle finer(*spec_, FdConfig{cfg_.hy / 2, cfg_.hx / 2});
        Tensor fine = finer.eval(quantity, p);
        double est = (fine - coarse).max_abs();
        return {fine, est, est > tolerance};
    }

private:
    const MetricSpec* spec_;
    FdConfig cfg_;
    int n_;
};

/// Finite-difference version of the identity ladder (the jet-free path of
/// the acceptance suite). Scale-free residuals, unit floors.
inline std::vector<LadderEntry> fd_identity_ladder(const FdOracle& fd, const EvalPoint& p) {
    std::vector<LadderEntry> out;
    const int n = fd.spec().dim;
    auto push = [&](const std::string& id, double r) { out.push_back({id, r}); };
    double F2v = fd.F2(p.x, p.y);
    double F = std::sqrt(F2v);
    std::span<const double> y(p.y);

    Tensor g = fd.g(p);
    Eigen::MatrixXd gm(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) gm(i, j) = g(i, j);
    Eigen::MatrixXd ginv = gm.inverse();
    Tensor h = fd.h(p);
    Tensor C = fd.cartan(p);
    Tensor I = trace_slots(C, ginv, 1, 2);
    Tensor L = fd.landsberg(p);
    Tensor J = trace_slots(L, ginv, 1, 2);
    Tensor M = fd.trace_free_part(C, I, h);
    Tensor Mbar = fd.trace_free_part(L, J, h);

    double nC = g_norm(C, ginv), nI = g_norm(I, ginv), nL = g_norm(L, ginv), nJ = g_norm(J, ginv);

    // Euler chains via radial differencing
    {
        double lhs = FdOracle::d1(
            [&](double s) {
                std::vector<double> ty = p.y;
                for (double& v : ty) v *= (1 + s);
                return fd.F2(p.x, ty);
            },
            0.01);
        push("euler_F2", std::abs(lhs - 2 * F2v) / (2 * F2v));
        Tensor dg = FdOracle::tensor_d1(
            [&](double s) {
                EvalPoint q = p;
                for (double& v : q.y) v *= (1 + s);
                return fd.g(q);
            },
            0.02);
        push("euler_g", g_norm(dg, ginv) / g_norm(g, ginv));
        Tensor dC = FdOracle::tensor_d1(
            [&](double s) {
                EvalPoint q = p;
                for (double& v : q.y) v *= (1 + s);
                return fd.cartan(q);
            },
            0.02);
        push("euler_C", g_norm(dC + C, ginv) * F / (1.0 + nC * F));
    }

    push("ykill_h", g_norm(contract_last(h, y), ginv) / F / (1.0 + g_norm(h, ginv)));
    push("ykill_C", g_norm(contract_last(C, y), ginv) / (1.0 + nC * F));
    push("ykill_I", g_norm(contract_last(I, y), ginv) / (1.0 + nI * F));
    push("ykill_L", g_norm(contract_last(L, y), ginv) / F / (1.0 + nL));
    push("ykill_J", g_norm(contract_last(J, y), ginv) / F / (1.0 + nJ));
    push("ykill_M", g_norm(contract_last(M, y), ginv) / (1.0 + g_norm(M, ginv) * F));
    push("ykill_Mbar", g_norm(contract_last(Mbar, y), ginv) / F / (1.0 + g_norm(Mbar, ginv)));

    {
        Tensor trh = trace_slots(h, ginv, 0, 1);
        push("trace_gh", std::abs(trh.data()[0] - (n - 1)) / (n - 1));
        push("trace_M", g_norm(trace_slots(M, ginv, 1, 2), ginv) * F / (1.0 + nC * F));
        push("trace_Mbar", g_norm(trace_slots(Mbar, ginv, 1, 2), ginv) / (1.0 + nL));
    }

    // asymmetry with a unit floor: identically-vanishing tensors carry pure
    // difference noise, which must not be divided by itself
    auto sym_floor = [](Tensor t, bool rank3) {
        double ma = t.max_abs();
        if (rank3)
            t.symmetric_groups() = {{0, 1, 2}};
        else
            t.symmetric_groups() = {{0, 1}};
        return t.symmetry_violation() * ma / (1.0 + ma);
    };
    push("sym_g", sym_floor(g, false));
    push("sym_C", sym_floor(C, true));

    {
        Tensor G = fd.spray(p);
        Tensor N = fd.nonlinear_connection(p);
        Tensor d(1, n);
        for (int i = 0; i < n; ++i) {
            double acc = -2.0 * G(i);
            for (int j = 0; j < n; ++j) acc += N(i, j) * y[j];
            d.at(i) = acc;
        }
        Tensor dl = contract_slot(d, gm, 0);
        Tensor Gl = contract_slot(G, gm, 0);
        push("conn_Ny_2G", g_norm(dl, ginv) / F2v / (1.0 + 2 * g_norm(Gl, ginv) / F2v));
    }

    {
        Tensor Mt = fd.transport([&fd](const EvalPoint& q) { return fd.matsumoto(q); }, p);
        push("transport_Mbar",
             g_norm(Mt - Mbar, ginv) / (1.0 + g_norm(Mbar, ginv) + g_norm(Mt, ginv)));
    }

    return out;
}

}  // namespace finsler
