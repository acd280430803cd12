#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "finsler/metric.hpp"
#include "finsler/tensor.hpp"

namespace finsler {

struct ScalarCurvatureFit {
    double K = 0;
    double residual = 0;
};

/// Per-point tensor pipeline. Everything is derived from one high-order jet
/// of F^2 at (x, y): tensor components are themselves jets, so horizontal
/// covariant derivatives can be taken by reading x- and y-derivatives off the
/// components instead of re-seeding at neighbouring points.
///
/// Lower-index conventions follow the usual ones:
///   g_ij = (1/2) d^2 F^2 / dy^i dy^j          C_ijk = (1/4) d^3 F^2 / dy^i dy^j dy^k
///   G^i  = (1/4) g^il ( d^2F^2/dx^k dy^l y^k - dF^2/dx^l )
///   N^i_j = dG^i/dy^j                          G^i_jk = d^2 G^i / dy^j dy^k
///   T_{I|l} = d_l T_I - sum_a T_{..m..} G^m_{i_a l},  d_l = d/dx^l - N^m_l d/dy^m
class PointGeometry {
public:
    PointGeometry(const MetricSpec& spec, EvalPoint p, int order = 6)
        : spec_(&spec), p_(std::move(p)), order_(order), n_(spec.dim) {
        check_point_dim(spec, p_.x.size(), p_.y.size());
        env_ = seed_variables(p_.x, p_.y, order_);
        sp_ = env_[0].space();
        EvalEnv<Jet> e{env_, n_};
        switch (spec.kind) {
            case MetricKind::Riemannian: F2_ = detail::quadratic_form<Jet>(spec.riemannian, e); break;
            case MetricKind::Randers:
                F_ = detail::quadratic_form<Jet>(spec.randers.alpha, e).sqrt() +
                     detail::one_form<Jet>(spec.randers.b, e);
                F2_ = *F_ * *F_;
                break;
            case MetricKind::Expression:
                F_ = evaluate<Jet>(*spec.expression.F, e);
                F2_ = *F_ * *F_;
                break;
        }
        if (F_ && F_->value() <= 0.0)
            throw EvalError("F = " + fmt_double(F_->value(), 6) + " is not positive at the evaluation point");
        if (F2_->value() <= 0.0)
            throw EvalError("F^2 = " + fmt_double(F2_->value(), 6) + " is not positive at the evaluation point");
    }

    const MetricSpec& spec() const { return *spec_; }
    const EvalPoint& point() const { return p_; }
    int dim() const { return n_; }
    int order() const { return order_; }
    const std::vector<Jet>& vars() const { return env_; }

    const Jet& F2_jet() { return *F2_; }
    const Jet& F_jet() {
        if (!F_) F_ = F2_->sqrt();
        return *F_;
    }
    double F() { return F_jet().value(); }
    double F2() { return F2_->value(); }

    int xvar(int i) const { return i; }
    int yvar(int i) const { return n_ + i; }

    // -- fundamental / angular ------------------------------------------------

    const JetTensor& g_jets() {
        if (!g_) {
            JetTensor t(2, n_);
            for (int i = 0; i < n_; ++i) {
                Jet di = F2_->deriv(yvar(i));
                for (int j = i; j < n_; ++j) {
                    Jet gij = di.deriv(yvar(j)) * 0.5;
                    t.at({i, j}) = gij;
                    if (i != j) t.at({j, i}) = gij;
                }
            }
            g_ = std::move(t);
        }
        return *g_;
    }

    const JetTensor& ginv_jets() {
        if (!ginv_) ginv_ = invert_jet_matrix(g_jets());
        return *ginv_;
    }

    /// y_i = g_ij y^j as a jet field.
    const JetTensor& y_low_jets() {
        if (!ylow_) {
            const JetTensor& g = g_jets();
            JetTensor t(1, n_);
            for (int i = 0; i < n_; ++i) {
                Jet acc = g.at({i, 0}) * env_[yvar(0)];
                for (int j = 1; j < n_; ++j) acc += g.at({i, j}) * env_[yvar(j)];
                t.at({i}) = acc;
            }
            ylow_ = std::move(t);
        }
        return *ylow_;
    }

    const JetTensor& h_jets() {
        if (!h_) {
            const JetTensor& g = g_jets();
            const JetTensor& yl = y_low_jets();
            JetTensor t(2, n_);
            for (int i = 0; i < n_; ++i)
                for (int j = i; j < n_; ++j) {
                    Jet hij = g.at({i, j}) - yl.at({i}) * yl.at({j}) / *F2_;
                    t.at({i, j}) = hij;
                    if (i != j) t.at({j, i}) = hij;
                }
            h_ = std::move(t);
        }
        return *h_;
    }

    // -- Cartan family ----------------------------------------------------------

    const JetTensor& cartan_jets() {
        if (!C_) {
            const JetTensor& g = g_jets();
            JetTensor t(3, n_);
            for (int i = 0; i < n_; ++i)
                for (int j = i; j < n_; ++j) {
                    Jet dij = g.at({i, j});
                    for (int k = j; k < n_; ++k) mirror3(t, i, j, k, dij.deriv(yvar(k)) * 0.5);
                }
            C_ = std::move(t);
        }
        return *C_;
    }

    const JetTensor& mean_cartan_jets() {
        if (!I_) I_ = trace_last_two(cartan_jets());
        return *I_;
    }

    // -- spray and connection ----------------------------------------------------

    const JetTensor& spray_jets() {
        if (!G_) {
            const JetTensor& gi = ginv_jets();
            std::vector<Jet> rhs(n_);
            for (int l = 0; l < n_; ++l) {
                Jet dxl = F2_->deriv(xvar(l));
                Jet acc = F2_->deriv(xvar(0)).deriv(yvar(l)) * env_[yvar(0)];
                for (int k = 1; k < n_; ++k) acc += F2_->deriv(xvar(k)).deriv(yvar(l)) * env_[yvar(k)];
                rhs[l] = acc - dxl;
            }
            JetTensor t(1, n_);
            for (int i = 0; i < n_; ++i) {
                Jet acc = gi.at({i, 0}) * rhs[0];
                for (int l = 1; l < n_; ++l) acc += gi.at({i, l}) * rhs[l];
                t.at({i}) = acc * 0.25;
            }
            G_ = std::move(t);
        }
        return *G_;
    }

    const JetTensor& nonlinear_connection_jets() {
        if (!N_) {
            const JetTensor& G = spray_jets();
            JetTensor t(2, n_);
            for (int i = 0; i < n_; ++i)
                for (int j = 0; j < n_; ++j) t.at({i, j}) = G.at({i}).deriv(yvar(j));
            N_ = std::move(t);
        }
        return *N_;
    }

    const JetTensor& berwald_connection_jets() {
        if (!Gjk_) {
            const JetTensor& N = nonlinear_connection_jets();
            JetTensor t(3, n_);
            for (int i = 0; i < n_; ++i)
                for (int j = 0; j < n_; ++j) {
                    Jet nij = N.at({i, j});
                    for (int k = j; k < n_; ++k) {
                        Jet v = nij.deriv(yvar(k));
                        t.at({i, j, k}) = v;
                        if (j != k) t.at({i, k, j}) = v;
                    }
                }
            Gjk_ = std::move(t);
        }
        return *Gjk_;
    }

    /// Third fiber derivative of the spray; vanishes iff the metric is Berwald.
    const JetTensor& berwald_curvature_jets() {
        if (!Bc_) {
            const JetTensor& c = berwald_connection_jets();
            JetTensor t(4, n_);
            for (int i = 0; i < n_; ++i)
                for (int j = 0; j < n_; ++j)
                    for (int k = j; k < n_; ++k) {
                        Jet cijk = c.at({i, j, k});
                        for (int l = k; l < n_; ++l) {
                            Jet v = cijk.deriv(yvar(l));
                            int per[3] = {j, k, l};
                            int p[3] = {per[0], per[1], per[2]};
                            std::sort(p, p + 3);
                            // fill all permutations of (j,k,l)
                            t.at({i, p[0], p[1], p[2]}) = v;
                            t.at({i, p[0], p[2], p[1]}) = v;
                            t.at({i, p[1], p[0], p[2]}) = v;
                            t.at({i, p[1], p[2], p[0]}) = v;
                            t.at({i, p[2], p[0], p[1]}) = v;
                            t.at({i, p[2], p[1], p[0]}) = v;
                        }
                    }
            Bc_ = std::move(t);
        }
        return *Bc_;
    }

    // -- horizontal covariant derivatives ----------------------------------------

    /// d_l applied to a scalar jet field: one jet per l.
    std::vector<Jet> scalar_cov_deriv(const Jet& t) {
        const JetTensor& N = nonlinear_connection_jets();
        std::vector<Jet> dy(n_);
        for (int m = 0; m < n_; ++m) dy[m] = t.deriv(yvar(m));
        std::vector<Jet> out(n_);
        for (int l = 0; l < n_; ++l) {
            Jet acc = t.deriv(xvar(l));
            for (int m = 0; m < n_; ++m) acc -= N.at({m, l}) * dy[m];
            out[l] = acc;
        }
        return out;
    }

    /// T_{I|l} for an all-lower tensor field; the new slot is appended last.
    JetTensor cov_deriv(const JetTensor& T) {
        const JetTensor& N = nonlinear_connection_jets();
        const JetTensor& conn = berwald_connection_jets();
        JetTensor out(T.rank + 1, n_);
        std::vector<int> idx(T.rank, 0);
        const std::size_t comps = T.c.size();
        std::vector<Jet> dx(n_), dy(n_);
        for (std::size_t f = 0; f < comps; ++f) {
            std::size_t rem = f;
            for (int s = T.rank - 1; s >= 0; --s) {
                idx[s] = static_cast<int>(rem % n_);
                rem /= n_;
            }
            for (int v = 0; v < n_; ++v) {
                dx[v] = T.c[f].deriv(xvar(v));
                dy[v] = T.c[f].deriv(yvar(v));
            }
            for (int l = 0; l < n_; ++l) {
                Jet acc = dx[l];
                for (int m = 0; m < n_; ++m) acc -= N.at({m, l}) * dy[m];
                for (int a = 0; a < T.rank; ++a) {
                    std::size_t stride = 1;
                    for (int s = T.rank - 1; s > a; --s) stride *= n_;
                    std::size_t base = f - static_cast<std::size_t>(idx[a]) * stride;
                    for (int m = 0; m < n_; ++m)
                        acc -= T.c[base + m * stride] * conn.at({m, idx[a], l});
                }
                out.c[f * n_ + l] = acc;
            }
        }
        return out;
    }

    /// T_{I|l} y^l, computed through the geodesic flow derivative (one fewer
    /// jet order consumed than contracting cov_deriv).
    JetTensor transport(const JetTensor& T) {
        const JetTensor& N = nonlinear_connection_jets();
        const JetTensor& G = spray_jets();
        JetTensor out(T.rank, n_);
        std::vector<int> idx(T.rank, 0);
        for (std::size_t f = 0; f < T.c.size(); ++f) {
            std::size_t rem = f;
            for (int s = T.rank - 1; s >= 0; --s) {
                idx[s] = static_cast<int>(rem % n_);
                rem /= n_;
            }
            Jet acc = T.c[f].deriv(xvar(0)) * env_[yvar(0)];
            for (int l = 1; l < n_; ++l) acc += T.c[f].deriv(xvar(l)) * env_[yvar(l)];
            for (int m = 0; m < n_; ++m) acc -= 2.0 * (G.at({m}) * T.c[f].deriv(yvar(m)));
            for (int a = 0; a < T.rank; ++a) {
                std::size_t stride = 1;
                for (int s = T.rank - 1; s > a; --s) stride *= n_;
                std::size_t base = f - static_cast<std::size_t>(idx[a]) * stride;
                for (int m = 0; m < n_; ++m) acc -= T.c[base + m * stride] * N.at({m, idx[a]});
            }
            out.c[f] = acc;
        }
        return out;
    }

    // -- Landsberg family ---------------------------------------------------------

    const JetTensor& landsberg_jets() {
        if (!L_) {
            JetTensor t = transport(cartan_jets());
            canonicalize_sym3(t);
            L_ = std::move(t);
        }
        return *L_;
    }

    const JetTensor& mean_landsberg_jets() {
        if (!J_) J_ = trace_last_two(landsberg_jets());
        return *J_;
    }

    const JetTensor& matsumoto_jets() {
        if (!M_) M_ = reduce_trace_free(cartan_jets(), mean_cartan_jets());
        return *M_;
    }

    const JetTensor& pbar_jets() {
        if (!Mbar_) Mbar_ = reduce_trace_free(landsberg_jets(), mean_landsberg_jets());
        return *Mbar_;
    }

    const JetTensor& landsberg_cov_jets() {
        if (!covL_) covL_ = cov_deriv(landsberg_jets());
        return *covL_;
    }

    const JetTensor& stretch_jets() {
        if (!Sigma_) {
            const JetTensor& cl = landsberg_cov_jets();
            JetTensor t(4, n_);
            for (int i = 0; i < n_; ++i)
                for (int j = 0; j < n_; ++j)
                    for (int k = 0; k < n_; ++k)
                        for (int l = 0; l < n_; ++l)
                            t.at({i, j, k, l}) = (cl.at({i, j, k, l}) - cl.at({i, j, l, k})) * 2.0;
            Sigma_ = std::move(t);
        }
        return *Sigma_;
    }

    // -- curvature ----------------------------------------------------------------

    /// Riemann curvature R^i_k (first slot upper).
    const JetTensor& riemann_jets() {
        if (!R_) {
            const JetTensor& G = spray_jets();
            JetTensor t(2, n_);
            std::vector<std::vector<Jet>> dyG(n_);
            for (int i = 0; i < n_; ++i) {
                dyG[i].resize(n_);
                for (int j = 0; j < n_; ++j) dyG[i][j] = G.at({i}).deriv(yvar(j));
            }
            for (int i = 0; i < n_; ++i)
                for (int k = 0; k < n_; ++k) {
                    Jet acc = G.at({i}).deriv(xvar(k)) * 2.0;
                    for (int j = 0; j < n_; ++j) {
                        acc -= env_[yvar(j)] * G.at({i}).deriv(xvar(j)).deriv(yvar(k));
                        acc += 2.0 * (G.at({j}) * dyG[i][j].deriv(yvar(k)));
                        acc -= dyG[i][j] * dyG[j][k];
                    }
                    t.at({i, k}) = acc;
                }
            R_ = std::move(t);
        }
        return *R_;
    }

    /// Fiber derivative R^i_{k.l}.
    const JetTensor& riemann_dot_jets() {
        if (!Rdot_) {
            const JetTensor& R = riemann_jets();
            JetTensor t(3, n_);
            for (int i = 0; i < n_; ++i)
                for (int k = 0; k < n_; ++k) {
                    Jet rik = R.at({i, k});
                    for (int l = 0; l < n_; ++l) t.at({i, k, l}) = rik.deriv(yvar(l));
                }
            Rdot_ = std::move(t);
        }
        return *Rdot_;
    }

    /// Scalar curvature candidate K = R^m_m / ((n-1) F^2) as a jet field.
    const Jet& scalar_K_jet() {
        if (!Kjet_) {
            const JetTensor& R = riemann_jets();
            Jet tr = R.at({0, 0});
            for (int m = 1; m < n_; ++m) tr += R.at({m, m});
            Kjet_ = tr / (*F2_ * static_cast<double>(n_ - 1));
        }
        return *Kjet_;
    }

    // -- numeric views --------------------------------------------------------------

    const Eigen::MatrixXd& g_mat() {
        if (!gmat_) {
            Tensor g = value_of(g_jets());
            Eigen::MatrixXd m(n_, n_);
            for (int i = 0; i < n_; ++i)
                for (int j = 0; j < n_; ++j) m(i, j) = g(i, j);
            gmat_ = std::move(m);
        }
        return *gmat_;
    }

    const Eigen::MatrixXd& ginv_mat() {
        if (!ginvmat_) {
            Eigen::PartialPivLU<Eigen::MatrixXd> lu(g_mat());
            Eigen::MatrixXd inv = lu.inverse();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g_mat());
            double lmin = es.eigenvalues().minCoeff(), lmax = es.eigenvalues().maxCoeff();
            if (!(lmin > 0)) throw EvalError("fundamental tensor is not positive definite at the point");
            cond_ = lmax / lmin;
            ginvmat_ = std::move(inv);
        }
        return *ginvmat_;
    }

    /// Condition number of g (ratio of extreme eigenvalues).
    double condition_number() {
        ginv_mat();
        return cond_;
    }

    double norm_lower(const Tensor& t) { return finsler::g_norm(t, ginv_mat()); }

    /// g-norm of T times F^power (the scale factors used by the classifier).
    double scale_free_norm(const Tensor& t, int f_power) {
        return norm_lower(t) * std::pow(F(), f_power);
    }

    Tensor lower_first(const Tensor& mixed) {
        const Eigen::MatrixXd& g = g_mat();
        return contract_slot(mixed, g, 0);
    }

    double flag_curvature(std::span<const double> u) {
        const Eigen::MatrixXd& g = g_mat();
        Eigen::VectorXd yv(n_), uv(n_);
        for (int i = 0; i < n_; ++i) {
            yv(i) = p_.y[i];
            uv(i) = u[i];
        }
        double gyy = yv.dot(g * yv);
        Eigen::VectorXd uperp = uv - (yv.dot(g * uv) / gyy) * yv;
        double guu = uperp.dot(g * uperp);
        double gu_full = uv.dot(g * uv);
        if (!(gu_full > 0) || std::sqrt(std::max(0.0, guu) / gu_full) < 1e-8)
            throw EvalError("degenerate flag: the flag edge is parallel to y");
        Tensor R = value_of(riemann_jets());
        Eigen::VectorXd Ru(n_);
        for (int i = 0; i < n_; ++i) {
            double acc = 0;
            for (int k = 0; k < n_; ++k) acc += R(i, k) * uperp(k);
            Ru(i) = acc;
        }
        return uperp.dot(g * Ru) / (gyy * guu);
    }

    ScalarCurvatureFit scalar_fit() {
        Tensor R = value_of(riemann_jets());
        Tensor Rlow = lower_first(R);
        double tr = 0;
        for (int m = 0; m < n_; ++m) tr += R(m, m);
        double f2 = F2();
        double K = tr / ((n_ - 1) * f2);
        Tensor h = value_of(h_jets());
        Tensor diff = Rlow - h * (K * f2);
        ScalarCurvatureFit fit;
        fit.K = K;
        fit.residual = norm_lower(diff) / (1.0 + std::abs(K) * f2);
        return fit;
    }

private:
    void mirror3(JetTensor& t, int i, int j, int k, Jet v) {
        int p[3] = {i, j, k};
        std::sort(p, p + 3);
        t.at({p[0], p[1], p[2]}) = v;
        t.at({p[0], p[2], p[1]}) = v;
        t.at({p[1], p[0], p[2]}) = v;
        t.at({p[1], p[2], p[0]}) = v;
        t.at({p[2], p[0], p[1]}) = v;
        t.at({p[2], p[1], p[0]}) = v;
    }

    /// Rewrites every component to its sorted-index representative so that
    /// declared total symmetry holds bit-exactly.
    void canonicalize_sym3(JetTensor& t) {
        for (int i = 0; i < n_; ++i)
            for (int j = i; j < n_; ++j)
                for (int k = j; k < n_; ++k) mirror3(t, i, j, k, t.at({i, j, k}));
    }

    JetTensor trace_last_two(const JetTensor& T3) {
        const JetTensor& gi = ginv_jets();
        JetTensor out(1, n_);
        for (int i = 0; i < n_; ++i) {
            std::optional<Jet> acc;
            for (int j = 0; j < n_; ++j)
                for (int k = 0; k < n_; ++k) {
                    Jet term = gi.at({j, k}) * T3.at({i, j, k});
                    if (acc)
                        acc = *acc + term;
                    else
                        acc = term;
                }
            out.at({i}) = *acc;
        }
        return out;
    }

    /// T - (1/(n+1)) { t_i h_jk + t_j h_ik + t_k h_ij }: Matsumoto-style
    /// trace-free reduction against the angular metric.
    JetTensor reduce_trace_free(const JetTensor& T3, const JetTensor& t1) {
        const JetTensor& h = h_jets();
        const double c = 1.0 / (n_ + 1);
        JetTensor out(3, n_);
        for (int i = 0; i < n_; ++i)
            for (int j = i; j < n_; ++j)
                for (int k = j; k < n_; ++k) {
                    Jet v = T3.at({i, j, k}) -
                            c * (t1.at({i}) * h.at({j, k}) + t1.at({j}) * h.at({i, k}) +
                                 t1.at({k}) * h.at({i, j}));
                    mirror3(out, i, j, k, v);
                }
        return out;
    }

    JetTensor invert_jet_matrix(const JetTensor& g) {
        std::vector<std::vector<Jet>> A(n_, std::vector<Jet>(n_));
        std::vector<std::vector<Jet>> Inv(n_, std::vector<Jet>(n_));
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) {
                A[i][j] = g.at({i, j});
                Inv[i][j] = Jet::constant(sp_, i == j ? 1.0 : 0.0);
            }
        for (int col = 0; col < n_; ++col) {
            int piv = col;
            for (int r = col + 1; r < n_; ++r)
                if (std::abs(A[r][col].value()) > std::abs(A[piv][col].value())) piv = r;
            if (A[piv][col].value() == 0.0)
                throw EvalError("fundamental tensor is singular at the evaluation point");
            std::swap(A[piv], A[col]);
            std::swap(Inv[piv], Inv[col]);
            Jet pinv = A[col][col].pow(-1, 1);
            for (int j = 0; j < n_; ++j) {
                A[col][j] = A[col][j] * pinv;
                Inv[col][j] = Inv[col][j] * pinv;
            }
            for (int r = 0; r < n_; ++r) {
                if (r == col) continue;
                Jet factor = A[r][col];
                for (int j = 0; j < n_; ++j) {
                    A[r][j] = A[r][j] - factor * A[col][j];
                    Inv[r][j] = Inv[r][j] - factor * Inv[col][j];
                }
            }
        }
        JetTensor out(2, n_);
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) out.at({i, j}) = Inv[i][j];
        return out;
    }

    const MetricSpec* spec_;
    EvalPoint p_;
    int order_;
    int n_;
    std::vector<Jet> env_;
    JetSpacePtr sp_;
    std::optional<Jet> F2_, F_, Kjet_;
    std::optional<JetTensor> g_, ginv_, ylow_, h_, C_, I_, G_, N_, Gjk_, Bc_;
    std::optional<JetTensor> L_, J_, M_, Mbar_, covL_, Sigma_, R_, Rdot_;
    std::optional<Eigen::MatrixXd> gmat_, ginvmat_;
    double cond_ = 0;
};

// ---------------------------------------------------------------------------
// Geodesics
// ---------------------------------------------------------------------------

/// Numeric spray coefficients at (x, y) from an order-2 jet.
inline std::vector<double> spray_value(const MetricSpec& spec, std::span<const double> x,
                                       std::span<const double> y) {
    const int n = spec.dim;
    EvalPoint p{{x.begin(), x.end()}, {y.begin(), y.end()}};
    Jet f2 = F2_jet(spec, p, 2);
    Eigen::MatrixXd g(n, n);
    Eigen::VectorXd rhs(n);
    for (int l = 0; l < n; ++l) {
        Jet dl = f2.deriv(n + l);
        for (int j = l; j < n; ++j) {
            g(l, j) = 0.5 * dl.deriv(n + j).value();
            g(j, l) = g(l, j);
        }
        double acc = 0;
        for (int k = 0; k < n; ++k) acc += f2.deriv(k).deriv(n + l).value() * y[k];
        rhs(l) = acc - f2.deriv(l).value();
    }
    Eigen::VectorXd G = g.partialPivLu().solve(rhs) * 0.25;
    return {G.data(), G.data() + n};
}

struct GeodesicSample {
    double t;
    std::vector<double> x, y;
    double F;
};

struct GeodesicPath {
    std::vector<GeodesicSample> samples;
    bool exited_domain = false;
    double max_F_drift = 0;  // max |F(t) - F(0)| / F(0)
};

namespace detail {

struct FlowState {
    std::vector<double> x, y;
};

inline FlowState rk4_step(const MetricSpec& spec, const FlowState& s, double dt) {
    const int n = spec.dim;
    auto deriv = [&](const FlowState& st) {
        FlowState d;
        d.x = st.y;
        d.y = spray_value(spec, st.x, st.y);
        for (double& v : d.y) v *= -2.0;
        return d;
    };
    auto advance = [&](const FlowState& st, const FlowState& d, double h) {
        FlowState out = st;
        for (int i = 0; i < n; ++i) {
            out.x[i] += h * d.x[i];
            out.y[i] += h * d.y[i];
        }
        return out;
    };
    FlowState k1 = deriv(s);
    FlowState k2 = deriv(advance(s, k1, dt / 2));
    FlowState k3 = deriv(advance(s, k2, dt / 2));
    FlowState k4 = deriv(advance(s, k3, dt));
    FlowState out = s;
    for (int i = 0; i < n; ++i) {
        out.x[i] += dt / 6 * (k1.x[i] + 2 * k2.x[i] + 2 * k3.x[i] + k4.x[i]);
        out.y[i] += dt / 6 * (k1.y[i] + 2 * k2.y[i] + 2 * k3.y[i] + k4.y[i]);
    }
    return out;
}

}  // namespace detail

/// One geodesic-flow step of parameter length h; used by the flow
/// finite-differencing of fitted scalar fields.
inline EvalPoint flow_step(const MetricSpec& spec, const EvalPoint& p, double h) {
    detail::FlowState s{p.x, p.y};
    s = detail::rk4_step(spec, s, h);
    return {s.x, s.y};
}

/// Fixed-step RK4 integration of x'' + 2G(x, x') = 0.
inline GeodesicPath trace_geodesic(const MetricSpec& spec, std::span<const double> x0,
                                   std::span<const double> y0, int steps, double dt) {
    GeodesicPath path;
    detail::FlowState s{{x0.begin(), x0.end()}, {y0.begin(), y0.end()}};
    double f0 = F_value(spec, s.x, s.y);
    path.samples.push_back({0.0, s.x, s.y, f0});
    for (int k = 1; k <= steps; ++k) {
        s = detail::rk4_step(spec, s, dt);
        if (!spec.domain.contains(s.x)) {
            path.exited_domain = true;
            break;
        }
        double f = F_value(spec, s.x, s.y);
        path.max_F_drift = std::max(path.max_F_drift, std::abs(f - f0) / f0);
        path.samples.push_back({k * dt, s.x, s.y, f});
    }
    return path;
}

// ---------------------------------------------------------------------------
// Identity ladder (homogeneity, y-kill, traces, connection consistency)
// ---------------------------------------------------------------------------

struct LadderEntry {
    std::string id;
    double residual;
};

namespace detail {

inline Tensor jet_directional_y(PointGeometry& geo, const JetTensor& T) {
    const int n = geo.dim();
    Tensor val(T.rank, n);
    for (std::size_t f = 0; f < T.c.size(); ++f) {
        double acc = 0;
        for (int m = 0; m < n; ++m) acc += T.c[f].deriv(geo.yvar(m)).value() * geo.point().y[m];
        val.data()[f] = acc;
    }
    return val;
}

}  // namespace detail

/// Scale-free residuals for every pointwise identity the pipeline guarantees.
/// All residuals are built as 0-homogeneous ratios with a unit floor in the
/// denominator so that identically-zero quantities pass rather than dividing
/// noise by noise.
inline std::vector<LadderEntry> jet_identity_ladder(PointGeometry& geo) {
    std::vector<LadderEntry> out;
    const int n = geo.dim();
    const double F = geo.F();
    const double F2 = geo.F2();
    auto push = [&](const std::string& id, double r) { out.push_back({id, r}); };

    Tensor g = value_of(geo.g_jets());
    Tensor h = value_of(geo.h_jets());
    Tensor C = value_of(geo.cartan_jets());
    Tensor I = value_of(geo.mean_cartan_jets());
    Tensor L = value_of(geo.landsberg_jets());
    Tensor J = value_of(geo.mean_landsberg_jets());
    Tensor M = value_of(geo.matsumoto_jets());
    Tensor Mbar = value_of(geo.pbar_jets());
    Tensor G = value_of(geo.spray_jets());
    Tensor N = value_of(geo.nonlinear_connection_jets());
    Tensor Gjk = value_of(geo.berwald_connection_jets());
    const auto& ginv = geo.ginv_mat();
    const auto& gm = geo.g_mat();
    std::span<const double> y(geo.point().y);

    double ng = g_norm(g, ginv);  // = sqrt(n), exact up to rounding
    double nh = g_norm(h, ginv);
    double nC = g_norm(C, ginv), nI = g_norm(I, ginv);
    double nL = g_norm(L, ginv), nJ = g_norm(J, ginv);

    // Euler chains
    {
        double lhs = 0;
        for (int m = 0; m < n; ++m) lhs += geo.F2_jet().deriv(geo.yvar(m)).value() * y[m];
        push("euler_F2", std::abs(lhs - 2 * F2) / (2 * F2));
        Tensor dg = detail::jet_directional_y(geo, geo.g_jets());
        push("euler_g", g_norm(dg, ginv) / ng);
        Tensor dC = detail::jet_directional_y(geo, geo.cartan_jets());
        push("euler_C", g_norm(dC + C, ginv) * F / (1.0 + nC * F));
    }

    // y-kill ladder
    push("ykill_h", g_norm(contract_last(h, y), ginv) / F / (1.0 + nh));
    push("ykill_C", g_norm(contract_last(C, y), ginv) / (1.0 + nC * F));
    push("ykill_I", g_norm(contract_last(I, y), ginv) / (1.0 + nI * F));
    push("ykill_L", g_norm(contract_last(L, y), ginv) / F / (1.0 + nL));
    push("ykill_J", g_norm(contract_last(J, y), ginv) / F / (1.0 + nJ));
    push("ykill_M", g_norm(contract_last(M, y), ginv) / (1.0 + g_norm(M, ginv) * F));
    push("ykill_Mbar", g_norm(contract_last(Mbar, y), ginv) / F / (1.0 + g_norm(Mbar, ginv)));

    // trace ladder
    {
        Tensor trh = trace_slots(h, ginv, 0, 1);
        push("trace_gh", std::abs(trh.data()[0] - (n - 1)) / (n - 1));
        push("trace_CI", g_norm(trace_slots(C, ginv, 1, 2) - I, ginv) * F / (1.0 + nI * F));
        push("trace_LJ", g_norm(trace_slots(L, ginv, 1, 2) - J, ginv) / (1.0 + nJ));
        push("trace_M", g_norm(trace_slots(M, ginv, 1, 2), ginv) * F / (1.0 + nC * F));
        push("trace_Mbar", g_norm(trace_slots(Mbar, ginv, 1, 2), ginv) / (1.0 + nL));
    }

    // declared symmetries
    auto sym2 = [](Tensor t) {
        t.symmetric_groups() = {{0, 1}};
        return t.symmetry_violation();
    };
    push("sym_g", sym2(g));
    push("sym_h", sym2(h));
    push("sym_C", total_symmetry_residual(C));
    push("sym_L", total_symmetry_residual(L));
    push("sym_M", total_symmetry_residual(M));
    push("sym_Mbar", total_symmetry_residual(Mbar));
    {
        Tensor S = value_of(geo.stretch_jets());
        Tensor probe = S;
        probe.antisymmetric_pairs() = {{2, 3}};
        push("antisym_sigma", probe.symmetry_violation());
    }

    // connection consistency
    {
        Tensor d(1, n);
        for (int i = 0; i < n; ++i) {
            double acc = -2.0 * G(i);
            for (int j = 0; j < n; ++j) acc += N(i, j) * y[j];
            d.at(i) = acc;
        }
        Tensor dl = contract_slot(d, gm, 0);
        Tensor Gl = contract_slot(G, gm, 0);
        push("conn_Ny_2G", g_norm(dl, ginv) / F2 / (1.0 + 2 * g_norm(Gl, ginv) / F2));
        Tensor e(2, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double acc = -N(i, j);
                for (int k = 0; k < n; ++k) acc += Gjk(i, j, k) * y[k];
                e.at(i, j) = acc;
            }
        Tensor el = contract_slot(e, gm, 0);
        Tensor Nl = contract_slot(N, gm, 0);
        push("conn_Gy_N", g_norm(el, ginv) / F / (1.0 + g_norm(Nl, ginv) / F));
    }

    // metricity facts of the Berwald connection
    {
        std::vector<Jet> dF = geo.scalar_cov_deriv(geo.F_jet());
        Tensor v(1, n);
        for (int l = 0; l < n; ++l) v.at(l) = dF[l].value();
        push("metricity_F", g_norm(v, ginv) / F);
        Tensor gtrans = value_of(geo.transport(geo.g_jets()));
        push("metricity_gy", g_norm(gtrans, ginv) / F / (1.0 + ng));
        Tensor ytrans = value_of(geo.cov_deriv(geo.y_low_jets()));
        push("metricity_ylow", g_norm(ytrans, ginv) / F / 2.0);
    }

    // transport consistency: pbar equals the geodesic transport of the
    // Matsumoto torsion
    {
        Tensor Mt = value_of(geo.transport(geo.matsumoto_jets()));
        push("transport_Mbar", g_norm(Mt - Mbar, ginv) / (1.0 + g_norm(Mbar, ginv) + g_norm(Mt, ginv)));
    }

    return out;
}

}  // namespace finsler
