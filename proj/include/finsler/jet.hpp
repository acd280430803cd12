#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "finsler/common.hpp"
#include "finsler/multi_index.hpp"

namespace finsler {

/// Truncated multivariate Taylor expansion of a scalar function at a point.
/// Coefficients are Taylor coefficients (partial derivative divided by the
/// factorial of the multi-index). Arithmetic is exact modulo truncation; each
/// jet tracks the highest degree up to which its coefficients are meaningful
/// (differentiation loses one degree per application).
class Jet {
public:
    Jet() = default;

    static Jet constant(const JetSpacePtr& sp, double v) {
        Jet j(sp, sp->order());
        j.c_[0] = v;
        return j;
    }

    /// Coordinate function of variable `var` with value `v` at the point.
    static Jet variable(const JetSpacePtr& sp, int var, double v) {
        if (var < 0 || var >= sp->nvars()) throw ConfigError("jet variable index out of range");
        Jet j(sp, sp->order());
        j.c_[0] = v;
        j.c_[sp->raise(0, var)] = 1.0;
        return j;
    }

    const JetSpacePtr& space() const { return sp_; }
    int valid_order() const { return vord_; }
    bool empty() const { return !sp_; }

    double value() const { return c_[0]; }
    double coeff(int idx) const { return c_[idx]; }
    std::span<const double> coeffs() const { return c_; }

    /// Mixed partial derivative for the multi-index m (multifactorial times
    /// the Taylor coefficient).
    double partial(const Exponents& m) const {
        int deg = degree_of(m);
        if (deg > vord_)
            throw EvalError("requested derivative of degree " + std::to_string(deg) +
                            " exceeds the jet's valid order " + std::to_string(vord_));
        int idx = sp_->index_of(m);
        if (idx < 0) throw EvalError("multi-index not representable in this jet space");
        return c_[idx] * sp_->multifactorial(idx);
    }

    /// Partial derivative with respect to one variable; valid order drops by one.
    Jet deriv(int var) const {
        if (vord_ < 1) throw EvalError("jet truncation order exhausted (cannot differentiate further)");
        Jet out(sp_, vord_ - 1);
        int limit = sp_->count_up_to_degree(vord_ - 1);
        for (int i = 0; i < limit; ++i) {
            int up = sp_->raise(i, var);
            if (up >= 0) out.c_[i] = c_[up] * (sp_->exponents(i)[var] + 1);
        }
        return out;
    }

    Jet operator-() const {
        Jet out(sp_, vord_);
        for (std::size_t i = 0; i < c_.size(); ++i) out.c_[i] = -c_[i];
        return out;
    }

    friend Jet operator+(const Jet& a, const Jet& b) {
        a.check_compatible(b);
        Jet out(a.sp_, std::min(a.vord_, b.vord_));
        for (std::size_t i = 0; i < out.c_.size(); ++i) out.c_[i] = a.c_[i] + b.c_[i];
        return out;
    }

    friend Jet operator-(const Jet& a, const Jet& b) {
        a.check_compatible(b);
        Jet out(a.sp_, std::min(a.vord_, b.vord_));
        for (std::size_t i = 0; i < out.c_.size(); ++i) out.c_[i] = a.c_[i] - b.c_[i];
        return out;
    }

    friend Jet operator*(const Jet& a, const Jet& b) {
        a.check_compatible(b);
        Jet out(a.sp_, std::min(a.vord_, b.vord_));
        for (const auto& e : a.sp_->products_up_to_degree(out.vord_))
            out.c_[e.k] += a.c_[e.i] * b.c_[e.j];
        return out;
    }

    friend Jet operator/(const Jet& a, const Jet& b) { return a * b.pow(-1, 1); }

    friend Jet operator+(const Jet& a, double s) {
        Jet out = a;
        out.c_[0] += s;
        return out;
    }
    friend Jet operator+(double s, const Jet& a) { return a + s; }
    friend Jet operator-(const Jet& a, double s) { return a + (-s); }
    friend Jet operator-(double s, const Jet& a) { return (-a) + s; }
    friend Jet operator*(const Jet& a, double s) {
        Jet out(a.sp_, a.vord_);
        for (std::size_t i = 0; i < out.c_.size(); ++i) out.c_[i] = a.c_[i] * s;
        return out;
    }
    friend Jet operator*(double s, const Jet& a) { return a * s; }
    friend Jet operator/(const Jet& a, double s) { return a * (1.0 / s); }
    friend Jet operator/(double s, const Jet& b) { return b.pow(-1, 1) * s; }

    Jet& operator+=(const Jet& b) { return *this = *this + b; }
    Jet& operator-=(const Jet& b) { return *this = *this - b; }
    Jet& operator*=(const Jet& b) { return *this = *this * b; }

    /// Rational power t^(p/q). Integer powers need only a nonzero value when
    /// negative; fractional powers compose with the univariate series of t^a
    /// around the (strictly positive) value.
    Jet pow(long long p, long long q) const {
        Rational r{p, q};
        if (q == 0) throw EvalError("zero denominator in rational exponent");
        r.reduce();
        if (r.den == 1) {
            if (r.num >= 0) return ipow(r.num);
            Jet base = ipow(-r.num);
            if (base.value() == 0.0) throw EvalError("division by a jet with zero value");
            return base.compose_power(-1.0);
        }
        if (value() <= 0.0)
            throw EvalError("fractional power of a jet with non-positive value " + fmt_double(value(), 6));
        return compose_power(r.as_double());
    }

    Jet sqrt() const {
        if (value() <= 0.0)
            throw EvalError("sqrt of a jet with non-positive value " + fmt_double(value(), 6));
        return compose_power(0.5);
    }

private:
    Jet(const JetSpacePtr& sp, int vord) : sp_(sp), vord_(vord), c_(sp->size(), 0.0) {}

    void check_compatible(const Jet& b) const {
        if (sp_.get() == b.sp_.get()) return;
        if (!sp_ || !b.sp_ || sp_->nvars() != b.sp_->nvars() || sp_->order() != b.sp_->order())
            throw EvalError("jet operands live in different jet spaces");
    }

    Jet ipow(long long p) const {
        if (p == 0) return constant(sp_, 1.0);
        Jet result = *this;
        long long remaining = p - 1;
        Jet base = *this;
        while (remaining > 0) {
            if (remaining & 1) result = result * base;
            remaining >>= 1;
            if (remaining > 0) base = base * base;
        }
        return result;
    }

    /// Composes with the Taylor series of t^alpha around the value: for
    /// u = t/c - 1, t^alpha = c^alpha * sum_k binom(alpha,k) u^k.
    Jet compose_power(double alpha) const {
        double c0 = value();
        Jet u = *this * (1.0 / c0) - 1.0;
        int terms = vord_;
        std::vector<double> a(terms + 1);
        a[0] = 1.0;
        for (int k = 1; k <= terms; ++k) a[k] = a[k - 1] * (alpha - (k - 1)) / k;
        Jet acc = constant(sp_, a[terms]);
        acc.vord_ = vord_;
        for (int k = terms - 1; k >= 0; --k) acc = acc * u + a[k];
        return acc * std::pow(c0, alpha);
    }

    JetSpacePtr sp_;
    int vord_ = 0;
    std::vector<double> c_;
};

inline Jet sqrt(const Jet& j) { return j.sqrt(); }
inline Jet pow(const Jet& j, long long p, long long q) { return j.pow(p, q); }

/// Coordinate jets (x^1..x^n, y^1..y^n) at the point (x, y).
inline std::vector<Jet> seed_variables(std::span<const double> x, std::span<const double> y, int order) {
    const int n = static_cast<int>(x.size());
    if (n < 2) throw ConfigError("chart dimension must be at least 2");
    if (y.size() != x.size()) throw ConfigError("x and y must have the same dimension");
    if (order < 1) throw ConfigError("jet order must be at least 1");
    double ynorm2 = 0;
    for (double v : y) ynorm2 += v * v;
    if (ynorm2 == 0.0) throw EvalError("tangent vector y must be nonzero");
    auto sp = JetSpace::get(2 * n, order);
    std::vector<Jet> env;
    env.reserve(2 * n);
    for (int i = 0; i < n; ++i) env.push_back(Jet::variable(sp, i, x[i]));
    for (int i = 0; i < n; ++i) env.push_back(Jet::variable(sp, n + i, y[i]));
    return env;
}

}  // namespace finsler
