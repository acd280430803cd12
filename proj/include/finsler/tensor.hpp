#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cstdarg>
#include <string>
#include <vector>

#include "finsler/common.hpp"
#include "finsler/jet.hpp"

namespace finsler {

/// Dense real tensor of rank r over dimension n with simple symmetry
/// metadata. Components are stored row-major; all comparisons in the test and
/// verification suites are done on all-lower-index tensors.
class Tensor {
public:
    Tensor() = default;
    Tensor(int rank, int dim)
        : rank_(rank), dim_(dim), variance_(rank, 'l'), c_(size_of(rank, dim), 0.0) {}

    static std::size_t size_of(int rank, int dim) {
        std::size_t s = 1;
        for (int i = 0; i < rank; ++i) s *= dim;
        return s;
    }

    int rank() const { return rank_; }
    int dim() const { return dim_; }
    std::vector<double>& data() { return c_; }
    const std::vector<double>& data() const { return c_; }

    /// Per-slot variance markers, 'l' (lower) or 'u' (upper).
    std::string& variance() { return variance_; }
    const std::string& variance() const { return variance_; }

    /// Declared totally-symmetric slot groups (slot indices, 0-based).
    std::vector<std::vector<int>>& symmetric_groups() { return sym_; }
    const std::vector<std::vector<int>>& symmetric_groups() const { return sym_; }
    /// Declared antisymmetric slot pairs.
    std::vector<std::array<int, 2>>& antisymmetric_pairs() { return antisym_; }
    const std::vector<std::array<int, 2>>& antisymmetric_pairs() const { return antisym_; }

    std::size_t flat(std::initializer_list<int> idx) const {
        std::size_t f = 0;
        for (int i : idx) f = f * dim_ + i;
        return f;
    }

    double& operator()(std::initializer_list<int> idx) { return c_[flat(idx)]; }
    double operator()(std::initializer_list<int> idx) const { return c_[flat(idx)]; }

    double operator()(int i) const { return c_[i]; }
    double operator()(int i, int j) const { return c_[static_cast<std::size_t>(i) * dim_ + j]; }
    double operator()(int i, int j, int k) const {
        return c_[(static_cast<std::size_t>(i) * dim_ + j) * dim_ + k];
    }
    double operator()(int i, int j, int k, int l) const {
        return c_[((static_cast<std::size_t>(i) * dim_ + j) * dim_ + k) * dim_ + l];
    }
    double& at(int i) { return c_[i]; }
    double& at(int i, int j) { return c_[static_cast<std::size_t>(i) * dim_ + j]; }
    double& at(int i, int j, int k) { return c_[(static_cast<std::size_t>(i) * dim_ + j) * dim_ + k]; }
    double& at(int i, int j, int k, int l) {
        return c_[((static_cast<std::size_t>(i) * dim_ + j) * dim_ + k) * dim_ + l];
    }

    double max_abs() const {
        double m = 0;
        for (double v : c_) m = std::max(m, std::abs(v));
        return m;
    }

    Tensor operator-(const Tensor& o) const {
        Tensor out(rank_, dim_);
        for (std::size_t i = 0; i < c_.size(); ++i) out.c_[i] = c_[i] - o.c_[i];
        return out;
    }
    Tensor operator+(const Tensor& o) const {
        Tensor out(rank_, dim_);
        for (std::size_t i = 0; i < c_.size(); ++i) out.c_[i] = c_[i] + o.c_[i];
        return out;
    }
    Tensor operator*(double s) const {
        Tensor out = *this;
        for (double& v : out.c_) v *= s;
        return out;
    }

    /// Worst violation of the declared symmetries, relative to max |component|.
    double symmetry_violation() const {
        double scale = max_abs();
        if (scale == 0) return 0;
        double worst = 0;
        std::vector<int> idx(rank_, 0);
        const std::size_t total = c_.size();
        for (std::size_t f = 0; f < total; ++f) {
            std::size_t rem = f;
            for (int s = rank_ - 1; s >= 0; --s) {
                idx[s] = static_cast<int>(rem % dim_);
                rem /= dim_;
            }
            for (const auto& grp : sym_) {
                for (std::size_t a = 0; a + 1 < grp.size(); ++a) {
                    std::vector<int> swapped = idx;
                    std::swap(swapped[grp[a]], swapped[grp[a + 1]]);
                    std::size_t g = 0;
                    for (int i : swapped) g = g * dim_ + i;
                    worst = std::max(worst, std::abs(c_[f] - c_[g]));
                }
            }
            for (const auto& pr : antisym_) {
                std::vector<int> swapped = idx;
                std::swap(swapped[pr[0]], swapped[pr[1]]);
                std::size_t g = 0;
                for (int i : swapped) g = g * dim_ + i;
                worst = std::max(worst, std::abs(c_[f] + c_[g]));
            }
        }
        return worst / scale;
    }

private:
    int rank_ = 0;
    int dim_ = 0;
    std::string variance_;
    std::vector<double> c_;
    std::vector<std::vector<int>> sym_;
    std::vector<std::array<int, 2>> antisym_;
};

/// Tensor whose components are jets; the working representation inside the
/// pipeline, so that horizontal covariant derivatives can reuse the x- and
/// y-derivatives encoded in each component.
struct JetTensor {
    int rank = 0;
    int dim = 0;
    std::vector<Jet> c;

    JetTensor() = default;
    JetTensor(int r, int d) : rank(r), dim(d), c(Tensor::size_of(r, d)) {}

    std::size_t flat(std::initializer_list<int> idx) const {
        std::size_t f = 0;
        for (int i : idx) f = f * dim + i;
        return f;
    }
    Jet& at(std::initializer_list<int> idx) { return c[flat(idx)]; }
    const Jet& at(std::initializer_list<int> idx) const { return c[flat(idx)]; }
};

inline Tensor value_of(const JetTensor& jt) {
    Tensor t(jt.rank, jt.dim);
    for (std::size_t i = 0; i < jt.c.size(); ++i) t.data()[i] = jt.c[i].value();
    return t;
}

// ---------------------------------------------------------------------------
// Numeric tensor algebra (g-contractions for norms and traces)
// ---------------------------------------------------------------------------

/// Contracts one slot with a matrix: out(..i'..) = sum_i m(i', i) T(..i..).
inline Tensor contract_slot(const Tensor& t, const Eigen::MatrixXd& m, int slot) {
    const int n = t.dim();
    Tensor out(t.rank(), n);
    std::size_t stride = 1;
    for (int s = t.rank() - 1; s > slot; --s) stride *= n;
    const std::size_t block = stride * n;
    const std::size_t total = t.data().size();
    for (std::size_t base = 0; base < total; base += block) {
        for (std::size_t inner = 0; inner < stride; ++inner) {
            for (int ip = 0; ip < n; ++ip) {
                double acc = 0;
                for (int i = 0; i < n; ++i) acc += m(ip, i) * t.data()[base + i * stride + inner];
                out.data()[base + ip * stride + inner] = acc;
            }
        }
    }
    return out;
}

/// Full g-norm of an all-lower tensor: sqrt of the total contraction of T
/// with itself through ginv on every slot.
inline double g_norm(const Tensor& t, const Eigen::MatrixXd& ginv) {
    Tensor up = t;
    for (int s = 0; s < t.rank(); ++s) up = contract_slot(up, ginv, s);
    double acc = 0;
    for (std::size_t i = 0; i < t.data().size(); ++i) acc += t.data()[i] * up.data()[i];
    return std::sqrt(std::max(0.0, acc));
}

/// g-inner product of two all-lower tensors of equal shape.
inline double g_dot(const Tensor& a, const Tensor& b, const Eigen::MatrixXd& ginv) {
    Tensor up = b;
    for (int s = 0; s < b.rank(); ++s) up = contract_slot(up, ginv, s);
    double acc = 0;
    for (std::size_t i = 0; i < a.data().size(); ++i) acc += a.data()[i] * up.data()[i];
    return acc;
}

/// Contracts the last slot with a vector.
inline Tensor contract_last(const Tensor& t, std::span<const double> v) {
    const int n = t.dim();
    Tensor out(t.rank() - 1, n);
    for (std::size_t o = 0; o < out.data().size(); ++o) {
        double acc = 0;
        for (int i = 0; i < n; ++i) acc += t.data()[o * n + i] * v[i];
        out.data()[o] = acc;
    }
    return out;
}

/// Trace over two slots against a matrix: out = sum_{ab} m(a,b) T(..a..b..).
inline Tensor trace_slots(const Tensor& t, const Eigen::MatrixXd& m, int slot_a, int slot_b) {
    const int n = t.dim();
    Tensor out(t.rank() - 2, n);
    std::vector<int> idx(t.rank(), 0);
    std::vector<int> out_idx;
    const std::size_t total = t.data().size();
    for (std::size_t f = 0; f < total; ++f) {
        std::size_t rem = f;
        for (int s = t.rank() - 1; s >= 0; --s) {
            idx[s] = static_cast<int>(rem % n);
            rem /= n;
        }
        if (idx[slot_a] != 0 || idx[slot_b] != 0) continue;
        out_idx.clear();
        for (int s = 0; s < t.rank(); ++s)
            if (s != slot_a && s != slot_b) out_idx.push_back(idx[s]);
        double acc = 0;
        std::vector<int> full = idx;
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) {
                full[slot_a] = a;
                full[slot_b] = b;
                std::size_t g = 0;
                for (int i : full) g = g * n + i;
                acc += m(a, b) * t.data()[g];
            }
        std::size_t o = 0;
        for (int i : out_idx) o = o * n + i;
        out.data()[o] = acc;
    }
    return out;
}

/// Max deviation from total symmetry over all adjacent-slot transpositions,
/// relative to the largest component (0 for the zero tensor).
inline double total_symmetry_residual(const Tensor& t) {
    Tensor probe = t;
    std::vector<int> all(t.rank());
    for (int i = 0; i < t.rank(); ++i) all[i] = i;
    probe.symmetric_groups() = {all};
    return probe.symmetry_violation();
}

}  // namespace finsler
