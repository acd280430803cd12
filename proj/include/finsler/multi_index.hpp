#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include "finsler/common.hpp"

namespace finsler {

/// Exponent vector of a monomial in the 2n chart variables (x^1..x^n, y^1..y^n).
using Exponents = std::vector<std::uint8_t>;

inline int degree_of(const Exponents& e) {
    int d = 0;
    for (auto v : e) d += v;
    return d;
}

/// Shared, immutable index tables for truncated multivariate Taylor
/// polynomials: the graded-lexicographic enumeration of all multi-indices of
/// degree <= order over nvars variables, the raise-by-one-variable table used
/// for differentiation, and the flattened pair->product table that drives the
/// Cauchy product. Built once per (nvars, order) and shared read-only.
class JetSpace {
public:
    static constexpr int kMaxOrder = 8;

    struct ProductEntry {
        std::int32_t k;  // result index
        std::int32_t i;  // left factor index
        std::int32_t j;  // right factor index
    };

    static std::shared_ptr<const JetSpace> get(int nvars, int order) {
        if (nvars < 1) throw ConfigError("jet space needs at least one variable");
        if (order < 1) throw ConfigError("jet truncation order must be at least 1");
        if (order > kMaxOrder)
            throw ConfigError("jet truncation order " + std::to_string(order) +
                              " exceeds the configured maximum " + std::to_string(kMaxOrder));
        static std::mutex mu;
        static std::map<std::pair<int, int>, std::shared_ptr<const JetSpace>> cache;
        std::lock_guard<std::mutex> lock(mu);
        auto key = std::make_pair(nvars, order);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        auto sp = std::shared_ptr<const JetSpace>(new JetSpace(nvars, order));
        cache.emplace(key, sp);
        return sp;
    }

    int nvars() const { return nvars_; }
    int order() const { return order_; }
    int size() const { return static_cast<int>(exponents_.size()); }

    const Exponents& exponents(int idx) const { return exponents_[idx]; }
    int degree(int idx) const { return degrees_[idx]; }

    /// prod of factorials of the exponents; converts a Taylor coefficient into
    /// the corresponding mixed partial derivative.
    double multifactorial(int idx) const { return multifactorial_[idx]; }

    /// Index of the given exponent vector, or -1 when it is out of range.
    int index_of(const Exponents& e) const {
        auto it = lookup_.find(e);
        return it == lookup_.end() ? -1 : it->second;
    }

    /// Index of m + e_var, or -1 when that would exceed the truncation order.
    int raise(int idx, int var) const { return raise_[static_cast<std::size_t>(idx) * nvars_ + var]; }

    /// Number of coefficients of degree <= d.
    int count_up_to_degree(int d) const {
        if (d < 0) return 0;
        if (d >= order_) return size();
        return cum_count_[d];
    }

    std::span<const ProductEntry> products() const { return products_; }

    /// Product entries restricted to results of degree <= d (entries are
    /// sorted by result degree).
    std::span<const ProductEntry> products_up_to_degree(int d) const {
        if (d < 0) return {};
        if (d > order_) d = order_;
        return std::span<const ProductEntry>(products_.data(), product_end_[d]);
    }

private:
    JetSpace(int nvars, int order) : nvars_(nvars), order_(order) { build(); }

    void build() {
        Exponents cur(nvars_, 0);
        for (int d = 0; d <= order_; ++d) emit(cur, 0, d);
        degrees_.resize(exponents_.size());
        multifactorial_.resize(exponents_.size());
        for (std::size_t i = 0; i < exponents_.size(); ++i) {
            degrees_[i] = degree_of(exponents_[i]);
            double mf = 1.0;
            for (auto e : exponents_[i])
                for (int k = 2; k <= e; ++k) mf *= k;
            multifactorial_[i] = mf;
            lookup_.emplace(exponents_[i], static_cast<int>(i));
        }
        cum_count_.assign(order_ + 1, 0);
        for (std::size_t i = 0; i < exponents_.size(); ++i) cum_count_[degrees_[i]]++;
        for (int d = 1; d <= order_; ++d) cum_count_[d] += cum_count_[d - 1];

        raise_.assign(exponents_.size() * nvars_, -1);
        Exponents tmp;
        for (std::size_t i = 0; i < exponents_.size(); ++i) {
            if (degrees_[i] == order_) continue;
            for (int v = 0; v < nvars_; ++v) {
                tmp = exponents_[i];
                tmp[v]++;
                raise_[i * nvars_ + v] = index_of(tmp);
            }
        }

        // Pair table for the Cauchy product. Indices are grouped by result so
        // multiplication is a single linear pass.
        for (int i = 0; i < size(); ++i) {
            int di = degrees_[i];
            int jmax = count_up_to_degree(order_ - di);
            for (int j = 0; j < jmax; ++j) {
                tmp = exponents_[i];
                const Exponents& ej = exponents_[j];
                for (int v = 0; v < nvars_; ++v) tmp[v] = static_cast<std::uint8_t>(tmp[v] + ej[v]);
                products_.push_back({index_of(tmp), i, j});
            }
        }
        std::sort(products_.begin(), products_.end(), [](const ProductEntry& a, const ProductEntry& b) {
            if (a.k != b.k) return a.k < b.k;
            return a.i < b.i;
        });
        product_end_.assign(order_ + 1, 0);
        {
            std::size_t pos = 0;
            for (int d = 0; d <= order_; ++d) {
                while (pos < products_.size() && degrees_[products_[pos].k] <= d) ++pos;
                product_end_[d] = pos;
            }
        }
    }

    void emit(Exponents& cur, int pos, int remaining) {
        if (pos == nvars_ - 1) {
            cur[pos] = static_cast<std::uint8_t>(remaining);
            exponents_.push_back(cur);
            cur[pos] = 0;
            return;
        }
        for (int e = remaining; e >= 0; --e) {
            cur[pos] = static_cast<std::uint8_t>(e);
            emit(cur, pos + 1, remaining - e);
        }
        cur[pos] = 0;
    }

    int nvars_;
    int order_;
    std::vector<Exponents> exponents_;
    std::vector<int> degrees_;
    std::vector<double> multifactorial_;
    std::map<Exponents, int> lookup_;
    std::vector<int> cum_count_;
    std::vector<std::int32_t> raise_;
    std::vector<ProductEntry> products_;
    std::vector<std::size_t> product_end_;
};

using JetSpacePtr = std::shared_ptr<const JetSpace>;

}  // namespace finsler
