#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccscale {

/// Exponent vector of a multivariate monomial.  Ordered graded-lexicographically
/// so that containers keyed by MultiIndex iterate deterministically.
class MultiIndex {
public:
    MultiIndex() = default;
    explicit MultiIndex(int dim) : e_(static_cast<std::size_t>(dim), 0) {
        if (dim < 0) throw std::invalid_argument("MultiIndex: negative dimension");
    }
    MultiIndex(std::initializer_list<int> init) : e_(init) { check_nonnegative(); }
    explicit MultiIndex(std::vector<int> exps) : e_(std::move(exps)) { check_nonnegative(); }

    static MultiIndex unit(int dim, int j) {
        MultiIndex a(dim);
        a.e_.at(static_cast<std::size_t>(j)) = 1;
        return a;
    }

    int dim() const { return static_cast<int>(e_.size()); }
    int operator[](int j) const { return e_[static_cast<std::size_t>(j)]; }
    int& operator[](int j) { return e_[static_cast<std::size_t>(j)]; }
    const std::vector<int>& exponents() const { return e_; }

    int degree() const { return std::accumulate(e_.begin(), e_.end(), 0); }

    /// alpha! as a double; exact for the degrees this library works at.
    double factorial() const {
        double f = 1.0;
        for (int k : e_)
            for (int i = 2; i <= k; ++i) f *= i;
        return f;
    }

    MultiIndex operator+(const MultiIndex& b) const {
        MultiIndex r(*this);
        for (std::size_t i = 0; i < e_.size(); ++i) r.e_[i] += b.e_[i];
        return r;
    }

    /// Component-wise difference; only valid when *this >= b component-wise.
    MultiIndex operator-(const MultiIndex& b) const {
        MultiIndex r(*this);
        for (std::size_t i = 0; i < e_.size(); ++i) {
            r.e_[i] -= b.e_[i];
            if (r.e_[i] < 0) throw std::invalid_argument("MultiIndex: negative exponent in difference");
        }
        return r;
    }

    bool leq_componentwise(const MultiIndex& b) const {
        for (std::size_t i = 0; i < e_.size(); ++i)
            if (e_[i] > b.e_[i]) return false;
        return true;
    }

    bool operator==(const MultiIndex& b) const { return e_ == b.e_; }
    bool operator!=(const MultiIndex& b) const { return e_ != b.e_; }

    /// Graded-lexicographic order: first by total degree, then lexicographic.
    bool operator<(const MultiIndex& b) const {
        const int da = degree(), db = b.degree();
        if (da != db) return da < db;
        return e_ < b.e_;
    }

    /// binom(*this, beta) = prod_i binom(alpha_i, beta_i)
    double binomial(const MultiIndex& beta) const {
        double r = 1.0;
        for (std::size_t i = 0; i < e_.size(); ++i) {
            const int n = e_[i], k = beta.e_[i];
            if (k < 0 || k > n) return 0.0;
            double c = 1.0;
            for (int j = 1; j <= k; ++j) c = c * (n - k + j) / j;
            r *= c;
        }
        return r;
    }

    std::string to_string() const {
        std::string s = "(";
        for (std::size_t i = 0; i < e_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(e_[i]);
        }
        return s + ")";
    }

private:
    void check_nonnegative() const {
        for (int k : e_)
            if (k < 0) throw std::invalid_argument("MultiIndex: negative exponent");
    }

    std::vector<int> e_;
};

/// All multi-indices of dimension `dim` with total degree <= `max_degree`,
/// in graded-lexicographic order.
inline std::vector<MultiIndex> multi_indices_up_to(int dim, int max_degree) {
    std::vector<MultiIndex> out;
    if (dim == 0) {
        out.push_back(MultiIndex(0));
        return out;
    }
    MultiIndex a(dim);
    std::function<void(int, int)> rec = [&](int pos, int remaining) {
        if (pos == dim - 1) {
            a[pos] = remaining;
            out.push_back(a);
            return;
        }
        for (int k = 0; k <= remaining; ++k) {
            a[pos] = k;
            rec(pos + 1, remaining - k);
        }
    };
    for (int d = 0; d <= max_degree; ++d) rec(0, d);
    return out;
}

} // namespace ccscale
