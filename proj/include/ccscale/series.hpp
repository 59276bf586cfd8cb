#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccscale/errors.hpp"
#include "ccscale/multi_index.hpp"

namespace ccscale {

/// Multivariate real power series truncated at a total degree, stored in the
/// factorial-normalized convention
///
///     f(t) = sum_alpha c_alpha / alpha! * t^alpha,
///
/// together with a convergence radius r.  The weighted norm
///
///     |f| = sum_alpha |c_alpha| / alpha! * r^|alpha|
///
/// is sub-multiplicative, which is what every bound in this library leans on.
/// Truncated norms are lower bounds of the untruncated ones; results derived
/// from them are "verified up to the truncation degree".
///
/// Binary operations require matching dimension and radius and truncate to the
/// smaller of the two degrees.  Values are immutable in spirit: all operations
/// return new series.
class TruncatedSeries {
public:
    TruncatedSeries() : dim_(1), max_degree_(0), radius_(1.0) {}

    TruncatedSeries(int dim, int max_degree, double radius)
        : dim_(dim), max_degree_(max_degree), radius_(radius) {
        if (dim < 1) throw StructuralError("TruncatedSeries: dim must be >= 1");
        if (max_degree < 0) throw StructuralError("TruncatedSeries: negative max_degree");
        if (!(radius > 0.0)) throw StructuralError("TruncatedSeries: radius must be positive");
    }

    static TruncatedSeries constant(int dim, int max_degree, double radius, double value) {
        TruncatedSeries f(dim, max_degree, radius);
        f.set_normalized(MultiIndex(dim), value);
        return f;
    }

    /// Monomial coeff * t^alpha given by its plain (Taylor) coefficient.
    static TruncatedSeries monomial(int dim, int max_degree, double radius,
                                    const MultiIndex& alpha, double plain_coeff) {
        TruncatedSeries f(dim, max_degree, radius);
        f.set_plain(alpha, plain_coeff);
        return f;
    }

    static TruncatedSeries variable(int dim, int max_degree, double radius, int j) {
        return monomial(dim, max_degree, radius, MultiIndex::unit(dim, j), 1.0);
    }

    int dim() const { return dim_; }
    int max_degree() const { return max_degree_; }
    double radius() const { return radius_; }
    const std::map<MultiIndex, double>& coefficients() const { return c_; }

    double normalized(const MultiIndex& alpha) const {
        auto it = c_.find(alpha);
        return it == c_.end() ? 0.0 : it->second;
    }
    /// Plain Taylor coefficient: c_alpha / alpha!.
    double plain(const MultiIndex& alpha) const { return normalized(alpha) / alpha.factorial(); }

    void set_normalized(const MultiIndex& alpha, double value) {
        check_index(alpha);
        if (value == 0.0)
            c_.erase(alpha);
        else
            c_[alpha] = value;
    }
    void set_plain(const MultiIndex& alpha, double value) {
        set_normalized(alpha, value * alpha.factorial());
    }
    void add_normalized(const MultiIndex& alpha, double value) {
        set_normalized(alpha, normalized(alpha) + value);
    }

    bool is_zero() const { return c_.empty(); }
    double constant_term() const { return normalized(MultiIndex(dim_)); }

    /// sum_alpha |c_alpha|/alpha! * s^|alpha| evaluated at an arbitrary radius s.
    double a_norm_at(double s) const {
        double n = 0.0;
        for (const auto& [a, v] : c_) n += std::abs(v) / a.factorial() * std::pow(s, a.degree());
        return n;
    }
    double a_norm() const { return a_norm_at(radius_); }

    double max_abs_coefficient() const {
        double m = 0.0;
        for (const auto& [a, v] : c_) m = std::max(m, std::abs(v));
        return m;
    }

    TruncatedSeries with_radius(double r) const {
        TruncatedSeries f(*this);
        if (!(r > 0.0)) throw StructuralError("with_radius: radius must be positive");
        f.radius_ = r;
        return f;
    }

    TruncatedSeries truncated(int degree) const {
        TruncatedSeries f(dim_, std::max(degree, 0), radius_);
        for (const auto& [a, v] : c_)
            if (a.degree() <= f.max_degree_) f.c_[a] = v;
        return f;
    }

    TruncatedSeries operator+(const TruncatedSeries& g) const {
        TruncatedSeries r = prepare_binary(g);
        for (const auto& [a, v] : c_)
            if (a.degree() <= r.max_degree_) r.add_normalized(a, v);
        for (const auto& [a, v] : g.c_)
            if (a.degree() <= r.max_degree_) r.add_normalized(a, v);
        return r;
    }

    TruncatedSeries operator-(const TruncatedSeries& g) const { return *this + g * (-1.0); }

    TruncatedSeries operator*(double s) const {
        TruncatedSeries r(*this);
        if (s == 0.0) {
            r.c_.clear();
            return r;
        }
        for (auto& [a, v] : r.c_) v *= s;
        return r;
    }

    /// Cauchy product, truncated to min of the operand degrees.  In the
    /// normalized convention the product coefficient picks up a binomial:
    /// (fg)_gamma = sum_{alpha+beta=gamma} binom(gamma, alpha) f_alpha g_beta.
    TruncatedSeries operator*(const TruncatedSeries& g) const {
        TruncatedSeries r = prepare_binary(g);
        for (const auto& [a, fa] : c_) {
            const int da = a.degree();
            if (da > r.max_degree_) continue;
            for (const auto& [b, gb] : g.c_) {
                if (da + b.degree() > r.max_degree_) continue;
                const MultiIndex gamma = a + b;
                r.add_normalized(gamma, gamma.binomial(a) * fa * gb);
            }
        }
        return r;
    }

    /// f(s t): coefficient at alpha scales by s^|alpha|.  Requires s in [0,1];
    /// outside that range the radius bookkeeping would be wrong.
    TruncatedSeries scale_argument(double s) const {
        if (!(s >= 0.0 && s <= 1.0)) throw DomainError("scale_argument: s must lie in [0,1]");
        TruncatedSeries r(dim_, max_degree_, radius_);
        for (const auto& [a, v] : c_) {
            const double w = v * std::pow(s, a.degree());
            if (w != 0.0) r.c_[a] = w;
        }
        return r;
    }

    /// int_0^1 f(s t) ds: coefficient at alpha divides by |alpha|+1.  Exact.
    TruncatedSeries ray_average() const {
        TruncatedSeries r(dim_, max_degree_, radius_);
        for (const auto& [a, v] : c_) r.c_[a] = v / (a.degree() + 1);
        return r;
    }

    /// Term-wise d/dt_j, truncated to max_degree-1.  In the normalized
    /// convention this is an index shift: (df)_alpha = c_{alpha+e_j}.
    TruncatedSeries differentiate(int j) const {
        if (j < 0 || j >= dim_) throw StructuralError("differentiate: variable index out of range");
        TruncatedSeries r(dim_, std::max(max_degree_ - 1, 0), radius_);
        const MultiIndex ej = MultiIndex::unit(dim_, j);
        for (const auto& [a, v] : c_) {
            if (a[j] == 0) continue;
            const MultiIndex b = a - ej;
            if (b.degree() <= r.max_degree_) r.c_[b] = v;
        }
        return r;
    }

    /// Horner-free evaluation of the truncated polynomial at a point.
    double evaluate(const std::vector<double>& t) const {
        if (static_cast<int>(t.size()) != dim_)
            throw StructuralError("evaluate: dimension mismatch");
        double s = 0.0;
        for (const auto& [a, v] : c_) {
            double mono = 1.0;
            for (int i = 0; i < dim_; ++i)
                for (int k = 0; k < a[i]; ++k) mono *= t[static_cast<std::size_t>(i)];
            s += v / a.factorial() * mono;
        }
        return s;
    }

    bool inside_radius(const std::vector<double>& t) const {
        double n2 = 0.0;
        for (double x : t) n2 += x * x;
        return std::sqrt(n2) < radius_;
    }

    /// Composition f(Phi_1(t),...,Phi_dim(t)) to the truncation degree.
    /// Each inner series must have zero constant term (the composition must
    /// stay inside the expansion chart of f); the inner series share dim and
    /// radius among themselves but may differ from f's.
    TruncatedSeries compose(const std::vector<TruncatedSeries>& inner) const {
        if (static_cast<int>(inner.size()) != dim_)
            throw StructuralError("compose: need one inner series per variable");
        for (const auto& p : inner) {
            if (p.dim() != inner.front().dim() || p.radius() != inner.front().radius() ||
                p.max_degree() != inner.front().max_degree())
                throw StructuralError("compose: inner series must share dim, degree and radius");
            if (p.constant_term() != 0.0)
                throw DomainError("compose: inner series must have zero constant term");
        }
        const int idim = inner.front().dim();
        const int ideg = std::min(max_degree_, inner.front().max_degree());
        const double irad = inner.front().radius();
        TruncatedSeries out(idim, ideg, irad);

        // Powers of the inner series, built incrementally along graded-lex order.
        std::map<MultiIndex, TruncatedSeries> pow_cache;
        pow_cache[MultiIndex(dim_)] = TruncatedSeries::constant(idim, ideg, irad, 1.0);
        auto power = [&](const MultiIndex& alpha, auto&& self) -> const TruncatedSeries& {
            auto it = pow_cache.find(alpha);
            if (it != pow_cache.end()) return it->second;
            int j = 0;
            while (alpha[j] == 0) ++j;
            const MultiIndex prev = alpha - MultiIndex::unit(dim_, j);
            TruncatedSeries p = self(prev, self) * inner[static_cast<std::size_t>(j)];
            return pow_cache.emplace(alpha, std::move(p)).first->second;
        };

        for (const auto& [a, v] : c_) {
            if (a.degree() > ideg) continue;  // inner has no constant term
            out = out + power(a, power) * (v / a.factorial());
        }
        return out;
    }

    /// 1/f for f with nonzero constant term, exact to the truncation degree.
    TruncatedSeries reciprocal() const {
        const double c0 = constant_term();
        if (c0 == 0.0) throw ConvergenceError("reciprocal: zero constant term");
        const TruncatedSeries w = (*this * (1.0 / c0)) - constant(dim_, max_degree_, radius_, 1.0);
        TruncatedSeries acc = constant(dim_, max_degree_, radius_, 1.0);
        TruncatedSeries term = acc;
        for (int k = 1; k <= max_degree_; ++k) {
            term = term * w * (-1.0);
            if (term.is_zero()) break;
            acc = acc + term;
        }
        return acc * (1.0 / c0);
    }

    /// exp(f) for f with zero constant term; the sum terminates at the
    /// truncation degree.
    TruncatedSeries exp_zero_constant() const {
        if (constant_term() != 0.0)
            throw DomainError("exp_zero_constant: nonzero constant term");
        TruncatedSeries acc = constant(dim_, max_degree_, radius_, 1.0);
        TruncatedSeries term = acc;
        for (int k = 1; k <= max_degree_; ++k) {
            term = term * *this * (1.0 / k);
            if (term.is_zero()) break;
            acc = acc + term;
        }
        return acc;
    }

    std::string to_string() const {
        if (c_.empty()) return "0";
        std::string s;
        for (const auto& [a, v] : c_) {
            if (!s.empty()) s += " + ";
            s += std::to_string(v / a.factorial()) + "*t^" + a.to_string();
        }
        return s;
    }

private:
    void check_index(const MultiIndex& alpha) const {
        if (alpha.dim() != dim_) throw StructuralError("coefficient index has wrong dimension");
        if (alpha.degree() > max_degree_)
            throw StructuralError("coefficient index exceeds truncation degree");
    }

    TruncatedSeries prepare_binary(const TruncatedSeries& g) const {
        if (dim_ != g.dim_) throw StructuralError("series dimension mismatch");
        if (radius_ != g.radius_) throw StructuralError("series radius mismatch");
        return TruncatedSeries(dim_, std::min(max_degree_, g.max_degree_), radius_);
    }

    int dim_;
    int max_degree_;
    double radius_;
    std::map<MultiIndex, double> c_;  // factorial-normalized coefficients
};

inline TruncatedSeries operator*(double s, const TruncatedSeries& f) { return f * s; }

/// Re-expands a polynomial (exactly known series) around a shifted center:
/// returns g with g(u) = f(u + shift).  Exact when f's stored coefficients are
/// the whole function, which is the only case recentering is offered for.
inline TruncatedSeries recenter(const TruncatedSeries& f, const std::vector<double>& shift) {
    if (static_cast<int>(shift.size()) != f.dim())
        throw StructuralError("recenter: shift dimension mismatch");
    TruncatedSeries g(f.dim(), f.max_degree(), f.radius());
    for (const auto& [a, v] : f.coefficients()) {
        const double pf = v / a.factorial();
        // expand prod_i (u_i + shift_i)^{a_i}
        std::vector<MultiIndex> betas;
        betas.push_back(MultiIndex(f.dim()));
        std::vector<double> weights{pf};
        for (int i = 0; i < f.dim(); ++i) {
            std::vector<MultiIndex> nb;
            std::vector<double> nw;
            for (std::size_t k = 0; k < betas.size(); ++k) {
                for (int j = 0; j <= a[i]; ++j) {
                    MultiIndex b = betas[k];
                    b[i] += j;
                    double binom = 1.0;
                    for (int l = 1; l <= j; ++l) binom = binom * (a[i] - j + l) / l;
                    nb.push_back(b);
                    nw.push_back(weights[k] * binom *
                                 std::pow(shift[static_cast<std::size_t>(i)], a[i] - j));
                }
            }
            betas = std::move(nb);
            weights = std::move(nw);
        }
        for (std::size_t k = 0; k < betas.size(); ++k)
            if (betas[k].degree() <= g.max_degree() && weights[k] != 0.0)
                g.set_plain(betas[k], g.plain(betas[k]) + weights[k]);
    }
    return g;
}

} // namespace ccscale
