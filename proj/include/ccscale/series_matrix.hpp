#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ccscale/errors.hpp"
#include "ccscale/series.hpp"

namespace ccscale {

/// Matrix with TruncatedSeries entries, all sharing (dim, max_degree, radius).
/// This realizes series taking values in the Banach algebra of n x n matrices;
/// the norm used is sum_alpha |A_alpha|_op / alpha! * r^|alpha| with |.|_op the
/// spectral norm of the coefficient matrix.
class SeriesMatrix {
public:
    SeriesMatrix() : rows_(0), cols_(0) {}

    SeriesMatrix(int rows, int cols, int dim, int max_degree, double radius)
        : rows_(rows), cols_(cols) {
        if (rows < 1 || cols < 1) throw StructuralError("SeriesMatrix: bad shape");
        e_.assign(static_cast<std::size_t>(rows * cols),
                  TruncatedSeries(dim, max_degree, radius));
    }

    static SeriesMatrix zero(int n, int dim, int max_degree, double radius) {
        return SeriesMatrix(n, n, dim, max_degree, radius);
    }

    static SeriesMatrix identity(int n, int dim, int max_degree, double radius) {
        SeriesMatrix m(n, n, dim, max_degree, radius);
        for (int i = 0; i < n; ++i)
            m.at(i, i) = TruncatedSeries::constant(dim, max_degree, radius, 1.0);
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int dim() const { return e_.front().dim(); }
    int max_degree() const { return e_.front().max_degree(); }
    double radius() const { return e_.front().radius(); }

    const TruncatedSeries& at(int i, int j) const {
        return e_[static_cast<std::size_t>(i * cols_ + j)];
    }
    TruncatedSeries& at(int i, int j) { return e_[static_cast<std::size_t>(i * cols_ + j)]; }

    SeriesMatrix operator+(const SeriesMatrix& b) const {
        check_same_shape(b);
        SeriesMatrix r(*this);
        for (std::size_t k = 0; k < e_.size(); ++k) r.e_[k] = e_[k] + b.e_[k];
        return r;
    }

    SeriesMatrix operator-(const SeriesMatrix& b) const { return *this + b * (-1.0); }

    SeriesMatrix operator*(double s) const {
        SeriesMatrix r(*this);
        for (auto& f : r.e_) f = f * s;
        return r;
    }

    SeriesMatrix operator*(const SeriesMatrix& b) const {
        if (cols_ != b.rows_) throw StructuralError("SeriesMatrix: shape mismatch in product");
        SeriesMatrix r(rows_, b.cols_, dim(), std::min(max_degree(), b.max_degree()), radius());
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < b.cols_; ++j) {
                TruncatedSeries s(dim(), r.max_degree(), radius());
                for (int k = 0; k < cols_; ++k) s = s + at(i, k) * b.at(k, j);
                r.at(i, j) = s;
            }
        return r;
    }

    SeriesMatrix scale_argument(double s) const { return map([&](const TruncatedSeries& f) { return f.scale_argument(s); }); }
    SeriesMatrix ray_average() const { return map([](const TruncatedSeries& f) { return f.ray_average(); }); }
    SeriesMatrix with_radius(double r) const { return map([&](const TruncatedSeries& f) { return f.with_radius(r); }); }

    /// Banach norm at radius s: sum over alpha of the spectral norm of the
    /// coefficient matrix, factorial-normalized.
    double a_norm_at(double s) const {
        std::map<MultiIndex, Eigen::MatrixXd> coeff;
        collect_coefficients(coeff);
        double n = 0.0;
        for (const auto& [a, m] : coeff) {
            const double op = m.jacobiSvd().singularValues()(0);
            n += op / a.factorial() * std::pow(s, a.degree());
        }
        return n;
    }
    double a_norm() const { return a_norm_at(radius()); }

    double max_abs_coefficient() const {
        double m = 0.0;
        for (const auto& f : e_) m = std::max(m, f.max_abs_coefficient());
        return m;
    }

    Eigen::MatrixXd evaluate(const std::vector<double>& t) const {
        Eigen::MatrixXd m(rows_, cols_);
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < cols_; ++j) m(i, j) = at(i, j).evaluate(t);
        return m;
    }

    Eigen::MatrixXd constant_part() const {
        Eigen::MatrixXd m(rows_, cols_);
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < cols_; ++j) m(i, j) = at(i, j).constant_term();
        return m;
    }

    /// Determinant of a square series matrix.  Leibniz expansion for n <= 4;
    /// for larger n fraction-free elimination with a Leibniz fallback when a
    /// pivot is not invertible in the truncated algebra.
    TruncatedSeries determinant() const {
        if (rows_ != cols_) throw StructuralError("determinant: matrix not square");
        const int n = rows_;
        if (n <= 4) return det_leibniz();
        // Bareiss on series; divisions are exact when the pivots have nonzero
        // constant term.
        SeriesMatrix w(*this);
        TruncatedSeries prev = TruncatedSeries::constant(dim(), max_degree(), radius(), 1.0);
        int sign = 1;
        for (int k = 0; k + 1 < n; ++k) {
            if (w.at(k, k).constant_term() == 0.0) {
                int p = -1;
                for (int i = k + 1; i < n; ++i)
                    if (w.at(i, k).constant_term() != 0.0) { p = i; break; }
                if (p < 0) return det_leibniz();
                for (int j = 0; j < n; ++j) std::swap(w.at(k, j), w.at(p, j));
                sign = -sign;
            }
            const TruncatedSeries inv_prev = prev.reciprocal();
            for (int i = k + 1; i < n; ++i)
                for (int j = k + 1; j < n; ++j)
                    w.at(i, j) = (w.at(i, j) * w.at(k, k) - w.at(i, k) * w.at(k, j)) * inv_prev;
            prev = w.at(k, k);
        }
        return w.at(n - 1, n - 1) * static_cast<double>(sign);
    }

    /// (I + A)^{-1} for *this = A, exact to the truncation degree.  The
    /// constant part is inverted numerically and the remainder, which is
    /// nilpotent in the truncated algebra, by a terminating Neumann series.
    SeriesMatrix inverse_of_identity_plus() const {
        if (rows_ != cols_) throw StructuralError("inverse: matrix not square");
        const int n = rows_;
        Eigen::MatrixXd a0 = Eigen::MatrixXd::Identity(n, n) + constant_part();
        Eigen::FullPivLU<Eigen::MatrixXd> lu(a0);
        if (!lu.isInvertible())
            throw ConvergenceError("inverse_of_identity_plus: I + A(0) is singular");
        Eigen::MatrixXd a0inv = lu.inverse();

        SeriesMatrix tail(*this);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                TruncatedSeries f = tail.at(i, j);
                f.set_normalized(MultiIndex(dim()), 0.0);
                tail.at(i, j) = f;
            }
        const SeriesMatrix b = from_constant(a0inv, dim(), max_degree(), radius()) * tail;

        SeriesMatrix acc = identity(n, dim(), max_degree(), radius());
        SeriesMatrix term = acc;
        for (int k = 1; k <= max_degree(); ++k) {
            term = term * b * (-1.0);
            if (term.max_abs_coefficient() == 0.0) break;
            acc = acc + term;
        }
        return acc * from_constant(a0inv, dim(), max_degree(), radius());
    }

    static SeriesMatrix from_constant(const Eigen::MatrixXd& m, int dim, int max_degree,
                                      double radius) {
        SeriesMatrix r(static_cast<int>(m.rows()), static_cast<int>(m.cols()), dim, max_degree,
                       radius);
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < m.cols(); ++j)
                if (m(i, j) != 0.0)
                    r.at(static_cast<int>(i), static_cast<int>(j)) =
                        TruncatedSeries::constant(dim, max_degree, radius, m(i, j));
        return r;
    }

private:
    template <class F>
    SeriesMatrix map(F&& f) const {
        SeriesMatrix r(*this);
        for (auto& x : r.e_) x = f(x);
        return r;
    }

    void check_same_shape(const SeriesMatrix& b) const {
        if (rows_ != b.rows_ || cols_ != b.cols_)
            throw StructuralError("SeriesMatrix: shape mismatch");
    }

    void collect_coefficients(std::map<MultiIndex, Eigen::MatrixXd>& out) const {
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < cols_; ++j)
                for (const auto& [a, v] : at(i, j).coefficients()) {
                    auto it = out.find(a);
                    if (it == out.end())
                        it = out.emplace(a, Eigen::MatrixXd::Zero(rows_, cols_)).first;
                    it->second(i, j) = v;
                }
    }

    TruncatedSeries det_leibniz() const {
        const int n = rows_;
        std::vector<int> perm(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
        TruncatedSeries acc(dim(), max_degree(), radius());
        do {
            int sign = 1;
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    if (perm[static_cast<std::size_t>(i)] > perm[static_cast<std::size_t>(j)])
                        sign = -sign;
            TruncatedSeries term =
                TruncatedSeries::constant(dim(), max_degree(), radius(), static_cast<double>(sign));
            for (int i = 0; i < n; ++i) term = term * at(i, perm[static_cast<std::size_t>(i)]);
            acc = acc + term;
        } while (std::next_permutation(perm.begin(), perm.end()));
        return acc;
    }

    int rows_, cols_;
    std::vector<TruncatedSeries> e_;
};

} // namespace ccscale
