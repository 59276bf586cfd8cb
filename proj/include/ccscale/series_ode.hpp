#pragma once

#include <cmath>
#include <map>
#include <tuple>
#include <vector>

#include "ccscale/series.hpp"

namespace ccscale {

/// Polynomial-in-the-unknowns series ODE along rays:
///
///   d/de F_l(e t) = sum_j sum_{|alpha| <= L} t_j a_{alpha,j,l}(e t) F(e t)^alpha,
///   F_l(0) = initial_l,
///
/// with the a_{alpha,j,l} series in t of dimension n_vars and alpha a
/// multi-index over the N unknowns.  The solution is the fixed point of the
/// Picard map in the series algebra.
struct SeriesODEProblem {
    int n_vars = 1;      // n: number of t variables
    int n_unknowns = 1;  // N: number of unknown functions
    int degree_bound = 1;  // L
    int max_degree = 8;    // truncation degree of the solution
    double r = 1.0;        // radius the coefficient bound D is taken at
    std::map<std::tuple<MultiIndex, int, int>, TruncatedSeries> coeffs;  // (alpha, j, l)
    std::vector<double> initial;

    /// D = max(|initial|, |a_{alpha,j,l}| at r); always computed from the data.
    double coefficient_bound() const {
        double D = 0.0;
        for (double v : initial) D = std::max(D, std::abs(v));
        for (const auto& [key, a] : coeffs) D = std::max(D, a.a_norm_at(r));
        return D;
    }

    /// Radius at which the fixed point is certified and bounded by 2D:
    /// r' = min{ r, D / (n 2^L (L+1)^N max(1,D)^{L+1}),
    ///              1 / (n (L+1)^{N+1} max(1,D)^L 2^L) }.
    double r_prime(double D) const {
        const double mD = std::max(1.0, D);
        const double t2 = D / (n_vars * std::pow(2.0, degree_bound) *
                               std::pow(degree_bound + 1.0, n_unknowns) *
                               std::pow(mD, degree_bound + 1));
        const double t3 = 1.0 / (n_vars * std::pow(degree_bound + 1.0, n_unknowns + 1) *
                                 std::pow(mD, degree_bound) * std::pow(2.0, degree_bound));
        return std::min(r, std::min(t2, t3));
    }
};

struct SeriesODESolution {
    std::vector<TruncatedSeries> F;  // dim n_vars, radius r'
    double D = 0.0;
    double r_prime = 0.0;
    double norm_bound = 0.0;  // max_l |F_l| at r'
    bool bound_satisfied = false;
    double residual = 0.0;  // coefficient residual of the ray ODE
    int iterations = 0;
};

namespace detail {

/// F^alpha over the unknowns, with a running product cache per call site.
inline TruncatedSeries unknown_power(const std::vector<TruncatedSeries>& F,
                                     const MultiIndex& alpha) {
    TruncatedSeries p = TruncatedSeries::constant(F.front().dim(), F.front().max_degree(),
                                                  F.front().radius(), 1.0);
    for (int l = 0; l < alpha.dim(); ++l)
        for (int e = 0; e < alpha[l]; ++e) p = p * F[static_cast<std::size_t>(l)];
    return p;
}

/// The right-hand sides S_{j,l} = sum_alpha a_{alpha,j,l} F^alpha.
inline std::vector<std::vector<TruncatedSeries>> ode_rhs(const SeriesODEProblem& p,
                                                         const std::vector<TruncatedSeries>& F) {
    std::vector<std::vector<TruncatedSeries>> S(
        static_cast<std::size_t>(p.n_vars),
        std::vector<TruncatedSeries>(static_cast<std::size_t>(p.n_unknowns),
                                     TruncatedSeries(p.n_vars, p.max_degree, F.front().radius())));
    std::map<MultiIndex, TruncatedSeries> pow_cache;
    for (const auto& [key, a] : p.coeffs) {
        const auto& [alpha, j, l] = key;
        auto it = pow_cache.find(alpha);
        if (it == pow_cache.end()) it = pow_cache.emplace(alpha, unknown_power(F, alpha)).first;
        S[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)] =
            S[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)] +
            a.with_radius(F.front().radius()) * it->second;
    }
    return S;
}

} // namespace detail

/// Picard iteration for the ray ODE.  The update reads, in factorial-normalized
/// coefficients,
///
///   F_{l,beta} <- (1/|beta|) sum_j beta_j S_{j,l,beta - e_j},    |beta| >= 1,
///
/// which is triangular in the total degree, so the iteration reaches the exact
/// truncated fixed point in at most max_degree + 1 sweeps.  The certified
/// radius r' and the bound |F_l| <= 2D are evaluated and reported.
inline SeriesODESolution solve_series_ode(const SeriesODEProblem& p) {
    if (static_cast<int>(p.initial.size()) != p.n_unknowns)
        throw StructuralError("solve_series_ode: initial values must match n_unknowns");
    for (const auto& [key, a] : p.coeffs) {
        const auto& [alpha, j, l] = key;
        if (alpha.dim() != p.n_unknowns || alpha.degree() > p.degree_bound)
            throw StructuralError("solve_series_ode: bad coefficient multi-index");
        if (j < 0 || j >= p.n_vars || l < 0 || l >= p.n_unknowns)
            throw StructuralError("solve_series_ode: coefficient index out of range");
        if (a.dim() != p.n_vars) throw StructuralError("solve_series_ode: coefficient dim");
    }

    SeriesODESolution out;
    out.D = p.coefficient_bound();
    out.r_prime = p.r_prime(out.D);
    const double rad = out.r_prime > 0.0 ? out.r_prime : p.r;

    std::vector<TruncatedSeries> F;
    for (int l = 0; l < p.n_unknowns; ++l)
        F.push_back(TruncatedSeries::constant(p.n_vars, p.max_degree, rad,
                                              p.initial[static_cast<std::size_t>(l)]));

    const auto indices = multi_indices_up_to(p.n_vars, p.max_degree);
    const int max_iter = p.max_degree + 2;
    for (int it = 0; it < max_iter + 100; ++it) {
        const auto S = detail::ode_rhs(p, F);
        std::vector<TruncatedSeries> next;
        double change = 0.0;
        for (int l = 0; l < p.n_unknowns; ++l) {
            TruncatedSeries g(p.n_vars, p.max_degree, rad);
            g.set_normalized(MultiIndex(p.n_vars), p.initial[static_cast<std::size_t>(l)]);
            for (const auto& beta : indices) {
                if (beta.degree() == 0) continue;
                double v = 0.0;
                for (int j = 0; j < p.n_vars; ++j) {
                    if (beta[j] == 0) continue;
                    v += beta[j] * S[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)]
                                       .normalized(beta - MultiIndex::unit(p.n_vars, j));
                }
                g.set_normalized(beta, v / beta.degree());
            }
            change = std::max(change, (g - F[static_cast<std::size_t>(l)]).max_abs_coefficient());
            next.push_back(g);
        }
        F = std::move(next);
        out.iterations = it + 1;
        if (change <= 1e-15 * std::max(1.0, out.D)) break;
        if (it >= max_iter + 98)
            throw ConvergenceError("solve_series_ode: Picard iteration failed to settle");
    }

    // coefficient residual of the ODE at the solution
    {
        const auto S = detail::ode_rhs(p, F);
        for (int l = 0; l < p.n_unknowns; ++l)
            for (const auto& beta : indices) {
                if (beta.degree() == 0) continue;
                double v = 0.0;
                for (int j = 0; j < p.n_vars; ++j)
                    if (beta[j] > 0)
                        v += beta[j] * S[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)]
                                           .normalized(beta - MultiIndex::unit(p.n_vars, j));
                out.residual = std::max(
                    out.residual,
                    std::abs(beta.degree() * F[static_cast<std::size_t>(l)].normalized(beta) - v));
            }
    }

    for (const auto& f : F) out.norm_bound = std::max(out.norm_bound, f.a_norm_at(out.r_prime));
    out.bound_satisfied = out.norm_bound <= 2.0 * out.D + 1e-12;
    out.F = std::move(F);
    return out;
}

} // namespace ccscale
