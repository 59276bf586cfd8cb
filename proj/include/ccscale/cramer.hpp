#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "ccscale/vector_field.hpp"

namespace ccscale {

/// Determinant, as an ambient series, of the n x n submatrix of
/// (X_{J_1} | ... | X_{J_n}) restricted to the rows listed in K.
inline TruncatedSeries minor_series(const FieldSystem& sys, const IndexTuple& rows,
                                    const IndexTuple& J) {
    const int n = J.size();
    SeriesMatrix m(n, n, sys.ambient_dim(), sys.max_degree(), sys.radius());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            m.at(i, j) = sys.field(J[j]).components[static_cast<std::size_t>(rows[i])];
    return m.determinant();
}

struct CramerReduction {
    // btilde[k][l]: series with X_k = sum_l btilde_k^l X_{J0[l]}
    std::vector<std::vector<TruncatedSeries>> btilde;
    // chat[(i,j,l)]: structure of the J0 basis, [X_{J0[i]}, X_{J0[j]}] = sum chat X_{J0[l]}
    std::map<std::tuple<int, int, int>, TruncatedSeries> chat;
    IndexTuple pivot_rows;
    double basis_residual = 0.0;  // max defect of X_k = sum_l btilde_k^l X_l at samples
};

/// Expresses every field in the J0 basis through quotients of wedge minors
/// (Cramer's rule) and reduces the structure coefficients onto that basis:
/// chat_{i,j}^l = sum_k c_{i,j}^k btilde_k^l.  All outputs are ambient series;
/// pass `phi_rel` (the chart map relative to the center, so each entry has
/// zero constant term) to get them composed with the chart instead.
inline CramerReduction cramer_reduce(const FieldSystem& sys, const IndexTuple& J0,
                                     const std::optional<std::vector<TruncatedSeries>>& phi_rel =
                                         std::nullopt) {
    if (!sys.structure) throw StructuralError("cramer_reduce: structure coefficients required");
    const int n = J0.size();
    const int q = sys.q();
    const int N = sys.ambient_dim();

    // pivot row tuple: largest |minor| of X_{J0} at the center
    const auto minors0 = wedge_minors(sys, J0, sys.center());
    const auto row_tuples = increasing_tuples(n, N);
    std::size_t piv = 0;
    for (std::size_t k = 1; k < minors0.size(); ++k)
        if (std::abs(minors0[k]) > std::abs(minors0[piv])) piv = k;
    if (std::abs(minors0[piv]) < 1e-300)
        throw RankError("cramer_reduce: J0 degenerate at the center");

    CramerReduction out;
    out.pivot_rows = row_tuples[piv];
    const TruncatedSeries den = minor_series(sys, out.pivot_rows, J0);
    const TruncatedSeries den_inv = den.reciprocal();

    out.btilde.assign(static_cast<std::size_t>(q),
                      std::vector<TruncatedSeries>(
                          static_cast<std::size_t>(n),
                          TruncatedSeries(N, sys.max_degree(), sys.radius())));
    for (int k = 0; k < q; ++k) {
        bool in_basis = false;
        for (int l = 0; l < n; ++l)
            if (J0[l] == k) {
                out.btilde[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)] =
                    TruncatedSeries::constant(N, sys.max_degree(), sys.radius(), 1.0);
                in_basis = true;
            }
        if (in_basis) continue;
        for (int l = 0; l < n; ++l) {
            IndexTuple Jlk = J0;
            Jlk.entries[static_cast<std::size_t>(l)] = k;
            // repeated index => zero wedge => zero coefficient
            std::vector<int> sorted = Jlk.entries;
            if (sort_sign(sorted) == 0) continue;
            out.btilde[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)] =
                minor_series(sys, out.pivot_rows, Jlk) * den_inv;
        }
    }

    // defect of the basis expansion at a few sample points near the center
    {
        const double h = 0.05 * sys.radius();
        std::vector<Point> samples{sys.center()};
        for (int i = 0; i < N; ++i) {
            Point p = sys.center();
            p(i) += h;
            samples.push_back(p);
        }
        for (const auto& x : samples) {
            const Eigen::MatrixXd vals = sys.value_matrix(x);
            const std::vector<double> u = to_std(x - sys.center());
            for (int k = 0; k < q; ++k) {
                Point d = vals.col(k);
                for (int l = 0; l < n; ++l)
                    d -= out.btilde[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)]
                             .evaluate(u) *
                         vals.col(J0[l]);
                out.basis_residual = std::max(out.basis_residual, d.lpNorm<Eigen::Infinity>());
            }
        }
    }

    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int l = 0; l < n; ++l) {
                TruncatedSeries s(N, sys.max_degree(), sys.radius());
                for (int k = 0; k < q; ++k) {
                    const TruncatedSeries c = sys.structure_coefficient(J0[i], J0[j], k);
                    if (c.is_zero()) continue;
                    const auto& b = out.btilde[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)];
                    if (b.is_zero()) continue;
                    s = s + c * b;
                }
                if (!s.is_zero()) out.chat[{i, j, l}] = s;
            }

    if (phi_rel) {
        const std::vector<TruncatedSeries>& rel = *phi_rel;
        for (auto& row : out.btilde)
            for (auto& b : row)
                b = b.is_zero() ? TruncatedSeries(rel.front().dim(), rel.front().max_degree(),
                                                  rel.front().radius())
                                : b.compose(rel);
        for (auto& [key, c] : out.chat) c = c.compose(rel);
    }
    return out;
}

} // namespace ccscale
