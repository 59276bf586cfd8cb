#pragma once

#include <map>
#include <vector>

#include "ccscale/adapt.hpp"

namespace ccscale {

/// Density data of the induced Lebesgue density nu on the leaf through the
/// base point, everything expressed as series in the chart coordinates:
/// Lie_{X_j} nu = f_j nu with f_j = f_j^0 + h_j, g o Phi solving the linear
/// ray ODE, and h = (g o Phi) h0 the chart density Phi^* nu = h Leb.
struct DensityData {
    std::vector<TruncatedSeries> f0;   // f_j^0 (the nu_0 part)
    std::vector<TruncatedSeries> h_j;  // X_j |det| = h_j |det|
    std::vector<TruncatedSeries> f;    // f_j = f_j^0 + h_j
    TruncatedSeries g_phi;             // g o Phi
    TruncatedSeries h;                 // (g o Phi) h0
    double nu_at_x0 = 0.0;             // nu(X_{J0})(x0), the l2 norm of the minors
    std::map<IndexTuple, TruncatedSeries> det_ratio;  // det X_{K,J0} / |det X_{J0}| o Phi
    // gtilde[j][(K,L)]: ambient coefficients of X_j det X_{K,J0} = sum_L ... det X_{L,J0}
    std::vector<std::map<std::pair<IndexTuple, IndexTuple>, TruncatedSeries>> gtilde;
    SeriesODESolution ratio_ode;
    SeriesODESolution wedge_ode;
    double div_check_residual = -1.0;  // full-rank Lie-derivative cross-check
    double h_ratio_bound = 0.0;        // C with h/h(0) in [1/C, C] on the sample grid
    bool h_sign_constant = false;
};

namespace detail {

/// gtilde_{j,K}^L with X_j det X_{K,J0} = sum_L gtilde_{j,K}^L det X_{L,J0}:
/// the form part contributes signed partials of the field components, the
/// wedge part the trace of the reduced structure coefficients.
inline std::map<std::pair<IndexTuple, IndexTuple>, TruncatedSeries> gtilde_coefficients(
    const FieldSystem& sys, const IndexTuple& J0, int j,
    const std::map<std::tuple<int, int, int>, TruncatedSeries>& chat_ambient) {
    const int n = J0.size();
    const int N = sys.ambient_dim();
    std::map<std::pair<IndexTuple, IndexTuple>, TruncatedSeries> g;
    auto add = [&](const IndexTuple& K, const IndexTuple& L, const TruncatedSeries& s) {
        auto key = std::make_pair(K, L);
        auto it = g.find(key);
        if (it == g.end())
            g.emplace(std::move(key), s);
        else
            it->second = it->second + s;
    };

    TruncatedSeries trace(N, sys.max_degree(), sys.radius());
    for (int l = 0; l < n; ++l) {
        auto it = chat_ambient.find({j, l, l});
        if (it != chat_ambient.end()) trace = trace + it->second;
    }

    for (const auto& K : increasing_tuples(n, N)) {
        if (!trace.is_zero()) add(K, K, trace);
        for (int slot = 0; slot < n; ++slot)
            for (int l = 0; l < N; ++l) {
                const TruncatedSeries da = sys.field(J0[j])
                                               .components[static_cast<std::size_t>(K[slot])]
                                               .differentiate(l)
                                               .truncated(sys.max_degree());
                if (da.is_zero()) continue;
                std::vector<int> tup = K.entries;
                tup[static_cast<std::size_t>(slot)] = l;
                const int sign = sort_sign(tup);
                if (sign == 0) continue;
                add(K, IndexTuple{tup}, da * static_cast<double>(sign));
            }
    }
    return g;
}

} // namespace detail

/// Builds the f_j of Lie_{X_j} nu = f_j nu for the induced Lebesgue density:
/// f_j^0 from the wedge-quotient series, h_j from the determinant-quotient
/// series solving the cubic ray ODE.  For full-rank systems the result is
/// cross-checked against the divergence on the stored coefficients.
inline DensityData euclidean_density_data(const FieldSystem& system, const AdaptedChart& chart) {
    if (chart.degenerate()) throw ChartError("euclidean_density_data: degenerate chart");
    FieldSystem sys = recenter_system(system, chart.base_point);
    if (!sys.structure) {
        auto fit = fit_structure_coeffs(sys, Box::centered(chart.base_point, 0.25 * sys.radius()),
                                        std::min(6, sys.max_degree()), true);
        sys.structure = std::move(fit.coefficients);
    }
    const int n = chart.n;
    const int N = sys.ambient_dim();
    const int M = chart.A.max_degree();
    const IndexTuple& J0 = chart.J0;

    std::vector<TruncatedSeries> phi_rel = chart.Phi;
    for (int k = 0; k < N; ++k)
        phi_rel[static_cast<std::size_t>(k)].add_normalized(MultiIndex(n), -chart.base_point(k));

    const CramerReduction red = cramer_reduce(sys, J0);  // ambient chat

    DensityData dd;

    // determinant quotients R_K via the cubic ray ODE
    const auto Ks = increasing_tuples(n, N);
    const int Nu = static_cast<int>(Ks.size());
    std::map<IndexTuple, int> kidx;
    for (int i = 0; i < Nu; ++i) kidx[Ks[static_cast<std::size_t>(i)]] = i;

    dd.gtilde.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
        dd.gtilde[static_cast<std::size_t>(j)] = detail::gtilde_coefficients(sys, J0, j, red.chat);
    const auto& gt = dd.gtilde;

    SeriesODEProblem rp;
    rp.n_vars = n;
    rp.n_unknowns = Nu;
    rp.degree_bound = 3;
    rp.max_degree = M;
    rp.r = chart.eta1;
    for (int j = 0; j < n; ++j) {
        std::vector<std::vector<TruncatedSeries>> gphi(
            static_cast<std::size_t>(Nu),
            std::vector<TruncatedSeries>(static_cast<std::size_t>(Nu),
                                         TruncatedSeries(n, M, chart.eta1)));
        for (const auto& [KL, s] : gt[static_cast<std::size_t>(j)])
            gphi[static_cast<std::size_t>(kidx.at(KL.first))]
                [static_cast<std::size_t>(kidx.at(KL.second))] =
                    s.compose(phi_rel).with_radius(chart.eta1);
        for (int K = 0; K < Nu; ++K)
            for (int L = 0; L < Nu; ++L) {
                const auto& s = gphi[static_cast<std::size_t>(K)][static_cast<std::size_t>(L)];
                if (s.is_zero()) continue;
                MultiIndex lin(Nu);
                lin[L] = 1;
                add_coeff(rp, lin, j, K, s);
                for (int K2 = 0; K2 < Nu; ++K2) {
                    MultiIndex cub(Nu);
                    cub[K2] += 1;
                    cub[K] += 1;
                    cub[L] += 1;
                    add_coeff(rp, cub, j, K2, s * (-1.0));
                }
            }
    }
    const auto minors0 = wedge_minors(sys, J0, chart.base_point);
    double norm2 = 0.0;
    for (double v : minors0) norm2 += v * v;
    dd.nu_at_x0 = std::sqrt(norm2);
    if (dd.nu_at_x0 <= 0.0) throw RankError("euclidean_density_data: vanishing wedge at x0");
    rp.initial.resize(static_cast<std::size_t>(Nu));
    for (int i = 0; i < Nu; ++i)
        rp.initial[static_cast<std::size_t>(i)] = minors0[static_cast<std::size_t>(i)] / dd.nu_at_x0;
    dd.ratio_ode = solve_series_ode(rp);
    for (int i = 0; i < Nu; ++i)
        dd.det_ratio.emplace(Ks[static_cast<std::size_t>(i)],
                             dd.ratio_ode.F[static_cast<std::size_t>(i)].with_radius(chart.eta1));

    // h_j = sum_{K,L} (gtilde_{j,K}^L o Phi) R_K R_L
    for (int j = 0; j < n; ++j) {
        TruncatedSeries hj(n, M, chart.eta1);
        for (const auto& [KL, s] : gt[static_cast<std::size_t>(j)]) {
            const auto& RK = dd.det_ratio.at(KL.first);
            const auto& RL = dd.det_ratio.at(KL.second);
            hj = hj + s.compose(phi_rel).with_radius(chart.eta1) * RK * RL;
        }
        dd.h_j.push_back(hj);
    }

    // f_j^0 = - sum_K g_{j,J0}^K (wedge ratio series)
    const auto wrs = wedge_ratio_series(sys, chart.base_point, J0, phi_rel, chart.eta1);
    dd.wedge_ode = wrs.ode;
    for (int j = 0; j < n; ++j) {
        TruncatedSeries f0(n, M, chart.eta1);
        for (const auto& [K, s] : lie_wedge_coefficients(sys, J0[j], J0))
            f0 = f0 - s.compose(phi_rel).with_radius(chart.eta1) * wrs.ratio.at(K);
        dd.f0.push_back(f0);
        dd.f.push_back(f0 + dd.h_j[static_cast<std::size_t>(j)]);
    }

    if (n == N) {
        // leaf is an open set: f_j must match the divergence of X_{J0[j]}.
        // The defect is measured in the series norm at eta1 (fitted structure
        // maps only pin functions on the box, not raw coefficients).
        double resid = 0.0;
        for (int j = 0; j < n; ++j) {
            TruncatedSeries div(N, M, sys.radius());
            for (int k = 0; k < N; ++k)
                div = div + sys.field(J0[j]).components[static_cast<std::size_t>(k)]
                                .differentiate(k)
                                .truncated(M);
            const TruncatedSeries expect = div.compose(phi_rel).with_radius(chart.eta1);
            resid = std::max(resid, (dd.f[static_cast<std::size_t>(j)] - expect).a_norm());
        }
        dd.div_check_residual = resid;
    }
    return dd;
}

/// Chart-verification item for full-rank charts: the defect of h against
/// det dPhi in the series norm at eta1, which bounds the disagreement of the
/// two functions on the chart ball.  (Raw coefficients are not comparable
/// when the structure was fitted: a box fit matches functions, not
/// high-degree Taylor coefficients.)  Returns -1 when the leaf is a proper
/// submanifold; h is then a surface density, not a Jacobian.
inline double det_dphi_vs_h(const AdaptedChart& chart, const DensityData& dd) {
    if (chart.degenerate()) return -1.0;
    const int n = chart.n;
    const int N = static_cast<int>(chart.Phi.size());
    if (n != N) return -1.0;
    SeriesMatrix dphi(n, n, n, chart.A.max_degree() - 1, chart.eta1);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            dphi.at(i, j) = chart.Phi[static_cast<std::size_t>(i)].differentiate(j)
                                .with_radius(chart.eta1);
    const TruncatedSeries det = dphi.determinant();
    // h carries |det dPhi|; align the sign through the value at 0
    const double sign = det.constant_term() < 0.0 ? -1.0 : 1.0;
    return (det * sign - dd.h.truncated(det.max_degree())).a_norm();
}

/// Solves the linear ray ODE for g o Phi and assembles h:
/// g o Phi = exp(int_0^1 sum_j t_j (f_j - f_j^0)(e t) de) g(x0), h = (g o Phi) h0.
/// Records whether h keeps the sign of h(0) on a chart sample grid and the
/// two-sided ratio bound C.
inline DensityData density_series(const AdaptedChart& chart, DensityData dd) {
    if (chart.degenerate()) throw ChartError("density_series: degenerate chart");
    const int n = chart.n;
    const int M = chart.A.max_degree();

    TruncatedSeries F(n, M, chart.eta1);
    for (int j = 0; j < n; ++j) {
        const TruncatedSeries w =
            (dd.f[static_cast<std::size_t>(j)] - dd.f0[static_cast<std::size_t>(j)])
                .ray_average();
        F = F + TruncatedSeries::variable(n, M, chart.eta1, j) * w;
    }
    dd.g_phi = F.exp_zero_constant() * dd.nu_at_x0;
    dd.h = dd.g_phi * chart.h0;

    const double h0val = dd.h.constant_term();
    dd.h_sign_constant = true;
    dd.h_ratio_bound = 1.0;
    const double box = 0.9 * chart.eta1 / std::sqrt(static_cast<double>(n));
    for (const auto& t : tensor_grid(Box::centered(Point::Zero(n), box), 5, 4000)) {
        const double v = dd.h.evaluate(to_std(t));
        if (v * h0val <= 0.0) dd.h_sign_constant = false;
        else
            dd.h_ratio_bound =
                std::max(dd.h_ratio_bound, std::max(v / h0val, h0val / v));
    }
    return dd;
}

} // namespace ccscale
