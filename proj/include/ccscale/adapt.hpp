#pragma once

#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "ccscale/cramer.hpp"
#include "ccscale/flow.hpp"
#include "ccscale/series_matrix.hpp"
#include "ccscale/series_ode.hpp"
#include "ccscale/vector_field.hpp"

namespace ccscale {

/// The system re-expanded around a new base point.  Exact for polynomial data,
/// which is what the file format admits; offered explicitly rather than done
/// silently because re-expansion changes the radius bookkeeping.
inline FieldSystem recenter_system(const FieldSystem& sys, const Point& x0) {
    if ((x0 - sys.center()).lpNorm<Eigen::Infinity>() == 0.0) return sys;
    const std::vector<double> shift = to_std(x0 - sys.center());
    std::vector<WeightedField> fields = sys.fields;
    for (auto& wf : fields) {
        wf.field.center = x0;
        for (auto& c : wf.field.components) c = recenter(c, shift);
    }
    std::optional<StructureMap> structure;
    if (sys.structure) {
        structure.emplace();
        for (const auto& [k, c] : *sys.structure) (*structure)[k] = recenter(c, shift);
    }
    return FieldSystem{std::move(fields), std::move(structure)};
}

struct AssembledC {
    SeriesMatrix C;                  // C(t) = sum_l t_l C_l(t)
    std::vector<SeriesMatrix> C_l;   // n matrices, entries chat_{j,l}^k o Phi
};

/// C_l has (j,k) entry chat_{j,l}^k composed with the chart; C(0) = 0.
inline AssembledC assemble_C(const std::map<std::tuple<int, int, int>, TruncatedSeries>& chat_phi,
                             int n, int max_degree, double radius) {
    AssembledC out;
    out.C = SeriesMatrix::zero(n, n, max_degree, radius);
    for (int l = 0; l < n; ++l) {
        SeriesMatrix Cl = SeriesMatrix::zero(n, n, max_degree, radius);
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                auto it = chat_phi.find({j, l, k});
                if (it != chat_phi.end()) Cl.at(j, k) = it->second.with_radius(radius);
            }
        const TruncatedSeries tl = TruncatedSeries::variable(n, max_degree, radius, l);
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                out.C.at(j, k) = out.C.at(j, k) + tl * Cl.at(j, k);
        out.C_l.push_back(std::move(Cl));
    }
    return out;
}

struct ContractionSolve {
    SeriesMatrix A;
    double eta1 = 0.0;
    double D = 0.0;
    int iterations = 0;
    double fixed_point_residual = 0.0;  // |A - T(A)|
    double ode_residual = 0.0;          // max |(|a|+1) A_a + (A^2 + CA + C)_a|
    double a_norm = 0.0;                // Banach norm of A at eta1
};

/// The integral operator behind the A-matrix equation:
/// T(A) = -int_0^1 A(sx)^2 + C(sx) A(sx) + C(sx) ds = -ray_average(A^2 + CA + C).
inline SeriesMatrix contraction_map(const SeriesMatrix& A, const SeriesMatrix& C) {
    return (A * A + C * A + C).ray_average() * (-1.0);
}

/// Solves d/dr rA(r theta) = -A^2 - CA - C, A(0) = 0 by iterating T from 0.
/// D is always recomputed as sum_l |C_l| at eta_hat; eta1 = min(eta_hat, 5/8D).
/// The iteration is triangular in the total degree, so it terminates exactly;
/// the 13/24 contraction factor guarantees it would converge even without
/// truncation.
inline ContractionSolve solve_A_contraction(const std::vector<SeriesMatrix>& C_l,
                                            double eta_hat) {
    if (C_l.empty()) throw StructuralError("solve_A_contraction: need the C_l family");
    const int n = C_l.front().rows();
    const int M = C_l.front().max_degree();

    ContractionSolve out;
    for (const auto& Cl : C_l) out.D += Cl.a_norm_at(eta_hat);
    out.eta1 = out.D > 0.0 ? std::min(eta_hat, 5.0 / (8.0 * out.D)) : eta_hat;

    SeriesMatrix C = SeriesMatrix::zero(n, n, M, out.eta1);
    for (int l = 0; l < n; ++l) {
        const TruncatedSeries tl = TruncatedSeries::variable(n, M, out.eta1, l);
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                C.at(j, k) = C.at(j, k) + tl * C_l[static_cast<std::size_t>(l)].at(j, k)
                                                   .with_radius(out.eta1);
    }

    SeriesMatrix A = SeriesMatrix::zero(n, n, M, out.eta1);
    for (int it = 0; it < 100; ++it) {
        const SeriesMatrix next = contraction_map(A, C);
        const double change = (next - A).max_abs_coefficient();
        A = next;
        out.iterations = it + 1;
        if (change <= 1e-14) break;
        if (it == 99)
            throw ConvergenceError(
                "solve_A_contraction: no fixed point in 100 iterations (D undercomputed?)");
    }

    out.fixed_point_residual = (contraction_map(A, C) - A).max_abs_coefficient();
    const SeriesMatrix Q = A * A + C * A + C;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (const auto& [a, v] : A.at(i, j).coefficients())
                out.ode_residual = std::max(
                    out.ode_residual, std::abs((a.degree() + 1) * v + Q.at(i, j).normalized(a)));
    // degrees of Q not stored in A count too
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (const auto& [a, v] : Q.at(i, j).coefficients())
                if (A.at(i, j).normalized(a) == 0.0)
                    out.ode_residual = std::max(out.ode_residual,
                                                std::abs((a.degree() + 1) * 0.0 + v));
    out.a_norm = A.a_norm_at(out.eta1);
    out.A = std::move(A);
    return out;
}

/// Coefficients of Lie_{X_b} /\X_J = sum_K g^K /\X_K over increasing K, as
/// ambient series built from the structure map.
inline std::map<IndexTuple, TruncatedSeries> lie_wedge_coefficients(const FieldSystem& sys,
                                                                    int b, const IndexTuple& J) {
    std::map<IndexTuple, TruncatedSeries> g;
    const int n = J.size();
    for (int slot = 0; slot < n; ++slot) {
        for (int k = 0; k < sys.q(); ++k) {
            const TruncatedSeries c = sys.structure_coefficient(b, J[slot], k);
            if (c.is_zero()) continue;
            std::vector<int> tup = J.entries;
            tup[static_cast<std::size_t>(slot)] = k;
            const int sign = sort_sign(tup);
            if (sign == 0) continue;
            const IndexTuple K{tup};
            auto it = g.find(K);
            if (it == g.end())
                g.emplace(K, c * static_cast<double>(sign));
            else
                it->second = it->second + c * static_cast<double>(sign);
        }
    }
    return g;
}

inline void add_coeff(SeriesODEProblem& prob, const MultiIndex& alpha, int j, int l,
                      const TruncatedSeries& a) {
    auto key = std::make_tuple(alpha, j, l);
    auto it = prob.coeffs.find(key);
    if (it == prob.coeffs.end())
        prob.coeffs.emplace(std::move(key), a);
    else
        it->second = it->second + a;
}

struct WedgeRatioSeries {
    std::map<IndexTuple, TruncatedSeries> ratio;  // J -> /\X_J / /\X_{J0} o Phi
    SeriesODESolution ode;                        // solver diagnostics
};

/// The quotients /\X_J / /\X_{J0}, J increasing, as chart-coordinate series:
/// the quadratic ray ODE from the quotient-derivative identity
///   X_b G_J = sum_K g_{b,J}^K G_K - sum_K g_{b,J0}^K G_J G_K
/// is assembled with coefficients composed with the chart and solved by the
/// series fixed-point solver; initial values are the pointwise ratios at x0.
inline WedgeRatioSeries wedge_ratio_series(const FieldSystem& sys, const Point& x0,
                                           const IndexTuple& J0,
                                           const std::vector<TruncatedSeries>& phi_rel,
                                           double eta_hat) {
    const int n = J0.size();
    const auto Js = increasing_tuples(n, sys.q());
    const int Nu = static_cast<int>(Js.size());
    std::map<IndexTuple, int> index_of;
    for (int i = 0; i < Nu; ++i) index_of[Js[static_cast<std::size_t>(i)]] = i;

    SeriesODEProblem prob;
    prob.n_vars = n;
    prob.n_unknowns = Nu;
    prob.degree_bound = 2;
    prob.max_degree = phi_rel.front().max_degree();
    prob.r = eta_hat;

    for (int j = 0; j < n; ++j) {
        const auto gJ0 = lie_wedge_coefficients(sys, J0[j], J0);
        for (int ji = 0; ji < Nu; ++ji) {
            const IndexTuple& J = Js[static_cast<std::size_t>(ji)];
            const auto gJ = lie_wedge_coefficients(sys, J0[j], J);
            for (const auto& [K, series] : gJ) {
                MultiIndex alpha(Nu);
                alpha[index_of.at(K)] = 1;
                add_coeff(prob, alpha, j, ji, series.compose(phi_rel).with_radius(eta_hat));
            }
            for (const auto& [K, series] : gJ0) {
                MultiIndex alpha(Nu);
                alpha[index_of.at(K)] += 1;
                alpha[ji] += 1;
                add_coeff(prob, alpha, j, ji,
                          series.compose(phi_rel).with_radius(eta_hat) * (-1.0));
            }
        }
    }

    prob.initial.resize(static_cast<std::size_t>(Nu));
    for (int i = 0; i < Nu; ++i)
        prob.initial[static_cast<std::size_t>(i)] =
            wedge_ratio(Js[static_cast<std::size_t>(i)], J0, sys, x0).value;

    WedgeRatioSeries out;
    out.ode = solve_series_ode(prob);
    for (int i = 0; i < Nu; ++i)
        out.ratio.emplace(Js[static_cast<std::size_t>(i)],
                          out.ode.F[static_cast<std::size_t>(i)].with_radius(eta_hat));
    return out;
}

struct ChartConfig {
    double zeta = 1.0;
    int max_degree = 8;
    double eta_hat = 0.0;  // 0: min(system radius, Picard estimate when a box is given)
    std::optional<Box> box;
    std::optional<IndexTuple> force_J0;  // accepted if within the zeta band
    bool check_pullback = true;
    double pullback_grid_scale = 0.5;    // grid at |t| <= scale * eta1
    double tol = 1e-6;
};

struct ChartDiagnostics {
    double D = 0.0;
    int contraction_iters = 0;
    double fixed_point_residual = 0.0;
    double ode_residual = 0.0;
    double pullback_max_err = -1.0;  // -1: not evaluated
    double zeta = 1.0;
    double eta_hat = 0.0;
    double A_norm = 0.0;
    std::vector<double> Y_norms;     // |Y_j| at eta1
    double basis_residual = 0.0;     // Cramer reduction defect
};

/// Output of the adapted-chart pipeline at a base point: the chart Taylor map,
/// the A-matrix with |A| <= 1/2, the pulled-back fields in chart coordinates,
/// and the Jacobian density h0 = det(I + A)^{-1}.
struct AdaptedChart {
    Point base_point;
    IndexTuple J0;
    int n = 0;  // chart dimension; 0 means a degenerate (point) chart
    double eta1 = 0.0;
    SeriesMatrix A;
    SeriesMatrix C;
    std::vector<TruncatedSeries> Phi;      // N series in n chart variables
    std::vector<std::vector<TruncatedSeries>> Y;  // q fields, n components each
    TruncatedSeries h0;
    ChartDiagnostics diagnostics;

    bool degenerate() const { return n == 0; }
};

/// Picard-Lindelof existence-time estimate for the chart flows on a box:
/// eta <= margin / sup_box |sum of unit-coefficient fields|.
inline double estimate_eta_picard(const FieldSystem& sys, const Point& x0, const Box& box) {
    double sup = 0.0;
    for (const auto& x : tensor_grid(box, 5, 4000)) {
        double s = 0.0;
        for (int j = 0; j < sys.q(); ++j) s += sys.field(j).evaluate(x).norm();
        sup = std::max(sup, s);
    }
    double margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < x0.size(); ++i)
        margin = std::min(margin, std::min(x0(i) - box.lo(i), box.hi(i) - x0(i)));
    if (sup == 0.0) return std::numeric_limits<double>::infinity();
    return std::max(margin, 0.0) / sup;
}

/// The adapted-chart pipeline: select J0, expand the chart map, reduce
/// the structure onto the J0 basis, assemble C, solve the contraction for A,
/// and read off Y_{J0} = (I + A) grad plus the Cramer rows for the remaining
/// fields.  Fits structure coefficients on the fly when the system lacks them.
inline AdaptedChart build_adapted_chart(const FieldSystem& system, const Point& x0,
                                        const ChartConfig& cfg = {}) {
    FieldSystem sys = recenter_system(system, x0);
    if (!sys.structure) {
        const Box fit_box = cfg.box ? *cfg.box : Box::centered(x0, 0.25 * sys.radius());
        auto fit = fit_structure_coeffs(sys, fit_box, std::min(6, cfg.max_degree), true);
        sys.structure = std::move(fit.coefficients);
    }

    AdaptedChart chart;
    chart.base_point = x0;
    chart.diagnostics.zeta = cfg.zeta;

    const auto sel = select_J0(sys, x0, cfg.zeta);
    if (sel.rank == 0) return chart;  // dimension-0 chart object
    chart.n = sel.rank;
    chart.J0 = sel.J0;
    if (cfg.force_J0) {
        // accept a user override when its wedge stays within the zeta band
        const auto r = wedge_ratio(sel.J0, *cfg.force_J0, sys, x0);
        if (std::abs(r.value) > 1.0 / cfg.zeta + 1e-12)
            throw DomainError("build_adapted_chart: forced J0 violates the zeta condition");
        chart.J0 = *cfg.force_J0;
    }
    const int n = chart.n;
    const int M = std::min(cfg.max_degree, sys.max_degree());

    double eta_hat = cfg.eta_hat > 0.0 ? std::min(cfg.eta_hat, sys.radius()) : sys.radius();
    if (cfg.box) eta_hat = std::min(eta_hat, estimate_eta_picard(sys, x0, *cfg.box));
    chart.diagnostics.eta_hat = eta_hat;

    chart.Phi = phi_taylor(sys, chart.J0, x0, M);
    std::vector<TruncatedSeries> phi_rel = chart.Phi;
    for (int k = 0; k < sys.ambient_dim(); ++k)
        phi_rel[static_cast<std::size_t>(k)].add_normalized(MultiIndex(n), -x0(k));

    const CramerReduction red = cramer_reduce(sys, chart.J0, phi_rel);
    chart.diagnostics.basis_residual = red.basis_residual;

    AssembledC asm_c = assemble_C(red.chat, n, M, eta_hat);
    const ContractionSolve cs = solve_A_contraction(asm_c.C_l, eta_hat);
    chart.eta1 = cs.eta1;
    chart.A = cs.A;
    chart.C = asm_c.C.with_radius(cs.eta1);
    chart.diagnostics.D = cs.D;
    chart.diagnostics.contraction_iters = cs.iterations;
    chart.diagnostics.fixed_point_residual = cs.fixed_point_residual;
    chart.diagnostics.ode_residual = cs.ode_residual;
    chart.diagnostics.A_norm = cs.a_norm;

    // Y_{J0[i]} = row i of (I + A) applied to grad
    chart.Y.assign(static_cast<std::size_t>(sys.q()),
                   std::vector<TruncatedSeries>(static_cast<std::size_t>(n),
                                                TruncatedSeries(n, M, cs.eta1)));
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            TruncatedSeries e = chart.A.at(i, k);
            if (i == k) e = e + TruncatedSeries::constant(n, M, cs.eta1, 1.0);
            chart.Y[static_cast<std::size_t>(chart.J0[i])][static_cast<std::size_t>(k)] = e;
        }
    for (int k = 0; k < sys.q(); ++k) {
        bool in_basis = false;
        for (int i = 0; i < n; ++i) in_basis = in_basis || chart.J0[i] == k;
        if (in_basis) continue;
        for (int comp = 0; comp < n; ++comp) {
            TruncatedSeries s(n, M, cs.eta1);
            for (int l = 0; l < n; ++l) {
                const auto& b = red.btilde[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)];
                if (b.is_zero()) continue;
                s = s + b.with_radius(cs.eta1) *
                            chart.Y[static_cast<std::size_t>(chart.J0[l])]
                                   [static_cast<std::size_t>(comp)];
            }
            chart.Y[static_cast<std::size_t>(k)][static_cast<std::size_t>(comp)] = s;
        }
    }
    for (int j = 0; j < sys.q(); ++j) {
        SeriesMatrix yj(1, n, n, M, cs.eta1);
        for (int k = 0; k < n; ++k) yj.at(0, k) = chart.Y[static_cast<std::size_t>(j)]
                                                          [static_cast<std::size_t>(k)];
        chart.diagnostics.Y_norms.push_back(yj.a_norm_at(cs.eta1));
    }

    chart.h0 = (SeriesMatrix::identity(n, n, M, cs.eta1) + chart.A).determinant().reciprocal();

    if (cfg.check_pullback) {
        double err = 0.0;
        const double h = cfg.pullback_grid_scale * cs.eta1 / std::sqrt(static_cast<double>(n));
        std::vector<Point> grid;
        for (int i = 0; i < n; ++i) {
            Point t = Point::Zero(n);
            t(i) = h;
            grid.push_back(t);
            t(i) = -h;
            grid.push_back(t);
        }
        Point diag = Point::Constant(n, h * 0.7);
        grid.push_back(diag);
        FlowOptions fo;
        fo.rel_tol = 1e-11;
        fo.abs_tol = 1e-13;
        for (int j = 0; j < sys.q(); ++j) {
            const auto numeric =
                pullback_numeric(sys, chart.J0, x0, sys.field(j), grid, fo);
            for (std::size_t gi = 0; gi < grid.size(); ++gi)
                for (int k = 0; k < n; ++k)
                    err = std::max(err, std::abs(chart.Y[static_cast<std::size_t>(j)]
                                                        [static_cast<std::size_t>(k)]
                                                     .evaluate(to_std(grid[gi])) -
                                                 numeric[gi](k)));
        }
        chart.diagnostics.pullback_max_err = err;
    }
    return chart;
}

struct ChartVerification {
    double fixed_point_residual = 0.0;
    double ode_residual = 0.0;
    double pullback_max_err = 0.0;
    double A_norm = 0.0;
    bool A_norm_ok = false;
    double h0_det_residual = 0.0;   // coefficients of h0 det(I+A) - 1
    double frame_at_zero_err = 0.0; // |Y_{J0[i]}(0) - e_i|
};

/// Re-derives the chart's certificates: the fixed-point and ODE residuals, the
/// norm bound on A, the pullback comparison on a grid, and h0 det(I+A) = 1.
inline ChartVerification verify_chart(const AdaptedChart& chart, const FieldSystem& system,
                                      const std::vector<Point>& grid) {
    ChartVerification v;
    if (chart.degenerate()) return v;
    FieldSystem sys = recenter_system(system, chart.base_point);
    const int n = chart.n;

    v.fixed_point_residual = (contraction_map(chart.A, chart.C) - chart.A).max_abs_coefficient();
    const SeriesMatrix Q = chart.A * chart.A + chart.C * chart.A + chart.C;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            for (const auto& [a, val] : chart.A.at(i, j).coefficients())
                v.ode_residual = std::max(
                    v.ode_residual, std::abs((a.degree() + 1) * val + Q.at(i, j).normalized(a)));
            for (const auto& [a, val] : Q.at(i, j).coefficients())
                if (chart.A.at(i, j).normalized(a) == 0.0)
                    v.ode_residual = std::max(v.ode_residual, std::abs(val));
        }

    v.A_norm = chart.A.a_norm_at(chart.eta1);
    v.A_norm_ok = v.A_norm <= 0.5 + 1e-12;

    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            const double want = i == k ? 1.0 : 0.0;
            v.frame_at_zero_err = std::max(
                v.frame_at_zero_err,
                std::abs(chart.Y[static_cast<std::size_t>(chart.J0[i])]
                                [static_cast<std::size_t>(k)].constant_term() - want));
        }

    const auto det = (SeriesMatrix::identity(n, n, chart.A.max_degree(), chart.eta1) + chart.A)
                         .determinant();
    const auto one = TruncatedSeries::constant(n, chart.A.max_degree(), chart.eta1, 1.0);
    v.h0_det_residual = (chart.h0 * det - one).max_abs_coefficient();

    if (!grid.empty() && sys.structure) {
        FlowOptions fo;
        fo.rel_tol = 1e-11;
        fo.abs_tol = 1e-13;
        for (int j = 0; j < sys.q(); ++j) {
            const auto numeric =
                pullback_numeric(sys, chart.J0, chart.base_point, sys.field(j), grid, fo);
            for (std::size_t gi = 0; gi < grid.size(); ++gi)
                for (int k = 0; k < n; ++k)
                    v.pullback_max_err =
                        std::max(v.pullback_max_err,
                                 std::abs(chart.Y[static_cast<std::size_t>(j)]
                                                 [static_cast<std::size_t>(k)]
                                              .evaluate(to_std(grid[gi])) -
                                          numeric[gi](k)));
        }
    }
    return v;
}

} // namespace ccscale
