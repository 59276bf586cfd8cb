#pragma once

#include <limits>
#include <vector>

#include "ccscale/adapt.hpp"
#include "ccscale/density.hpp"
#include "ccscale/dilation.hpp"
#include "ccscale/reachable.hpp"

namespace ccscale {

struct LambdaResult {
    double value = 1.0;     // empty determinant convention at rank 0
    IndexTuple argmax;      // the selected tuple j_1(x,delta), ..., j_n0(x,delta)
    int n0 = 0;
};

/// Lambda(x, delta) = max over increasing n0-tuples of the sup-norm of the
/// n0 x n0 minors of the dilated field matrix; ties graded-lexicographic.
inline LambdaResult lambda(const FieldSystem& sys, const Point& x,
                           const std::vector<double>& delta) {
    check_delta(delta, sys.parameters());
    LambdaResult out;
    out.n0 = numerical_rank(sys.value_matrix(x));
    if (out.n0 == 0) return out;  // Lambda := 1, ball := {x}
    const FieldSystem dil = dilate(sys, delta);
    out.value = 0.0;
    for (const auto& J : increasing_tuples(out.n0, sys.q())) {
        const auto minors = wedge_minors(dil, J, x);
        double mag = 0.0;
        for (double v : minors) mag = std::max(mag, std::abs(v));
        if (mag > out.value) {
            out.value = mag;
            out.argmax = J;
        }
    }
    return out;
}

/// Chart for the dilated system delta^d X at x, built on the Lambda-argmax
/// basis.  With delta = 1 this coincides with build_adapted_chart.
inline AdaptedChart scaling_chart(const FieldSystem& sys, const Point& x,
                                  const std::vector<double>& delta, ChartConfig cfg = {}) {
    const LambdaResult lam = lambda(sys, x, delta);
    if (lam.n0 == 0) {
        AdaptedChart degenerate;
        degenerate.base_point = x;
        return degenerate;
    }
    FieldSystem sys_with_structure = recenter_system(sys, x);
    if (!sys_with_structure.structure) {
        auto fit = fit_structure_coeffs(sys_with_structure,
                                        cfg.box ? *cfg.box
                                                : Box::centered(x, 0.25 * sys.radius()),
                                        std::min(6, cfg.max_degree), true);
        sys_with_structure.structure = std::move(fit.coefficients);
    }
    const FieldSystem dil = dilate(sys_with_structure, delta);
    cfg.force_J0 = lam.argmax;
    return build_adapted_chart(dil, x, cfg);
}

/// Span quantity of the rescaled frame: min over a chart grid of the largest
/// n x n minor magnitude of (Y_1 | ... | Y_q).  Must stay away from zero.
inline double span_uniformity(const AdaptedChart& chart, double grid_scale = 0.5) {
    if (chart.degenerate()) return 0.0;
    const int n = chart.n;
    const int q = static_cast<int>(chart.Y.size());
    double worst = std::numeric_limits<double>::infinity();
    const double b = grid_scale * chart.eta1 / std::sqrt(static_cast<double>(n));
    for (const auto& t : tensor_grid(Box::centered(Point::Zero(n), b), 3, 1000)) {
        Eigen::MatrixXd m(n, q);
        for (int j = 0; j < q; ++j)
            for (int k = 0; k < n; ++k)
                m(k, j) = chart.Y[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)]
                              .evaluate(to_std(t));
        double best = 0.0;
        for (const auto& J : increasing_tuples(n, q)) {
            Eigen::MatrixXd sub(n, n);
            for (int i = 0; i < n; ++i) sub.col(i) = m.col(J[i]);
            best = std::max(best, std::abs(sub.determinant()));
        }
        worst = std::min(worst, best);
    }
    return worst;
}

struct ScaleRow {
    std::vector<double> delta;
    double lambda_value = 0.0;
    double volume_lower = 0.0;
    double volume_upper = 0.0;
    double ratio = 0.0;             // volume_lower / Lambda
    double doubling = -1.0;         // vol(2 delta) / vol(delta) when 2 delta is in the grid
    bool ratio_flagged = false;
    bool doubling_flagged = false;
    int failures = 0;
};

struct ScaleTable {
    std::vector<ScaleRow> rows;
    double ratio_band = 0.0;  // max ratio / min ratio across rows
};

struct ScaleTableOptions {
    BallOptions ball;
    double ratio_band_limit = 0.0;     // 0: no flagging
    double doubling_lo = 0.0, doubling_hi = 0.0;
};

/// Volume/Lambda comparison and doubling ratios over a delta grid, the
/// numerical face of the ball-volume comparison.
inline ScaleTable volume_and_doubling(const FieldSystem& sys, const Point& x,
                                      const std::vector<std::vector<double>>& delta_grid,
                                      const ScaleTableOptions& opts = {}) {
    ScaleTable table;
    for (std::size_t i = 0; i < delta_grid.size(); ++i) {
        const auto& delta = delta_grid[i];
        ScaleRow row;
        row.delta = delta;
        row.lambda_value = lambda(sys, x, delta).value;
        BallOptions bo = opts.ball;
        bo.seed = opts.ball.seed;  // same seed across deltas: monotone comparisons
        const BallEstimate est = reachable_set(sys, x, delta, bo);
        row.volume_lower = est.volume_lower;
        row.volume_upper = est.volume_upper;
        row.failures = est.failures;
        row.ratio = row.lambda_value > 0.0 ? row.volume_lower / row.lambda_value : 0.0;
        table.rows.push_back(row);
    }
    // doubling: match rows with delta doubled component-wise
    for (auto& row : table.rows) {
        std::vector<double> twice = row.delta;
        for (auto& v : twice) v *= 2.0;
        for (const auto& other : table.rows)
            if (other.delta == twice && row.volume_lower > 0.0) {
                row.doubling = other.volume_lower / row.volume_lower;
                if (opts.doubling_hi > 0.0)
                    row.doubling_flagged =
                        row.doubling < opts.doubling_lo || row.doubling > opts.doubling_hi;
            }
    }
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& row : table.rows)
        if (row.ratio > 0.0) {
            lo = std::min(lo, row.ratio);
            hi = std::max(hi, row.ratio);
        }
    table.ratio_band = (hi > 0.0 && std::isfinite(lo)) ? hi / lo : 0.0;
    if (opts.ratio_band_limit > 0.0)
        for (auto& row : table.rows)
            row.ratio_flagged = table.ratio_band > opts.ratio_band_limit;
    return table;
}

/// Gauss-Newton inversion of the chart map: the t with Phi(t) ~ y, or nullopt
/// when the iteration leaves the chart or stalls.
inline std::optional<Point> chart_invert(const FieldSystem& sys, const IndexTuple& J0,
                                         const Point& x0, const Point& y, double radius_cap,
                                         double tol = 1e-9) {
    const int n = J0.size();
    Point t = Point::Zero(n);
    {
        // first guess through the linearization at 0
        ChartPoint cp0 = chart_map_numeric(sys, J0, x0, t);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(cp0.dphi, Eigen::ComputeThinU | Eigen::ComputeThinV);
        t = svd.solve(y - x0);
    }
    for (int it = 0; it < 25; ++it) {
        if (t.norm() > 2.0 * radius_cap) return std::nullopt;
        ChartPoint cp = chart_map_numeric(sys, J0, x0, t);
        const Point r = y - cp.ambient;
        if (r.norm() <= tol * (1.0 + y.norm())) return t;
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(cp.dphi, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        if (sv(sv.size() - 1) <= 1e-12 * sv(0)) return std::nullopt;
        t += svd.solve(r);
    }
    return std::nullopt;
}

/// Empirical stand-ins for the containment radii of the chart construction; these
/// are sampled quantities, not certified constants.
struct EmpiricalRadii {
    double xi2 = 0.0;   // largest probed delta with B_X(x0, delta) inside Phi(B^n(eta1))
    double chi = 0.0;   // largest probed delta with the J0 wedge bounded away from 0
    int probes = 0;
    bool empirical = true;  // always; these are Monte-Carlo surrogates
};

inline EmpiricalRadii empirical_radii(const FieldSystem& system, const AdaptedChart& chart,
                                      BallOptions opts = {}, int bisection_steps = 6) {
    if (chart.degenerate()) return {};
    FieldSystem sys = recenter_system(system, chart.base_point);
    opts.n_paths = std::min(opts.n_paths, 400);
    EmpiricalRadii out;

    const auto minors0 = wedge_minors(sys, chart.J0, chart.base_point);
    double pivot0 = 0.0;
    for (double v : minors0) pivot0 = std::max(pivot0, std::abs(v));

    const std::vector<double> ones(static_cast<std::size_t>(sys.parameters()), 1.0);
    auto probe = [&](double delta, bool check_chart) {
        std::vector<double> d = ones;
        for (auto& v : d) v = delta;
        BallEstimate est;
        try {
            est = reachable_set(sys, chart.base_point, d, opts);
        } catch (const Error&) {
            return false;
        }
        std::size_t stride = std::max<std::size_t>(1, est.endpoints.size() / 40);
        for (std::size_t i = 0; i < est.endpoints.size(); i += stride) {
            const Point& y = est.endpoints[i];
            if (check_chart) {
                auto t = chart_invert(sys, chart.J0, chart.base_point, y, chart.eta1);
                if (!t || t->norm() >= chart.eta1) return false;
            } else {
                const auto m = wedge_minors(sys, chart.J0, y);
                double mag = 0.0;
                for (double v : m) mag = std::max(mag, std::abs(v));
                if (mag < 0.5 * pivot0) return false;
            }
            ++out.probes;
        }
        return true;
    };

    for (bool chart_mode : {true, false}) {
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < bisection_steps; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (probe(mid, chart_mode))
                lo = mid;
            else
                hi = mid;
        }
        (chart_mode ? out.xi2 : out.chi) = lo;
    }
    return out;
}

struct LeafPoint {
    Point x;
    int n0 = 0;
    std::optional<AdaptedChart> leaf_chart;
};

struct LeafScalingResult {
    LeafPoint leaf;
    double lambda_value = 1.0;         // |det_{n0 x n0} delta^d X(x)|_inf
    double nu_volume_lower = 0.0;      // nu_x(B) from chart-coordinate binning
    double nu_volume_upper = 0.0;
    double ratio = 0.0;                // nu_volume_lower / lambda_value
    double span = 0.0;                 // span uniformity of the rescaled frame
    BallEstimate chart_ball;           // the underlying occupancy data
};

/// Beyond-Hormander leaf scaling: close the generators under brackets to
/// degree m (checking the rank is stable from m to m+1), build the scaling
/// chart on the leaf, and estimate nu_x(B_{(X,d)}(x, delta)) by sampling the
/// ball in chart coordinates, where the pulled-back fields are unit size, and
/// weighting cells with the chart density h.
inline LeafScalingResult leaf_scaling(const std::vector<WeightedField>& generators,
                                      const Point& x, const std::vector<double>& delta, int m,
                                      const BallOptions& ball_opts = {}, int chart_degree = 8) {
    FieldSystem closure = bracket_closure(generators, m);
    {
        const FieldSystem deeper = bracket_closure(generators, m + 1);
        const int r_m = numerical_rank(closure.value_matrix(x));
        const int r_m1 = numerical_rank(deeper.value_matrix(x));
        if (r_m != r_m1)
            throw DomainError("leaf_scaling: rank not stable from m to m+1; increase m");
    }

    LeafScalingResult out;
    out.leaf.x = x;
    out.leaf.n0 = numerical_rank(closure.value_matrix(x));
    const LambdaResult lam = lambda(closure, x, delta);
    out.lambda_value = lam.value;
    if (out.leaf.n0 == 0) {
        // degenerate leaf: the ball is the point itself, counting density
        out.nu_volume_lower = out.nu_volume_upper = 1.0;
        out.ratio = 1.0;
        return out;
    }

    ChartConfig cfg;
    cfg.max_degree = chart_degree;
    AdaptedChart chart = scaling_chart(closure, x, delta, cfg);
    out.span = span_uniformity(chart);

    // chart density h for the induced Lebesgue density on the leaf
    FieldSystem closed_fit = recenter_system(closure, x);
    if (!closed_fit.structure) {
        auto fit = fit_structure_coeffs(closed_fit, Box::centered(x, 0.25 * closure.radius()),
                                        std::min(6, chart_degree), true);
        closed_fit.structure = std::move(fit.coefficients);
    }
    const FieldSystem dil = dilate(closed_fit, delta);
    DensityData dd = density_series(chart, euclidean_density_data(dil, chart));

    // the ball of the dilated system equals the chart image of the unit ball
    // of the pulled-back frame: sample it directly in chart coordinates
    const int n0 = out.leaf.n0;
    std::vector<WeightedField> chart_fields;
    for (int j = 0; j < static_cast<int>(chart.Y.size()); ++j) {
        std::vector<TruncatedSeries> comps;
        for (int k = 0; k < n0; ++k)
            comps.push_back(chart.Y[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)]);
        chart_fields.push_back(
            WeightedField{make_field(n0, Point::Zero(n0), comps, "Y" + std::to_string(j + 1)),
                          closure.degree(j)});
    }
    FieldSystem chart_sys = make_system(chart_fields);
    BallOptions bo = ball_opts;
    if (!bo.box) bo.box = Box::centered(Point::Zero(n0), std::max(2.0, 2.0 * chart.eta1));
    const std::vector<double> ones(static_cast<std::size_t>(closure.parameters()), 1.0);
    auto weight = [&](const Point& t) { return std::abs(dd.h.evaluate(to_std(t))); };
    out.chart_ball = reachable_set(chart_sys, Point::Zero(n0), ones, bo, weight);
    out.nu_volume_lower = out.chart_ball.volume_lower;
    out.nu_volume_upper = out.chart_ball.volume_upper;
    out.leaf.leaf_chart = std::move(chart);
    out.ratio = out.lambda_value > 0.0 ? out.nu_volume_lower / out.lambda_value : 0.0;
    return out;
}

} // namespace ccscale
