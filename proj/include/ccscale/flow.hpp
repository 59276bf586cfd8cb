#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ccscale/vector_field.hpp"

namespace ccscale {

struct FlowOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    bool with_jacobian = false;
    std::optional<Box> box;       // leaving it is a C-condition failure
    int trajectory_samples = 0;   // > 0: record the accepted integration steps
    double min_step = 1e-14;
};

struct FlowResult {
    Point endpoint;
    std::optional<Eigen::MatrixXd> jacobian;
    std::vector<Point> trajectory;
    bool success = false;
    std::string escape_reason;  // "left box" / "step floor" / "non-finite"
};

namespace detail {

// Dormand-Prince 5(4) tableau.
struct Dopri5 {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

} // namespace detail

/// Adaptive embedded Runge-Kutta integration of y' = f(s, y) over [0, 1].
/// `observe(s, y)` is called after each accepted step.
inline bool integrate_unit_interval(
    const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& f, Eigen::VectorXd& y,
    double rel_tol, double abs_tol, double min_step, std::string& fail_reason,
    const std::function<void(double, const Eigen::VectorXd&)>& observe = nullptr) {
    using D = detail::Dopri5;
    double s = 0.0;
    double h = 0.05;
    Eigen::VectorXd k1 = f(s, y);
    int max_steps = 100000;
    while (s < 1.0) {
        if (--max_steps <= 0) {
            fail_reason = "step floor";
            return false;
        }
        h = std::min(h, 1.0 - s);
        const Eigen::VectorXd k2 = f(s + D::c2 * h, y + h * (D::a21 * k1));
        const Eigen::VectorXd k3 = f(s + D::c3 * h, y + h * (D::a31 * k1 + D::a32 * k2));
        const Eigen::VectorXd k4 =
            f(s + D::c4 * h, y + h * (D::a41 * k1 + D::a42 * k2 + D::a43 * k3));
        const Eigen::VectorXd k5 =
            f(s + D::c5 * h, y + h * (D::a51 * k1 + D::a52 * k2 + D::a53 * k3 + D::a54 * k4));
        const Eigen::VectorXd k6 = f(
            s + h, y + h * (D::a61 * k1 + D::a62 * k2 + D::a63 * k3 + D::a64 * k4 + D::a65 * k5));
        const Eigen::VectorXd ynew =
            y + h * (D::b1 * k1 + D::b3 * k3 + D::b4 * k4 + D::b5 * k5 + D::b6 * k6);
        const Eigen::VectorXd k7 = f(s + h, ynew);
        const Eigen::VectorXd err_v =
            h * (D::e1 * k1 + D::e3 * k3 + D::e4 * k4 + D::e5 * k5 + D::e6 * k6 + D::e7 * k7);

        double err = 0.0;
        for (int i = 0; i < y.size(); ++i) {
            const double sc = abs_tol + rel_tol * std::max(std::abs(y(i)), std::abs(ynew(i)));
            err = std::max(err, std::abs(err_v(i)) / sc);
        }
        if (!std::isfinite(err) || !ynew.allFinite()) {
            fail_reason = "non-finite";
            return false;
        }
        if (err <= 1.0) {
            s += h;
            y = ynew;
            k1 = k7;  // FSAL
            if (observe) observe(s, y);
        }
        const double fac = err == 0.0 ? 5.0 : 0.9 * std::pow(err, -0.2);
        h *= std::min(5.0, std::max(0.2, fac));
        if (h < min_step) {
            fail_reason = "step floor";
            return false;
        }
    }
    return true;
}

/// e^{a_1 X_1 + ... + a_q X_q} x0: integrates E'(r) = sum_j a_j X_j(E(r)) to
/// r = 1.  Integration failure is the C-condition failing for this a; it is
/// reported in the result, never thrown.
inline FlowResult exp_map(const FieldSystem& sys, const Eigen::VectorXd& a, const Point& x0,
                          const FlowOptions& opts = {}) {
    const int N = sys.ambient_dim();
    const int q = sys.q();
    if (a.size() != q) throw StructuralError("exp_map: coefficient count must match q");

    FlowResult out;
    const bool jac = opts.with_jacobian;
    Eigen::VectorXd y(jac ? N + N * N : N);
    y.head(N) = x0;
    if (jac) {
        Eigen::Map<Eigen::MatrixXd> J(y.data() + N, N, N);
        J = Eigen::MatrixXd::Identity(N, N);
    }

    bool left_box = false;
    auto rhs = [&](double, const Eigen::VectorXd& state) {
        Eigen::VectorXd dy(state.size());
        const Point x = state.head(N);
        if (opts.box && !opts.box->contains(x)) left_box = true;
        Point v = Point::Zero(N);
        Eigen::MatrixXd Dv = Eigen::MatrixXd::Zero(N, N);
        for (int j = 0; j < q; ++j) {
            if (a(j) == 0.0) continue;
            v += a(j) * sys.field(j).evaluate(x);
            if (jac) Dv += a(j) * sys.field(j).jacobian(x);
        }
        dy.head(N) = v;
        if (jac) {
            Eigen::Map<const Eigen::MatrixXd> J(state.data() + N, N, N);
            Eigen::Map<Eigen::MatrixXd> dJ(dy.data() + N, N, N);
            dJ = Dv * J;
        }
        return dy;
    };

    std::function<void(double, const Eigen::VectorXd&)> observe = nullptr;
    if (opts.trajectory_samples > 0) {
        observe = [&](double, const Eigen::VectorXd& state) {
            out.trajectory.push_back(state.head(N));
        };
    }

    std::string reason;
    const bool ok =
        integrate_unit_interval(rhs, y, opts.rel_tol, opts.abs_tol, opts.min_step, reason, observe);
    out.endpoint = y.head(N);
    if (jac) out.jacobian = Eigen::Map<Eigen::MatrixXd>(y.data() + N, N, N).eval();
    if (!ok) {
        out.success = false;
        out.escape_reason = reason;
        return out;
    }
    if (left_box || (opts.box && !opts.box->contains(out.endpoint))) {
        out.success = false;
        out.escape_reason = "left box";
        return out;
    }
    if (!out.endpoint.allFinite()) {
        out.success = false;
        out.escape_reason = "non-finite";
        return out;
    }
    out.success = true;
    return out;
}

/// Degree-M Taylor expansion of Phi(t) = e^{t_1 X_{J_1} + ... + t_n X_{J_n}} x0,
/// computed symbolically: Phi_k(t) = sum_m ((t . X)^m x_k)(x0) / m!.  The
/// operator application happens in a joint series algebra over (t, u) with
/// u = x - x0; total-degree truncation at M keeps every term that can still
/// contribute at u = 0.
inline std::vector<TruncatedSeries> phi_taylor(const FieldSystem& sys, const IndexTuple& J,
                                               const Point& x0, int M) {
    const int n = J.size();
    const int N = sys.ambient_dim();
    const int dim = n + N;
    const double rad = sys.radius();

    // lift the field components a_j^k(u) into the joint algebra
    std::vector<std::vector<TruncatedSeries>> a(static_cast<std::size_t>(n));
    const bool centered = (x0 - sys.center()).lpNorm<Eigen::Infinity>() == 0.0;
    for (int j = 0; j < n; ++j) {
        a[static_cast<std::size_t>(j)].reserve(static_cast<std::size_t>(N));
        for (int k = 0; k < N; ++k) {
            TruncatedSeries src = sys.field(J[j]).components[static_cast<std::size_t>(k)];
            if (!centered) src = recenter(src, to_std(x0 - sys.center()));
            TruncatedSeries lifted(dim, M, rad);
            for (const auto& [al, v] : src.coefficients()) {
                if (al.degree() > M) continue;
                MultiIndex b(dim);
                for (int i = 0; i < N; ++i) b[n + i] = al[i];
                lifted.set_normalized(b, v);
            }
            a[static_cast<std::size_t>(j)].push_back(lifted);
        }
    }

    auto apply_W = [&](const TruncatedSeries& f) {
        TruncatedSeries r(dim, M, rad);
        for (int j = 0; j < n; ++j) {
            const TruncatedSeries tj = TruncatedSeries::variable(dim, M, rad, j);
            for (int k = 0; k < N; ++k) {
                const TruncatedSeries df = f.differentiate(n + k).truncated(M);
                if (df.is_zero()) continue;
                r = r + tj * a[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] * df;
            }
        }
        return r;
    };

    std::vector<TruncatedSeries> phi;
    phi.reserve(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k) {
        TruncatedSeries coord(dim, M, rad);
        coord.set_normalized(MultiIndex(dim), x0(k));
        coord.set_normalized(MultiIndex::unit(dim, n + k), 1.0);
        TruncatedSeries term = coord;
        TruncatedSeries acc(n, M, rad);
        double mfact = 1.0;
        for (int m = 0; m <= M; ++m) {
            if (m > 0) {
                term = apply_W(term);
                mfact *= m;
                if (term.is_zero()) break;
            }
            // restrict to u = 0: keep terms with zero u-exponents
            for (const auto& [al, v] : term.coefficients()) {
                bool pure_t = true;
                for (int i = 0; i < N; ++i) pure_t = pure_t && al[n + i] == 0;
                if (!pure_t) continue;
                MultiIndex b(n);
                for (int i = 0; i < n; ++i) b[i] = al[i];
                acc.add_normalized(b, v / mfact);
            }
        }
        phi.push_back(acc);
    }
    return phi;
}

struct ChartPoint {
    Point ambient;          // Phi(t)
    Eigen::MatrixXd dphi;   // N x n chart Jacobian at t
};

/// Phi(t) together with dPhi(t), the latter transported by the inhomogeneous
/// variational equation d_i'(r) = DV(E(r)) d_i(r) + X_{J_i}(E(r)), d_i(0) = 0,
/// where V = sum_i t_i X_{J_i}.
inline ChartPoint chart_map_numeric(const FieldSystem& sys, const IndexTuple& J, const Point& x0,
                                    const Point& t, const FlowOptions& opts = {}) {
    const int n = J.size();
    const int N = sys.ambient_dim();
    Eigen::VectorXd y(N + N * n);
    y.head(N) = x0;
    y.tail(N * n).setZero();

    auto rhs = [&](double, const Eigen::VectorXd& state) {
        Eigen::VectorXd dy(state.size());
        const Point x = state.head(N);
        Point v = Point::Zero(N);
        Eigen::MatrixXd Dv = Eigen::MatrixXd::Zero(N, N);
        for (int i = 0; i < n; ++i) {
            if (t(i) == 0.0) continue;
            v += t(i) * sys.field(J[i]).evaluate(x);
            Dv += t(i) * sys.field(J[i]).jacobian(x);
        }
        dy.head(N) = v;
        Eigen::Map<const Eigen::MatrixXd> D(state.data() + N, N, n);
        Eigen::Map<Eigen::MatrixXd> dD(dy.data() + N, N, n);
        dD = Dv * D;
        for (int i = 0; i < n; ++i) dD.col(i) += sys.field(J[i]).evaluate(x);
        return dy;
    };

    std::string reason;
    if (!integrate_unit_interval(rhs, y, opts.rel_tol, opts.abs_tol, opts.min_step, reason))
        throw ChartError("chart_map_numeric: flow failed (" + reason + ")");
    ChartPoint cp;
    cp.ambient = y.head(N);
    cp.dphi = Eigen::Map<Eigen::MatrixXd>(y.data() + N, N, n).eval();
    return cp;
}

/// Y(t) = dPhi(t)^{-1} X(Phi(t)) sampled on a grid, with dPhi transported by
/// the variational equation.  The numerical oracle for the series charts.
inline std::vector<Point> pullback_numeric(const FieldSystem& sys, const IndexTuple& J,
                                           const Point& x0, const AnalyticVectorField& X,
                                           const std::vector<Point>& grid,
                                           const FlowOptions& opts = {},
                                           double condition_limit = 1e8) {
    std::vector<Point> out;
    out.reserve(grid.size());
    for (const auto& t : grid) {
        const ChartPoint cp = chart_map_numeric(sys, J, x0, t, opts);
        const Point Xval = X.evaluate(cp.ambient);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(cp.dphi, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        if (sv(sv.size() - 1) <= 0.0 || sv(0) / sv(sv.size() - 1) > condition_limit)
            throw ChartError("pullback_numeric: chart Jacobian ill-conditioned");
        out.push_back(svd.solve(Xval));
    }
    return out;
}

} // namespace ccscale
