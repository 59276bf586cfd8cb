#include <gtest/gtest.h>

#include <cmath>

#include "ccscale/analytic_norms.hpp"
#include "ccscale/flow.hpp"
#include "ccscale/reachable.hpp"
#include "systems.hpp"
#include "test_util.hpp"

using namespace ccscale;

namespace {

TEST(ExpMap, StraightLine) {
    auto sys = systems::coordinate(2);
    Eigen::VectorXd a(2);
    a << 1.0, 0.0;
    auto fr = exp_map(sys, a, Point::Zero(2));
    ASSERT_TRUE(fr.success);
    EXPECT_NEAR(fr.endpoint(0), 1.0, 1e-12);
    EXPECT_NEAR(fr.endpoint(1), 0.0, 1e-12);
}

TEST(ExpMap, CircleFlow) {
    auto rot = systems::rotation(Point::Zero(2));
    Eigen::VectorXd a(1);
    a << 1.0;
    Point x0(2);
    x0 << 1.0, 0.0;
    auto fr = exp_map(rot, a, x0);
    ASSERT_TRUE(fr.success);
    EXPECT_NEAR(fr.endpoint(0), std::cos(1.0), 1e-9);
    EXPECT_NEAR(fr.endpoint(1), std::sin(1.0), 1e-9);
}

TEST(ExpMap, HeisenbergClosedForm) {
    // the dt drift cancels along e^{t1 X1 + t2 X2 + t3 X3} 0
    auto sys = systems::heisenberg();
    Eigen::VectorXd a(3);
    a << 0.3, -0.4, 0.25;
    auto fr = exp_map(sys, a, Point::Zero(3));
    ASSERT_TRUE(fr.success);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(fr.endpoint(i), a(i), 1e-10);
}

TEST(ExpMap, BoxEscapeReported) {
    auto sys = systems::coordinate(1);
    Eigen::VectorXd a(1);
    a << 10.0;
    FlowOptions opts;
    opts.box = Box::centered(Point::Zero(1), 1.0);
    auto fr = exp_map(sys, a, Point::Zero(1), opts);
    EXPECT_FALSE(fr.success);
    EXPECT_EQ(fr.escape_reason, "left box");
}

AnalyticVectorField random_poly_field(testutil::Rng& rng, int N, int M, double r, int deg) {
    std::vector<TruncatedSeries> comps;
    for (int i = 0; i < N; ++i)
        comps.push_back(testutil::random_series(rng, N, deg, r, 3, 0.5).truncated(M));
    return make_field(N, Point::Zero(N), comps, "W");
}

TEST(ExpMap, GroupLawRandomSystems) {
    testutil::Rng rng(2024);
    int checked = 0;
    for (int it = 0; it < 50; ++it) {
        const int N = rng.uniform_int(1, 3);
        std::vector<WeightedField> fs;
        const int q = rng.uniform_int(1, 2);
        for (int j = 0; j < q; ++j)
            fs.push_back({random_poly_field(rng, N, 6, 1.0, 2), {1}});
        auto sys = make_system(fs);
        Eigen::VectorXd a(q);
        for (int j = 0; j < q; ++j) a(j) = rng.uniform(-0.4, 0.4);
        const double s = rng.uniform(0.2, 0.6), t = rng.uniform(0.2, 0.6);

        FlowOptions opts;
        opts.rel_tol = 1e-11;
        opts.abs_tol = 1e-13;
        auto once = exp_map(sys, (s + t) * a, Point::Zero(N), opts);
        auto first = exp_map(sys, s * a, Point::Zero(N), opts);
        if (!once.success || !first.success) continue;
        auto second = exp_map(sys, t * a, first.endpoint, opts);
        if (!second.success) continue;
        ++checked;
        EXPECT_LE((once.endpoint - second.endpoint).lpNorm<Eigen::Infinity>(), 1e-8)
            << "group law violated at iteration " << it;
    }
    EXPECT_GE(checked, 30);
}

TEST(ExpMap, JacobianMatchesFiniteDifferences) {
    testutil::Rng rng(99);
    int checked = 0;
    for (int it = 0; it < 50; ++it) {
        const int N = rng.uniform_int(1, 2);
        std::vector<WeightedField> fs{{random_poly_field(rng, N, 6, 1.0, 2), {1}}};
        auto sys = make_system(fs);
        Eigen::VectorXd a(1);
        a << rng.uniform(-0.5, 0.5);
        FlowOptions opts;
        opts.with_jacobian = true;
        auto fr = exp_map(sys, a, Point::Zero(N), opts);
        if (!fr.success) continue;
        ++checked;
        const double h = 1e-6;
        for (int j = 0; j < N; ++j) {
            Point xp = Point::Zero(N), xm = Point::Zero(N);
            xp(j) += h;
            xm(j) -= h;
            auto fp = exp_map(sys, a, xp);
            auto fm = exp_map(sys, a, xm);
            ASSERT_TRUE(fp.success && fm.success);
            const Point fd = (fp.endpoint - fm.endpoint) / (2 * h);
            EXPECT_LE((fd - fr.jacobian->col(j)).lpNorm<Eigen::Infinity>(),
                      std::max(1e-5, 10 * opts.rel_tol));
        }
    }
    EXPECT_GE(checked, 40);
}

TEST(PhiTaylor, CoordinateFields) {
    auto sys = systems::coordinate(2);
    auto phi = phi_taylor(sys, IndexTuple{{0, 1}}, Point::Zero(2), 6);
    for (int k = 0; k < 2; ++k) {
        auto expect = TruncatedSeries::variable(2, 6, 1.0, k);
        EXPECT_LE((phi[k] - expect).max_abs_coefficient(), 1e-14);
    }
}

TEST(PhiTaylor, GrushinClosedForm) {
    // Phi(t) = (1 + t1, t2 + t1 t2 / 2), exact at degree 2
    auto sys = systems::grushin_triple(1.0);
    auto phi = phi_taylor(sys, IndexTuple{{0, 1}}, sys.center(), 8);
    EXPECT_NEAR(phi[0].plain(MultiIndex{0, 0}), 1.0, 1e-14);
    EXPECT_NEAR(phi[0].plain(MultiIndex{1, 0}), 1.0, 1e-14);
    EXPECT_NEAR(phi[1].plain(MultiIndex{0, 1}), 1.0, 1e-14);
    EXPECT_NEAR(phi[1].plain(MultiIndex{1, 1}), 0.5, 1e-14);
    TruncatedSeries rest = phi[1];
    rest.set_plain(MultiIndex{0, 1}, 0.0);
    rest.set_plain(MultiIndex{1, 1}, 0.0);
    EXPECT_LE(rest.max_abs_coefficient(), 1e-13);
}

TEST(PhiTaylor, RotationCosSin) {
    auto rot = systems::rotation(Point::Zero(2));
    Point x0(2);
    x0 << 1.0, 0.0;
    auto phi = phi_taylor(rot, IndexTuple{{0}}, x0, 7);
    // (cos t, sin t)
    for (int k = 0; k <= 7; ++k) {
        const double c = (k % 2 == 0) ? ((k / 2) % 2 == 0 ? 1.0 : -1.0) : 0.0;
        const double s = (k % 2 == 1) ? (((k - 1) / 2) % 2 == 0 ? 1.0 : -1.0) : 0.0;
        EXPECT_NEAR(phi[0].normalized(MultiIndex{k}), c, 1e-12);
        EXPECT_NEAR(phi[1].normalized(MultiIndex{k}), s, 1e-12);
    }
}

TEST(PhiTaylor, MatchesNumericFlowAtHighOrder) {
    // |Phi_series(t) - Phi_numeric(t)| = O(|t|^{M+1}): log-log slope >= M + 0.5.
    // The rotation flow has a full Taylor series, so the truncation error is
    // genuinely of order M + 1.
    auto rot = systems::rotation(Point::Zero(2));
    Point x0(2);
    x0 << 1.0, 0.0;
    const int M = 4;
    auto phi = phi_taylor(rot, IndexTuple{{0}}, x0, M);
    FlowOptions opts;
    opts.rel_tol = 1e-12;
    opts.abs_tol = 1e-14;
    std::vector<double> hs{0.2, 0.1, 0.05}, errs;
    for (double h : hs) {
        Point t(1);
        t << h;
        auto cp = chart_map_numeric(rot, IndexTuple{{0}}, x0, t, opts);
        Point series_pt(2);
        for (int k = 0; k < 2; ++k) series_pt(k) = phi[k].evaluate(to_std(t));
        errs.push_back((series_pt - cp.ambient).lpNorm<Eigen::Infinity>() + 1e-16);
    }
    const double slope = std::log(errs[0] / errs[2]) / std::log(hs[0] / hs[2]);
    EXPECT_GE(slope, M + 0.5);
}

TEST(Pullback, IdentityChart) {
    auto sys = systems::coordinate(2);
    std::vector<Point> grid;
    for (double a : {-0.3, 0.1, 0.4}) {
        Point t(2);
        t << a, -a;
        grid.push_back(t);
    }
    auto ys = pullback_numeric(sys, IndexTuple{{0, 1}}, Point::Zero(2), sys.field(0), grid);
    for (const auto& y : ys) {
        EXPECT_NEAR(y(0), 1.0, 1e-9);
        EXPECT_NEAR(y(1), 0.0, 1e-9);
    }
}

TEST(Pullback, GrushinClosedForm) {
    // dPhi = [[1, 0], [t2/2, 1 + t1/2]]; Y2 = (0, (1+t1)/(1+t1/2))
    auto sys = systems::grushin_triple(1.0);
    std::vector<Point> grid;
    for (double a : {-0.1, 0.05, 0.12}) {
        Point t(2);
        t << a, 0.5 * a;
        grid.push_back(t);
    }
    auto ys = pullback_numeric(sys, IndexTuple{{0, 1}}, sys.center(), sys.field(1), grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t1 = grid[i](0);
        EXPECT_NEAR(ys[i](0), 0.0, 1e-9);
        EXPECT_NEAR(ys[i](1), (1 + t1) / (1 + t1 / 2), 1e-9);
    }
}

TEST(Pullback, HeisenbergIsIdentity) {
    auto sys = systems::heisenberg();
    std::vector<Point> grid;
    Point t(3);
    t << 0.2, -0.1, 0.15;
    grid.push_back(t);
    for (int j = 0; j < 3; ++j) {
        auto ys = pullback_numeric(sys, IndexTuple{{0, 1, 2}}, Point::Zero(3), sys.field(j), grid);
        const Point expected = sys.field(j).evaluate(t);  // Phi = identity
        EXPECT_LE((ys[0] - expected).lpNorm<Eigen::Infinity>(), 1e-9);
    }
}

TEST(Norms, AnalyticNormsExamples) {
    // f = x with fields (dx, dy): ax_norm = r
    auto sys = systems::coordinate(2);
    auto f = TruncatedSeries::variable(2, 6, 1.0, 0);
    std::vector<Point> samples;
    for (double a = -1.0; a <= 1.0; a += 0.25)
        for (double b = -1.0; b <= 1.0; b += 0.25) {
            Point p(2);
            p << a, b;
            if (p.norm() <= 1.0) samples.push_back(p);
        }
    const double r = 0.7;
    auto nm = analytic_norms(f, sys, Point::Zero(2), r, 6, samples);
    EXPECT_NEAR(nm.ax_norm, r, 1e-12);
    // nelson partial: sup|f| on the unit-ball samples + r * sup|df/dx|
    EXPECT_NEAR(nm.nelson_partial, 1.0 + r, 1e-10);

    // f = x^2 with the single field d/dx in 1D: ax_norm = r^2
    auto sys1 = systems::coordinate(1);
    auto g = TruncatedSeries::variable(1, 6, 1.0, 0);
    g = g * g;
    auto nm1 = analytic_norms(g, sys1, Point::Zero(1), r, 6, {Point::Zero(1)});
    EXPECT_NEAR(nm1.ax_norm, r * r, 1e-12);
}

TEST(ExpMap, TrajectoryRecording) {
    auto rot = systems::rotation(Point::Zero(2));
    Eigen::VectorXd a(1);
    a << 1.0;
    Point x0(2);
    x0 << 1.0, 0.0;
    FlowOptions opts;
    opts.trajectory_samples = 1;
    auto fr = exp_map(rot, a, x0, opts);
    ASSERT_TRUE(fr.success);
    EXPECT_GE(fr.trajectory.size(), 2u);
    for (const auto& p : fr.trajectory) EXPECT_NEAR(p.norm(), 1.0, 1e-8);  // stays on the circle
}

TEST(Norms, OffCenterBasePoint) {
    // ax_norm of f = x for the single field d/dx at x0 = 0.3: the chart Taylor
    // is x0 + t, so the norm is |x0| + r
    auto sys = systems::coordinate(1);
    auto f = TruncatedSeries::variable(1, 6, 1.0, 0);
    Point x0(1);
    x0 << 0.3;
    auto nm = analytic_norms(f, sys, x0, 0.5, 6, {x0});
    EXPECT_NEAR(nm.ax_norm, 0.3 + 0.5, 1e-12);
}

TEST(Ball, SegmentVolume) {
    auto sys = systems::coordinate(1);
    BallOptions opts;
    opts.n_paths = 4000;
    opts.seed = 11;
    auto est = reachable_set(sys, Point::Zero(1), {0.3}, opts);
    EXPECT_NEAR(est.volume_lower, 0.6, 0.03);  // within 5%
    EXPECT_GE(est.volume_upper, est.volume_lower);
}

TEST(Ball, DiskArea) {
    auto sys = systems::coordinate(2);
    BallOptions opts;
    opts.n_paths = 20000;
    opts.pieces = 8;
    opts.seed = 7;
    const double delta = 0.5;
    auto est = reachable_set(sys, Point::Zero(2), {delta}, opts);
    const double area = M_PI * delta * delta;
    EXPECT_NEAR(est.volume_lower, area, 0.1 * area);
    // the upper bound is a deliberately crude one-cell dilation
    EXPECT_GE(est.volume_upper, est.volume_lower);
    EXPECT_LE(est.volume_upper, 2.0 * area);
}

TEST(Ball, MonotoneAcrossDelta) {
    auto sys = systems::grushin_triple(1.0, 8, 0.5);
    BallOptions opts;
    opts.n_paths = 2000;
    opts.seed = 3;
    auto small = reachable_set(sys, sys.center(), {0.1}, opts);
    auto large = reachable_set(sys, sys.center(), {0.2}, opts);
    EXPECT_LE(small.volume_lower, large.volume_upper);
}

TEST(Ball, EndpointsInsideDilatedOccupancy) {
    auto sys = systems::grushin_triple(1.0, 8, 0.5);
    BallOptions opts;
    opts.n_paths = 500;
    opts.seed = 5;
    auto est = reachable_set(sys, sys.center(), {0.2}, opts);
    for (const auto& p : est.endpoints) EXPECT_TRUE(est.cell_occupied_or_adjacent(p));
}

TEST(Ball, DeterministicAcrossJobs) {
    auto sys = systems::grushin_triple(1.0, 8, 0.5);
    BallOptions a, b;
    a.n_paths = b.n_paths = 1000;
    a.seed = b.seed = 77;
    a.jobs = 1;
    b.jobs = 2;
    auto ea = reachable_set(sys, sys.center(), {0.2}, a);
    auto eb = reachable_set(sys, sys.center(), {0.2}, b);
    EXPECT_EQ(ea.occupied_cells, eb.occupied_cells);
    EXPECT_DOUBLE_EQ(ea.volume_lower, eb.volume_lower);
}

TEST(Ball, RhoEstimateStraightLine) {
    auto sys = systems::coordinate(1);
    BallOptions opts;
    opts.n_paths = 800;
    opts.seed = 9;
    Point y(1);
    y << 0.25;
    const double rho = rho_estimate(sys, Point::Zero(1), y, opts);
    EXPECT_NEAR(rho, 0.25, 0.05);
}

} // namespace
