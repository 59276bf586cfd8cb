#include <gtest/gtest.h>

#include <cmath>

#include "ccscale/series.hpp"
#include "ccscale/series_matrix.hpp"
#include "test_util.hpp"

using ccscale::MultiIndex;
using ccscale::SeriesMatrix;
using ccscale::TruncatedSeries;

namespace {

TruncatedSeries exp_truncated(int max_degree, double radius) {
    TruncatedSeries f(1, max_degree, radius);
    for (int k = 0; k <= max_degree; ++k) f.set_normalized(MultiIndex{k}, 1.0);
    return f;
}

TEST(Series, PolynomialIdentity) {
    // (1+t)(1-t) = 1 - t^2
    TruncatedSeries one = TruncatedSeries::constant(1, 2, 1.0, 1.0);
    TruncatedSeries t = TruncatedSeries::variable(1, 2, 1.0, 0);
    TruncatedSeries p = (one + t) * (one - t);
    EXPECT_DOUBLE_EQ(p.plain(MultiIndex{0}), 1.0);
    EXPECT_DOUBLE_EQ(p.plain(MultiIndex{1}), 0.0);
    EXPECT_DOUBLE_EQ(p.plain(MultiIndex{2}), -1.0);
}

TEST(Series, NormEqualityCaseOfSubmultiplicativity) {
    // f = g = t at radius 2: |t*t| = r^2 = |t|^2
    TruncatedSeries t = TruncatedSeries::variable(1, 2, 2.0, 0);
    TruncatedSeries t2 = t * t;
    EXPECT_DOUBLE_EQ(t2.normalized(MultiIndex{2}), 2.0);
    EXPECT_DOUBLE_EQ(t2.a_norm(), 4.0);
    EXPECT_DOUBLE_EQ(t.a_norm() * t.a_norm(), 4.0);
}

TEST(Series, MismatchErrors) {
    TruncatedSeries a(1, 2, 1.0), b(2, 2, 1.0), c(1, 2, 2.0);
    EXPECT_THROW(a * b, ccscale::StructuralError);
    EXPECT_THROW(a + c, ccscale::StructuralError);
}

TEST(Series, SubmultiplicativityRandomPairs) {
    testutil::Rng rng(20240406);
    for (int it = 0; it < 1000; ++it) {
        const int dim = rng.uniform_int(1, 3);
        const int deg = rng.uniform_int(1, 8);
        const double r = rng.uniform(0.25, 2.0);
        auto f = testutil::random_series(rng, dim, deg, r, rng.uniform_int(1, 6));
        auto g = testutil::random_series(rng, dim, deg, r, rng.uniform_int(1, 6));
        const auto h = f * g;
        const double bound = f.a_norm() * g.a_norm();
        EXPECT_LE(h.a_norm(), bound + 1e-12 * (1.0 + bound));
        // and the product itself matches the brute-force convolution
        const auto oracle = testutil::brute_force_product(f, g);
        for (const auto& [a, v] : h.coefficients())
            EXPECT_NEAR(v / a.factorial(), oracle.plain(a), 1e-11 * (1.0 + std::abs(v)));
    }
}

TEST(Series, NormOfTruncatedExp) {
    const auto e = exp_truncated(10, 1.0);
    double partial = 0.0, fact = 1.0;
    for (int k = 0; k <= 10; ++k) {
        if (k > 0) fact *= k;
        partial += 1.0 / fact;
    }
    EXPECT_NEAR(e.a_norm(), partial, 1e-15);
    EXPECT_NEAR(e.a_norm(), 2.7182818, 1e-6);
    EXPECT_DOUBLE_EQ(TruncatedSeries(1, 4, 1.0).a_norm(), 0.0);
    TruncatedSeries half = TruncatedSeries::variable(1, 3, 0.5, 0);
    EXPECT_DOUBLE_EQ(half.a_norm(), 0.5);
}

TEST(Series, NormScalarLinearity) {
    testutil::Rng rng(7);
    for (int it = 0; it < 50; ++it) {
        auto f = testutil::random_series(rng, 2, 5, 1.5, 5);
        const double c = rng.uniform(-3.0, 3.0);
        EXPECT_NEAR((f * c).a_norm(), std::abs(c) * f.a_norm(), 1e-12 * (1.0 + f.a_norm()));
    }
}

TEST(Series, ScaleArgument) {
    TruncatedSeries t = TruncatedSeries::variable(1, 3, 1.0, 0);
    auto half = t.scale_argument(0.5);
    EXPECT_DOUBLE_EQ(half.plain(MultiIndex{1}), 0.5);
    EXPECT_DOUBLE_EQ(half.a_norm(), 0.5 * t.a_norm());

    TruncatedSeries t2 = t * t;
    auto q = t2.scale_argument(0.5);
    EXPECT_DOUBLE_EQ(q.plain(MultiIndex{2}), 0.25);
    EXPECT_LE(q.a_norm(), 0.5 * t2.a_norm() + 1e-15);

    TruncatedSeries f = TruncatedSeries::constant(1, 3, 1.0, 1.0) + t;
    auto z = f.scale_argument(0.0);
    EXPECT_DOUBLE_EQ(z.constant_term(), 1.0);
    EXPECT_TRUE((z - TruncatedSeries::constant(1, 3, 1.0, 1.0)).is_zero());

    EXPECT_THROW(f.scale_argument(1.5), ccscale::DomainError);
    EXPECT_THROW(f.scale_argument(-0.1), ccscale::DomainError);
}

TEST(Series, ScaleArgumentContractsVanishingSeries) {
    testutil::Rng rng(99);
    for (int it = 0; it < 200; ++it) {
        auto f = testutil::random_series(rng, 2, 6, 1.0, 6);
        f.set_normalized(MultiIndex(2), 0.0);  // force f(0) = 0
        const double s = rng.uniform();
        EXPECT_LE(f.scale_argument(s).a_norm(), s * f.a_norm() + 1e-13);
        EXPECT_TRUE((f.scale_argument(1.0) - f).is_zero());
    }
}

TEST(Series, RayAverage) {
    TruncatedSeries t = TruncatedSeries::variable(1, 3, 1.0, 0);
    auto t2 = t * t;
    EXPECT_DOUBLE_EQ(t2.ray_average().plain(MultiIndex{2}), 1.0 / 3.0);
    auto c = TruncatedSeries::constant(1, 3, 1.0, 4.0);
    EXPECT_TRUE((c.ray_average() - c).is_zero());
    auto f = t + t * t * t;
    auto g = f.ray_average();
    EXPECT_DOUBLE_EQ(g.plain(MultiIndex{1}), 0.5);
    EXPECT_DOUBLE_EQ(g.plain(MultiIndex{3}), 0.25);
}

TEST(Series, RayAverageLinearity) {
    testutil::Rng rng(13);
    auto f = testutil::random_series(rng, 3, 5, 1.0, 8);
    auto g = testutil::random_series(rng, 3, 5, 1.0, 8);
    auto lhs = (f + g * 2.0).ray_average();
    auto rhs = f.ray_average() + g.ray_average() * 2.0;
    EXPECT_LE((lhs - rhs).max_abs_coefficient(), 1e-15);
}

TEST(Series, Differentiate) {
    TruncatedSeries t = TruncatedSeries::variable(1, 3, 1.0, 0);
    auto d = (t * t).differentiate(0);
    EXPECT_DOUBLE_EQ(d.plain(MultiIndex{1}), 2.0);
    EXPECT_EQ(d.max_degree(), 2);

    const auto e10 = exp_truncated(10, 1.0);
    const auto e9 = exp_truncated(9, 1.0);
    EXPECT_LE((e10.differentiate(0) - e9).max_abs_coefficient(), 0.0);
}

TEST(Series, DerivativeNormBound) {
    // |df at s| <= sup_{m<=M} (s/r)^m (m+1)/r * |f at r|
    const double r = 1.0, s = 0.5;
    TruncatedSeries t = TruncatedSeries::variable(1, 6, r, 0);
    auto f = t * t;
    double factor = 0.0;
    for (int m = 0; m <= f.max_degree(); ++m)
        factor = std::max(factor, std::pow(s / r, m) * (m + 1) / r);
    EXPECT_NEAR(factor, 1.0, 1e-15);
    EXPECT_LE(f.differentiate(0).a_norm_at(s), factor * f.a_norm_at(r) + 1e-15);

    testutil::Rng rng(5);
    for (int it = 0; it < 100; ++it) {
        auto g = testutil::random_series(rng, 2, 6, r, 6);
        const double ss = rng.uniform(0.05, 0.95);
        double bound = 0.0;
        for (int m = 0; m <= g.max_degree(); ++m)
            bound = std::max(bound, std::pow(ss / r, m) * (m + 1) / r);
        for (int j = 0; j < 2; ++j)
            EXPECT_LE(g.differentiate(j).a_norm_at(ss), 2 * bound * g.a_norm_at(r) + 1e-12);
    }
}

TEST(Series, ComposeBasics) {
    // f(u) = u^2, Phi(t) = t + t^2  ->  t^2 + 2t^3 + t^4
    TruncatedSeries u = TruncatedSeries::variable(1, 4, 1.0, 0);
    TruncatedSeries f = u * u;
    TruncatedSeries phi = u + u * u;
    auto g = f.compose({phi});
    EXPECT_DOUBLE_EQ(g.plain(MultiIndex{2}), 1.0);
    EXPECT_DOUBLE_EQ(g.plain(MultiIndex{3}), 2.0);
    EXPECT_DOUBLE_EQ(g.plain(MultiIndex{4}), 1.0);

    // identity shift leaves f unchanged
    testutil::Rng rng(3);
    auto h = testutil::random_series(rng, 2, 5, 1.0, 8);
    std::vector<TruncatedSeries> id{TruncatedSeries::variable(2, 5, 1.0, 0),
                                    TruncatedSeries::variable(2, 5, 1.0, 1)};
    EXPECT_LE((h.compose(id) - h).max_abs_coefficient(), 1e-12);

    // nonzero inner constant term leaves the chart
    auto bad = TruncatedSeries::constant(1, 4, 1.0, 1.0) + u;
    EXPECT_THROW(f.compose({bad}), ccscale::DomainError);
}

TEST(Series, ComposeGeometric) {
    // f(u) = 1/u expanded at 1: sum (-1)^k (u-1)^k.  Phi(t) = 1 + t, relative
    // inner series t.  Result: the geometric series 1 - t + t^2 - ...
    const int M = 6;
    TruncatedSeries f(1, M, 0.9);
    for (int k = 0; k <= M; ++k) f.set_plain(MultiIndex{k}, (k % 2 == 0) ? 1.0 : -1.0);
    TruncatedSeries t = TruncatedSeries::variable(1, M, 0.9, 0);
    auto g = f.compose({t});
    for (int k = 0; k <= M; ++k)
        EXPECT_NEAR(g.plain(MultiIndex{k}), (k % 2 == 0) ? 1.0 : -1.0, 1e-13);
}

TEST(Series, ComposeAssociativity) {
    testutil::Rng rng(11);
    for (int it = 0; it < 20; ++it) {
        auto f = testutil::random_series(rng, 1, 5, 1.0, 4);
        auto phi = testutil::random_series(rng, 1, 5, 1.0, 4);
        phi.set_normalized(MultiIndex{0}, 0.0);
        auto psi = testutil::random_series(rng, 1, 5, 1.0, 4);
        psi.set_normalized(MultiIndex{0}, 0.0);
        auto lhs = f.compose({phi}).compose({psi});
        auto rhs = f.compose({phi.compose({psi})});
        EXPECT_LE((lhs - rhs).max_abs_coefficient(), 1e-9);
    }
}

TEST(Series, Reciprocal) {
    // 1/(1+at) = 1 - at + a^2 t^2 - ...
    const double a = 0.7;
    TruncatedSeries f = TruncatedSeries::constant(1, 5, 1.0, 1.0) +
                        TruncatedSeries::variable(1, 5, 1.0, 0) * a;
    auto inv = f.reciprocal();
    for (int k = 0; k <= 5; ++k)
        EXPECT_NEAR(inv.plain(MultiIndex{k}), std::pow(-a, k), 1e-13);
    auto prod = f * inv;
    EXPECT_NEAR(prod.constant_term(), 1.0, 1e-14);
    EXPECT_LE((prod - TruncatedSeries::constant(1, 5, 1.0, 1.0)).max_abs_coefficient(), 1e-13);
}

TEST(Series, Evaluate) {
    const auto e = exp_truncated(10, 2.0);
    EXPECT_NEAR(e.evaluate({1.0}), 2.7182818, 1e-6);
    testutil::Rng rng(17);
    auto f = testutil::random_series(rng, 2, 4, 1.0, 6);
    EXPECT_DOUBLE_EQ(f.evaluate({0.0, 0.0}), f.constant_term());
    TruncatedSeries t = TruncatedSeries::variable(1, 2, 5.0, 0);
    EXPECT_DOUBLE_EQ((t * t).evaluate({3.0}), 9.0);
    EXPECT_THROW(f.evaluate({1.0}), ccscale::StructuralError);
}

TEST(Series, NormComparisonWithSampledDerivativeNorm) {
    // sampled C^{omega,r/2} partial norm (sup from below on a grid) <= a-norm at r
    testutil::Rng rng(23);
    for (int it = 0; it < 25; ++it) {
        auto f = testutil::random_series(rng, 1, 6, 1.0, 5);
        const double r = f.radius(), r2 = r / 2.0;
        double cnorm = 0.0;
        TruncatedSeries d = f;
        double fact = 1.0;
        for (int m = 0; m <= f.max_degree(); ++m) {
            if (m > 0) {
                d = d.differentiate(0);
                fact *= m;
            }
            double sup = 0.0;
            for (int k = -8; k <= 8; ++k) sup = std::max(sup, std::abs(d.evaluate({r2 * k / 8.5})));
            cnorm += std::pow(r2, m) / fact * sup;
        }
        EXPECT_LE(cnorm, f.a_norm_at(r) + 1e-10);
    }
}

TEST(Series, Recenter) {
    // f(x) = x^2 recentered at 1: (u+1)^2 = 1 + 2u + u^2
    TruncatedSeries f = TruncatedSeries::variable(1, 4, 1.0, 0);
    f = f * f;
    auto g = ccscale::recenter(f, {1.0});
    EXPECT_DOUBLE_EQ(g.plain(MultiIndex{0}), 1.0);
    EXPECT_DOUBLE_EQ(g.plain(MultiIndex{1}), 2.0);
    EXPECT_DOUBLE_EQ(g.plain(MultiIndex{2}), 1.0);
}

TEST(SeriesMatrix, DeterminantAndInverse) {
    // A = 0: det(I) = 1, inverse = I
    auto a = SeriesMatrix::zero(3, 2, 4, 1.0);
    auto id = SeriesMatrix::identity(3, 2, 4, 1.0);
    auto d = (id + a).determinant();
    EXPECT_DOUBLE_EQ(d.constant_term(), 1.0);
    EXPECT_LE((d - TruncatedSeries::constant(2, 4, 1.0, 1.0)).max_abs_coefficient(), 0.0);
    auto inv = a.inverse_of_identity_plus();
    EXPECT_LE((inv - id).max_abs_coefficient(), 0.0);
}

TEST(SeriesMatrix, HeisenbergDeterminant) {
    // A rows (0,0,-t2/2), (0,0,t1/2), (0,0,0): det(I+A) = 1
    auto a = SeriesMatrix::zero(3, 3, 6, 1.0);
    a.at(0, 2) = TruncatedSeries::variable(3, 6, 1.0, 1) * (-0.5);
    a.at(1, 2) = TruncatedSeries::variable(3, 6, 1.0, 0) * 0.5;
    auto id = SeriesMatrix::identity(3, 3, 6, 1.0);
    auto d = (id + a).determinant();
    EXPECT_LE((d - TruncatedSeries::constant(3, 6, 1.0, 1.0)).max_abs_coefficient(), 1e-15);
}

TEST(SeriesMatrix, ScalarGeometricInverse) {
    // 1x1 matrix (a t): (1 + a t)^{-1} = geometric series
    const double aa = 0.6;
    auto a = SeriesMatrix::zero(1, 1, 6, 1.0);
    a.at(0, 0) = TruncatedSeries::variable(1, 6, 1.0, 0) * aa;
    auto inv = a.inverse_of_identity_plus();
    for (int k = 0; k <= 6; ++k)
        EXPECT_NEAR(inv.at(0, 0).plain(MultiIndex{k}), std::pow(-aa, k), 1e-13);
}

TEST(SeriesMatrix, FractionFreeDeterminantLargeMatrix) {
    // n = 5 goes through the elimination path; cross-check against the
    // numeric determinant of the evaluated matrix (entries linear, M = 5,
    // so the determinant series is exact)
    testutil::Rng rng(271828);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 5, M = 5;
        SeriesMatrix m(n, n, 2, M, 1.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                TruncatedSeries f(2, M, 1.0);
                f.set_plain(MultiIndex{0, 0}, rng.uniform(-1.0, 1.0) +
                                                  (i == j ? 2.0 : 0.0));
                f.set_plain(MultiIndex{1, 0}, rng.uniform(-1.0, 1.0));
                f.set_plain(MultiIndex{0, 1}, rng.uniform(-1.0, 1.0));
                m.at(i, j) = f;
            }
        const auto det = m.determinant();
        for (double s : {0.0, 0.2, -0.35}) {
            const std::vector<double> t{s, -0.5 * s};
            EXPECT_NEAR(det.evaluate(t), m.evaluate(t).determinant(), 1e-10);
        }
    }
}

TEST(Series, InsideRadiusFlag) {
    TruncatedSeries f(2, 4, 1.0);
    EXPECT_TRUE(f.inside_radius({0.5, 0.5}));
    EXPECT_FALSE(f.inside_radius({1.0, 0.5}));
}

TEST(Series, RecenterMultivariate) {
    // f(x, y) = x^2 y recentered at (1, -2)
    TruncatedSeries f = TruncatedSeries::monomial(2, 5, 1.0, MultiIndex{2, 1}, 1.0);
    auto g = ccscale::recenter(f, {1.0, -2.0});
    testutil::Rng rng(99);
    for (int i = 0; i < 10; ++i) {
        const double u = rng.uniform(-0.3, 0.3), v = rng.uniform(-0.3, 0.3);
        const double x = 1.0 + u, y = -2.0 + v;
        EXPECT_NEAR(g.evaluate({u, v}), x * x * y, 1e-12);
    }
}

TEST(SeriesMatrix, LinearFormArgumentScaling) {
    // for C(t) = sum_j t_j C_j(t): |C(s.)| <= r s sum_j |C_j| at radius r
    testutil::Rng rng(4242);
    for (int it = 0; it < 40; ++it) {
        const int n = rng.uniform_int(1, 3);
        const int M = 5;
        const double r = rng.uniform(0.2, 1.5);
        double sum_norms = 0.0;
        SeriesMatrix C = SeriesMatrix::zero(n, n, M, r);
        for (int l = 0; l < n; ++l) {
            SeriesMatrix Cl = SeriesMatrix::zero(n, n, M, r);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    Cl.at(i, j) = testutil::random_series(rng, n, M - 1, r, 3);
            sum_norms += Cl.a_norm_at(r);
            auto tl = TruncatedSeries::variable(n, M, r, l);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) C.at(i, j) = C.at(i, j) + tl * Cl.at(i, j);
        }
        const double s = rng.uniform();
        EXPECT_LE(C.scale_argument(s).a_norm_at(r), r * s * sum_norms + 1e-10);
    }
}

TEST(SeriesMatrix, NeumannIdentityResidual) {
    testutil::Rng rng(31);
    for (int it = 0; it < 25; ++it) {
        const int n = rng.uniform_int(1, 3);
        auto a = SeriesMatrix::zero(n, 2, 4, 1.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                a.at(i, j) = testutil::random_series(rng, 2, 4, 1.0, 3, 0.2);
        SeriesMatrix inv(n, n, 2, 4, 1.0);
        try {
            inv = a.inverse_of_identity_plus();
        } catch (const ccscale::ConvergenceError&) {
            continue;  // I + A(0) happened to be singular
        }
        auto id = SeriesMatrix::identity(n, 2, 4, 1.0);
        auto resid = (id + a) * inv - id;
        EXPECT_LE(resid.max_abs_coefficient(), 1e-12);
    }
}

} // namespace
