#pragma once

#include <cmath>
#include <vector>

#include "ccscale/flow.hpp"
#include "ccscale/vector_field.hpp"

namespace ccscale {

struct AnalyticNorms {
    double nelson_partial = 0.0;  // lower estimate of the derivative-word norm
    double ax_norm = 0.0;         // norm of the degree-M Taylor of f along the flow
};

/// Two real-analyticity norms of an ambient function f with respect to the
/// system's fields at x0 and radius r:
///
///  - nelson_partial: sum_{m<=M} r^m/m! sum_{|word|=m} sup |X^word f| with the
///    sup sampled on the given point set (a lower bound; the words are ordered
///    multi-indices over the q fields),
///  - ax_norm: the series norm of the degree-M Taylor expansion of
///    f(e^{t_1 X_1 + ... + t_q X_q} x0) at radius r.
inline AnalyticNorms analytic_norms(const TruncatedSeries& f, const FieldSystem& sys,
                                    const Point& x0, double r, int M,
                                    const std::vector<Point>& samples) {
    const int q = sys.q();
    const int N = sys.ambient_dim();
    if (f.dim() != N) throw StructuralError("analytic_norms: f must live on the ambient space");

    AnalyticNorms out;

    auto apply_field = [&](int j, const TruncatedSeries& g) {
        TruncatedSeries r_(N, std::max(g.max_degree() - 1, 0), g.radius());
        for (int k = 0; k < N; ++k)
            r_ = r_ + sys.field(j).components[static_cast<std::size_t>(k)].truncated(
                          r_.max_degree()) *
                          g.differentiate(k);
        return r_;
    };
    auto sampled_sup = [&](const TruncatedSeries& g) {
        double sup = 0.0;
        for (const auto& x : samples)
            sup = std::max(sup, std::abs(g.evaluate(to_std(x - sys.center()))));
        return sup;
    };

    // breadth-first over words of length m
    std::vector<TruncatedSeries> level{f};
    double mfact = 1.0;
    for (int m = 0; m <= M; ++m) {
        if (m > 0) {
            mfact *= m;
            std::vector<TruncatedSeries> next;
            next.reserve(level.size() * static_cast<std::size_t>(q));
            for (const auto& g : level)
                for (int j = 0; j < q; ++j) next.push_back(apply_field(j, g));
            level = std::move(next);
        }
        double sum = 0.0;
        for (const auto& g : level) sum += sampled_sup(g);
        out.nelson_partial += std::pow(r, m) / mfact * sum;
        if (m >= f.max_degree()) break;  // deeper words have no stored jet left
    }

    IndexTuple all;
    for (int j = 0; j < q; ++j) all.entries.push_back(j);
    const auto phi = phi_taylor(sys, all, x0, M);
    std::vector<TruncatedSeries> rel = phi;
    for (int k = 0; k < N; ++k)
        rel[static_cast<std::size_t>(k)].add_normalized(MultiIndex(q), -x0(k));
    // f is expanded around the system center; shift it to x0 so the chart
    // composition starts at a zero relative constant term
    TruncatedSeries fr = (x0 - sys.center()).lpNorm<Eigen::Infinity>() == 0.0
                             ? f
                             : recenter(f, to_std(x0 - sys.center()));
    const TruncatedSeries h = fr.compose(rel);
    out.ax_norm = h.a_norm_at(r);
    return out;
}

} // namespace ccscale
