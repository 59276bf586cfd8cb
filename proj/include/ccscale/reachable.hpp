#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <thread>
#include <vector>

#include "ccscale/dilation.hpp"
#include "ccscale/flow.hpp"

namespace ccscale {

/// Piecewise-constant admissible control: K segments over the unit horizon,
/// each a coefficient vector with |a|_2 < 1.
struct ControlPath {
    std::vector<Eigen::VectorXd> pieces;
};

struct BallOptions {
    int n_paths = 20000;
    int pieces = 8;
    double cell_size = 0.0;  // 0: derived from the sampled endpoint extents
    std::uint64_t seed = 1;
    double tol = 1e-8;  // integrator relative tolerance per path
    int jobs = 1;
    std::optional<Box> box;
    int cells_per_extent = 24;
};

/// Occupancy-grid estimate of a Carnot-Caratheodory ball.
struct BallEstimate {
    Point center;
    std::vector<double> delta;
    std::vector<Point> endpoints;
    long occupied_cells = 0;
    long dilated_cells = 0;
    double cell_size = 0.0;
    double volume_lower = 0.0;
    double volume_upper = 0.0;
    int bin_dim = 0;
    int failures = 0;
    int paths = 0;
    std::map<std::vector<int>, double> cells;  // occupied cell -> density weight

    bool cell_occupied_or_adjacent(const Point& y) const {
        std::vector<int> key(static_cast<std::size_t>(bin_dim));
        for (int i = 0; i < bin_dim; ++i)
            key[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(y(i) / cell_size));
        std::vector<int> probe = key;
        std::function<bool(int)> rec = [&](int axis) -> bool {
            if (axis == bin_dim) return cells.count(probe) > 0;
            for (int s = -1; s <= 1; ++s) {
                probe[static_cast<std::size_t>(axis)] = key[static_cast<std::size_t>(axis)] + s;
                if (rec(axis + 1)) return true;
            }
            return false;
        };
        return rec(0);
    }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic, platform-independent uniforms.
class PathRng {
public:
    explicit PathRng(std::uint64_t seed) : s_(seed ? seed : 0x1ULL) {}
    double uniform() {
        s_ = splitmix64_state(s_);
        return (s_ >> 11) * 0x1.0p-53;
    }
    double symmetric() { return 2.0 * uniform() - 1.0; }

private:
    static std::uint64_t splitmix64_state(std::uint64_t& x) { return x = splitmix64(x); }
    std::uint64_t s_;
};

// Coefficients are uniform in the open l^2 ball (rejection from the cube).
// Half the paths use one constant draw for the whole horizon: independent
// pieces concentrate the endpoint near the center, so constant paths are
// needed to reach the outer region of the ball at all.
inline ControlPath sample_control_path(PathRng& rng, int q, int pieces, bool constant) {
    auto draw = [&] {
        Eigen::VectorXd a(q);
        while (true) {
            for (int j = 0; j < q; ++j) a(j) = rng.symmetric();
            if (a.squaredNorm() < 1.0) break;
        }
        return a;
    };
    ControlPath cp;
    cp.pieces.reserve(static_cast<std::size_t>(pieces));
    if (constant) {
        const Eigen::VectorXd a = draw();
        for (int p = 0; p < pieces; ++p) cp.pieces.push_back(a);
    } else {
        for (int p = 0; p < pieces; ++p) cp.pieces.push_back(draw());
    }
    return cp;
}

// Flattened polynomial evaluation of a field family; avoids the series map
// overhead inside integrator loops.
class FastFields {
public:
    FastFields(const FieldSystem& sys)
        : N_(sys.ambient_dim()), q_(sys.q()), center_(sys.center()) {
        terms_.resize(static_cast<std::size_t>(q_ * N_));
        for (int j = 0; j < q_; ++j)
            for (int i = 0; i < N_; ++i) {
                auto& dst = terms_[static_cast<std::size_t>(j * N_ + i)];
                for (const auto& [a, v] : sys.field(j).components[static_cast<std::size_t>(i)]
                                              .coefficients())
                    dst.push_back({a.exponents(), v / a.factorial()});
            }
    }

    int dim() const { return N_; }
    int q() const { return q_; }

    void combination(const Eigen::VectorXd& a, const Point& x, Point& out) const {
        Point u = x - center_;
        out.setZero();
        for (int j = 0; j < q_; ++j) {
            if (a(j) == 0.0) continue;
            for (int i = 0; i < N_; ++i)
                out(i) += a(j) * eval_terms(terms_[static_cast<std::size_t>(j * N_ + i)], u);
        }
    }

private:
    struct Term {
        std::vector<int> exps;
        double coeff;
    };
    static double eval_terms(const std::vector<Term>& ts, const Point& u) {
        double s = 0.0;
        for (const auto& t : ts) {
            double m = t.coeff;
            for (std::size_t i = 0; i < t.exps.size(); ++i)
                for (int e = 0; e < t.exps[i]; ++e) m *= u(static_cast<long>(i));
            s += m;
        }
        return s;
    }

    int N_, q_;
    Point center_;
    std::vector<std::vector<Term>> terms_;
};

struct PathOutcome {
    std::vector<Point> samples;  // piece boundaries including the endpoint
    bool ok = false;
};

inline PathOutcome flow_control_path(const FastFields& ff, const ControlPath& cp, const Point& x0,
                                     double tol, const std::optional<Box>& box) {
    PathOutcome out;
    Point x = x0;
    const int K = static_cast<int>(cp.pieces.size());
    for (int p = 0; p < K; ++p) {
        const Eigen::VectorXd& a = cp.pieces[static_cast<std::size_t>(p)];
        auto rhs = [&](double, const Eigen::VectorXd& y) {
            Point v(ff.dim());
            ff.combination(a, y, v);
            return Eigen::VectorXd(v / K);  // piece covers 1/K of the horizon
        };
        Eigen::VectorXd y = x;
        std::string reason;
        if (!integrate_unit_interval(rhs, y, tol, tol * 1e-2, 1e-14, reason)) return out;
        x = y;
        if (box && !box->contains(x)) return out;
        if (!x.allFinite()) return out;
        out.samples.push_back(x);
    }
    out.ok = true;
    return out;
}

} // namespace detail

/// Monte-Carlo occupancy estimate of B_{(X,d)}(x0, delta): samples admissible
/// piecewise-constant controls, flows them under delta^d X, and bins endpoints
/// plus piece-boundary samples into a cube grid.  volume_lower counts occupied
/// cells; volume_upper additionally dilates the occupancy by one cell.
///
/// `weight` (optional) integrates a density factor per cell instead of 1; used
/// for leaf charts, where binning happens in chart coordinates.
inline BallEstimate reachable_set(const FieldSystem& sys, const Point& x0,
                                  const std::vector<double>& delta, const BallOptions& opts = {},
                                  const std::function<double(const Point&)>& weight = nullptr) {
    const FieldSystem dil = dilate(sys, delta);
    const detail::FastFields ff(dil);
    const int N = sys.ambient_dim();

    BallEstimate est;
    est.center = x0;
    est.delta = delta;
    est.bin_dim = N;
    est.paths = opts.n_paths;

    std::vector<detail::PathOutcome> outcomes(static_cast<std::size_t>(opts.n_paths));
    auto worker = [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            detail::PathRng rng(detail::splitmix64(opts.seed) ^
                                detail::splitmix64(static_cast<std::uint64_t>(i) + 1));
            const ControlPath cp =
                detail::sample_control_path(rng, sys.q(), opts.pieces, i % 2 == 0);
            outcomes[static_cast<std::size_t>(i)] =
                detail::flow_control_path(ff, cp, x0, opts.tol, opts.box);
        }
    };
    const int jobs = std::max(1, opts.jobs);
    if (jobs == 1) {
        worker(0, opts.n_paths);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (opts.n_paths + jobs - 1) / jobs;
        for (int t = 0; t < jobs; ++t)
            pool.emplace_back(worker, t * chunk, std::min(opts.n_paths, (t + 1) * chunk));
        for (auto& th : pool) th.join();
    }

    std::vector<Point> all_samples;
    for (auto& oc : outcomes) {
        if (!oc.ok) {
            ++est.failures;
            continue;
        }
        est.endpoints.push_back(oc.samples.back());
        for (auto& s : oc.samples) all_samples.push_back(std::move(s));
    }
    if (est.failures * 2 > opts.n_paths)
        throw DomainError("reachable_set: most paths failed; enlarge the working box");

    double h = opts.cell_size;
    if (h <= 0.0) {
        // smallest positive axis extent of the sampled endpoints sets the cell
        double min_ext = std::numeric_limits<double>::infinity(), max_ext = 0.0;
        for (int i = 0; i < N; ++i) {
            double lo = x0(i), hi = x0(i);
            for (const auto& p : est.endpoints) {
                lo = std::min(lo, p(i));
                hi = std::max(hi, p(i));
            }
            const double ext = hi - lo;
            max_ext = std::max(max_ext, ext);
            if (ext > 1e-14) min_ext = std::min(min_ext, ext);
        }
        if (!std::isfinite(min_ext)) min_ext = std::max(max_ext, 1e-6);
        h = min_ext / opts.cells_per_extent;
        if (h <= 0.0) h = 1e-6;
    }
    est.cell_size = h;

    for (const auto& p : all_samples) {
        std::vector<int> key(static_cast<std::size_t>(N));
        for (int i = 0; i < N; ++i)
            key[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(p(i) / h));
        est.cells.emplace(std::move(key), 0.0);
    }

    auto cell_weight = [&](const std::vector<int>& key) {
        if (!weight) return 1.0;
        Point c(N);
        for (int i = 0; i < N; ++i) c(i) = (key[static_cast<std::size_t>(i)] + 0.5) * h;
        return weight(c);
    };

    const double hv = std::pow(h, N);
    std::map<std::vector<int>, double> dilated;
    for (auto& [key, w] : est.cells) {
        w = cell_weight(key);
        est.volume_lower += hv * w;
        std::vector<int> probe = key;
        std::function<void(int)> rec = [&](int axis) {
            if (axis == N) {
                dilated.emplace(probe, cell_weight(probe));
                return;
            }
            for (int s = -1; s <= 1; ++s) {
                probe[static_cast<std::size_t>(axis)] = key[static_cast<std::size_t>(axis)] + s;
                rec(axis + 1);
            }
            probe[static_cast<std::size_t>(axis)] = key[static_cast<std::size_t>(axis)];
        };
        rec(0);
    }
    est.occupied_cells = static_cast<long>(est.cells.size());
    est.dilated_cells = static_cast<long>(dilated.size());
    for (const auto& [key, w] : dilated) est.volume_upper += hv * w;
    return est;
}

/// Sub-Riemannian distance estimate: bisection over delta with membership
/// tested against the dilated occupancy of the reachable set.
inline double rho_estimate(const FieldSystem& sys, const Point& x, const Point& y,
                           const BallOptions& opts = {}, int bisection_steps = 12,
                           double delta_hi = 1.0) {
    double lo = 0.0, hi = delta_hi;
    const std::vector<double> ones(static_cast<std::size_t>(sys.parameters()), 1.0);
    for (int it = 0; it < bisection_steps; ++it) {
        const double mid = 0.5 * (lo + hi);
        std::vector<double> d = ones;
        for (auto& v : d) v = mid;
        const BallEstimate est = reachable_set(sys, x, d, opts);
        if (est.cell_occupied_or_adjacent(y))
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

} // namespace ccscale
