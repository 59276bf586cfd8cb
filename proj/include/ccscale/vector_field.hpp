#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "ccscale/errors.hpp"
#include "ccscale/series.hpp"
#include "ccscale/series_matrix.hpp"

namespace ccscale {

using Point = Eigen::VectorXd;

inline std::vector<double> to_std(const Point& x) {
    return std::vector<double>(x.data(), x.data() + x.size());
}

/// Vector field on a box in R^N whose components are truncated power series
/// around a common expansion center.
struct AnalyticVectorField {
    int ambient_dim = 0;
    Point center;
    std::vector<TruncatedSeries> components;  // N series of dim N
    std::string name;

    int max_degree() const { return components.front().max_degree(); }
    double radius() const { return components.front().radius(); }

    Point evaluate(const Point& x) const {
        const std::vector<double> u = to_std(x - center);
        Point v(ambient_dim);
        for (int i = 0; i < ambient_dim; ++i)
            v(i) = components[static_cast<std::size_t>(i)].evaluate(u);
        return v;
    }

    /// Jacobian d(components)/dx at x, from the exact series derivatives.
    Eigen::MatrixXd jacobian(const Point& x) const {
        const std::vector<double> u = to_std(x - center);
        Eigen::MatrixXd J(ambient_dim, ambient_dim);
        for (int i = 0; i < ambient_dim; ++i)
            for (int j = 0; j < ambient_dim; ++j)
                J(i, j) = components[static_cast<std::size_t>(i)].differentiate(j).evaluate(u);
        return J;
    }

    double max_abs_coefficient() const {
        double m = 0.0;
        for (const auto& f : components) m = std::max(m, f.max_abs_coefficient());
        return m;
    }

    AnalyticVectorField scaled(double s) const {
        AnalyticVectorField r(*this);
        for (auto& f : r.components) f = f * s;
        return r;
    }
};

inline AnalyticVectorField make_field(int ambient_dim, const Point& center,
                                      std::vector<TruncatedSeries> comps, std::string name) {
    if (static_cast<int>(comps.size()) != ambient_dim)
        throw StructuralError("field needs one component per coordinate");
    for (const auto& f : comps)
        if (f.dim() != ambient_dim || f.radius() != comps.front().radius() ||
            f.max_degree() != comps.front().max_degree())
            throw StructuralError("field components must share dim, degree and radius");
    return AnalyticVectorField{ambient_dim, center, std::move(comps), std::move(name)};
}

/// Field with a formal degree in N^nu (not all zero).  Brackets add degrees.
struct WeightedField {
    AnalyticVectorField field;
    std::vector<int> degree;

    int total_degree() const {
        int d = 0;
        for (int k : degree) d += k;
        return d;
    }
    int max_component() const {
        int d = 0;
        for (int k : degree) d = std::max(d, k);
        return d;
    }
};

/// Tuple of field indices (0-based internally; printed 1-based).
struct IndexTuple {
    std::vector<int> entries;

    int size() const { return static_cast<int>(entries.size()); }
    int operator[](int i) const { return entries[static_cast<std::size_t>(i)]; }
    bool operator==(const IndexTuple& o) const { return entries == o.entries; }
    bool operator<(const IndexTuple& o) const { return entries < o.entries; }

    bool strictly_increasing() const {
        for (std::size_t i = 1; i < entries.size(); ++i)
            if (entries[i] <= entries[i - 1]) return false;
        return true;
    }

    std::string to_string() const {
        std::string s = "(";
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(entries[i] + 1);
        }
        return s + ")";
    }
};

/// Strictly increasing n-tuples from {0..q-1}, lexicographic order.
inline std::vector<IndexTuple> increasing_tuples(int n, int q) {
    std::vector<IndexTuple> out;
    if (n == 0) {
        out.push_back(IndexTuple{});
        return out;
    }
    if (n > q) return out;
    std::vector<int> c(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) c[static_cast<std::size_t>(i)] = i;
    while (true) {
        out.push_back(IndexTuple{c});
        int i = n - 1;
        while (i >= 0 && c[static_cast<std::size_t>(i)] == q - n + i) --i;
        if (i < 0) break;
        ++c[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < n; ++j)
            c[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j - 1)] + 1;
    }
    return out;
}

/// Sign of the permutation sorting `t` ascending; 0 if `t` has duplicates.
inline int sort_sign(std::vector<int>& t) {
    int sign = 1;
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = i + 1; j < t.size(); ++j) {
            if (t[i] == t[j]) return 0;
            if (t[i] > t[j]) {
                std::swap(t[i], t[j]);
                sign = -sign;
            }
        }
    return sign;
}

/// Map (j, k, l) -> c_{j,k}^l with [X_j, X_k] = sum_l c_{j,k}^l X_l.
/// Series are ambient expansions around the system center.
using StructureMap = std::map<std::tuple<int, int, int>, TruncatedSeries>;

/// Finite family of weighted analytic vector fields sharing a center, a
/// truncation degree, and a radius, with optional structure coefficients.
struct FieldSystem {
    std::vector<WeightedField> fields;
    std::optional<StructureMap> structure;

    int q() const { return static_cast<int>(fields.size()); }
    int ambient_dim() const { return fields.front().field.ambient_dim; }
    const Point& center() const { return fields.front().field.center; }
    int max_degree() const { return fields.front().field.max_degree(); }
    double radius() const { return fields.front().field.radius(); }
    int parameters() const { return static_cast<int>(fields.front().degree.size()); }

    const AnalyticVectorField& field(int j) const {
        return fields[static_cast<std::size_t>(j)].field;
    }
    const std::vector<int>& degree(int j) const {
        return fields[static_cast<std::size_t>(j)].degree;
    }

    TruncatedSeries structure_coefficient(int j, int k, int l) const {
        if (!structure) throw StructuralError("structure coefficients not available");
        auto it = structure->find({j, k, l});
        if (it != structure->end()) return it->second;
        return TruncatedSeries(ambient_dim(), max_degree(), radius());
    }

    /// N x q matrix of field values at x.
    Eigen::MatrixXd value_matrix(const Point& x) const {
        Eigen::MatrixXd m(ambient_dim(), q());
        for (int j = 0; j < q(); ++j) m.col(j) = field(j).evaluate(x);
        return m;
    }
};

inline FieldSystem make_system(std::vector<WeightedField> fields,
                               std::optional<StructureMap> structure = std::nullopt) {
    if (fields.empty()) throw StructuralError("FieldSystem needs at least one field");
    const auto& f0 = fields.front().field;
    for (const auto& wf : fields) {
        if (wf.field.ambient_dim != f0.ambient_dim || wf.field.center != f0.center ||
            wf.field.max_degree() != f0.max_degree() || wf.field.radius() != f0.radius())
            throw StructuralError("FieldSystem fields must share center, truncation and radius");
        if (wf.degree.size() != fields.front().degree.size())
            throw StructuralError("FieldSystem degree vectors must share length");
        bool all_zero = true;
        for (int d : wf.degree) all_zero = all_zero && d == 0;
        if (all_zero) throw StructuralError("formal degree must be nonzero");
    }
    return FieldSystem{std::move(fields), std::move(structure)};
}

/// [X, Y]_i = sum_k (X_k d_k Y_i - Y_k d_k X_i), truncated one degree down.
inline AnalyticVectorField lie_bracket(const AnalyticVectorField& X,
                                       const AnalyticVectorField& Y) {
    if (X.ambient_dim != Y.ambient_dim) throw StructuralError("lie_bracket: dimension mismatch");
    if (X.center != Y.center) throw StructuralError("lie_bracket: mismatched centers");
    const int N = X.ambient_dim;
    std::vector<TruncatedSeries> comps;
    comps.reserve(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
        TruncatedSeries s(N, std::max(X.max_degree() - 1, 0), X.radius());
        for (int k = 0; k < N; ++k) {
            s = s + X.components[static_cast<std::size_t>(k)] *
                        Y.components[static_cast<std::size_t>(i)].differentiate(k);
            s = s - Y.components[static_cast<std::size_t>(k)] *
                        X.components[static_cast<std::size_t>(i)].differentiate(k);
        }
        comps.push_back(s);
    }
    return make_field(N, X.center, std::move(comps), "[" + X.name + "," + Y.name + "]");
}

/// All n x n minors of the N x n matrix (X_{j_1}(x) | ... | X_{j_n}(x)),
/// indexed by the increasing row tuples of I_0(n, N) in graded-lex order.
inline std::vector<double> wedge_minors(const std::vector<const AnalyticVectorField*>& fields,
                                        const Point& x) {
    const int n = static_cast<int>(fields.size());
    const int N = fields.front()->ambient_dim;
    if (n > N) throw StructuralError("wedge_minors: more fields than ambient dimensions");
    Eigen::MatrixXd m(N, n);
    for (int j = 0; j < n; ++j) m.col(j) = fields[static_cast<std::size_t>(j)]->evaluate(x);
    std::vector<double> out;
    for (const auto& K : increasing_tuples(n, N)) {
        Eigen::MatrixXd sub(n, n);
        for (int i = 0; i < n; ++i) sub.row(i) = m.row(K[i]);
        out.push_back(sub.determinant());
    }
    return out;
}

inline std::vector<double> wedge_minors(const FieldSystem& sys, const IndexTuple& J,
                                        const Point& x) {
    std::vector<const AnalyticVectorField*> f;
    for (int j : J.entries) f.push_back(&sys.field(j));
    return wedge_minors(f, x);
}

struct WedgeRatioResult {
    double value = 0.0;
    double residual = 0.0;  // proportionality defect relative to the pivot minor
};

/// The quotient of wedges /\X_J / /\X_{J0} at a point, computed through the
/// largest minor of X_{J0}.  Both wedges must be multiples of the same n-vector
/// (the fields are tangent to a common leaf); the residual reports how far the
/// minor vectors are from proportional.
inline WedgeRatioResult wedge_ratio(const IndexTuple& J, const IndexTuple& J0,
                                    const FieldSystem& sys, const Point& x,
                                    double tangency_tol = 1e-6) {
    if (J.size() != J0.size()) throw StructuralError("wedge_ratio: tuple size mismatch");
    const auto mJ = wedge_minors(sys, J, x);
    const auto mJ0 = wedge_minors(sys, J0, x);
    std::size_t pivot = 0;
    for (std::size_t k = 1; k < mJ0.size(); ++k)
        if (std::abs(mJ0[k]) > std::abs(mJ0[pivot])) pivot = k;
    const double p = mJ0[pivot];
    if (std::abs(p) < 1e-300) throw RankError("wedge_ratio: degenerate base tuple");
    WedgeRatioResult r;
    r.value = mJ[pivot] / p;
    for (std::size_t k = 0; k < mJ.size(); ++k)
        r.residual = std::max(r.residual, std::abs(mJ[k] - r.value * mJ0[k]) / std::abs(p));
    if (r.residual > tangency_tol)
        throw TangencyError("wedge_ratio: wedges are not proportional (residual " +
                            std::to_string(r.residual) + ")");
    return r;
}

struct BasisSelection {
    IndexTuple J0;
    int rank = 0;        // numerical rank n0(x)
    double pivot = 0.0;  // winning minor magnitude
};

inline int numerical_rank(const Eigen::MatrixXd& m, double rel_threshold = 1e-8) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    int r = 0;
    for (int i = 0; i < s.size(); ++i)
        if (s(i) > rel_threshold * s(0)) ++r;
    return r;
}

/// Basis tuple maximizing the wedge magnitude at x (the zeta = 1 selection);
/// ties broken graded-lexicographically.  Rank 0 is reported, not thrown.
inline BasisSelection select_J0(const FieldSystem& sys, const Point& x, double zeta = 1.0) {
    if (!(zeta > 0.0 && zeta <= 1.0)) throw DomainError("select_J0: zeta must lie in (0,1]");
    BasisSelection out;
    out.rank = numerical_rank(sys.value_matrix(x));
    if (out.rank == 0) return out;
    for (const auto& J : increasing_tuples(out.rank, sys.q())) {
        const auto minors = wedge_minors(sys, J, x);
        double mag = 0.0;
        for (double v : minors) mag = std::max(mag, std::abs(v));
        if (mag > out.pivot) {
            out.pivot = mag;
            out.J0 = J;
        }
    }
    if (out.pivot == 0.0) throw RankError("select_J0: rank positive but all minors vanish");
    return out;
}

/// Iterated brackets [V_j, Z] of the generators with formal degrees bounded by
/// m (component-wise for several parameters).  Zero fields are pruned and
/// coefficient-identical duplicates dropped; output is ordered by total degree
/// then construction order.
inline FieldSystem bracket_closure(const std::vector<WeightedField>& generators, int m) {
    for (const auto& g : generators)
        if (g.max_component() > m)
            throw DomainError("bracket_closure: m below a generator degree");
    double scale = 0.0;
    for (const auto& g : generators) scale = std::max(scale, g.field.max_abs_coefficient());
    const double zero_tol = 1e-12 * std::max(scale, 1.0);

    auto is_zero = [&](const AnalyticVectorField& f) { return f.max_abs_coefficient() <= zero_tol; };
    auto same = [](const AnalyticVectorField& a, const AnalyticVectorField& b) {
        if (a.ambient_dim != b.ambient_dim) return false;
        for (int i = 0; i < a.ambient_dim; ++i) {
            const auto& fa = a.components[static_cast<std::size_t>(i)];
            const auto& fb = b.components[static_cast<std::size_t>(i)];
            const int deg = std::min(fa.max_degree(), fb.max_degree());
            if (!(fa.truncated(deg) - fb.truncated(deg)).is_zero()) return false;
        }
        return true;
    };

    std::vector<WeightedField> list;
    for (const auto& g : generators)
        if (!is_zero(g.field)) list.push_back(g);

    bool grew = true;
    while (grew) {
        grew = false;
        const std::size_t snapshot = list.size();
        for (const auto& g : generators) {
            for (std::size_t i = 0; i < snapshot; ++i) {
                std::vector<int> d = g.degree;
                for (std::size_t p = 0; p < d.size(); ++p)
                    d[p] += list[i].degree[p];
                int dmax = 0;
                for (int v : d) dmax = std::max(dmax, v);
                if (dmax > m) continue;
                AnalyticVectorField br = lie_bracket(g.field, list[i].field);
                if (is_zero(br)) continue;
                bool dup = false;
                for (const auto& e : list)
                    if (e.degree == d && (same(e.field, br) || same(e.field, br.scaled(-1.0)))) {
                        dup = true;
                        break;
                    }
                if (dup) continue;
                br.name = "[" + g.field.name + "," + list[i].field.name + "]";
                list.push_back(WeightedField{std::move(br), std::move(d)});
                grew = true;
            }
        }
    }

    std::stable_sort(list.begin(), list.end(), [](const WeightedField& a, const WeightedField& b) {
        return a.total_degree() < b.total_degree();
    });

    // brackets shrink the truncation degree; bring everything to the common one
    int common = list.front().field.max_degree();
    for (const auto& f : list) common = std::min(common, f.field.max_degree());
    for (auto& wf : list)
        for (auto& comp : wf.field.components) comp = comp.truncated(common);
    return make_system(std::move(list));
}

struct Box {
    Point lo, hi;

    static Box centered(const Point& c, double halfwidth) {
        Box b;
        b.lo = c.array() - halfwidth;
        b.hi = c.array() + halfwidth;
        return b;
    }
    Point clamp(const Point& x) const {
        Point y = x;
        for (int i = 0; i < y.size(); ++i) y(i) = std::min(std::max(y(i), lo(i)), hi(i));
        return y;
    }
    bool contains(const Point& x) const {
        for (int i = 0; i < x.size(); ++i)
            if (x(i) < lo(i) || x(i) > hi(i)) return false;
        return true;
    }
};

/// Tensor sample grid on a box, at most `cap` points.
inline std::vector<Point> tensor_grid(const Box& box, int per_axis, int cap = 10000) {
    const int N = static_cast<int>(box.lo.size());
    while (std::pow(per_axis, N) > cap && per_axis > 2) --per_axis;
    std::vector<Point> pts;
    std::vector<int> idx(static_cast<std::size_t>(N), 0);
    while (true) {
        Point x(N);
        for (int i = 0; i < N; ++i) {
            const double f = per_axis == 1 ? 0.5
                                           : static_cast<double>(idx[static_cast<std::size_t>(i)]) /
                                                 (per_axis - 1);
            x(i) = box.lo(i) + f * (box.hi(i) - box.lo(i));
        }
        pts.push_back(x);
        int i = 0;
        while (i < N && ++idx[static_cast<std::size_t>(i)] == per_axis) {
            idx[static_cast<std::size_t>(i)] = 0;
            ++i;
        }
        if (i == N) break;
    }
    return pts;
}

struct StructureFit {
    StructureMap coefficients;
    double max_residual = 0.0;
};

/// Least-squares polynomial structure coefficients on a sample box:
/// [X_j, X_k](x) ~ sum_l c_{j,k}^l(x) X_l(x) with deg c <= poly_degree.
/// With degree_filter the sum only runs over d_l <= d_j + d_k (component-wise).
/// Normal equations carry a small ridge term for conditioning.
inline StructureFit fit_structure_coeffs(const FieldSystem& sys, const Box& box, int poly_degree,
                                         bool degree_filter) {
    const int N = sys.ambient_dim();
    const int q = sys.q();
    const Point& c0 = sys.center();
    const auto grid = tensor_grid(box, poly_degree + 2);
    const auto monos = multi_indices_up_to(N, poly_degree);

    StructureFit out;
    for (int j = 0; j < q; ++j)
        for (int k = j + 1; k < q; ++k) {
            std::vector<int> allowed;
            for (int l = 0; l < q; ++l) {
                if (degree_filter) {
                    bool ok = true;
                    for (std::size_t p = 0; p < sys.degree(l).size(); ++p)
                        ok = ok && sys.degree(l)[p] <= sys.degree(j)[p] + sys.degree(k)[p];
                    if (!ok) continue;
                }
                allowed.push_back(l);
            }
            const AnalyticVectorField bracket = lie_bracket(sys.field(j), sys.field(k));
            const int cols = static_cast<int>(allowed.size() * monos.size());
            Eigen::MatrixXd A(static_cast<int>(grid.size()) * N, cols);
            Eigen::VectorXd b(static_cast<int>(grid.size()) * N);
            for (std::size_t s = 0; s < grid.size(); ++s) {
                const Point bx = bracket.evaluate(grid[s]);
                const Eigen::MatrixXd vals = sys.value_matrix(grid[s]);
                const std::vector<double> u = to_std(grid[s] - c0);
                for (int i = 0; i < N; ++i) {
                    const int row = static_cast<int>(s) * N + i;
                    b(row) = bx(i);
                    int col = 0;
                    for (int l : allowed)
                        for (const auto& g : monos) {
                            double mono = 1.0;
                            for (int v = 0; v < N; ++v)
                                for (int e = 0; e < g[v]; ++e) mono *= u[static_cast<std::size_t>(v)];
                            A(row, col++) = mono * vals(i, l);
                        }
                }
            }
            Eigen::MatrixXd G = A.transpose() * A;
            G.diagonal().array() += 1e-12;
            const Eigen::VectorXd theta = G.ldlt().solve(A.transpose() * b);
            double resid = (A * theta - b).lpNorm<Eigen::Infinity>();
            out.max_residual = std::max(out.max_residual, resid);

            int col = 0;
            for (int l : allowed) {
                TruncatedSeries cs(N, sys.max_degree(), sys.radius());
                for (const auto& g : monos) {
                    const double v = theta(col++);
                    if (std::abs(v) > 1e-11) cs.set_plain(g, v);
                }
                if (!cs.is_zero()) {
                    out.coefficients[{j, k, l}] = cs;
                    out.coefficients[{k, j, l}] = cs * (-1.0);
                }
            }
        }
    return out;
}

/// Evaluates the defect of a structure map at a point:
/// max_l | [X_j,X_k](x) - sum_l c_{j,k}^l(x) X_l(x) |_inf over all pairs.
inline double structure_residual_at(const FieldSystem& sys, const StructureMap& c,
                                    const Point& x) {
    const int q = sys.q();
    double r = 0.0;
    const Eigen::MatrixXd vals = sys.value_matrix(x);
    const std::vector<double> u = to_std(x - sys.center());
    for (int j = 0; j < q; ++j)
        for (int k = j + 1; k < q; ++k) {
            Point lhs = lie_bracket(sys.field(j), sys.field(k)).evaluate(x);
            for (int l = 0; l < q; ++l) {
                auto it = c.find({j, k, l});
                if (it != c.end()) lhs -= it->second.evaluate(u) * vals.col(l);
            }
            r = std::max(r, lhs.lpNorm<Eigen::Infinity>());
        }
    return r;
}

} // namespace ccscale
