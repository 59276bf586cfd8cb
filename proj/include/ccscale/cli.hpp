#pragma once

#include <chrono>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ccscale/density.hpp"
#include "ccscale/json_io.hpp"
#include "ccscale/scaling.hpp"

namespace ccscale::cli {

struct Flags {
    std::optional<std::vector<double>> center;
    std::vector<std::vector<double>> deltas;  // one entry per --delta occurrence
    int trunc = 8;
    double zeta = 1.0;
    int paths = 20000;
    double grid = 0.0;  // ball cell size; 0 = automatic
    std::uint64_t seed = 1;
    double tol = 1e-6;
    int jobs = 1;
    int closure_degree = 3;   // m
    int poly_degree = 6;
    double box_halfwidth = 0.0;  // 0 = quarter of the radius
    std::string out;

    json to_json() const {
        json j;
        if (center) j["center"] = *center;
        j["delta"] = deltas;
        j["trunc"] = trunc;
        j["zeta"] = zeta;
        j["paths"] = paths;
        j["grid"] = grid;
        j["seed"] = seed;
        j["tol"] = tol;
        j["jobs"] = jobs;
        j["m"] = closure_degree;
        j["poly_degree"] = poly_degree;
        j["box"] = box_halfwidth;
        return j;
    }
};

struct RunResult {
    json report;
    int exit_code = 0;  // 0 ok, 2 hypothesis failures, 1 errors
};

namespace detail {

inline Point center_of(const FieldSpecDocument& doc, const Flags& flags) {
    Point x(doc.dimension);
    if (flags.center) {
        if (static_cast<int>(flags.center->size()) != doc.dimension)
            throw ParseError("--center: arity must match the spec dimension");
        for (int i = 0; i < doc.dimension; ++i) x(i) = (*flags.center)[static_cast<std::size_t>(i)];
    } else {
        for (int i = 0; i < doc.dimension; ++i) x(i) = doc.base_point[static_cast<std::size_t>(i)];
    }
    return x;
}

inline std::vector<double> single_delta(const FieldSpecDocument& doc, const Flags& flags) {
    if (flags.deltas.empty())
        return std::vector<double>(static_cast<std::size_t>(doc.parameters), 0.5);
    if (flags.deltas.size() > 1)
        throw ParseError("--delta: this command takes a single delta");
    std::vector<double> d = flags.deltas.front();
    if (static_cast<int>(d.size()) == 1 && doc.parameters > 1)
        d.assign(static_cast<std::size_t>(doc.parameters), d.front());
    if (static_cast<int>(d.size()) != doc.parameters)
        throw ParseError("--delta: arity must match the spec parameters");
    return d;
}

inline json warnings_base() {
    return json::array(
        {"eta is estimated from Picard-Lindelof bounds on the sample box, not verified",
         "the delta_0 non-return condition is assumed, not verified",
         "series norms are truncated; every norm certificate is a lower bound up to the "
         "truncation degree"});
}

inline BallOptions ball_options(const Flags& flags) {
    BallOptions bo;
    bo.n_paths = flags.paths;
    bo.cell_size = flags.grid;
    bo.seed = flags.seed;
    bo.jobs = flags.jobs;
    return bo;
}

inline FieldSystem with_structure(const FieldSystem& sys, const Flags& flags, const Point& x,
                                  double* fit_residual) {
    FieldSystem s = recenter_system(sys, x);
    if (s.structure) {
        if (fit_residual) *fit_residual = 0.0;
        return s;
    }
    const double hw = flags.box_halfwidth > 0.0 ? flags.box_halfwidth : 0.25 * s.radius();
    auto fit = fit_structure_coeffs(s, Box::centered(x, hw), flags.poly_degree, true);
    if (fit_residual) *fit_residual = fit.max_residual;
    s.structure = std::move(fit.coefficients);
    return s;
}

inline json chart_to_json(const AdaptedChart& chart) {
    json j;
    j["n"] = chart.n;
    if (chart.degenerate()) {
        j["degenerate"] = true;
        return j;
    }
    json j0 = json::array();
    for (int i = 0; i < chart.J0.size(); ++i) j0.push_back(chart.J0[i] + 1);
    j["J0"] = j0;
    j["eta1"] = chart.eta1;
    j["A"] = series_matrix_to_json(chart.A);
    j["h0"] = series_to_json(chart.h0);
    json phi = json::array();
    for (const auto& p : chart.Phi) phi.push_back(series_to_json(p));
    j["Phi"] = phi;
    json ys = json::array();
    for (const auto& yf : chart.Y) {
        json comps = json::array();
        for (const auto& c : yf) comps.push_back(series_to_json(c));
        ys.push_back(comps);
    }
    j["Y"] = ys;
    j["diagnostics"] = {{"D", chart.diagnostics.D},
                        {"contraction_iters", chart.diagnostics.contraction_iters},
                        {"fixed_point_residual", chart.diagnostics.fixed_point_residual},
                        {"ode_residual", chart.diagnostics.ode_residual},
                        {"pullback_max_err", chart.diagnostics.pullback_max_err},
                        {"zeta", chart.diagnostics.zeta},
                        {"eta_hat", chart.diagnostics.eta_hat},
                        {"A_norm", chart.diagnostics.A_norm},
                        {"Y_norms", chart.diagnostics.Y_norms},
                        {"basis_residual", chart.diagnostics.basis_residual}};
    return j;
}

inline std::vector<Point> chart_grid(const AdaptedChart& chart, double scale) {
    std::vector<Point> grid;
    if (chart.degenerate()) return grid;
    const int n = chart.n;
    const double h = scale * chart.eta1 / std::sqrt(static_cast<double>(n));
    for (int i = 0; i < n; ++i) {
        Point t = Point::Zero(n);
        t(i) = h;
        grid.push_back(t);
        t(i) = -h;
        grid.push_back(t);
    }
    grid.push_back(Point::Constant(n, 0.6 * h));
    return grid;
}

} // namespace detail

/// Executes one CLI command against a parsed spec.  Module errors become
/// structured report entries ("error" key, exit code 1); violated numerical
/// hypotheses set exit code 2 and are listed under "hypothesis_failures".
inline RunResult run(const std::string& command, const FieldSpecDocument& doc,
                     const Flags& flags) {
    RunResult rr;
    rr.report["command"] = command;
    rr.report["echo"] = flags.to_json();
    rr.report["inputs_digest"] = digest(emit_spec(doc).dump() + flags.to_json().dump());
    rr.report["seed"] = flags.seed;
    rr.report["warnings"] = detail::warnings_base();
    rr.report["timestamp"] =
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count();
    json& results = rr.report["results"];
    json failures = json::array();

    try {
        FieldSystem sys = doc.to_system();
        const Point x0 = detail::center_of(doc, flags);

        if (command == "brackets") {
            FieldSystem closure = bracket_closure(sys.fields, flags.closure_degree);
            const double hw =
                flags.box_halfwidth > 0.0 ? flags.box_halfwidth : 0.25 * closure.radius();
            auto fit =
                fit_structure_coeffs(closure, Box::centered(x0, hw), flags.poly_degree, true);
            results["q"] = closure.q();
            json fs = json::array();
            for (const auto& wf : closure.fields)
                fs.push_back({{"name", wf.field.name}, {"degree", wf.degree}});
            results["fields"] = fs;
            results["fit_residual"] = fit.max_residual;
            json cs = json::array();
            for (const auto& [key, c] : fit.coefficients) {
                const auto& [j, k, l] = key;
                if (j < k)
                    cs.push_back({{"j", j + 1}, {"k", k + 1}, {"l", l + 1},
                                  {"series", series_to_json(c)}});
            }
            results["structure"] = cs;
            results["rank_at_center"] = numerical_rank(closure.value_matrix(x0));
            if (fit.max_residual > flags.tol)
                failures.push_back("structure fit residual exceeds tolerance: finite generation "
                                   "at this degree is not confirmed");
        } else if (command == "chart" || command == "density") {
            double fit_residual = 0.0;
            FieldSystem s = detail::with_structure(sys, flags, x0, &fit_residual);
            ChartConfig cfg;
            cfg.zeta = flags.zeta;
            cfg.max_degree = flags.trunc;
            auto chart = build_adapted_chart(s, x0, cfg);
            results["fit_residual"] = fit_residual;
            results["chart"] = detail::chart_to_json(chart);
            if (!chart.degenerate()) {
                auto v = verify_chart(chart, s, detail::chart_grid(chart, 0.5));
                results["verification"] = {{"fixed_point_residual", v.fixed_point_residual},
                                           {"ode_residual", v.ode_residual},
                                           {"pullback_max_err", v.pullback_max_err},
                                           {"A_norm", v.A_norm},
                                           {"A_norm_ok", v.A_norm_ok},
                                           {"h0_det_residual", v.h0_det_residual}};
                if (!v.A_norm_ok) failures.push_back("A norm exceeds 1/2");
                if (v.pullback_max_err > flags.tol)
                    failures.push_back("series pullback disagrees with the numerical pullback");
                if (command == "density") {
                    auto dd = density_series(chart, euclidean_density_data(s, chart));
                    json dj;
                    dj["nu_at_x0"] = dd.nu_at_x0;
                    dj["h"] = series_to_json(dd.h);
                    dj["g_phi"] = series_to_json(dd.g_phi);
                    json fj = json::array(), f0j = json::array();
                    for (const auto& f : dd.f) fj.push_back(series_to_json(f));
                    for (const auto& f : dd.f0) f0j.push_back(series_to_json(f));
                    dj["f"] = fj;
                    dj["f0"] = f0j;
                    dj["h_sign_constant"] = dd.h_sign_constant;
                    dj["h_ratio_bound"] = dd.h_ratio_bound;
                    if (dd.div_check_residual >= 0.0)
                        dj["divergence_check_residual"] = dd.div_check_residual;
                    results["density"] = dj;
                    if (!dd.h_sign_constant)
                        failures.push_back("chart density changes sign on the sample grid");
                    if (dd.div_check_residual > flags.tol)
                        failures.push_back("density disagrees with the divergence check");
                }
            }
        } else if (command == "ball") {
            const auto delta = detail::single_delta(doc, flags);
            auto est = reachable_set(sys, x0, delta, detail::ball_options(flags));
            results["delta"] = delta;
            results["volume_lower"] = est.volume_lower;
            results["volume_upper"] = est.volume_upper;
            results["occupied_cells"] = est.occupied_cells;
            results["dilated_cells"] = est.dilated_cells;
            results["cell_size"] = est.cell_size;
            results["paths"] = est.paths;
            results["failures"] = est.failures;
            json eps = json::array();
            const std::size_t stride = std::max<std::size_t>(1, est.endpoints.size() / 64);
            for (std::size_t i = 0; i < est.endpoints.size(); i += stride)
                eps.push_back(to_std(est.endpoints[i]));
            results["endpoint_sample"] = eps;
            if (est.failures * 4 > est.paths)
                failures.push_back("more than a quarter of the control paths escaped the box");
        } else if (command == "scale-table") {
            if (flags.deltas.empty()) throw ParseError("scale-table: need at least one --delta");
            std::vector<std::vector<double>> grid;
            for (auto d : flags.deltas) {
                if (static_cast<int>(d.size()) == 1 && doc.parameters > 1)
                    d.assign(static_cast<std::size_t>(doc.parameters), d.front());
                if (static_cast<int>(d.size()) != doc.parameters)
                    throw ParseError("--delta: arity must match the spec parameters");
                grid.push_back(d);
            }
            const int rank = numerical_rank(sys.value_matrix(x0));
            json rows = json::array();
            std::ostringstream csv;
            csv << "x,delta,lambda,vol_lower,vol_upper,ratio,doubling\n";
            auto fmt_x = [&] {
                std::ostringstream s;
                for (int i = 0; i < x0.size(); ++i) s << (i ? " " : "") << x0(i);
                return s.str();
            };
            if (rank < sys.ambient_dim()) {
                for (const auto& d : grid) {
                    auto res = leaf_scaling(sys.fields, x0, d, flags.closure_degree,
                                            detail::ball_options(flags), flags.trunc);
                    json row;
                    row["delta"] = d;
                    row["n0"] = res.leaf.n0;
                    row["lambda"] = res.lambda_value;
                    row["nu_volume_lower"] = res.nu_volume_lower;
                    row["nu_volume_upper"] = res.nu_volume_upper;
                    row["ratio"] = res.ratio;
                    row["span"] = res.span;
                    rows.push_back(row);
                    csv << fmt_x() << "," << d.front() << "," << res.lambda_value << ","
                        << res.nu_volume_lower << "," << res.nu_volume_upper << "," << res.ratio
                        << ",\n";
                }
                results["mode"] = "leaf";
            } else {
                ScaleTableOptions opts;
                opts.ball = detail::ball_options(flags);
                auto table = volume_and_doubling(sys, x0, grid, opts);
                for (const auto& row : table.rows) {
                    json r;
                    r["delta"] = row.delta;
                    r["lambda"] = row.lambda_value;
                    r["vol_lower"] = row.volume_lower;
                    r["vol_upper"] = row.volume_upper;
                    r["ratio"] = row.ratio;
                    if (row.doubling > 0) r["doubling"] = row.doubling;
                    rows.push_back(r);
                    csv << fmt_x() << "," << row.delta.front() << "," << row.lambda_value << ","
                        << row.volume_lower << "," << row.volume_upper << "," << row.ratio << ",";
                    if (row.doubling > 0) csv << row.doubling;
                    csv << "\n";
                }
                results["mode"] = "full-rank";
                results["ratio_band"] = table.ratio_band;
            }
            results["rows"] = rows;
            results["csv"] = csv.str();
        } else if (command == "verify") {
            double fit_residual = 0.0;
            FieldSystem s = detail::with_structure(sys, flags, x0, &fit_residual);
            const auto sel = select_J0(s, x0, flags.zeta);
            results["rank"] = sel.rank;
            results["fit_residual"] = fit_residual;
            if (sel.rank > 0) {
                ChartConfig cfg;
                cfg.zeta = flags.zeta;
                cfg.max_degree = flags.trunc;
                auto chart = build_adapted_chart(s, x0, cfg);
                auto v = verify_chart(chart, s, detail::chart_grid(chart, 0.5));
                results["fixed_point_residual"] = v.fixed_point_residual;
                results["ode_residual"] = v.ode_residual;
                results["pullback_max_err"] = v.pullback_max_err;
                results["A_norm"] = v.A_norm;
                results["h0_det_residual"] = v.h0_det_residual;
                auto dd = density_series(chart, euclidean_density_data(s, chart));
                results["h_sign_constant"] = dd.h_sign_constant;
                results["h_ratio_bound"] = dd.h_ratio_bound;
                if (dd.div_check_residual >= 0.0)
                    results["divergence_check_residual"] = dd.div_check_residual;
                const double ddet = det_dphi_vs_h(chart, dd);
                if (ddet >= 0.0) {
                    results["det_dphi_vs_h"] = ddet;
                    if (ddet > flags.tol)
                        failures.push_back("chart density disagrees with det dPhi");
                }
                if (!v.A_norm_ok) failures.push_back("A norm exceeds 1/2");
                if (v.fixed_point_residual > flags.tol)
                    failures.push_back("fixed-point residual exceeds tolerance");
                if (v.ode_residual > flags.tol)
                    failures.push_back("ODE coefficient residual exceeds tolerance");
                if (v.pullback_max_err > flags.tol)
                    failures.push_back("pullback comparison exceeds tolerance");
                if (v.h0_det_residual > flags.tol)
                    failures.push_back("h0 det(I+A) = 1 fails");
                if (!dd.h_sign_constant) failures.push_back("density sign not constant");
                if (dd.div_check_residual > flags.tol)
                    failures.push_back("divergence cross-check exceeds tolerance");
                if (fit_residual > flags.tol)
                    failures.push_back("structure fit residual exceeds tolerance");
                BallOptions bo = detail::ball_options(flags);
                bo.n_paths = std::min(flags.paths, 400);
                const auto radii = empirical_radii(s, chart, bo);
                results["empirical_radii"] = {{"xi2", radii.xi2},
                                              {"chi", radii.chi},
                                              {"probes", radii.probes},
                                              {"note", "Monte-Carlo surrogates, not certified"}};
            } else {
                results["degenerate"] = true;
            }
        } else {
            throw ParseError("unknown command '" + command + "'");
        }
    } catch (const Error& e) {
        rr.report["error"] = e.what();
        rr.exit_code = 1;
        return rr;
    } catch (const std::exception& e) {
        rr.report["error"] = std::string("internal: ") + e.what();
        rr.exit_code = 1;
        return rr;
    }

    rr.report["hypothesis_failures"] = failures;
    rr.exit_code = failures.empty() ? 0 : 2;
    return rr;
}

} // namespace ccscale::cli
