#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmaf/flow.hpp"
#include "cmaf/transforms.hpp"

namespace cmaf {

using nlohmann::json;

inline const std::vector<std::string>& all_checks() {
    static const std::vector<std::string> names{"error",    "sandwich",   "residual", "barriers", "time_constants",
                                                "boundary", "submean",    "slice_l1", "time_scale",
                                                "semiconcave_avg",        "walsh",    "mobius"};
    return names;
}

/// Parsed scenario: the problem, its discretization parameters and run options.
struct Scenario {
    std::string name = "scenario";
    FlowProblem problem;
    double h_x = 1.0 / 16;
    int K = 16;
    std::string grading = "uniform";
    double tol_scale = 1.0;
    std::set<std::string> checks{all_checks().begin(), all_checks().end()};
    std::vector<double> ladder;
    bool manufactured = false;
    json source;

    TimeGrid time_grid(double h = 0, int K_override = 0) const {
        int K_use = K_override > 0 ? K_override : K;
        (void)h;
        if (grading == "geometric") return TimeGrid::geometric(problem.T, problem.S, K_use);
        return TimeGrid::uniform(problem.T, problem.S, K_use);
    }

    Discretization discretization() const { return Discretization::build(problem.n, h_x, time_grid()); }
};

namespace detail {

[[noreturn]] inline void schema_error(const std::string& what, const json& at = json::object()) {
    throw Error(ErrorKind::validation, "scenario schema: " + what, {{"at", at}});
}

inline double num(const json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) schema_error(std::string("field '") + key + "' must be a number", j);
    return j.at(key).get<double>();
}

inline double num_req(const json& j, const char* key) {
    if (!j.contains(key)) schema_error(std::string("missing field '") + key + "'", j);
    return num(j, key, 0.0);
}

inline std::vector<double> vec(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_array()) schema_error(std::string("field '") + key + "' must be an array", j);
    std::vector<double> v;
    for (const auto& x : j.at(key)) {
        if (!x.is_number()) schema_error(std::string("array '") + key + "' must hold numbers", j);
        v.push_back(x.get<double>());
    }
    return v;
}

/// Piecewise-linear table y(x), constant beyond the ends.
inline std::function<double(double)> table(std::vector<double> x, std::vector<double> y) {
    if (x.size() != y.size() || x.size() < 2 || !std::is_sorted(x.begin(), x.end()))
        schema_error("tables need at least two sorted abscissae with matching values");
    return [x = std::move(x), y = std::move(y)](double s) {
        if (s <= x.front()) return y.front();
        if (s >= x.back()) return y.back();
        std::size_t k = std::upper_bound(x.begin(), x.end(), s) - x.begin() - 1;
        double w = (s - x[k]) / (x[k + 1] - x[k]);
        return (1 - w) * y[k] + w * y[k + 1];
    };
}

inline GSpec parse_g(const json& j) {
    std::string kind = j.value("kind", "const");
    GSpec g;
    if (kind == "const") g = GSpec::constant(num(j, "c", 1.0));
    else if (kind == "radial_poly") g = GSpec::radial_poly(num(j, "c0", 1.0), num(j, "c1", 0.0), num(j, "c2", 0.0));
    else if (kind == "power") g = GSpec::power(num(j, "c", 1.0), num_req(j, "a"), num(j, "p", 2.0));
    else if (kind == "exp_radial") g = GSpec::exp_radial(num(j, "c", 1.0), num(j, "a", 0.0));
    else if (kind == "radial_table") g = GSpec::radial_table(vec(j, "r"), vec(j, "values"));
    else schema_error("unknown g kind '" + kind + "'", j);
    if (j.contains("p")) g.p = num(j, "p", 2.0);
    return g;
}

inline FSpec parse_F(const json& j) {
    std::string fam = j.value("family", "zero");
    std::function<double(const Point&)> psi;
    if (j.contains("psi")) {
        auto tab = table(vec(j.at("psi"), "r"), vec(j.at("psi"), "values"));
        psi = [tab](const Point& z) { return tab(std::sqrt(squared_norm(z))); };
    }
    FSpec F;
    if (fam == "zero") F = FSpec::zero();
    else if (fam == "affine") F = FSpec::affine(num(j, "lambda", 0.0), num(j, "mu", 0.0), psi);
    else if (fam == "softplus") F = FSpec::softplus_family(num(j, "lambda", 0.0), num(j, "mu", 0.0), psi);
    else schema_error("unknown F family '" + fam + "'", j);
    F.kappa_F = num(j, "kappa_F", F.kappa_F);
    F.C_F = num(j, "C_F", F.C_F);
    return F;
}

inline BoundaryData parse_h(const json& j) {
    std::string fam = j.value("family", "polynomial");
    BoundaryData bd;
    if (fam == "polynomial") {
        bd = polynomial_boundary(num(j, "c", 0.0), num(j, "beta", 0.0), num(j, "gamma", 0.0), num(j, "a", 0.0),
                                 num(j, "b", 0.0), 0.0, 0.0);
    } else if (fam == "tables") {
        if (!j.contains("lateral") || !j.contains("h0")) schema_error("table boundary data need 'lateral' and 'h0'", j);
        auto lat = table(vec(j.at("lateral"), "t"), vec(j.at("lateral"), "values"));
        auto h0 = table(vec(j.at("h0"), "r"), vec(j.at("h0"), "values"));
        bd.lateral = [lat](double t, const Point&) { return lat(t); };
        bd.initial = [h0](const Point& z) { return h0(std::sqrt(squared_norm(z))); };
    } else {
        schema_error("unknown h family '" + fam + "'", j);
    }
    bd.kappa_h = num_req(j, "kappa_h");
    bd.C_h = num(j, "C_h", 0.0);
    return bd;
}

} // namespace detail

/// Parses a scenario document. Schema problems throw a validation error.
inline Scenario parse_scenario(const json& j) {
    using namespace detail;
    if (!j.is_object()) schema_error("scenario must be a JSON object");
    Scenario s;
    s.source = j;
    s.name = j.value("name", "scenario");
    auto& p = s.problem;
    p.name = s.name;
    if (!j.contains("domain")) schema_error("missing 'domain'");
    p.n = static_cast<int>(num_req(j.at("domain"), "n"));
    if (!j.contains("grid")) schema_error("missing 'grid'");
    const auto& grid = j.at("grid");
    s.h_x = num_req(grid, "h_x");
    s.K = static_cast<int>(num_req(grid, "K"));
    s.grading = grid.value("grading", "uniform");
    if (s.grading != "uniform" && s.grading != "geometric") schema_error("grading must be uniform or geometric", grid);
    if (!j.contains("horizon")) schema_error("missing 'horizon'");
    p.T = num_req(j.at("horizon"), "T");
    p.S = num_req(j.at("horizon"), "S");
    p.F = parse_F(j.value("F", json::object()));
    if (j.contains("manufactured")) {
        const auto& m = j.at("manufactured");
        std::string fam = m.value("u_star", "radial_quadratic");
        if (fam != "radial_quadratic" && fam != "radial_quartic")
            schema_error("unknown u_star family '" + fam + "'", m);
        RadialProfile u;
        u.c = num(m, "c", 0.0);
        u.beta = num_req(m, "beta");
        u.gamma = fam == "radial_quartic" ? num(m, "gamma", 0.0) : 0.0;
        if (m.contains("a") && m.at("a").is_string()) {
            if (m.at("a") != "n_log_beta") schema_error("'a' must be a number or \"n_log_beta\"", m);
            u.a = p.n * std::log(u.beta);
        } else {
            u.a = num(m, "a", 0.0);
        }
        auto made = manufacture(u, p.n, p.F, p.T, p.S);
        auto name = p.name;
        p = made.problem;
        p.name = name;
        s.manufactured = true;
    } else {
        if (!j.contains("g") || !j.contains("h")) schema_error("non-manufactured scenarios need 'g' and 'h'");
        p.g = parse_g(j.at("g"));
        p.h = parse_h(j.at("h"));
    }
    if (j.contains("tolerances")) s.tol_scale = num(j.at("tolerances"), "scale", 1.0);
    if (j.contains("checks")) {
        s.checks.clear();
        for (const auto& c : j.at("checks")) {
            auto name = c.get<std::string>();
            if (std::find(all_checks().begin(), all_checks().end(), name) == all_checks().end())
                schema_error("unknown check '" + name + "'", j.at("checks"));
            s.checks.insert(name);
        }
    }
    if (j.contains("ladder")) s.ladder = vec(j, "ladder");
    if (!(s.h_x > 0) || s.K < 1) schema_error("grid needs h_x > 0 and K >= 1", grid);
    p.validate_shape();
    return s;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::validation, "cannot read scenario file", {{"path", path}});
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::validation, std::string("scenario is not valid JSON: ") + e.what(), {{"path", path}});
    }
    return parse_scenario(j);
}

/// Wraps a stored solution with the rho, g and ledger the checks need.
inline FlowSolution rebuild_solution(const FlowProblem& p, const Discretization& d, GridFunction U,
                                     const SolverOptions& opt = {}) {
    validate_problem(p, d);
    FlowSolution sol{std::move(U), Slice(*d.space), {}, {}, {}, {}, 0.0};
    sol.g = p.g_samples(*d.space);
    auto [rho, rep] = solve_rho(sol.g, p.g.p, *d.op, opt);
    sol.rho = std::move(rho);
    sol.rho_report = rep;
    sol.ledger = compute_constants(p, d, rep);
    return sol;
}

// ---------------------------------------------------------------------------
// Check battery

struct CheckResult {
    std::string name;
    bool pass = false;
    json report;
};

struct BatteryResult {
    std::vector<CheckResult> checks;
    double max_error = std::numeric_limits<double>::quiet_NaN();

    bool pass() const {
        return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
    }

    json to_json() const {
        json j = json::object();
        for (const auto& c : checks) j[c.name] = c.report;
        j["all_pass"] = pass();
        if (!std::isnan(max_error)) j["error"] = max_error;
        return j;
    }
};

inline double max_error_vs(const GridFunction& U, const std::function<double(double, const Point&)>& exact) {
    double e = 0;
    for (std::size_t k = 0; k < U.size(); ++k)
        for (std::size_t i = 0; i < U.space().node_count(); ++i)
            e = std::max(e, std::abs(U[k].nodes[i] - exact(U.time()[k], U.space().node(i))));
    return e;
}

/// Runs the selected checks on a solved scenario.
inline BatteryResult run_checks(const Scenario& sc, const FlowSolution& sol, const Discretization& d,
                                const SolverOptions& opt = {}) {
    const auto& p = sc.problem;
    const auto& U = sol.U;
    const auto& checks = sc.checks;
    const double tol = sc.tol_scale * default_slice_tol(d.h());
    BatteryResult out;
    auto add = [&](const std::string& name, bool pass, json rep) {
        rep["pass"] = pass;
        out.checks.push_back({name, pass, std::move(rep)});
        log().info("check {:<16} {}", name, pass ? "pass" : "FAIL");
    };
    if (checks.count("error") && p.exact) {
        out.max_error = max_error_vs(U, p.exact);
        add("error", std::isfinite(out.max_error), {{"max_error", out.max_error}});
    }
    if (checks.count("sandwich") || checks.count("barriers") || checks.count("time_constants") ||
        checks.count("residual") || checks.count("boundary")) {
        auto v = verify_flow(sol, p, d, sc.tol_scale, opt);
        if (checks.count("sandwich"))
            add("sandwich", v.sandwich_lower.pass && v.sandwich_upper.pass,
                {{"lower", v.sandwich_lower.to_json()}, {"upper", v.sandwich_upper.to_json()}});
        if (checks.count("residual"))
            add("residual", v.solution.pass && v.solution.super_pass, v.solution.to_json());
        if (checks.count("barriers"))
            add("barriers",
                v.dirichlet.pass && v.cauchy.pass && v.dirichlet_below.pass && v.cauchy_below.pass &&
                    v.below_super.pass,
                {{"dirichlet_residual", v.dirichlet.to_json()},
                 {"cauchy_residual", v.cauchy.to_json()},
                 {"dirichlet_below_U", v.dirichlet_below.to_json()},
                 {"cauchy_below_U", v.cauchy_below.to_json()},
                 {"U_below_super", v.below_super.to_json()}});
        if (checks.count("time_constants"))
            add("time_constants", v.lipschitz_pass && v.semiconcavity_pass,
                {{"time_lipschitz", v.time_lipschitz},
                 {"kappa_U", sol.ledger.kappa_U},
                 {"time_semiconcavity", v.time_semiconcavity},
                 {"C_U", sol.ledger.C_U}});
        if (checks.count("boundary")) add("boundary", true, v.boundary.to_json());
    }
    const auto& tg = *d.time;
    if (checks.count("submean")) {
        double S = tg.S();
        double t0 = tg[tg.size() / 2];
        double eps = std::min(t0, S - t0) / 2;
        auto r = submean_check(U, t0, Point{}, eps, 0.25, tol);
        add("submean", r.pass,
            {{"t0", t0}, {"eps", eps}, {"r", 0.25}, {"margin", r.margin}, {"kappa0", r.kappa0}, {"tol", tol}});
    }
    if (checks.count("slice_l1")) {
        double S = tg.S();
        auto D = sub_barrier_dirichlet(p, d, sol.rho, sol.ledger, opt);
        auto C = sub_barrier_cauchy(p, d, sol.rho, sol.ledger);
        auto r = slice_l1_bound_check(U, GridFunction::max(D, C), S / 4, S / 2, S, 1e-9);
        add("slice_l1", r.pass,
            {{"lhs", r.lhs}, {"rhs", r.rhs}, {"norm", r.norm}, {"kappa", r.kappa}, {"M", r.M}});
    }
    if (checks.count("time_scale")) {
        json arr = json::array();
        bool ok = true;
        for (double s : {1.05, 0.95}) {
            auto r = time_scale_report(U, s, sol.ledger, nullptr, nullptr, nullptr, sc.tol_scale);
            ok = ok && r.pass();
            arr.push_back(r.to_json());
        }
        add("time_scale", ok, {{"reports", arr}});
    }
    if (checks.count("semiconcave_avg")) {
        auto r = semiconcavity_report(U, 1.05, sol.ledger, sc.tol_scale);
        add("semiconcave_avg", r.pass(), r.to_json());
    }
    if (checks.count("walsh")) {
        Point xi{d.h(), 0, 0, 0};
        auto m = measure_walsh_moduli(sol, p, d, xi, opt);
        auto [W, r] = walsh_translate(U, xi, m, p.T, nullptr, nullptr, nullptr, sc.tol_scale);
        add("walsh", r.pass(), r.to_json());
    }
    if (checks.count("mobius")) {
        json arr = json::array();
        bool ok = true;
        for (double a : {0.1, 0.05}) {
            auto r = mobius_average(U, Point{a, 0, 0, 0}, p, sol.g, 0.5, InterpOrder::quadratic, sc.tol_scale);
            ok = ok && r.report.pass();
            arr.push_back(r.report.to_json());
        }
        add("mobius", ok, {{"reports", arr}});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Convergence study

struct StudyRow {
    double h_x = 0, dt = 0;
    double error = 0;
    double order = std::numeric_limits<double>::quiet_NaN();
    bool saturated = false;
    json ledger;
    json checks;
    double wall_seconds = 0;
};

struct StudyResult {
    std::vector<StudyRow> rows;
    std::string reference; // "exact" or "golden"
    double saturation_floor = 1e-8;
    bool order_pass = true;

    json to_json() const {
        json rows_j = json::array();
        for (const auto& r : rows)
            rows_j.push_back({{"h_x", r.h_x},
                              {"dt", r.dt},
                              {"error", r.error},
                              {"order", std::isnan(r.order) ? json(nullptr) : json(r.order)},
                              {"order_status", r.saturated ? "saturated" : (std::isnan(r.order) ? "n/a" : "measured")},
                              {"ledger", r.ledger},
                              {"checks", r.checks},
                              {"wall_seconds", r.wall_seconds}});
        return {{"reference", reference}, {"saturation_floor", saturation_floor}, {"order_pass", order_pass},
                {"rows", rows_j}};
    }
};

namespace detail {

/// max |coarse - fine| over coarse nodes that are fine lattice nodes, at shared times.
inline double golden_difference(const GridFunction& coarse, const GridFunction& fine) {
    const auto& gc = coarse.space();
    const auto& gf = fine.space();
    int ratio = static_cast<int>(std::lround(gc.h() / gf.h()));
    double e = 0;
    for (std::size_t k = 0; k < coarse.size(); ++k) {
        double t = coarse.time()[k];
        std::size_t kf = fine.time().locate(t);
        if (std::abs(fine.time()[kf + 1] - t) < std::abs(fine.time()[kf] - t)) ++kf;
        if (std::abs(fine.time()[kf] - t) > 1e-12) continue;
        for (std::size_t i = 0; i < gc.node_count(); ++i) {
            auto idx = gc.lattice_index(i);
            for (auto& v : idx) v *= ratio;
            int j = gf.node_at(idx);
            if (j >= 0) e = std::max(e, std::abs(coarse[k].nodes[i] - fine[kf].nodes[j]));
        }
    }
    return e;
}

} // namespace detail

/// Runs the scenario on each h_x of the ladder with dt scaled proportionally to h_x.
inline StudyResult convergence_study(const Scenario& sc, std::vector<double> ladder, const SolverOptions& opt = {},
                                     std::set<std::string> level_checks = {"sandwich", "residual", "time_constants"}) {
    if (ladder.empty()) throw Error(ErrorKind::invalid_argument, "empty refinement ladder");
    std::sort(ladder.begin(), ladder.end(), std::greater<>());
    StudyResult res;
    res.reference = sc.problem.exact ? "exact" : "golden";
    std::vector<GridFunction> sols;
    for (double h : ladder) {
        Scenario lvl = sc;
        lvl.h_x = h;
        lvl.K = std::max(1, static_cast<int>(std::lround(sc.K * sc.h_x / h)));
        lvl.checks = level_checks;
        auto start = std::chrono::steady_clock::now();
        auto d = lvl.discretization();
        auto sol = solve_flow(lvl.problem, d, opt);
        auto battery = run_checks(lvl, sol, d, opt);
        StudyRow row;
        row.h_x = h;
        row.dt = d.dt();
        row.ledger = sol.ledger.to_json();
        row.checks = battery.to_json();
        if (sc.problem.exact) row.error = max_error_vs(sol.U, sc.problem.exact);
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        log().info("study level h_x={} dt={:.4g} error={:.3e} ({:.1f}s)", h, row.dt, row.error, row.wall_seconds);
        res.rows.push_back(std::move(row));
        sols.push_back(std::move(sol.U));
    }
    if (!sc.problem.exact) {
        for (std::size_t l = 0; l + 1 < sols.size(); ++l) res.rows[l].error = detail::golden_difference(sols[l], sols.back());
        res.rows.back().error = 0;
    }
    std::size_t last = sc.problem.exact ? res.rows.size() : res.rows.size() - 1;
    for (std::size_t l = 1; l < last; ++l) {
        auto& r = res.rows[l];
        const auto& prev = res.rows[l - 1];
        if (prev.error < res.saturation_floor && r.error < res.saturation_floor) {
            r.saturated = true;
            continue;
        }
        r.order = std::log(prev.error / r.error) / std::log(prev.h_x / r.h_x);
        if (sc.manufactured && r.order < 0.8) res.order_pass = false;
    }
    return res;
}

} // namespace cmaf
