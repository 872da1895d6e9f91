#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "cmaf/scenario.hpp"

namespace fs = std::filesystem;
using namespace cmaf;

namespace {

enum Exit { ok = 0, check_failed = 1, schema = 2, solver = 3 };

struct Options {
    std::string scenario_path, solution_path, out_dir = "cmaf_out", checks, ladder;
    double tol_scale = 0;
};

void write_json(const fs::path& path, const json& j) {
    std::ofstream os(path);
    os << j.dump(2) << '\n';
}

int exit_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::invalid_argument:
    case ErrorKind::validation: return schema;
    default: return solver;
    }
}

std::vector<double> parse_ladder(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto slash = item.find('/');
        double v = 0;
        try {
            v = slash == std::string::npos ? std::stod(item)
                                           : std::stod(item.substr(0, slash)) / std::stod(item.substr(slash + 1));
        } catch (const std::exception&) {
            throw Error(ErrorKind::validation, "bad ladder entry", {{"entry", item}});
        }
        if (!(v > 0)) throw Error(ErrorKind::validation, "ladder entries must be positive", {{"entry", item}});
        out.push_back(v);
    }
    return out;
}

Scenario load(const Options& o) {
    auto sc = load_scenario(o.scenario_path);
    if (o.tol_scale > 0) sc.tol_scale = o.tol_scale;
    if (!o.checks.empty()) {
        sc.checks.clear();
        std::stringstream ss(o.checks);
        std::string c;
        while (std::getline(ss, c, ',')) {
            if (c == "all") {
                sc.checks.insert(all_checks().begin(), all_checks().end());
                continue;
            }
            if (std::find(all_checks().begin(), all_checks().end(), c) == all_checks().end())
                throw Error(ErrorKind::validation, "unknown check", {{"check", c}, {"known", all_checks()}});
            sc.checks.insert(c);
        }
    }
    return sc;
}

/// Reports keyed for downstream tools: the transform entries under fixed names.
json reports_json(const Scenario& sc, const BatteryResult& b) {
    json j = b.to_json();
    j["scenario"] = sc.name;
    j["tol_scale"] = sc.tol_scale;
    return j;
}

int finish_checks(const Scenario& sc, const FlowSolution& sol, const Discretization& d, const fs::path& out) {
    write_json(out / "ledger.json", sol.ledger.to_json());
    BatteryResult b;
    try {
        b = run_checks(sc, sol, d);
    } catch (const Error& e) {
        write_json(out / "reports.json", {{"scenario", sc.name}, {"error", e.to_json()}});
        write_json(out / "error.json", e.to_json());
        return solver;
    }
    write_json(out / "reports.json", reports_json(sc, b));
    if (!b.pass()) {
        json failed = json::array();
        for (const auto& c : b.checks)
            if (!c.pass) failed.push_back(c.name);
        write_json(out / "error.json", {{"kind", "check_failed"}, {"failed", failed}});
        std::cerr << "checks failed: " << failed.dump() << '\n';
        return check_failed;
    }
    return ok;
}

void write_solution(const GridFunction& U, const fs::path& out) {
    std::ofstream os(out / "solution.csv");
    write_csv(U, os);
    write_json(out / "solution.json", sidecar_json(U));
}

int run_solve(const Options& o) {
    auto sc = load(o);
    fs::path out = o.out_dir;
    fs::create_directories(out);
    auto d = sc.discretization();
    std::optional<FlowSolution> sol;
    try {
        sol.emplace(solve_flow(sc.problem, d));
    } catch (const Error& e) {
        if (exit_for(e.kind()) == schema) throw;
        write_json(out / "reports.json", {{"scenario", sc.name}, {"error", e.to_json()}});
        write_json(out / "error.json", e.to_json());
        return solver;
    }
    write_solution(sol->U, out);
    log().info("solved {} in {:.2f}s", sc.name, sol->wall_seconds);
    return finish_checks(sc, *sol, d, out);
}

int run_verify(const Options& o) {
    auto sc = load(o);
    fs::path out = o.out_dir;
    fs::create_directories(out);
    auto d = sc.discretization();
    std::ifstream is(o.solution_path);
    if (!is) throw Error(ErrorKind::validation, "cannot read solution file", {{"path", o.solution_path}});
    auto U = read_csv(is, d.space, d.time, sc.problem.h.lateral);
    std::optional<FlowSolution> sol;
    try {
        sol.emplace(rebuild_solution(sc.problem, d, std::move(U)));
    } catch (const Error& e) {
        if (exit_for(e.kind()) == schema) throw;
        write_json(out / "error.json", e.to_json());
        return solver;
    }
    return finish_checks(sc, *sol, d, out);
}

int run_study(const Options& o) {
    auto sc = load(o);
    fs::path out = o.out_dir;
    fs::create_directories(out);
    auto ladder = o.ladder.empty() ? sc.ladder : parse_ladder(o.ladder);
    if (ladder.empty()) throw Error(ErrorKind::validation, "no refinement ladder given");
    std::set<std::string> level_checks{"sandwich", "residual", "time_constants"};
    if (!o.checks.empty()) level_checks = sc.checks;
    StudyResult study;
    try {
        study = convergence_study(sc, ladder, {}, level_checks);
    } catch (const Error& e) {
        if (exit_for(e.kind()) == schema) throw;
        write_json(out / "error.json", e.to_json());
        return solver;
    }
    json j = study.to_json();
    j["scenario"] = sc.name;
    write_json(out / "study.json", j);
    if (!study.rows.empty()) write_json(out / "ledger.json", study.rows.back().ledger);
    bool checks_pass = std::all_of(study.rows.begin(), study.rows.end(),
                                   [](const StudyRow& r) { return r.checks.value("all_pass", false); });
    for (const auto& r : study.rows)
        std::cout << "h_x=" << r.h_x << " dt=" << r.dt << " error=" << r.error << " order="
                  << (r.saturated ? std::string("saturated") : std::isnan(r.order) ? "-" : std::to_string(r.order))
                  << '\n';
    if (!study.order_pass || !checks_pass) {
        write_json(out / "error.json", {{"kind", "check_failed"}, {"order_pass", study.order_pass},
                                        {"checks_pass", checks_pass}});
        return check_failed;
    }
    return ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Parabolic complex Monge-Ampere flow on the unit ball"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--tol-scale", o.tol_scale, "Multiplier on every check tolerance");
    app.add_option("--checks", o.checks, "Comma-separated checks to run (or 'all')");
    app.add_option("--out", o.out_dir, "Output directory");

    auto* solve = app.add_subcommand("solve", "Solve a scenario and run its checks");
    solve->add_option("scenario", o.scenario_path)->required();
    auto* study = app.add_subcommand("study", "Run a refinement study");
    study->add_option("scenario", o.scenario_path)->required();
    study->add_option("--ladder", o.ladder, "Space steps, e.g. 1/8,1/16,1/32");
    auto* verify = app.add_subcommand("verify", "Re-run the checks on a stored solution");
    verify->add_option("solution", o.solution_path)->required();
    verify->add_option("scenario", o.scenario_path)->required();
    for (auto* sub : {solve, study, verify}) {
        sub->add_option("--tol-scale", o.tol_scale);
        sub->add_option("--checks", o.checks);
        sub->add_option("--out", o.out_dir);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (*solve) return run_solve(o);
        if (*study) return run_study(o);
        return run_verify(o);
    } catch (const Error& e) {
        std::error_code ec;
        fs::create_directories(o.out_dir, ec);
        write_json(fs::path(o.out_dir) / "error.json", e.to_json());
        std::cerr << e.what() << '\n' << e.to_json().dump(2) << '\n';
        return exit_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return solver;
    }
}
