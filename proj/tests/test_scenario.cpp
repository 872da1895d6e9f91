#include <catch_amalgamated.hpp>

#include "cmaf/scenario.hpp"

using namespace cmaf;
using Catch::Approx;

namespace {

json disc_json() {
    return json::parse(R"({
        "name": "disc",
        "domain": {"n": 1},
        "grid": {"h_x": 0.125, "K": 8},
        "horizon": {"T": 1.0, "S": 0.75},
        "manufactured": {"u_star": "radial_quadratic", "beta": 2.0, "a": "n_log_beta"}
    })");
}

ErrorKind kind_of(const json& j) {
    try {
        parse_scenario(j);
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::internal;
}

} // namespace

TEST_CASE("parse_scenario reads a manufactured disc") {
    auto sc = parse_scenario(disc_json());
    CHECK(sc.manufactured);
    CHECK(sc.problem.n == 1);
    CHECK(sc.h_x == 0.125);
    CHECK(sc.K == 8);
    CHECK(sc.checks.size() == all_checks().size());
    REQUIRE(sc.problem.exact);
    Point z{0.5, 0, 0, 0};
    CHECK(sc.problem.exact(0.5, z) == Approx(2 * 0.25 + 0.5 * std::log(2.0)));
    CHECK(sc.problem.h.lateral(0.5, Point{1, 0, 0, 0}) == Approx(2 + 0.5 * std::log(2.0)));
}

TEST_CASE("parse_scenario reads explicit data families") {
    auto j = json::parse(R"({
        "name": "tables",
        "domain": {"n": 1},
        "grid": {"h_x": 0.125, "K": 4, "grading": "geometric"},
        "horizon": {"T": 1.0, "S": 0.5},
        "g": {"kind": "radial_table", "r": [0, 1], "values": [1, 2]},
        "F": {"family": "affine", "lambda": 1.0, "mu": 0.5,
              "psi": {"r": [0, 1], "values": [0, 1]}},
        "h": {"family": "tables", "lateral": {"t": [0, 1], "values": [1, 1.5]},
              "h0": {"r": [0, 1], "values": [0, 1]}, "kappa_h": 0.5},
        "checks": ["sandwich", "residual"],
        "ladder": [0.25, 0.125]
    })");
    auto sc = parse_scenario(j);
    CHECK_FALSE(sc.manufactured);
    CHECK(sc.grading == "geometric");
    CHECK(sc.checks == std::set<std::string>{"sandwich", "residual"});
    CHECK(sc.ladder.size() == 2);
    CHECK(sc.problem.h.lateral(0.5, Point{1, 0, 0, 0}) == Approx(1.25));
    CHECK(sc.problem.h.initial(Point{0.5, 0, 0, 0}) == Approx(0.5));
    CHECK(sc.problem.F(0.2, Point{0.5, 0, 0, 0}, 1.0) == Approx(1.0 + 0.5 * 0.2 + 0.5));
    CHECK(sc.problem.g.eval(Point{0.5, 0, 0, 0}) == Approx(1.5));
    CHECK(sc.time_grid().grading() == TimeGrading::geometric);
}

TEST_CASE("parse_scenario rejects schema errors") {
    auto j = disc_json();
    j.erase("grid");
    CHECK(kind_of(j) == ErrorKind::validation);
    j = disc_json();
    j["manufactured"]["u_star"] = "cubic";
    CHECK(kind_of(j) == ErrorKind::validation);
    j = disc_json();
    j["checks"] = {"nonsense"};
    CHECK(kind_of(j) == ErrorKind::validation);
    j = disc_json();
    j["grid"]["h_x"] = "small";
    CHECK(kind_of(j) == ErrorKind::validation);
    j = disc_json();
    j.erase("manufactured");
    CHECK(kind_of(j) == ErrorKind::validation);
    CHECK(kind_of(json::array()) == ErrorKind::validation);
}

TEST_CASE("run_checks on the manufactured disc") {
    auto sc = parse_scenario(disc_json());
    sc.K = 12;
    auto d = sc.discretization();
    auto sol = solve_flow(sc.problem, d);
    auto battery = run_checks(sc, sol, d);
    INFO(battery.to_json().dump(2));
    CHECK(battery.pass());
    CHECK(battery.checks.size() == all_checks().size());
    // The scheme is exact on beta |z|^2 + n t log beta.
    CHECK(battery.max_error < 1e-8);
}

TEST_CASE("convergence_study on a quartic profile measures an order") {
    auto j = disc_json();
    j["manufactured"] = {{"u_star", "radial_quartic"}, {"beta", 1.0}, {"gamma", 0.5}, {"a", 0.0}};
    auto sc = parse_scenario(j);
    auto study = convergence_study(sc, {0.25, 0.125, 0.0625});
    INFO(study.to_json().dump(2));
    REQUIRE(study.rows.size() == 3);
    CHECK(study.reference == "exact");
    CHECK(study.rows[0].h_x > study.rows[2].h_x);
    CHECK(study.rows[2].error < study.rows[0].error);
    CHECK(study.order_pass);
    CHECK(study.rows[2].order > 0.8);
}

TEST_CASE("convergence_study without an exact solution uses the finest level") {
    auto j = json::parse(R"({
        "name": "const",
        "domain": {"n": 1},
        "grid": {"h_x": 0.25, "K": 4},
        "horizon": {"T": 1.0, "S": 0.5},
        "g": {"kind": "const", "c": 0.0},
        "h": {"family": "polynomial", "c": 1.5, "kappa_h": 0.0}
    })");
    auto sc = parse_scenario(j);
    auto study = convergence_study(sc, {0.25, 0.125});
    CHECK(study.reference == "golden");
    CHECK(study.rows[0].error == Approx(0.0).margin(1e-9));
    CHECK(study.rows[1].error == 0.0);
}
