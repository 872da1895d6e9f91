#include <catch_amalgamated.hpp>

#include <random>

#include "cmaf/potentials.hpp"

using namespace cmaf;
using Catch::Approx;

namespace {

std::shared_ptr<const TimeGrid> uniform_time(double T, double S, int K) {
    return std::make_shared<const TimeGrid>(TimeGrid::uniform(T, S, K));
}

} // namespace

TEST_CASE("psh_check examples") {
    for (int n : {1, 2}) {
        auto g = build_grid(BallDomain(n), n == 1 ? 0.125 : 0.25);
        DeltaOperator op(g, HermitianDictionary::build(n));
        double tol = default_slice_tol(g->h());
        auto pos = psh_check(sample(*g, [](const Point& x) { return squared_norm(x); }), op, tol);
        CHECK(pos.pass);
        CHECK(pos.min_margin == Approx(1.0).margin(1e-11));
        auto neg = psh_check(sample(*g, [](const Point& x) { return -squared_norm(x); }), op, tol);
        CHECK_FALSE(neg.pass);
        // The identity gives -1; stretched dictionary entries give -tr(A)/n < -1.
        if (n == 1) CHECK(neg.min_margin == Approx(-1.0).margin(1e-11));
        else CHECK(neg.min_margin <= -1.0);
        CHECK(neg.worst_node >= 0);
        auto ph = psh_check(sample(*g, [](const Point& x) { return x[0] * x[0] - x[1] * x[1]; }), op, tol);
        CHECK(ph.pass);
        CHECK(std::abs(ph.min_margin) <= 1e-11);
    }
}

TEST_CASE("max of psh slices keeps the dominant branch margin", "[property]") {
    auto g = build_grid(BallDomain(1), 1.0 / 16);
    DeltaOperator op(g, HermitianDictionary::build(1));
    Slice a = sample(*g, [](const Point& x) { return squared_norm(x); });
    Slice b = sample(*g, [](const Point& x) { return 0.5 * squared_norm(x) + x[0] + 0.3; });
    Slice m = combine(a, b, [](double x, double y) { return std::max(x, y); });
    double tol = default_slice_tol(g->h());
    double floor_margin = std::min(psh_check(a, op, tol).min_margin, psh_check(b, op, tol).min_margin);
    auto rep = psh_check(m, op, tol);
    CHECK(rep.min_margin >= floor_margin - 1e-12);
    // Where one branch dominates on the whole stencil, the margin equals that branch's.
    for (std::size_t i = 0; i < g->node_count(); ++i) {
        if (g->tag(i) != NodeTag::interior) continue;
        bool a_wins = true;
        for (std::size_t k = 0; k < g->directions().size(); ++k) {
            int ref = g->neighbour(i, static_cast<int>(k));
            a_wins = a_wins && a.at(ref) > b.at(ref);
        }
        if (a_wins && a.nodes[i] > b.nodes[i]) CHECK(op.apply_min(m, i) == Approx(op.apply_min(a, i)).margin(1e-12));
    }
}

TEST_CASE("time Lipschitz estimator") {
    auto g = build_grid(BallDomain(1), 0.25);
    auto t = uniform_time(1.0, 1.0, 4);
    double alpha = std::log(2.0);
    auto u = GridFunction::sampled(g, t, [&](double tt, const Point&) { return alpha * tt; });
    CHECK(time_lipschitz_estimate(u) == Approx(0.75 * alpha));
    CHECK(time_lipschitz_estimate(u) == Approx(0.5199).margin(1e-4));
    auto c = GridFunction::sampled(g, t, [](double, const Point& x) { return x[0]; });
    CHECK(time_lipschitz_estimate(c) == 0.0);
    auto geo = std::make_shared<const TimeGrid>(TimeGrid::geometric(1.0, 0.9, 12));
    double dmin = geo->step(1);
    auto lg = GridFunction::sampled(g, geo, [&](double tt, const Point&) { return std::log(tt + dmin); });
    CHECK(time_lipschitz_estimate(lg) <= 1.0);
    auto one = std::make_shared<const TimeGrid>(TimeGrid(1.0, {0.0, 0.5}, TimeGrading::uniform));
    CHECK(time_lipschitz_estimate(GridFunction(g, one)) == 0.0);
}

TEST_CASE("time Lipschitz estimator is subadditive", "[property]") {
    auto g = build_grid(BallDomain(1), 0.25);
    auto t = std::make_shared<const TimeGrid>(TimeGrid::geometric(1.0, 0.8, 10));
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> c(-2, 2);
    for (int trial = 0; trial < 20; ++trial) {
        double a1 = c(rng), a2 = c(rng), b1 = c(rng), b2 = c(rng);
        auto u = GridFunction::sampled(g, t, [&](double tt, const Point& x) { return a1 * std::sin(3 * tt) * x[0] + a2 * tt * tt; });
        auto v = GridFunction::sampled(g, t, [&](double tt, const Point& x) { return b1 * std::sqrt(tt) + b2 * tt * x[1]; });
        CHECK(time_lipschitz_estimate(u + v) <= time_lipschitz_estimate(u) + time_lipschitz_estimate(v) + 1e-12);
    }
}

TEST_CASE("time semiconcavity estimator") {
    auto g = build_grid(BallDomain(1), 0.25);
    auto t = uniform_time(1.0, 1.0, 4);
    auto lin = GridFunction::sampled(g, t, [](double tt, const Point&) { return 3 * tt; });
    CHECK(std::abs(time_semiconcavity_estimate(lin)) <= 1e-12);
    auto neg = GridFunction::sampled(g, t, [](double tt, const Point&) { return -tt * tt; });
    CHECK(time_semiconcavity_estimate(neg) == Approx(-2 * 0.25 * 0.25));
    auto pos = GridFunction::sampled(g, t, [](double tt, const Point&) { return tt * tt; });
    CHECK(time_semiconcavity_estimate(pos) == Approx(2 * 0.75 * 0.75));
    auto two = uniform_time(1.0, 1.0, 1);
    REQUIRE_THROWS_AS(time_semiconcavity_estimate(GridFunction(g, two)), Error);
}

TEST_CASE("concave sequences have nonpositive semiconcavity estimate", "[property]") {
    auto g = build_grid(BallDomain(1), 0.5);
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> step(0.01, 0.2);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> nodes{0.0};
        for (int k = 0; k < 12; ++k) nodes.push_back(nodes.back() + step(rng));
        auto t = std::make_shared<const TimeGrid>(TimeGrid(10.0, nodes, TimeGrading::uniform));
        double a = step(rng) * 10;
        auto u = GridFunction::sampled(g, t, [&](double tt, const Point& x) { return std::log(1 + a * tt) - tt * tt + x[0]; });
        CHECK(time_semiconcavity_estimate(u) <= 0.0);
    }
}

TEST_CASE("submean check") {
    auto g = build_grid(BallDomain(1), 1.0 / 16);
    auto t = uniform_time(1.0, 0.75, 12);
    double tol = default_slice_tol(g->h());
    Point z0{0.25, -0.125, 0, 0};
    auto quad = GridFunction::sampled(g, t, [](double, const Point& x) { return squared_norm(x); });
    auto rq = submean_check(quad, 0.375, z0, 0.125, 0.25, tol);
    CHECK(rq.pass);
    CHECK(rq.margin > 0);
    // Oracle: lattice mean of |x - z0|^2 over the ball.
    double s = 0;
    int cnt = 0;
    for (int i = -4; i <= 4; ++i)
        for (int j = -4; j <= 4; ++j)
            if (i * i + j * j <= 16) {
                s += (i * i + j * j) / 256.0;
                ++cnt;
            }
    CHECK(rq.margin == Approx(s / cnt).epsilon(1e-12));
    CHECK(rq.ball_nodes == static_cast<std::size_t>(cnt));

    auto aff = GridFunction::sampled(g, t, [](double tt, const Point& x) { return 2 * x[0] - x[1] + 0.5 * tt; });
    auto ra = submean_check(aff, 0.375, z0, 0.125, 0.25, tol);
    CHECK(ra.kappa0 == Approx(0.5));
    CHECK(ra.margin == Approx(0.5 * 0.125).margin(1e-12));

    auto neg = GridFunction::sampled(g, t, [](double, const Point& x) { return -squared_norm(x); });
    CHECK_FALSE(submean_check(neg, 0.375, z0, 0.125, 0.5, tol).pass);
    REQUIRE_THROWS_AS(submean_check(quad, 0.05, z0, 0.125, 0.25, tol), Error);
    REQUIRE_THROWS_AS(submean_check(quad, 0.375, Point{0.8, 0, 0, 0}, 0.1, 0.25, tol), Error);
}

TEST_CASE("L1 slice bound closed forms") {
    auto g = build_grid(BallDomain(1), 1.0 / 16);
    auto t = uniform_time(1.0, 1.0, 16);
    auto u = GridFunction::sampled(g, t, [](double tt, const Point& x) { return squared_norm(x) + tt; });
    auto same = slice_l1_bound_check(u, u, 0.25, 0.5, 0.75, 1e-9);
    CHECK(same.pass);
    CHECK(same.lhs == 0.0);

    const double c = 0.3;
    auto shifted = u.map([&](double x) { return x - c; });
    auto rc = slice_l1_bound_check(u, shifted, 0.25, 0.7, 0.75, 1e-9);
    double vol = rc.lattice_volume;
    CHECK(rc.lhs == Approx(c * vol));
    CHECK(rc.kappa == Approx(0.0).margin(1e-12));
    double norm = c * vol * (0.75 - 0.25);
    CHECK(rc.norm == Approx(norm));
    CHECK(rc.rhs == Approx(2 / (0.75 - 0.7) * std::max(std::sqrt(norm), norm)));
    CHECK(rc.pass);

    auto v = GridFunction::sampled(g, t, [](double, const Point& x) { return squared_norm(x); });
    auto rt = slice_l1_bound_check(u, v, 0.25, 0.5, 0.75, 1e-9);
    CHECK(rt.lhs == Approx(0.5 * vol));
    CHECK(rt.kappa == Approx(1.0));
    double n2 = vol * (0.75 * 0.75 - 0.25 * 0.25) / 2;
    CHECK(rt.norm == Approx(n2));
    double M = std::max(std::sqrt(M_PI), 4.0);
    CHECK(rt.rhs == Approx(2 * M * std::max(std::sqrt(n2), n2)));
    CHECK(rt.pass);
    REQUIRE_THROWS_AS(slice_l1_bound_check(u, v, 0.5, 0.25, 0.75, 1e-9), Error);
}

TEST_CASE("boundary data validation") {
    auto g = build_grid(BallDomain(1), 0.125);
    DeltaOperator op(g, HermitianDictionary::build(1));
    BoundaryData bd;
    bd.lateral = [](double t, const Point&) { return 2 + t * std::log(2.0); };
    bd.initial = [](const Point& x) { return 2 * squared_norm(x); };
    bd.kappa_h = std::log(2.0);
    bd.C_h = 0.0;
    REQUIRE_NOTHROW(validate_boundary_data(bd, op, 0.75, 1e-9));
    auto sampled = sample_boundary_constants(bd, *g, 1.0);
    CHECK(sampled.kappa_sampled == Approx(std::log(2.0)).epsilon(1e-6));

    BoundaryData low = bd;
    low.kappa_h = 0.5;
    try {
        validate_boundary_data(low, op, 1.0, 1e-9);
        FAIL("expected a validation error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::validation);
        CHECK(e.detail().contains("t"));
        CHECK(e.detail().contains("zeta"));
    }
    BoundaryData mismatch = bd;
    mismatch.initial = [](const Point& x) { return 2 * squared_norm(x) + 0.1; };
    REQUIRE_THROWS_AS(validate_boundary_data(mismatch, op, 1.0, 1e-9), Error);
    BoundaryData concave = bd;
    concave.initial = [](const Point& x) { return 4 - 2 * squared_norm(x); };
    concave.lateral = [](double t, const Point&) { return 2 + t * std::log(2.0); };
    REQUIRE_THROWS_AS(validate_boundary_data(concave, op, 1.0, 1e-9), Error);
}
