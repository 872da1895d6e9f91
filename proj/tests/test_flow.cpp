#include <catch_amalgamated.hpp>

#include <cmath>

#include "cmaf/flow.hpp"

using namespace cmaf;
using Catch::Approx;

namespace {

/// U = beta |z|^2 + n t log beta, g = 1, F = 0.
FlowProblem quadratic_problem(int n, double beta, double T, double S) {
    RadialProfile u{0.0, beta, 0.0, n * std::log(beta)};
    return manufacture(u, n, FSpec::zero(), T, S).problem;
}

Discretization disc(int n, double h, double T, double S, int K) {
    return Discretization::build(n, h, TimeGrid::uniform(T, S, K));
}

double max_error(const GridFunction& U, const std::function<double(double, const Point&)>& exact) {
    double e = 0;
    for (std::size_t k = 0; k < U.size(); ++k)
        for (std::size_t i = 0; i < U.space().node_count(); ++i)
            e = std::max(e, std::abs(U[k].nodes[i] - exact(U.time()[k], U.space().node(i))));
    return e;
}

} // namespace

TEST_CASE("FSpec families and verification") {
    auto grid = build_grid(BallDomain(1), 0.25);
    auto F = FSpec::affine(1.0, -0.5);
    CHECK(F(0.5, {0.1, 0, 0, 0}, 2.0) == Approx(1.75));
    CHECK(F.dr(0, {}, 3.0) == 1.0);
    CHECK(F.kappa_F == 1.0);
    CHECK_NOTHROW(verify_f_spec(F, *grid, 1.0, 3.0));
    auto bad = FSpec::affine(-1.0, 0.0);
    CHECK_THROWS_AS(verify_f_spec(bad, *grid, 1.0, 3.0), Error);
    auto small = FSpec::affine(2.0, 0.0);
    small.kappa_F = 1.0;
    CHECK_THROWS_AS(verify_f_spec(small, *grid, 1.0, 3.0), Error);
    auto sp = FSpec::softplus_family(1.0, 0.0);
    CHECK(sp(0, {}, 0.0) == Approx(std::log(2.0)));
    CHECK(sp.dr(0, {}, 0.0) == Approx(0.5));
    CHECK_NOTHROW(verify_f_spec(sp, *grid, 1.0, 5.0));
    FSpec concave;
    concave.family = FFamily::custom;
    concave.custom_eval = [](double, const Point&, double r) { return -0.5 * r * r * 0.01 + r; };
    concave.kappa_F = 10;
    concave.C_F = 0.0;
    CHECK_THROWS_AS(verify_f_spec(concave, *grid, 1.0, 3.0), Error);
    concave.C_F = 0.01;
    CHECK_NOTHROW(verify_f_spec(concave, *grid, 1.0, 3.0));
}

TEST_CASE("manufacture examples") {
    for (int n : {1, 2}) {
        double beta = 1.5;
        auto m = manufacture(RadialProfile{0, beta, 0, n * std::log(beta)}, n, FSpec::zero(), 1.0, 0.75);
        for (double r : {0.0, 0.3, 0.9}) CHECK(m.problem.g.eval({r, 0, 0, 0}) == Approx(1.0).epsilon(1e-14));
    }
    // u* = |z|^2 + t with F = r.
    auto m = manufacture(RadialProfile{0, 1, 0, 1}, 1, FSpec::affine(1, 0), 1.0, 0.75);
    for (double t : {0.0, 0.4})
        for (double r : {0.0, 0.5}) {
            Point z{r, 0, 0, 0};
            CHECK(m.g_unfolded(t, z) == Approx(std::exp(-1 - t - r * r)));
        }
    // Folded form: g depends on z only and F absorbs the t term.
    CHECK(m.problem.F.mu == Approx(-1.0));
    CHECK(m.problem.g.eval({0.5, 0, 0, 0}) == Approx(std::exp(-1 - 0.25)));
    auto grid = build_grid(BallDomain(1), 0.125);
    CHECK_THROWS_AS(manufacture(RadialProfile{0, -1, 0, 0}, 1, FSpec::zero(), 1, 0.5), Error);
    CHECK_NOTHROW(manufacture(RadialProfile{0, 1, 0.5, 0}, 1, FSpec::zero(), 1, 0.5, grid.get()));
    // Quartic profile determinant: phi'(phi' + s phi'') for n = 2 and phi' + s phi'' for n = 1.
    RadialProfile q{0, 0.5, 0.5, 0};
    Point z{0.6, 0, 0, 0};
    double s = 0.36;
    CHECK(q.hessian_det(1, z) == Approx(0.5 + 4 * 0.5 * s));
    CHECK(q.hessian_det(2, z) == Approx((0.5 + s) * (0.5 + 2 * s)));
}

TEST_CASE("problem validation") {
    auto p = quadratic_problem(1, 2.0, 1.0, 0.75);
    auto d = disc(1, 0.125, 1.0, 0.75, 6);
    CHECK_NOTHROW(validate_problem(p, d));
    auto bad = p;
    bad.S = 1.5;
    CHECK_THROWS_AS(bad.validate_shape(), Error);
    bad = p;
    bad.g = GSpec::radial_poly(1.0, -3.0, 0.0);
    try {
        bad.g_samples(*d.space);
        FAIL("expected a validation error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::validation);
        CHECK(e.detail().contains("node"));
    }
    bad = p;
    bad.h.kappa_h = 0.1;
    CHECK_THROWS_AS(validate_problem(bad, d), Error);
}

TEST_CASE("g families") {
    auto grid = build_grid(BallDomain(1), 0.125);
    auto g = GSpec::power(1.0, 0.5, 2.0);
    auto s = g.samples(*grid);
    int origin = grid->node_at({0, 0, 0, 0});
    REQUIRE(origin >= 0);
    // Cell average of |z|^{-1/2} over [-h/2, h/2]^2 exceeds the value at the cell corner radius.
    CHECK(std::isfinite(s[origin]));
    CHECK(s[origin] > std::pow(0.125 / std::sqrt(2.0), -0.5));
    auto t = GSpec::radial_table({0.0, 1.0}, {1.0, 3.0});
    CHECK(t.eval({0.5, 0, 0, 0}) == Approx(2.0));
    CHECK(GSpec::exp_radial(2.0, -1.0).eval({1, 0, 0, 0}) == Approx(2 * std::exp(-1.0)));
}

TEST_CASE("compute_constants on the disc example") {
    auto p = quadratic_problem(1, 2.0, 1.0, 0.75);
    p.h.kappa_h = std::log(2.0);
    auto d = disc(1, 1.0 / 16, 1.0, 0.75, 12);
    auto g = p.g_samples(*d.space);
    auto [rho, rep] = solve_rho(g, p.g.p, *d.op);
    auto c = compute_constants(p, d, rep);
    CHECK(c.M_h == Approx(2 + std::log(2.0)).epsilon(1e-12));
    CHECK(c.M_F == 0.0);
    CHECK(c.B == 1.0);
    CHECK(c.rho_sup == Approx(1.0).epsilon(1e-8));
    CHECK(c.M_U == Approx(3 + std::log(2.0)).epsilon(1e-8));
    CHECK(c.kappa_U == Approx(2 * (3 * (3 + std::log(2.0)) + 2 * std::log(2.0) + 2)).epsilon(1e-8));
    // Oracle for C_U from the closed form with kappa_F = C_F = 0, C_h = 0.
    double MU = 3 + std::log(2.0), kU = c.kappa_U, kh = std::log(2.0), Mh = 2 + std::log(2.0);
    CHECK(c.C_U == Approx(2 * Mh + 8 * kh + 3 * (MU + 5 * kU + 1 + 16 * kU * kU)).epsilon(1e-8));
    CHECK(c.kappa_barrier == Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("Cauchy sub-barrier closed form") {
    auto p = quadratic_problem(1, 2.0, 1.0, 0.75);
    p.h.kappa_h = std::log(2.0);
    auto d = disc(1, 1.0 / 16, 1.0, 0.75, 12);
    auto g = p.g_samples(*d.space);
    auto [rho, rep] = solve_rho(g, p.g.p, *d.op);
    auto c = compute_constants(p, d, rep);
    auto v = sub_barrier_cauchy(p, d, rho, c);
    for (std::size_t k : {0, 1, 5, 12})
        for (std::size_t i = 0; i < d.space->node_count(); i += 7) {
            double t = (*d.time)[k];
            double s = squared_norm(d.space->node(i));
            double expect = 2 * s + t * (s - 1 - std::log(2.0)) + (t > 0 ? t * std::log(t) - t : 0.0);
            CHECK(v[k].nodes[i] == Approx(expect).margin(1e-9));
        }
    CHECK(cauchy_profile(0.0, 2.0, 1) == 0.0);
    // The T > 1 profile is convex with derivative n log(t/T).
    double e = 1e-5, t = 0.7;
    double d1 = (cauchy_profile(t + e, 2.0, 2) - cauchy_profile(t - e, 2.0, 2)) / (2 * e);
    CHECK(d1 == Approx(2 * std::log(t / 2.0)).epsilon(1e-6));
}

TEST_CASE("barriers on constant data") {
    FlowProblem p;
    p.n = 1;
    p.T = 1;
    p.S = 0.5;
    p.g = GSpec::constant(1.0);
    p.h = polynomial_boundary(1.5, 0, 0, 0, 0, 0, 0);
    auto d = disc(1, 0.125, 1.0, 0.5, 4);
    auto g = p.g_samples(*d.space);
    auto [rho, rep] = solve_rho(g, p.g.p, *d.op);
    auto c = compute_constants(p, d, rep);
    auto D = sub_barrier_dirichlet(p, d, rho, c);
    auto H = super_barrier(p, d);
    for (std::size_t k = 0; k < D.size(); ++k) {
        for (std::size_t i = 0; i < d.space->node_count(); ++i) {
            CHECK(D[k].nodes[i] == Approx(1.5 + rho.nodes[i]).margin(1e-12));
            CHECK(H[k].nodes[i] == Approx(1.5).margin(1e-12));
        }
        for (double hv : D[k].hits) CHECK(hv == Approx(1.5));
    }
    // h_0 = 2|z|^2 psh but not harmonic: H(0, .) = 2 strictly above h_0 inside.
    auto q = quadratic_problem(1, 2.0, 1.0, 0.75);
    auto d2 = disc(1, 0.125, 1.0, 0.75, 6);
    auto H2 = super_barrier(q, d2);
    for (std::size_t i = 0; i < d2.space->node_count(); ++i) {
        CHECK(H2[0].nodes[i] == Approx(2.0).margin(1e-9));
        CHECK(H2[0].nodes[i] > 2 * squared_norm(d2.space->node(i)));
    }
}

TEST_CASE("step_implicit examples") {
    auto grid_d = disc(1, 1.0 / 16, 1.0, 0.75, 12);
    const auto& grid = *grid_d.space;
    // Stationary: u* = |z|^2, F = r, g = e^{-|z|^2} so that ma_root(u*) = [e^{F(u*)} g]^{1/n} = 1.
    FlowProblem p;
    p.n = 1;
    p.T = 1;
    p.S = 0.75;
    p.F = FSpec::affine(1.0, 0.0);
    p.g = GSpec::exp_radial(1.0, -1.0);
    p.h = trace_boundary([](double, const Point& z) { return squared_norm(z); }, 0, 0);
    Slice ustar = sample(grid, [](const Point& z) { return squared_norm(z); });
    auto root = g_roots(p.g_samples(grid), 1);
    Slice next = step_implicit(ustar, 0.5, 1.0 / 16, p, *grid_d.op, root);
    for (std::size_t i = 0; i < grid.node_count(); ++i) CHECK(next.nodes[i] == Approx(ustar.nodes[i]).margin(1e-9));

    // Disc manufactured: one step from the exact slice.
    auto q = quadratic_problem(1, 2.0, 1.0, 0.75);
    auto rq = g_roots(q.g_samples(grid), 1);
    double t0 = 0.25, dt = 1.0 / 64;
    Slice ex0 = sample(grid, [&](const Point& z) { return q.exact(t0, z); });
    Slice s1 = step_implicit(ex0, t0 + dt, dt, q, *grid_d.op, rq);
    for (std::size_t i = 0; i < grid.node_count(); ++i)
        CHECK(s1.nodes[i] == Approx(q.exact(t0 + dt, grid.node(i))).margin(1e-8));

    // g = 0: the step returns the maximal psh extension regardless of u_prev.
    auto zero = q;
    zero.g = GSpec::constant(0.0);
    auto r0 = g_roots(zero.g_samples(grid), 1);
    Slice garbage = sample(grid, [](const Point& z) { return 5 * z[0] - 3; });
    Slice s0 = step_implicit(garbage, 0.5, dt, zero, *grid_d.op, r0);
    Slice mpsh = maximal_psh(zero.h.trace(grid, 0.5), *grid_d.op);
    for (std::size_t i = 0; i < grid.node_count(); ++i) CHECK(s0.nodes[i] == Approx(mpsh.nodes[i]).margin(1e-8));
}

TEST_CASE("solve_flow on the manufactured disc and its residual reports") {
    auto p = quadratic_problem(1, 2.0, 1.0, 0.75);
    auto d = disc(1, 1.0 / 16, 1.0, 0.75, 24);
    auto sol = solve_flow(p, d);
    CHECK(max_error(sol.U, p.exact) <= 0.05);
    CHECK(sol.U.all_finite());
    double tol = default_slice_tol(d.h());
    auto rep = subsolution_residual(sol.U, p, *d.op, sol.g, tol, tol);
    CHECK(rep.pass);
    CHECK(rep.super_pass);
    auto H = super_barrier(p, d);
    auto hrep = subsolution_residual(H, p, *d.op, sol.g, tol, tol);
    CHECK_FALSE(hrep.pass);
    auto D = sub_barrier_dirichlet(p, d, sol.rho, sol.ledger);
    auto C = sub_barrier_cauchy(p, d, sol.rho, sol.ledger);
    auto M = GridFunction::max(D, C);
    CHECK(subsolution_residual(M, p, *d.op, sol.g, tol, tol).pass);
    CHECK(dominance(D, H, tol).pass);

    auto v = verify_flow(sol, p, d);
    INFO(v.to_json().dump(2));
    CHECK(v.pass());

    // Comparison examples.
    auto same = comparison_check(sol.U, sol.U, p, *d.op, sol.g, tol, 5 * (d.h() + d.dt()));
    CHECK(same.preconditions_met);
    CHECK(same.max_difference == 0.0);
    auto cb = comparison_check(C, sol.U, p, *d.op, sol.g, tol, 5 * (d.h() + d.dt()));
    CHECK(cb.preconditions_met);
    CHECK(cb.pass);
    auto rev = comparison_check(sol.U, C, p, *d.op, sol.g, tol, 5 * (d.h() + d.dt()));
    CHECK_FALSE(rev.preconditions_met);
}

TEST_CASE("monotone dependence on the data", "[property]") {
    auto p = quadratic_problem(1, 2.0, 1.0, 0.5);
    auto d = disc(1, 1.0 / 16, 1.0, 0.5, 8);
    auto base = solve_flow(p, d);
    auto up = p;
    up.h.lateral = [f = p.h.lateral](double t, const Point& z) { return f(t, z) + 0.1; };
    up.h.initial = [f = p.h.initial](const Point& z) { return f(z) + 0.1 * (1 + 0 * z[0]); };
    // Shifted h_0 stays compatible with the shifted lateral data.
    auto hi = solve_flow(up, d);
    double tol = default_slice_tol(d.h());
    auto cmp = comparison_check(base.U, hi.U, p, *d.op, base.g, tol, 5 * (d.h() + d.dt()));
    CHECK(cmp.preconditions_met);
    CHECK(cmp.pass);
    CHECK(dominance(base.U, hi.U, 1e-9).pass);
    auto bigger_g = p;
    bigger_g.g = GSpec::constant(2.0);
    auto lo = solve_flow(bigger_g, d);
    CHECK(dominance(lo.U, base.U, 1e-9).pass);
}

TEST_CASE("identity principle: extending the horizon reproduces the earlier solution", "[property]") {
    auto p = manufacture(RadialProfile{0, 1.0, 0.5, 0.2}, 1, FSpec::zero(), 2.0, 0.5).problem;
    auto d1 = Discretization::build(1, 1.0 / 8, TimeGrid::uniform(2.0, 0.5, 4));
    auto p2 = p;
    p2.S = 1.0;
    auto d2 = Discretization::build(1, 1.0 / 8, TimeGrid::uniform(2.0, 1.0, 8));
    auto a = solve_flow(p, d1);
    auto b = solve_flow(p2, d2);
    for (std::size_t k = 0; k < a.U.size(); ++k)
        for (std::size_t i = 0; i < d1.space->node_count(); ++i)
            CHECK(a.U[k].nodes[i] == Approx(b.U[k].nodes[i]).margin(1e-9));
}

TEST_CASE("boundary attainment on constant data") {
    FlowProblem p;
    p.n = 1;
    p.T = 1;
    p.S = 0.5;
    p.g = GSpec::constant(0.0);
    p.h = polynomial_boundary(0.7, 0, 0, 0, 0, 0, 0);
    auto d = disc(1, 0.125, 1.0, 0.5, 4);
    auto sol = solve_flow(p, d);
    auto b = boundary_attainment_report(sol.U, p);
    CHECK(b.lateral_error <= 1e-9);
    for (double e : b.initial_l1) CHECK(e <= 1e-9);
}
