#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "cmaf/domain.hpp"
#include "cmaf/grid_function.hpp"
#include "cmaf/ma_ops.hpp"

namespace cmaf {

/// Default slice-check tolerance 10 h^2 + 1e-9.
inline double default_slice_tol(double h) { return 10.0 * h * h + 1e-9; }

// ---------------------------------------------------------------------------
// Parabolic boundary data

/// Cauchy-Dirichlet data: lateral values h(t, zeta) on the sphere, initial
/// values h_0 on the closed ball, and the declared constants of
/// t |d_t h| <= kappa_h and t^2 d_t^2 h <= C_h.
struct BoundaryData {
    std::function<double(double, const Point&)> lateral;
    std::function<double(const Point&)> initial;
    double kappa_h = 0.0;
    double C_h = 0.0;

    /// Lateral values at the boundary hits at time t.
    std::vector<double> trace(const SpaceGrid& grid, double t) const {
        std::vector<double> v(grid.hit_count());
        for (std::size_t j = 0; j < v.size(); ++j) v[j] = lateral(t, grid.hits()[j].point);
        return v;
    }

    /// h_0 on nodes and on the sphere points of the hits.
    Slice initial_slice(const SpaceGrid& grid) const {
        Slice s(grid);
        for (std::size_t i = 0; i < grid.node_count(); ++i) s.nodes[i] = initial(grid.node(i));
        for (std::size_t j = 0; j < grid.hit_count(); ++j) s.hits[j] = initial(grid.hits()[j].point);
        return s;
    }
};

struct PshReport {
    double min_margin = std::numeric_limits<double>::infinity();
    int worst_node = -1;
    bool pass = true;
};

/// min over interior nodes and dictionary matrices of Delta_A(slice).
inline PshReport psh_check(const Slice& slice, const DeltaOperator& op, double tol) {
    const auto& g = op.grid();
    PshReport rep;
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        if (g.tag(i) != NodeTag::interior) continue;
        double m = op.apply_min(slice, i);
        if (m < rep.min_margin) {
            rep.min_margin = m;
            rep.worst_node = static_cast<int>(i);
        }
    }
    rep.pass = rep.min_margin >= -tol;
    return rep;
}

namespace detail {

/// At most `cap` boundary hits spread evenly over the hit list.
inline std::vector<std::size_t> hit_sample(const SpaceGrid& grid, std::size_t cap = 4000) {
    std::vector<std::size_t> idx;
    std::size_t stride = std::max<std::size_t>(1, grid.hit_count() / cap);
    for (std::size_t j = 0; j < grid.hit_count(); j += stride) idx.push_back(j);
    return idx;
}

} // namespace detail

struct BoundaryConstantsSample {
    double kappa_sampled = 0.0; // max t |d_t h|
    double C_sampled = -std::numeric_limits<double>::infinity(); // max t^2 d_t^2 h
    double lipschitz_sampled = 0.0; // max |d_t h|
    double worst_t = 0.0;
    Point worst_zeta{};
};

/// Samples t |d_t h| and t^2 d_t^2 h on the lateral boundary over (0, S] by
/// central differences.
inline BoundaryConstantsSample sample_boundary_constants(const BoundaryData& bd, const SpaceGrid& grid, double S,
                                                         int time_samples = 64) {
    BoundaryConstantsSample out;
    double worst_kappa_excess = -std::numeric_limits<double>::infinity();
    for (std::size_t j : detail::hit_sample(grid)) {
        const Point& z = grid.hits()[j].point;
        for (int k = 1; k <= time_samples; ++k) {
            double t = S * k / time_samples;
            double e = 1e-4 * t;
            double hm = bd.lateral(t - e, z), h0 = bd.lateral(t, z), hp = bd.lateral(t + e, z);
            double d1 = (hp - hm) / (2 * e);
            double d2 = (hp - 2 * h0 + hm) / (e * e);
            out.lipschitz_sampled = std::max(out.lipschitz_sampled, std::abs(d1));
            double kap = t * std::abs(d1);
            if (kap > out.kappa_sampled) out.kappa_sampled = kap;
            if (kap - bd.kappa_h > worst_kappa_excess) {
                worst_kappa_excess = kap - bd.kappa_h;
                out.worst_t = t;
                out.worst_zeta = z;
            }
            out.C_sampled = std::max(out.C_sampled, t * t * d2);
        }
    }
    return out;
}

/// Throws a validation error naming the offending sample when the data are not
/// finite, h_0 disagrees with h(0, .) on the sphere, h_0 fails the psh test, or
/// the declared kappa_h / C_h are exceeded.
inline void validate_boundary_data(const BoundaryData& bd, const DeltaOperator& op, double S, double psh_tol) {
    const auto& grid = op.grid();
    Slice h0 = bd.initial_slice(grid);
    for (std::size_t i = 0; i < grid.node_count(); ++i)
        if (!std::isfinite(h0.nodes[i]))
            throw Error(ErrorKind::validation, "initial data not finite", {{"node", i}});
    for (std::size_t j : detail::hit_sample(grid)) {
        const Point& z = grid.hits()[j].point;
        double lat = bd.lateral(0.0, z);
        if (!std::isfinite(lat) || !std::isfinite(bd.lateral(S, z)))
            throw Error(ErrorKind::validation, "lateral data not finite", {{"zeta", z}});
        if (std::abs(lat - h0.hits[j]) > 1e-10)
            throw Error(ErrorKind::validation, "initial and lateral data disagree on the sphere at t = 0",
                        {{"zeta", z}, {"h0", h0.hits[j]}, {"h_lateral", lat}});
    }
    auto psh = psh_check(h0, op, psh_tol);
    if (!psh.pass)
        throw Error(ErrorKind::validation, "initial data is not plurisubharmonic on the grid",
                    {{"node", psh.worst_node}, {"margin", psh.min_margin}});
    auto c = sample_boundary_constants(bd, grid, S);
    double slack = 1e-6 * (1.0 + std::abs(bd.kappa_h));
    if (c.kappa_sampled > bd.kappa_h + slack)
        throw Error(ErrorKind::validation, "declared kappa_h is smaller than the sampled t|d_t h|",
                    {{"t", c.worst_t}, {"zeta", c.worst_zeta}, {"sampled", c.kappa_sampled}, {"declared", bd.kappa_h}});
    if (c.C_sampled > bd.C_h + 1e-4 * (1.0 + std::abs(bd.C_h)))
        throw Error(ErrorKind::validation, "declared C_h is smaller than the sampled t^2 d_t^2 h",
                    {{"sampled", c.C_sampled}, {"declared", bd.C_h}});
}

// ---------------------------------------------------------------------------
// Time regularity estimators

/// Discrete sup of t |d_t u|: max over 1 <= k < K and nodes of
/// t_k |u_{k+1} - u_k| / (t_{k+1} - t_k).
inline double time_lipschitz_estimate(const GridFunction& u) {
    const auto& tg = u.time();
    if (tg.size() < 2) throw Error(ErrorKind::invalid_argument, "need at least two time nodes");
    double best = 0;
    for (std::size_t k = 1; k + 1 < tg.size(); ++k) {
        double dt = tg.step(k + 1);
        for (std::size_t i = 0; i < u.space().node_count(); ++i)
            best = std::max(best, tg[k] * std::abs(u[k + 1].nodes[i] - u[k].nodes[i]) / dt);
    }
    return best;
}

/// Plain Lipschitz constant in t over intervals [t_k, t_{k+1}] meeting [lo, hi],
/// restricted to the given nodes (all nodes when empty).
inline double time_lipschitz_window(const GridFunction& u, double lo, double hi,
                                    const std::vector<std::size_t>& nodes = {}) {
    const auto& tg = u.time();
    double best = 0;
    for (std::size_t k = 0; k + 1 < tg.size(); ++k) {
        if (tg[k + 1] <= lo || tg[k] >= hi) continue;
        double dt = tg.step(k + 1);
        auto visit = [&](std::size_t i) { best = std::max(best, std::abs(u[k + 1].nodes[i] - u[k].nodes[i]) / dt); };
        if (nodes.empty())
            for (std::size_t i = 0; i < u.space().node_count(); ++i) visit(i);
        else
            for (std::size_t i : nodes) visit(i);
    }
    return best;
}

/// max over 1 <= k < K and nodes of t_k^2 times the three-point second difference.
inline double time_semiconcavity_estimate(const GridFunction& u) {
    const auto& tg = u.time();
    if (tg.size() < 3) throw Error(ErrorKind::invalid_argument, "need at least three time nodes");
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k + 1 < tg.size(); ++k) {
        double hm = tg.step(k), hp = tg.step(k + 1);
        for (std::size_t i = 0; i < u.space().node_count(); ++i) {
            double d2 = 2.0 * ((u[k + 1].nodes[i] - u[k].nodes[i]) / hp - (u[k].nodes[i] - u[k - 1].nodes[i]) / hm) /
                        (hp + hm);
            best = std::max(best, tg[k] * tg[k] * d2);
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Sub-mean value and L1 slice checks

struct SubmeanReport {
    double average = 0.0; // space-time mean over the tube
    double kappa0 = 0.0;  // time-Lipschitz constant on the tube
    double centre = 0.0;  // u(t0, z0)
    double margin = 0.0;  // average + kappa0 * eps - centre
    std::size_t ball_nodes = 0;
    bool pass = false;
};

namespace detail {

/// Node id of the lattice point z0; throws if z0 is not a node.
inline std::size_t snap_to_node(const SpaceGrid& g, const Point& z0) {
    std::array<int, 4> idx{};
    for (int p = 0; p < g.dim(); ++p) {
        double q = z0[p] / g.h();
        idx[p] = static_cast<int>(std::lround(q));
        if (std::abs(q - idx[p]) > 1e-9)
            throw Error(ErrorKind::invalid_argument, "tube centre must be a lattice node", {{"z0", z0}});
    }
    int node = g.node_at(idx);
    if (node < 0) throw Error(ErrorKind::invalid_argument, "tube centre outside the ball", {{"z0", z0}});
    return static_cast<std::size_t>(node);
}

/// Trapezoid integral of a piecewise-linear-in-time quantity over [a, b].
inline double time_integral(const TimeGrid& tg, double a, double b, const std::function<double(double)>& f) {
    std::vector<double> pts{a};
    for (double t : tg.nodes())
        if (t > a && t < b) pts.push_back(t);
    pts.push_back(b);
    double sum = 0;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) sum += 0.5 * (f(pts[k]) + f(pts[k + 1])) * (pts[k + 1] - pts[k]);
    return sum;
}

} // namespace detail

/// Compares u(t0, z0) with the mean of u over the lattice ball B(z0, r) times
/// [t0 - eps, t0 + eps] plus kappa0 * eps.
inline SubmeanReport submean_check(const GridFunction& u, double t0, const Point& z0, double eps, double r,
                                   double tol) {
    const auto& g = u.space();
    const auto& tg = u.time();
    if (!(eps > 0) || !(r > 0)) throw Error(ErrorKind::invalid_argument, "tube radii must be positive");
    if (t0 - eps < 0 || t0 + eps > tg.S() * (1 + 1e-12))
        throw Error(ErrorKind::invalid_argument, "tube exits the time grid", {{"t0", t0}, {"eps", eps}});
    if (std::sqrt(squared_norm(z0)) + r >= 1.0)
        throw Error(ErrorKind::invalid_argument, "tube exits the ball", {{"z0", z0}, {"r", r}});
    std::size_t centre = detail::snap_to_node(g, z0);
    std::vector<std::size_t> ball;
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        Point d = g.node(i);
        for (int p = 0; p < 4; ++p) d[p] -= z0[p];
        if (squared_norm(d) <= r * r * (1 + 1e-12)) ball.push_back(i);
    }
    SubmeanReport rep;
    rep.ball_nodes = ball.size();
    auto mean_at = [&](double t) {
        std::size_t k = tg.locate(t);
        double w = std::clamp((t - tg[k]) / tg.step(k + 1), 0.0, 1.0);
        double s = 0;
        for (std::size_t i : ball) s += (1 - w) * u[k].nodes[i] + w * u[k + 1].nodes[i];
        return s / static_cast<double>(ball.size());
    };
    rep.average = detail::time_integral(tg, t0 - eps, t0 + eps, mean_at) / (2 * eps);
    rep.kappa0 = time_lipschitz_window(u, t0 - eps, t0 + eps, ball);
    std::size_t k = tg.locate(t0);
    double w = std::clamp((t0 - tg[k]) / tg.step(k + 1), 0.0, 1.0);
    rep.centre = (1 - w) * u[k].nodes[centre] + w * u[k + 1].nodes[centre];
    rep.margin = rep.average + rep.kappa0 * eps - rep.centre;
    rep.pass = rep.margin >= -tol;
    return rep;
}

struct SliceL1Report {
    double lhs = 0.0;          // max over [T0, T1] of ||u_t - v_t||_{L1}
    double rhs = 0.0;          // 2 M max{N^{1/2}, N}
    double norm = 0.0;         // N = ||u - v||_{L1} over [T0, S] x ball
    double kappa = 0.0;        // Lipschitz constant in t of u - v on [T0, S]
    double M = 0.0;
    double lattice_volume = 0.0;
    bool pass = false;
};

/// L1 slice bound: max_{[T0,T1]} ||u_t - v_t||_1 <= 2 M max{N^{1/2}, N} with
/// M = max{sqrt(kappa Vol), (S - T1)^{-1}} and N the L1 norm of u - v on [T0, S].
inline SliceL1Report slice_l1_bound_check(const GridFunction& u, const GridFunction& v, double T0, double T1,
                                          double S, double tol) {
    const auto& g = u.space();
    const auto& tg = u.time();
    if (!(0 < T0 && T0 < T1 && T1 < S && S <= tg.S() * (1 + 1e-12)))
        throw Error(ErrorKind::invalid_argument, "need 0 < T0 < T1 < S within the time grid",
                    {{"T0", T0}, {"T1", T1}, {"S", S}, {"grid_S", tg.S()}});
    if (&u.space() != &v.space() && u.space().node_count() != v.space().node_count())
        throw Error(ErrorKind::invalid_argument, "functions live on different grids");
    GridFunction d = u - v;
    const double cell = g.cell_volume();
    auto slice_norm = [&](double t) {
        std::size_t k = tg.locate(t);
        double w = std::clamp((t - tg[k]) / tg.step(k + 1), 0.0, 1.0);
        double s = 0;
        for (std::size_t i = 0; i < g.node_count(); ++i) s += std::abs((1 - w) * d[k].nodes[i] + w * d[k + 1].nodes[i]);
        return s * cell;
    };
    SliceL1Report rep;
    rep.lattice_volume = cell * static_cast<double>(g.node_count());
    rep.lhs = std::max(slice_norm(T0), slice_norm(T1));
    for (std::size_t k = 0; k < tg.size(); ++k)
        if (tg[k] > T0 && tg[k] < T1) rep.lhs = std::max(rep.lhs, slice_norm(tg[k]));
    rep.norm = detail::time_integral(tg, T0, S, slice_norm);
    rep.kappa = time_lipschitz_window(d, T0, S);
    rep.M = std::max(std::sqrt(rep.kappa * g.domain().volume()), 1.0 / (S - T1));
    rep.rhs = 2 * rep.M * std::max(std::sqrt(rep.norm), rep.norm);
    rep.pass = rep.lhs <= rep.rhs * (1 + tol);
    return rep;
}

} // namespace cmaf
