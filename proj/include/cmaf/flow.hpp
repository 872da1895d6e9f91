#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include <json.hpp>

#include "cmaf/data.hpp"
#include "cmaf/grid_function.hpp"
#include "cmaf/hermitian.hpp"
#include "cmaf/log.hpp"
#include "cmaf/ma_ops.hpp"
#include "cmaf/potentials.hpp"

namespace cmaf {

/// Space grid, time grid and the dictionary operator of one solve.
struct Discretization {
    std::shared_ptr<const SpaceGrid> space;
    std::shared_ptr<const TimeGrid> time;
    std::shared_ptr<const DeltaOperator> op;

    static Discretization build(int n, double h_x, TimeGrid time, DictionaryOptions dict = {}) {
        Discretization d;
        d.space = build_grid(BallDomain(n), h_x);
        d.time = std::make_shared<const TimeGrid>(std::move(time));
        d.op = std::make_shared<const DeltaOperator>(d.space, HermitianDictionary::build(n, dict));
        return d;
    }

    double h() const { return space->h(); }
    /// Largest time step.
    double dt() const {
        double m = 0;
        for (std::size_t k = 1; k < time->size(); ++k) m = std::max(m, time->step(k));
        return m;
    }
};

// ---------------------------------------------------------------------------
// Constants

struct ConstantsLedger {
    int n = 1;
    double T = 1.0;
    double M_h = 0, M_F = 0, B = 1, M_U = 0;
    double kappa_h = 0, kappa_F = 0, C_h = 0, C_F = 0;
    double kappa_U = 0, C_U = 0;
    double rho_sup = 0;
    /// max(kappa_h, sampled plain Lipschitz constant of the lateral data); used by both sub-barriers.
    double kappa_barrier = 0;
    /// Constant of the time-scaling transform.
    double C_time_scale = 0;
    /// Constant of the semi-concavity average.
    double C_semiconcave = 0;
    /// r-range [-r_box, r_box] on which F was verified.
    double r_box = 0;
    double kolodziej_ratio = 0;

    nlohmann::json to_json() const {
        return {{"n", n},
                {"T", T},
                {"M_h", M_h},
                {"M_F", M_F},
                {"B", B},
                {"M_U", M_U},
                {"kappa_h", kappa_h},
                {"kappa_F", kappa_F},
                {"C_h", C_h},
                {"C_F", C_F},
                {"kappa_U", kappa_U},
                {"C_U", C_U},
                {"rho_sup", rho_sup},
                {"kappa_barrier", kappa_barrier},
                {"C_time_scale", C_time_scale},
                {"C_semiconcave", C_semiconcave},
                {"F_r_box", r_box},
                {"kolodziej_ratio", kolodziej_ratio},
                {"sampling",
                 "M_h: boundary hits x (time nodes + 65 uniform times in [0,T]) and h_0 on nodes; "
                 "M_F: nodes x 17 uniform times in [0,T]"}};
    }
};

inline double kappa_U_formula(double T, double M_U, double kappa_h, int n, double kappa_F) {
    return (T + 1) * (3 * M_U + 2 * kappa_h + 2 * n + kappa_F * (T + M_U));
}

inline double C_U_formula(double C_h, double M_h, double kappa_h, double kappa_F, double M_U, double kappa_U,
                          double C_F, double T) {
    return C_h + 2 * M_h + 8 * kappa_h +
           (2 * kappa_F + 3) * (M_U + 5 * kappa_U + 1 + C_F * T * T + 16 * kappa_U * kappa_U);
}

/// Fills the ledger from the data and the solved rho, and verifies F on
/// [0, T] x nodes x [-(2 M_U + 1), 2 M_U + 1].
inline ConstantsLedger compute_constants(const FlowProblem& p, const Discretization& d, const RhoReport& rho) {
    const auto& grid = *d.space;
    const auto& tg = *d.time;
    ConstantsLedger c;
    c.n = p.n;
    c.T = p.T;
    c.kappa_h = p.h.kappa_h;
    c.C_h = p.h.C_h;
    c.kappa_F = p.F.kappa_F;
    c.C_F = p.F.C_F;
    c.rho_sup = rho.rho_sup;
    c.kolodziej_ratio = rho.observed_cn;

    std::vector<double> times = tg.nodes();
    for (int k = 0; k <= 64; ++k) times.push_back(p.T * k / 64.0);
    double lip = 0;
    for (std::size_t j = 0; j < grid.hit_count(); ++j) {
        const Point& z = grid.hits()[j].point;
        for (double t : times) c.M_h = std::max(c.M_h, std::abs(p.h.lateral(t, z)));
        for (std::size_t k = 1; k < tg.size(); ++k)
            lip = std::max(lip, std::abs(p.h.lateral(tg[k], z) - p.h.lateral(tg[k - 1], z)) / tg.step(k));
    }
    for (std::size_t i = 0; i < grid.node_count(); ++i) c.M_h = std::max(c.M_h, std::abs(p.h.initial(grid.node(i))));
    c.kappa_barrier = std::max(c.kappa_h, lip);

    c.M_F = p.F.family == FFamily::zero ? 0.0 : -std::numeric_limits<double>::infinity();
    if (p.F.family != FFamily::zero)
        for (std::size_t i = 0; i < grid.node_count(); ++i)
            for (int k = 0; k <= 16; ++k) c.M_F = std::max(c.M_F, p.F(p.T * k / 16.0, grid.node(i), c.M_h));
    c.B = std::exp(c.M_F / p.n);
    c.M_U = c.M_h + c.B * c.rho_sup;
    c.r_box = 2 * c.M_U + 1;
    verify_f_spec(p.F, grid, p.T, c.r_box);

    c.kappa_U = kappa_U_formula(p.T, c.M_U, c.kappa_h, p.n, c.kappa_F);
    c.C_U = C_U_formula(c.C_h, c.M_h, c.kappa_h, c.kappa_F, c.M_U, c.kappa_U, c.C_F, p.T);
    c.C_time_scale = 2 * c.M_U + 2 * c.kappa_h + 2 * p.n + c.kappa_F * (p.T + c.M_U);
    c.C_semiconcave = c.C_h + 1 + 2 * c.M_h + 8 * c.kappa_h +
                      2 * c.kappa_F * (c.M_U + 4 * c.kappa_U + p.T + c.C_F * p.T * p.T + 16 * c.kappa_U * c.kappa_U);
    return c;
}

// ---------------------------------------------------------------------------
// Implicit time step

/// Per-node right-hand side of one implicit step:
/// R(v) = g^{1/n} exp(((v - u_prev)/dt + F(t, z, v)) / n).
struct StepRhs {
    const FlowProblem* p;
    const SpaceGrid* grid;
    const std::vector<double>* g_root;
    const Slice* prev;
    double t, dt;

    std::pair<double, double> operator()(std::size_t i, double v) const {
        double gr = (*g_root)[i];
        if (gr == 0.0) return {0.0, 0.0};
        const Point& z = grid->node(i);
        double n = p->n;
        double R = gr * std::exp(((v - prev->nodes[i]) / dt + p->F(t, z, v)) / n);
        return {R, R * (1.0 / dt + p->F.dr(t, z, v)) / n};
    }
};

inline std::vector<double> g_roots(const std::vector<double>& g, int n) {
    std::vector<double> r(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) r[i] = std::pow(g[i], 1.0 / n);
    return r;
}

/// One backward-Euler step: min_A Delta_A u = [e^{(u - u_prev)/dt + F(t_next, z, u)} g]^{1/n}
/// with u = h(t_next, .) at the boundary hits.
inline Slice step_implicit(const Slice& u_prev, double t_next, double dt, const FlowProblem& p,
                           const DeltaOperator& op, const std::vector<double>& g_root, const SolverOptions& opt = {},
                           SolverStats* stats = nullptr) {
    const auto& grid = op.grid();
    Slice u = u_prev;
    u.hits = p.h.trace(grid, t_next);
    StepRhs rhs{&p, &grid, &g_root, &u_prev, t_next, dt};
    auto s = solve_nodal(op, u, rhs, opt);
    if (stats) *stats = s;
    return u;
}

// ---------------------------------------------------------------------------
// Flow solve

struct FlowSolution {
    GridFunction U;
    Slice rho;
    RhoReport rho_report;
    ConstantsLedger ledger;
    std::vector<double> g;
    std::vector<SolverStats> steps;
    double wall_seconds = 0;
};

/// Validates the data against the grid: shape, g, boundary compatibility and
/// declared kappa_h, C_h. F is verified inside compute_constants.
inline void validate_problem(const FlowProblem& p, const Discretization& d) {
    p.validate_shape();
    if (d.space->n() != p.n) throw Error(ErrorKind::invalid_argument, "grid dimension differs from problem");
    if (std::abs(d.time->T() - p.T) > 1e-12 || d.time->S() > p.S * (1 + 1e-12) + 1e-15)
        throw Error(ErrorKind::invalid_argument, "time grid does not match the horizon",
                    {{"grid_T", d.time->T()}, {"T", p.T}, {"grid_S", d.time->S()}, {"S", p.S}});
    validate_boundary_data(p.h, *d.op, p.S, default_slice_tol(d.h()));
}

/// Time-marches step_implicit from h_0 and fills rho and the constants ledger.
inline FlowSolution solve_flow(const FlowProblem& p, const Discretization& d, const SolverOptions& opt = {}) {
    auto start = std::chrono::steady_clock::now();
    validate_problem(p, d);
    FlowSolution sol{GridFunction(d.space, d.time), Slice(*d.space), {}, {}, {}, {}, 0.0};
    sol.g = p.g_samples(*d.space);
    auto [rho, rep] = solve_rho(sol.g, p.g.p, *d.op, opt);
    sol.rho = std::move(rho);
    sol.rho_report = rep;
    sol.ledger = compute_constants(p, d, rep);
    auto root = g_roots(sol.g, p.n);
    const auto& tg = *d.time;
    sol.U[0] = p.h.initial_slice(*d.space);
    for (std::size_t k = 1; k < tg.size(); ++k) {
        SolverStats st;
        sol.U[k] = step_implicit(sol.U[k - 1], tg[k], tg.step(k), p, *d.op, root, opt, &st);
        sol.steps.push_back(st);
        log().debug("step {}/{} t={:.4f} newton={} sweeps={} residual={:.2e}", k, tg.K(), tg[k],
                    st.newton_iterations, st.sweeps, st.max_residual);
    }
    sol.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return sol;
}

// ---------------------------------------------------------------------------
// Barriers

/// u(t, z) = phi_t + h_0 + A rho with phi_t maximal psh, phi_t = h_t - h_0 on the
/// sphere, and n log A = kappa + M_F.
inline GridFunction sub_barrier_dirichlet(const FlowProblem& p, const Discretization& d, const Slice& rho,
                                          const ConstantsLedger& c, const SolverOptions& opt = {}) {
    const auto& grid = *d.space;
    const auto& tg = *d.time;
    GridFunction u(d.space, d.time);
    const double A = std::exp((c.kappa_barrier + c.M_F) / p.n);
    Slice h0 = p.h.initial_slice(grid);
    ShiftCache cache;
    for (std::size_t k = 0; k < tg.size(); ++k) {
        auto lat = p.h.trace(grid, tg[k]);
        std::vector<double> diff(lat.size());
        for (std::size_t j = 0; j < lat.size(); ++j) diff[j] = lat[j] - h0.hits[j];
        Slice phi = maximal_psh(diff, *d.op, opt, &cache);
        Slice s = phi + h0 + A * rho;
        s.hits = lat;
        u[k] = std::move(s);
    }
    return u;
}

/// Additive time profile of the Cauchy barrier: n[(t/T) log(t/T) - t/T] for
/// T <= 1 and n[t log(t/T) - t] for T > 1.
inline double cauchy_profile(double t, double T, int n) {
    if (t <= 0) return 0.0;
    if (T <= 1) {
        double s = t / T;
        return n * (s * std::log(s) - s);
    }
    return n * (t * std::log(t / T) - t);
}

/// v(t, z) = h_0 + t (rho - C) + q(t) with C = kappa + M_F - min(n log T, 0).
inline GridFunction sub_barrier_cauchy(const FlowProblem& p, const Discretization& d, const Slice& rho,
                                       const ConstantsLedger& c) {
    const auto& grid = *d.space;
    const auto& tg = *d.time;
    const double C = c.kappa_barrier + c.M_F - std::min(p.n * std::log(p.T), 0.0);
    Slice h0 = p.h.initial_slice(grid);
    GridFunction v(d.space, d.time);
    for (std::size_t k = 0; k < tg.size(); ++k) {
        double t = tg[k], q = cauchy_profile(t, p.T, p.n);
        Slice s = h0;
        for (std::size_t i = 0; i < s.nodes.size(); ++i) s.nodes[i] += t * (rho.nodes[i] - C) + q;
        for (std::size_t j = 0; j < s.hits.size(); ++j) s.hits[j] += t * (rho.hits[j] - C) + q;
        v[k] = std::move(s);
    }
    return v;
}

/// Discrete harmonic extension of h_t at every time node.
inline GridFunction super_barrier(const FlowProblem& p, const Discretization& d, const SolverOptions& opt = {}) {
    GridFunction H(d.space, d.time);
    ShiftCache cache;
    for (std::size_t k = 0; k < d.time->size(); ++k)
        H[k] = harmonic_extension(p.h.trace(*d.space, (*d.time)[k]), d.space, opt, &cache);
    return H;
}

// ---------------------------------------------------------------------------
// Residual reports

struct SubsolutionReport {
    double min_residual = std::numeric_limits<double>::infinity(); // k >= 1
    double max_residual = -std::numeric_limits<double>::infinity(); // k >= 1, supersolution side
    double min_residual_initial = std::numeric_limits<double>::infinity(); // k = 0, right difference
    double boundary_excess = -std::numeric_limits<double>::infinity();
    std::size_t worst_k = 0;
    int worst_node = -1;
    double tol_pde = 0, tol_bc = 0;
    bool pass = false;       // subsolution side
    bool super_pass = false; // supersolution side

    nlohmann::json to_json() const {
        return {{"min_residual", min_residual},
                {"max_residual", max_residual},
                {"min_residual_initial", min_residual_initial},
                {"boundary_excess", boundary_excess},
                {"worst_k", worst_k},
                {"worst_node", worst_node},
                {"tol_pde", tol_pde},
                {"tol_bc", tol_bc},
                {"pass", pass},
                {"super_pass", super_pass}};
    }
};

/// Residual field ma_root(u_k) - [e^{d_t u + F(t_k, z, u_k)} g]^{1/n} with backward
/// differences for k >= 1 and the right difference at k = 0, plus the excess of
/// u over h on the parabolic boundary. A non-null mask restricts the residual to
/// nodes with mask[i] != 0.
inline SubsolutionReport subsolution_residual(const GridFunction& u, const FlowProblem& p, const DeltaOperator& op,
                                              const std::vector<double>& g, double tol_pde, double tol_bc,
                                              const std::vector<char>* mask = nullptr) {
    const auto& grid = u.space();
    const auto& tg = u.time();
    SubsolutionReport rep;
    rep.tol_pde = tol_pde;
    rep.tol_bc = tol_bc;
    auto root = g_roots(g, p.n);
    NodeLines nl;
    for (std::size_t k = 0; k < tg.size(); ++k) {
        const bool initial = k == 0;
        if (initial && tg.size() < 2) break;
        std::size_t a = initial ? 0 : k - 1, b = initial ? 1 : k;
        double dt = tg[b] - tg[a];
        for (std::size_t i = 0; i < grid.node_count(); ++i) {
            if (mask && !(*mask)[i]) continue;
            op.node_lines(u[k], i, nl);
            double lhs = op.min_value(nl, u[k].nodes[i]).first;
            double dtu = (u[b].nodes[i] - u[a].nodes[i]) / dt;
            double R = root[i] == 0 ? 0.0
                                    : root[i] * std::exp((dtu + p.F(tg[k], grid.node(i), u[k].nodes[i])) / p.n);
            double r = lhs - R;
            if (std::isnan(r)) r = -std::numeric_limits<double>::infinity();
            if (initial) {
                rep.min_residual_initial = std::min(rep.min_residual_initial, r);
                continue;
            }
            if (r < rep.min_residual) {
                rep.min_residual = r;
                rep.worst_k = k;
                rep.worst_node = static_cast<int>(i);
            }
            rep.max_residual = std::max(rep.max_residual, r);
        }
        auto lat = p.h.trace(grid, tg[k]);
        for (std::size_t j = 0; j < lat.size(); ++j) rep.boundary_excess = std::max(rep.boundary_excess, u[k].hits[j] - lat[j]);
    }
    Slice h0 = p.h.initial_slice(grid);
    for (std::size_t i = 0; i < grid.node_count(); ++i)
        rep.boundary_excess = std::max(rep.boundary_excess, u[0].nodes[i] - h0.nodes[i]);
    rep.pass = rep.min_residual >= -tol_pde && rep.boundary_excess <= tol_bc;
    rep.super_pass = rep.max_residual <= tol_pde;
    return rep;
}

// ---------------------------------------------------------------------------
// Pointwise orders

struct DominanceReport {
    double max_excess = -std::numeric_limits<double>::infinity(); // max of lower - upper over nodes and times
    std::size_t worst_k = 0;
    int worst_node = -1;
    double tol = 0;
    bool pass = false;

    nlohmann::json to_json() const {
        return {{"max_excess", max_excess}, {"worst_k", worst_k}, {"worst_node", worst_node}, {"tol", tol}, {"pass", pass}};
    }
};

/// max over nodes and time nodes of lower - upper.
inline DominanceReport dominance(const GridFunction& lower, const GridFunction& upper, double tol) {
    DominanceReport rep;
    rep.tol = tol;
    for (std::size_t k = 0; k < lower.size(); ++k)
        for (std::size_t i = 0; i < lower[k].nodes.size(); ++i) {
            double e = lower[k].nodes[i] - upper[k].nodes[i];
            if (e > rep.max_excess) {
                rep.max_excess = e;
                rep.worst_k = k;
                rep.worst_node = static_cast<int>(i);
            }
        }
    rep.pass = rep.max_excess <= tol;
    return rep;
}

struct ComparisonReport {
    bool preconditions_met = false;
    std::string skipped_reason;
    double max_difference = 0.0; // max of Phi - Psi
    double tol = 0.0;
    bool pass = false;

    nlohmann::json to_json() const {
        return {{"preconditions_met", preconditions_met},
                {"skipped_reason", skipped_reason},
                {"max_difference", max_difference},
                {"tol", tol},
                {"pass", pass}};
    }
};

/// Phi <= Psi given: Phi a subsolution, Psi a supersolution (both for g, F of p),
/// Phi <= Psi on the sampled parabolic boundary, Psi semi-concave in t. Boundary
/// values are read from the grid functions themselves.
inline ComparisonReport comparison_check(const GridFunction& phi, const GridFunction& psi, const FlowProblem& p,
                                         const DeltaOperator& op, const std::vector<double>& g, double tol_pde,
                                         double tol_cmp) {
    ComparisonReport rep;
    rep.tol = tol_cmp;
    const auto inf = std::numeric_limits<double>::infinity();
    auto sub = subsolution_residual(phi, p, op, g, tol_pde, inf);
    if (sub.min_residual < -tol_pde) {
        rep.skipped_reason = "Phi is not a subsolution";
        return rep;
    }
    auto sup = subsolution_residual(psi, p, op, g, tol_pde, inf);
    if (!sup.super_pass) {
        rep.skipped_reason = "Psi is not a supersolution";
        return rep;
    }
    for (std::size_t k = 0; k < phi.size(); ++k)
        for (std::size_t j = 0; j < phi[k].hits.size(); ++j)
            if (phi[k].hits[j] > psi[k].hits[j] + tol_pde) {
                rep.skipped_reason = "boundary data are not ordered on the lateral boundary";
                return rep;
            }
    for (std::size_t i = 0; i < phi[0].nodes.size(); ++i)
        if (phi[0].nodes[i] > psi[0].nodes[i] + tol_pde) {
            rep.skipped_reason = "initial data are not ordered";
            return rep;
        }
    if (psi.time().size() >= 3 && !std::isfinite(time_semiconcavity_estimate(psi))) {
        rep.skipped_reason = "Psi has no finite semi-concavity estimate";
        return rep;
    }
    rep.preconditions_met = true;
    auto d = dominance(phi, psi, tol_cmp);
    rep.max_difference = d.max_excess;
    rep.pass = d.pass;
    return rep;
}

// ---------------------------------------------------------------------------
// Boundary attainment

struct BoundaryReport {
    double lateral_error = 0.0;            // max over k and hits of |U(hit node) - h(t_k, zeta)|
    std::vector<double> initial_l1;        // ||U_{t_k} - h_0||_{L1} for k = 1..m
    std::vector<double> initial_times;
    double initial_decay_rate = 0.0;       // slope of log L1 error against log t_k

    nlohmann::json to_json() const {
        return {{"lateral_error", lateral_error},
                {"initial_l1", initial_l1},
                {"initial_times", initial_times},
                {"initial_decay_rate", initial_decay_rate}};
    }
};

/// Lateral error uses the value at the node adjacent to each hit (constant
/// extrapolation to the sphere).
inline BoundaryReport boundary_attainment_report(const GridFunction& U, const FlowProblem& p, std::size_t first = 4) {
    const auto& grid = U.space();
    const auto& tg = U.time();
    BoundaryReport rep;
    for (std::size_t k = 0; k < tg.size(); ++k)
        for (std::size_t j = 0; j < grid.hit_count(); ++j) {
            const auto& hit = grid.hits()[j];
            rep.lateral_error = std::max(rep.lateral_error, std::abs(U[k].nodes[hit.node] - p.h.lateral(tg[k], hit.point)));
        }
    Slice h0 = p.h.initial_slice(grid);
    for (std::size_t k = 1; k < tg.size() && k <= first; ++k) {
        double s = 0;
        for (std::size_t i = 0; i < grid.node_count(); ++i) s += std::abs(U[k].nodes[i] - h0.nodes[i]);
        rep.initial_l1.push_back(s * grid.cell_volume());
        rep.initial_times.push_back(tg[k]);
    }
    // Least-squares slope of log e against log t over positive entries.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (std::size_t q = 0; q < rep.initial_l1.size(); ++q) {
        if (!(rep.initial_l1[q] > 0)) continue;
        double x = std::log(rep.initial_times[q]), y = std::log(rep.initial_l1[q]);
        sx += x, sy += y, sxx += x * x, sxy += x * y, ++m;
    }
    if (m >= 2 && m * sxx - sx * sx > 0) rep.initial_decay_rate = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    return rep;
}

// ---------------------------------------------------------------------------
// Verification battery

struct FlowVerification {
    DominanceReport sandwich_lower; // B rho - M_h <= U
    DominanceReport sandwich_upper; // U <= M_h
    SubsolutionReport solution;
    SubsolutionReport dirichlet;
    SubsolutionReport cauchy;
    DominanceReport dirichlet_below;
    DominanceReport cauchy_below;
    DominanceReport below_super;
    double time_lipschitz = 0, time_semiconcavity = 0;
    bool lipschitz_pass = false, semiconcavity_pass = false;
    BoundaryReport boundary;

    bool pass() const {
        return sandwich_lower.pass && sandwich_upper.pass && solution.pass && solution.super_pass && dirichlet.pass &&
               cauchy.pass && dirichlet_below.pass && cauchy_below.pass && below_super.pass && lipschitz_pass &&
               semiconcavity_pass;
    }

    nlohmann::json to_json() const {
        return {{"sandwich_lower", sandwich_lower.to_json()},
                {"sandwich_upper", sandwich_upper.to_json()},
                {"solution_residual", solution.to_json()},
                {"dirichlet_barrier_residual", dirichlet.to_json()},
                {"cauchy_barrier_residual", cauchy.to_json()},
                {"dirichlet_barrier_below_U", dirichlet_below.to_json()},
                {"cauchy_barrier_below_U", cauchy_below.to_json()},
                {"U_below_super_barrier", below_super.to_json()},
                {"time_lipschitz", {{"estimate", time_lipschitz}, {"pass", lipschitz_pass}}},
                {"time_semiconcavity", {{"estimate", time_semiconcavity}, {"pass", semiconcavity_pass}}},
                {"boundary", boundary.to_json()},
                {"pass", pass()}};
    }
};

/// Sandwich, barriers, residuals, time-constant conformance and boundary report.
inline FlowVerification verify_flow(const FlowSolution& sol, const FlowProblem& p, const Discretization& d,
                                    double tol_scale = 1.0, const SolverOptions& opt = {}) {
    FlowVerification v;
    const double h = d.h();
    const double tol = tol_scale * default_slice_tol(h);
    const auto& c = sol.ledger;
    GridFunction lower = GridFunction::sampled(d.space, d.time, [](double, const Point&) { return 0.0; });
    GridFunction upper = lower;
    for (std::size_t k = 0; k < lower.size(); ++k) {
        for (std::size_t i = 0; i < lower[k].nodes.size(); ++i) {
            lower[k].nodes[i] = c.B * sol.rho.nodes[i] - c.M_h;
            upper[k].nodes[i] = c.M_h;
        }
    }
    v.sandwich_lower = dominance(lower, sol.U, tol);
    v.sandwich_upper = dominance(sol.U, upper, tol);
    v.solution = subsolution_residual(sol.U, p, *d.op, sol.g, tol, tol);
    auto D = sub_barrier_dirichlet(p, d, sol.rho, c, opt);
    auto C = sub_barrier_cauchy(p, d, sol.rho, c);
    auto H = super_barrier(p, d, opt);
    v.dirichlet = subsolution_residual(D, p, *d.op, sol.g, tol, tol);
    v.cauchy = subsolution_residual(C, p, *d.op, sol.g, tol, tol);
    v.dirichlet_below = dominance(D, sol.U, tol);
    v.cauchy_below = dominance(C, sol.U, tol);
    v.below_super = dominance(sol.U, H, tol);
    if (d.time->size() >= 3) {
        v.time_lipschitz = time_lipschitz_estimate(sol.U);
        v.time_semiconcavity = time_semiconcavity_estimate(sol.U);
    }
    v.lipschitz_pass = v.time_lipschitz <= c.kappa_U + 1e-6;
    v.semiconcavity_pass = v.time_semiconcavity <= c.C_U + 1e-6;
    v.boundary = boundary_attainment_report(sol.U, p);
    return v;
}

} // namespace cmaf
