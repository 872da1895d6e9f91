#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <vector>

#include <json.hpp>

#include "cmaf/flow.hpp"
#include "cmaf/interpolate.hpp"

namespace cmaf {

/// Dominance of a transformed function below a reference solution.
struct TransformReport {
    std::string name;
    nlohmann::json params = nlohmann::json::object();
    nlohmann::json constants = nlohmann::json::object();
    double margin = std::numeric_limits<double>::infinity(); // min over nodes of (U - transformed)
    double tol = 0.0;
    bool dominance_pass = false;
    std::size_t checked_nodes = 0;
    std::size_t skipped_nodes = 0;
    std::optional<SubsolutionReport> residual;
    nlohmann::json extra = nlohmann::json::object();

    bool pass() const { return dominance_pass; }

    nlohmann::json to_json() const {
        nlohmann::json j{{"name", name},
                         {"params", params},
                         {"constants", constants},
                         {"margin", margin},
                         {"tol", tol},
                         {"dominance_pass", dominance_pass},
                         {"checked_nodes", checked_nodes},
                         {"skipped_nodes", skipped_nodes},
                         {"extra", extra}};
        if (residual) j["residual"] = residual->to_json();
        return j;
    }
};

namespace detail {

/// Prefix of the time grid of u whose nodes satisfy keep(t).
inline std::shared_ptr<const TimeGrid> time_prefix(const TimeGrid& tg, const std::function<bool(double)>& keep) {
    std::vector<double> nodes;
    for (double t : tg.nodes()) {
        if (!keep(t)) break;
        nodes.push_back(t);
    }
    if (nodes.size() < 2) throw Error(ErrorKind::invalid_argument, "transformed time range has fewer than two nodes");
    return std::make_shared<const TimeGrid>(tg.T(), std::move(nodes), tg.grading());
}

/// min over common nodes and times of (U - v); v lives on a prefix of U's time grid.
inline void fill_margin(TransformReport& rep, const GridFunction& U, const GridFunction& v,
                        const std::vector<char>* mask = nullptr) {
    rep.margin = std::numeric_limits<double>::infinity();
    std::size_t checked = 0, skipped = 0;
    for (std::size_t i = 0; i < U.space().node_count(); ++i) {
        if (mask && !(*mask)[i]) {
            ++skipped;
            continue;
        }
        ++checked;
        for (std::size_t k = 0; k < v.size(); ++k) rep.margin = std::min(rep.margin, U[k].nodes[i] - v[k].nodes[i]);
    }
    rep.checked_nodes = checked;
    rep.skipped_nodes = skipped;
    rep.dominance_pass = rep.margin >= -rep.tol;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Time scaling

/// v^s(t, z) = s^{-1} u(st, z) - C |s - 1| (t + 1) on the time nodes with st <= S,
/// linear in time between nodes of u.
inline GridFunction time_scale(const GridFunction& u, double s, double C) {
    if (!(s >= 0.5)) throw Error(ErrorKind::invalid_argument, "time scale factor must be at least 1/2", {{"s", s}});
    const double S = u.time().S();
    auto tg = detail::time_prefix(u.time(), [&](double t) { return s * t <= S * (1 + 1e-12); });
    GridFunction v(u.space_ptr(), tg);
    for (std::size_t k = 0; k < tg->size(); ++k) {
        double t = (*tg)[k];
        Slice sl = u.at_time(std::min(s * t, S));
        sl *= 1.0 / s;
        sl += -C * std::abs(s - 1) * (t + 1);
        v[k] = std::move(sl);
    }
    return v;
}

/// max |(s^{-1} U(st) - U(t)) / (s - 1) + U(t)|, which tends to t |d_t U| as s -> 1.
inline double time_scale_quotient(const GridFunction& U, double s) {
    if (s == 1.0) throw Error(ErrorKind::invalid_argument, "quotient needs s != 1");
    auto v = time_scale(U, s, 0.0);
    double m = 0;
    for (std::size_t k = 0; k < v.size(); ++k)
        for (std::size_t i = 0; i < U.space().node_count(); ++i)
            m = std::max(m, std::abs((v[k].nodes[i] - U[k].nodes[i]) / (s - 1) + U[k].nodes[i]));
    return m;
}

inline TransformReport time_scale_report(const GridFunction& U, double s, const ConstantsLedger& c,
                                         const FlowProblem* p = nullptr, const DeltaOperator* op = nullptr,
                                         const std::vector<double>* g = nullptr, double tol_scale = 1.0) {
    TransformReport rep;
    rep.name = "time_scale";
    rep.params = {{"s", s}};
    rep.constants = {{"C", c.C_time_scale}};
    auto v = time_scale(U, s, c.C_time_scale);
    double base = tol_scale * default_slice_tol(U.space().h());
    rep.tol = base + time_interp_tolerance(U);
    detail::fill_margin(rep, U, v);
    if (p && op && g) rep.residual = subsolution_residual(v, *p, *op, *g, rep.tol, rep.tol);
    return rep;
}

// ---------------------------------------------------------------------------
// Semi-concavity average

/// v(t, z) = [s^{-1} U(st, z) + s U(t/s, z)] / 2 - C (t + 1)(s - 1)^2 on nodes with
/// max(s, 1/s) t <= S.
inline GridFunction semiconcavity_average(const GridFunction& U, double s, double C) {
    if (!(s > 0)) throw Error(ErrorKind::invalid_argument, "scale factor must be positive", {{"s", s}});
    const double S = U.time().S();
    const double big = std::max(s, 1 / s);
    auto tg = detail::time_prefix(U.time(), [&](double t) { return big * t <= S * (1 + 1e-12); });
    GridFunction v(U.space_ptr(), tg);
    for (std::size_t k = 0; k < tg->size(); ++k) {
        double t = (*tg)[k];
        Slice a = U.at_time(std::min(s * t, S));
        Slice b = U.at_time(std::min(t / s, S));
        a *= 0.5 / s;
        b *= 0.5 * s;
        a += b;
        a += -C * (t + 1) * (s - 1) * (s - 1);
        v[k] = std::move(a);
    }
    return v;
}

inline TransformReport semiconcavity_report(const GridFunction& U, double s, const ConstantsLedger& c,
                                            double tol_scale = 1.0) {
    TransformReport rep;
    rep.name = "semiconcave_avg";
    rep.params = {{"s", s}};
    rep.constants = {{"C", c.C_semiconcave}};
    auto v = semiconcavity_average(U, s, c.C_semiconcave);
    rep.tol = tol_scale * default_slice_tol(U.space().h()) + time_interp_tolerance(U);
    detail::fill_margin(rep, U, v);
    return rep;
}

// ---------------------------------------------------------------------------
// Walsh translation

/// Moduli of continuity at lag |xi| entering the Walsh bound.
struct WalshModuli {
    double eta_u = 0; // a subsolution equal to h on the parabolic boundary
    double eta_H = 0; // the harmonic super-barrier
    double eta_F = 0; // F in z at fixed (t, r)
    double eta_G = 0; // log g in z

    nlohmann::json to_json() const {
        return {{"eta_u", eta_u}, {"eta_H", eta_H}, {"eta_F", eta_F}, {"eta_G", eta_G}};
    }
};

namespace detail {

/// Node displaced by the lattice vector (in units of h), or -1.
inline int shifted_node(const SpaceGrid& g, std::size_t i, const std::array<int, 4>& shift) {
    auto idx = g.lattice_index(i);
    for (int p = 0; p < g.dim(); ++p) idx[p] += shift[p];
    return g.node_at(idx);
}

inline std::array<int, 4> lattice_shift(const SpaceGrid& g, const Point& xi) {
    std::array<int, 4> s{};
    for (int p = 0; p < g.dim(); ++p) {
        double q = xi[p] / g.h();
        s[p] = static_cast<int>(std::lround(q));
        if (std::abs(q - s[p]) > 1e-9)
            throw Error(ErrorKind::invalid_argument, "translation must be a lattice vector", {{"xi", xi}});
    }
    return s;
}

/// sup over time nodes of |f(a) - f(b)| over node pairs at lattice lag +-xi and
/// over node/hit pairs along the axis of xi at distance <= |xi|.
inline double lattice_modulus(const GridFunction& f, const std::array<int, 4>& shift, double delta) {
    const auto& g = f.space();
    double m = 0;
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        int j = shifted_node(g, i, shift);
        if (j < 0) continue;
        for (std::size_t k = 0; k < f.size(); ++k) m = std::max(m, std::abs(f[k].nodes[i] - f[k].nodes[j]));
    }
    Direction w{};
    int len = 0;
    for (int p = 0; p < g.dim(); ++p) {
        len = std::max(len, std::abs(shift[p]));
        w[p] = shift[p] > 0 ? 1 : (shift[p] < 0 ? -1 : 0);
    }
    int kd = g.direction_index(w);
    Direction mw{};
    for (int p = 0; p < 4; ++p) mw[p] = -w[p];
    int km = g.direction_index(mw);
    for (std::size_t j = 0; j < g.hit_count(); ++j) {
        const auto& hit = g.hits()[j];
        if (hit.direction != kd && hit.direction != km) continue;
        Point d = hit.point;
        for (int p = 0; p < 4; ++p) d[p] -= g.node(hit.node)[p];
        if (std::sqrt(squared_norm(d)) > delta * (1 + 1e-12)) continue;
        for (std::size_t k = 0; k < f.size(); ++k)
            m = std::max(m, std::abs(f[k].hits[j] - f[k].nodes[hit.node]));
    }
    return m;
}

} // namespace detail

/// Measures eta_u (from the larger of the two sub-barriers), eta_H, eta_F and eta_G at lag xi.
inline WalshModuli measure_walsh_moduli(const FlowSolution& sol, const FlowProblem& p, const Discretization& d,
                                        const Point& xi, const SolverOptions& opt = {}) {
    const auto& g = *d.space;
    auto shift = detail::lattice_shift(g, xi);
    const double delta = std::sqrt(squared_norm(xi));
    WalshModuli m;
    auto D = sub_barrier_dirichlet(p, d, sol.rho, sol.ledger, opt);
    auto C = sub_barrier_cauchy(p, d, sol.rho, sol.ledger);
    auto u = GridFunction::max(D, C);
    m.eta_u = detail::lattice_modulus(u, shift, delta);
    m.eta_H = detail::lattice_modulus(super_barrier(p, d, opt), shift, delta);
    if (p.F.family != FFamily::zero) {
        const int nr = 33;
        for (std::size_t i = 0; i < g.node_count(); ++i) {
            int j = detail::shifted_node(g, i, shift);
            if (j < 0) continue;
            for (std::size_t k = 0; k < d.time->size(); ++k)
                for (int q = 0; q < nr; ++q) {
                    double r = -sol.ledger.r_box + 2 * sol.ledger.r_box * q / (nr - 1);
                    double t = (*d.time)[k];
                    m.eta_F = std::max(m.eta_F, std::abs(p.F(t, g.node(i), r) - p.F(t, g.node(j), r)));
                }
        }
    }
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        int j = detail::shifted_node(g, i, shift);
        if (j < 0) continue;
        double a = sol.g[i], b = sol.g[j];
        if (a == 0.0 && b == 0.0) continue;
        if (a == 0.0 || b == 0.0) {
            m.eta_G = std::numeric_limits<double>::infinity();
            break;
        }
        m.eta_G = std::max(m.eta_G, std::abs(std::log(a) - std::log(b)));
    }
    return m;
}

/// W(t, z) = max{U(t, z), U(t, z + xi) - (eta_F + eta_G) t - eta_u - eta_H} where z + xi
/// is a node, U elsewhere. The report checks W <= U and
/// U(t, z + xi) - U(t, z) <= eta_u + eta_H + (eta_F + eta_G) T.
inline std::pair<GridFunction, TransformReport> walsh_translate(const GridFunction& U, const Point& xi,
                                                                 const WalshModuli& m, double T,
                                                                 const FlowProblem* p = nullptr,
                                                                 const DeltaOperator* op = nullptr,
                                                                 const std::vector<double>* g = nullptr,
                                                                 double tol_scale = 1.0) {
    const auto& grid = U.space();
    auto shift = detail::lattice_shift(grid, xi);
    TransformReport rep;
    rep.name = "walsh";
    rep.params = {{"xi", xi}, {"delta", std::sqrt(squared_norm(xi))}};
    rep.constants = m.to_json();
    rep.tol = tol_scale * default_slice_tol(grid.h());
    const double b = m.eta_F + m.eta_G;
    const double bound = m.eta_u + m.eta_H + b * T;
    std::vector<int> partner(grid.node_count());
    for (std::size_t i = 0; i < grid.node_count(); ++i) partner[i] = detail::shifted_node(grid, i, shift);
    GridFunction W = U;
    double worst = -std::numeric_limits<double>::infinity();
    std::vector<char> translated(grid.node_count(), 0);
    for (std::size_t k = 0; k < U.size(); ++k) {
        double t = U.time()[k];
        for (std::size_t i = 0; i < grid.node_count(); ++i) {
            int j = partner[i];
            if (j < 0) continue;
            worst = std::max(worst, U[k].nodes[j] - U[k].nodes[i]);
            double cand = U[k].nodes[j] - b * t - m.eta_u - m.eta_H;
            if (cand > W[k].nodes[i]) {
                W[k].nodes[i] = cand;
                translated[i] = 1;
            }
        }
    }
    rep.extra = {{"max_translation_increment", worst}, {"bound", bound},
                 {"inequality_pass", !(worst > bound + rep.tol)}};
    detail::fill_margin(rep, U, W);
    rep.dominance_pass = rep.dominance_pass && !(worst > bound + rep.tol);
    if (p && op && g) {
        // Residual where the stencil of W agrees with one branch: W = U on the whole
        // stencil, or z and z + xi both interior.
        std::vector<char> mask(grid.node_count(), 0);
        for (std::size_t i = 0; i < grid.node_count(); ++i) {
            bool plain = !translated[i];
            for (std::size_t q = 0; q < grid.directions().size() && plain; ++q) {
                int ref = grid.neighbour(i, static_cast<int>(q));
                plain = ref < 0 || !translated[ref];
            }
            bool shifted = partner[i] >= 0 && grid.tag(i) == NodeTag::interior &&
                           grid.tag(partner[i]) == NodeTag::interior;
            mask[i] = plain || shifted;
        }
        rep.residual = subsolution_residual(W, *p, *op, *g, rep.tol, std::numeric_limits<double>::infinity(), &mask);
    }
    return {std::move(W), rep};
}

// ---------------------------------------------------------------------------
// Moebius averaging

using cplx_vec = std::array<std::complex<double>, 2>;

namespace detail {

inline cplx_vec to_complex(const Point& x, int n) {
    cplx_vec z{};
    for (int j = 0; j < n; ++j) z[j] = {x[2 * j], x[2 * j + 1]};
    return z;
}

inline Point to_real(const cplx_vec& z, int n) {
    Point x{};
    for (int j = 0; j < n; ++j) {
        x[2 * j] = z[j].real();
        x[2 * j + 1] = z[j].imag();
    }
    return x;
}

/// <z, a> = sum z_j conj(a_j).
inline std::complex<double> inner(const cplx_vec& z, const cplx_vec& a, int n) {
    std::complex<double> s = 0;
    for (int j = 0; j < n; ++j) s += z[j] * std::conj(a[j]);
    return s;
}

} // namespace detail

/// Automorphism T_a of the unit ball of C^n exchanging a and 0.
inline Point mobius_map(const Point& a_real, const Point& z_real, int n) {
    double a2 = squared_norm(a_real);
    if (!(a2 < 1)) throw Error(ErrorKind::invalid_argument, "Moebius parameter must satisfy |a| < 1", {{"a", a_real}});
    if (a2 == 0) return z_real;
    auto a = detail::to_complex(a_real, n), z = detail::to_complex(z_real, n);
    auto za = detail::inner(z, a, n);
    double s = std::sqrt(1 - a2);
    cplx_vec w{};
    for (int j = 0; j < n; ++j) {
        auto pz = za / a2 * a[j];
        w[j] = (pz - a[j] + s * (z[j] - pz)) / (1.0 - za);
    }
    return detail::to_real(w, n);
}

/// log |Jac T_a(z)|^2 = (n + 1) [log(1 - |a|^2) - log |1 - <z, a>|^2].
inline double mobius_log_jacobian(const Point& a_real, const Point& z_real, int n) {
    auto a = detail::to_complex(a_real, n), z = detail::to_complex(z_real, n);
    return (n + 1) * (std::log(1 - squared_norm(a_real)) - std::log(std::norm(1.0 - detail::inner(z, a, n))));
}

struct MobiusResult {
    GridFunction V;            // V_a at nodes where both images interpolate
    std::vector<char> covered; // nodes where V_a is defined
    TransformReport report;
    double C_bdry = 0, C_jac = 0, C_G = 0, C_F = 0;
    double C_mob = 0;
    double second_difference_max = 0; // max of 2 (V_a - U)/|a|^2 over |z| <= interior_radius
};

/// V_a = (U o T_a + U o T_{-a}) / 2 and the check V_a - (T + 1) C_mob |a|^2 <= U with
/// C_mob = C_bdry + C_jac + C_G + C_F measured on the instance.
inline MobiusResult mobius_average(const GridFunction& U, const Point& a, const FlowProblem& p,
                                   const std::vector<double>& g, double interior_radius = 0.5,
                                   InterpOrder order = InterpOrder::quadratic, double tol_scale = 1.0) {
    const auto& grid = U.space();
    const auto& tg = U.time();
    const int n = grid.n();
    const double a2 = squared_norm(a);
    if (std::sqrt(a2) > 0.5 + 1e-12)
        throw Error(ErrorKind::invalid_argument, "Moebius average needs |a| <= 1/2", {{"a", a}});
    Point ma{};
    for (int q = 0; q < 4; ++q) ma[q] = -a[q];
    MobiusResult res{U, std::vector<char>(grid.node_count(), 0), {}, 0, 0, 0, 0, 0, 0};
    auto& rep = res.report;
    rep.name = "mobius";
    rep.params = {{"a", a}, {"interp", order == InterpOrder::quadratic ? "quadratic" : "multilinear"}};
    if (a2 == 0) {
        res.covered.assign(grid.node_count(), 1);
        rep.tol = tol_scale * default_slice_tol(grid.h());
        detail::fill_margin(rep, U, U);
        return res;
    }
    const double inf = std::numeric_limits<double>::infinity();
    bool g_positive = std::all_of(g.begin(), g.end(), [](double v) { return v > 0; });
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        const Point& z = grid.node(i);
        Point z1 = mobius_map(a, z, n), z2 = mobius_map(ma, z, n);
        res.C_jac = std::max(res.C_jac,
                             -0.5 * (mobius_log_jacobian(a, z, n) + mobius_log_jacobian(ma, z, n)) / a2);
        if (g_positive) {
            double G1 = std::log(p.g.eval(z1)), G2 = std::log(p.g.eval(z2));
            if (std::isfinite(G1) && std::isfinite(G2))
                res.C_G = std::max(res.C_G, (std::log(g[i]) - 0.5 * (G1 + G2)) / a2);
        } else {
            res.C_G = inf;
        }
        res.C_bdry = std::max(res.C_bdry, (0.5 * (p.h.initial(z1) + p.h.initial(z2)) - p.h.initial(z)) / a2);
        auto s1 = interp_stencil(grid, z1, order), s2 = interp_stencil(grid, z2, order);
        if (!s1 || !s2) continue;
        res.covered[i] = 1;
        for (std::size_t k = 0; k < tg.size(); ++k) {
            double u1 = s1->apply(U[k]), u2 = s2->apply(U[k]);
            double v = 0.5 * (u1 + u2);
            res.V[k].nodes[i] = v;
            if (p.F.family != FFamily::zero) {
                double t = tg[k];
                double dF = p.F(t, z, v) - 0.5 * (p.F(t, z1, u1) + p.F(t, z2, u2));
                res.C_F = std::max(res.C_F, dF / a2);
            }
        }
    }
    for (std::size_t k = 0; k < tg.size(); ++k)
        for (std::size_t j = 0; j < grid.hit_count(); ++j) {
            const Point& zeta = grid.hits()[j].point;
            double t = tg[k];
            double v = 0.5 * (p.h.lateral(t, mobius_map(a, zeta, n)) + p.h.lateral(t, mobius_map(ma, zeta, n)));
            res.V[k].hits[j] = v;
            res.C_bdry = std::max(res.C_bdry, (v - p.h.lateral(t, zeta)) / a2);
        }
    res.C_mob = res.C_bdry + res.C_jac + res.C_G + res.C_F;
    rep.constants = {{"C_bdry", res.C_bdry}, {"C_jac", res.C_jac}, {"C_G", res.C_G}, {"C_F", res.C_F},
                     {"C_mob", res.C_mob}};
    log().info("mobius |a|={:.3f}: C_mob = {:.4g} (bdry {:.4g}, jac {:.4g}, G {:.4g}, F {:.4g})", std::sqrt(a2),
               res.C_mob, res.C_bdry, res.C_jac, res.C_G, res.C_F);
    GridFunction shifted = res.V;
    const double drop = (p.T + 1) * res.C_mob * a2;
    for (std::size_t k = 0; k < tg.size(); ++k)
        for (auto& v : shifted[k].nodes) v -= drop;
    double interp = order == InterpOrder::multilinear ? space_interp_tolerance(U) : 0.0;
    rep.tol = tol_scale * default_slice_tol(grid.h()) + interp;
    detail::fill_margin(rep, U, shifted, &res.covered);
    // Tighter form with (t + 1) in place of (T + 1), reported only.
    double tight = inf;
    for (std::size_t k = 0; k < tg.size(); ++k)
        for (std::size_t i = 0; i < grid.node_count(); ++i)
            if (res.covered[i])
                tight = std::min(tight, U[k].nodes[i] - (res.V[k].nodes[i] - (tg[k] + 1) * res.C_mob * a2));
    for (std::size_t k = 0; k < tg.size(); ++k)
        for (std::size_t i = 0; i < grid.node_count(); ++i)
            if (res.covered[i] && std::sqrt(squared_norm(grid.node(i))) <= interior_radius)
                res.second_difference_max =
                    std::max(res.second_difference_max, 2 * (res.V[k].nodes[i] - U[k].nodes[i]) / a2);
    rep.extra = {{"margin_t_plus_1", tight},
                 {"second_difference_max", res.second_difference_max},
                 {"interior_radius", interior_radius}};
    return res;
}

} // namespace cmaf
