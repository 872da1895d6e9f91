#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "cmaf/domain.hpp"
#include "cmaf/grid_function.hpp"
#include "cmaf/hermitian.hpp"
#include "cmaf/log.hpp"

namespace cmaf {

struct LineTerm {
    int line = 0;
    double coef = 0.0;
};

/// Directional-second-difference form of Delta_A = (1/n) tr(A H(u)):
/// Delta_A u = sum_l c_l D^2_{w_l} u with c_l >= 0 when the real form of A is
/// diagonally dominant. Each D^2_w uses Shortley-Weller fractional steps.
inline std::vector<LineTerm> line_terms(const SpaceGrid& grid, const HermitianMatrix& a) {
    Eigen::MatrixXd m = real_form(a);
    const int d = grid.dim();
    std::vector<LineTerm> terms;
    for (int p = 0; p < d; ++p) {
        double c = m(p, p);
        for (int q = 0; q < d; ++q)
            if (q != p) c -= std::abs(m(p, q));
        Direction w{};
        w[p] = 1;
        if (c != 0.0) terms.push_back({grid.line_of(w), c});
    }
    for (int p = 0; p < d; ++p)
        for (int q = p + 1; q < d; ++q) {
            double mpq = m(p, q);
            if (std::abs(mpq) < 1e-15) continue;
            Direction w{};
            w[p] = 1;
            w[q] = mpq > 0 ? 1 : -1;
            int line = grid.line_of(w);
            if (line < 0)
                throw Error(ErrorKind::invalid_argument,
                            "operator needs diagonal lattice directions; build the grid with diagonals");
            terms.push_back({line, std::abs(mpq)});
        }
    return terms;
}

/// Per-node affine data of the line second differences as functions of the
/// centre value v: D^2_l(v) = a_l - b_l v.
struct NodeLines {
    std::vector<double> a, b;
};

/// The dictionary family {Delta_A} bound to a grid.
class DeltaOperator {
public:
    DeltaOperator(std::shared_ptr<const SpaceGrid> grid, const HermitianDictionary& dict)
        : grid_(std::move(grid)), n_(dict.n()) {
        if (dict.n() != grid_->n()) throw Error(ErrorKind::invalid_argument, "dictionary and grid dimension differ");
        for (const auto& a : dict.matrices()) {
            auto terms = line_terms(*grid_, a);
            bool monotone = std::all_of(terms.begin(), terms.end(), [](const LineTerm& t) { return t.coef >= 0; });
            if (!monotone) {
                log().warn("DeltaOperator: skipping a non-monotone dictionary entry");
                continue;
            }
            terms_.push_back(std::move(terms));
        }
        if (terms_.empty()) throw Error(ErrorKind::invalid_argument, "no monotone dictionary entry");
        std::vector<bool> used(grid_->lines().size(), false);
        for (const auto& ts : terms_)
            for (const auto& t : ts) used[t.line] = true;
        for (std::size_t l = 0; l < used.size(); ++l)
            if (used[l]) used_lines_.push_back(static_cast<int>(l));
    }

    /// Single-matrix operator; A need not give a monotone stencil.
    DeltaOperator(std::shared_ptr<const SpaceGrid> grid, const HermitianMatrix& a) : grid_(std::move(grid)) {
        n_ = static_cast<int>(a.rows());
        if (!is_hermitian(a) || hermitian_eigenvalues(a).minCoeff() <= 0)
            throw Error(ErrorKind::invalid_argument, "Delta_A requires a Hermitian positive definite matrix");
        terms_.push_back(line_terms(*grid_, a));
        for (const auto& t : terms_[0]) used_lines_.push_back(t.line);
        std::sort(used_lines_.begin(), used_lines_.end());
        used_lines_.erase(std::unique(used_lines_.begin(), used_lines_.end()), used_lines_.end());
    }

    const SpaceGrid& grid() const noexcept { return *grid_; }
    const std::shared_ptr<const SpaceGrid>& grid_ptr() const noexcept { return grid_; }
    std::size_t size() const noexcept { return terms_.size(); }
    const std::vector<LineTerm>& terms(std::size_t k) const { return terms_[k]; }
    const std::vector<int>& used_lines() const noexcept { return used_lines_; }

    void node_lines(const Slice& u, std::size_t i, NodeLines& out) const {
        const auto& g = *grid_;
        const double s = 2.0 / (g.h() * g.h());
        out.a.assign(g.lines().size(), 0.0);
        out.b.assign(g.lines().size(), 0.0);
        for (int l : used_lines_) {
            LineStencil st = g.line_stencil(i, l);
            out.a[l] = s * (st.alpha_plus * u.at(st.plus) + st.alpha_minus * u.at(st.minus));
            out.b[l] = s * (st.alpha_plus + st.alpha_minus);
        }
    }

    /// (P_k, Q_k) with Delta_{A_k} u(i) = P_k - Q_k v at centre value v.
    std::pair<double, double> affine(std::size_t k, const NodeLines& nl) const {
        double p = 0, q = 0;
        for (const auto& t : terms_[k]) {
            p += t.coef * nl.a[t.line];
            q += t.coef * nl.b[t.line];
        }
        return {p, q};
    }

    /// min_k Delta_{A_k} u at node i; returns the value and the minimizing index.
    std::pair<double, std::size_t> min_value(const NodeLines& nl, double v) const {
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t k = 0; k < terms_.size(); ++k) {
            auto [p, q] = affine(k, nl);
            double val = p - q * v;
            if (val < best) {
                best = val;
                arg = k;
            }
        }
        return {best, arg};
    }

    double apply_min(const Slice& u, std::size_t i) const {
        NodeLines nl;
        node_lines(u, i, nl);
        return min_value(nl, u.nodes[i]).first;
    }

private:
    std::shared_ptr<const SpaceGrid> grid_;
    int n_ = 1;
    std::vector<std::vector<LineTerm>> terms_;
    std::vector<int> used_lines_;
};

// ---------------------------------------------------------------------------
// Pointwise operators

/// Line second difference D^2_w u at node i (w = the line's direction).
inline double line_second_difference(const SpaceGrid& g, const Slice& u, std::size_t i, int line) {
    LineStencil st = g.line_stencil(i, line);
    double c = u.nodes[i];
    return 2.0 / (g.h() * g.h()) *
           (st.alpha_plus * (u.at(st.plus) - c) + st.alpha_minus * (u.at(st.minus) - c));
}

/// Complex Hessian (d^2 u / dz_j dzbar_k) at a node from second differences.
inline HermitianMatrix complex_hessian(const Slice& u, const SpaceGrid& g, std::size_t i) {
    const int n = g.n();
    const int d = g.dim();
    Eigen::MatrixXd real = Eigen::MatrixXd::Zero(d, d);
    for (int p = 0; p < d; ++p) {
        Direction w{};
        w[p] = 1;
        real(p, p) = line_second_difference(g, u, i, g.line_of(w));
    }
    if (n > 1) {
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) {
                Direction wp{}, wm{};
                wp[p] = 1;
                wp[q] = 1;
                wm[p] = 1;
                wm[q] = -1;
                int lp = g.line_of(wp), lm = g.line_of(wm);
                if (lp < 0 || lm < 0)
                    throw Error(ErrorKind::internal, "complex Hessian needs diagonal directions for n > 1");
                double mixed = 0.25 * (line_second_difference(g, u, i, lp) - line_second_difference(g, u, i, lm));
                real(p, q) = real(q, p) = mixed;
            }
    }
    HermitianMatrix hess(n, n);
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
            int xj = 2 * j, yj = 2 * j + 1, xk = 2 * k, yk = 2 * k + 1;
            hess(j, k) = cplx(0.25 * (real(xj, xk) + real(yj, yk)), 0.25 * (real(xj, yk) - real(yj, xk)));
        }
    return hess;
}

/// Field of Delta_A u = (1/n) sum a_jk d^2u/dz_k dzbar_j on all nodes.
inline std::vector<double> delta_A(const Slice& u, std::shared_ptr<const SpaceGrid> grid, const HermitianMatrix& a) {
    DeltaOperator op(grid, a);
    std::vector<double> out(grid->node_count());
    NodeLines nl;
    for (std::size_t i = 0; i < out.size(); ++i) {
        op.node_lines(u, i, nl);
        auto [p, q] = op.affine(0, nl);
        out[i] = p - q * u.nodes[i];
    }
    return out;
}

/// Field of min over the dictionary of Delta_A u.
inline std::vector<double> ma_root(const Slice& u, const DeltaOperator& op) {
    std::vector<double> out(op.grid().node_count());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = op.apply_min(u, i);
    return out;
}

inline std::vector<double> ma_root(const Slice& u, std::shared_ptr<const SpaceGrid> grid,
                                   const HermitianDictionary& dict) {
    return ma_root(u, DeltaOperator(std::move(grid), dict));
}

/// det of the complex Hessian after clamping its negative eigenvalues to zero.
inline double clamped_det(const HermitianMatrix& hess) {
    Eigen::VectorXd ev = hermitian_eigenvalues(hess);
    double det = 1.0;
    for (int k = 0; k < ev.size(); ++k) det *= std::max(ev[k], 0.0);
    return det;
}

/// Monge-Ampere density det(d^2 u / dz_j dzbar_k), identified with (dd^c u)^n / dV.
struct MaField {
    std::vector<double> density;  // clamped determinant per node
    std::vector<double> root_pow; // ma_root^n per node, for cross-checking (empty if not requested)
};

inline MaField ma_density(const Slice& u, const SpaceGrid& g, const DeltaOperator* op = nullptr) {
    MaField f;
    f.density.resize(g.node_count());
    for (std::size_t i = 0; i < g.node_count(); ++i) f.density[i] = clamped_det(complex_hessian(u, g, i));
    if (op) {
        f.root_pow.resize(g.node_count());
        for (std::size_t i = 0; i < g.node_count(); ++i)
            f.root_pow[i] = std::pow(std::max(op->apply_min(u, i), 0.0), g.n());
    }
    return f;
}

// ---------------------------------------------------------------------------
// Nonlinear nodal solver for  min_A Delta_A u(x) = R_x(u(x))  with Dirichlet
// values at the boundary hits, R_x nondecreasing. The scheme is monotone, so
// each nodal equation has a unique root.

enum class SweepOrder { sequential, multicolor };

struct SolverOptions {
    double update_tol = 1e-10;  // stop when a Gauss-Seidel sweep moves no node more than this
    int max_sweeps = 100000;
    bool newton = true;         // accelerate with policy/Newton iterations before polishing
    int max_newton = 80;
    SweepOrder order = SweepOrder::sequential;
    int threads = 1;
    std::ostream* sweep_log = nullptr; // CSV rows "phase,iteration,max_update"
};

struct SolverStats {
    int newton_iterations = 0;
    int sweeps = 0;
    double last_update = 0.0;
    double max_residual = 0.0;
};

namespace detail {

/// Root of phi(v) = min_k (P_k - Q_k v) - R(v), which is strictly decreasing.
template <class Rhs>
double solve_node(const DeltaOperator& op, const NodeLines& nl, std::size_t i, double v0, const Rhs& rhs) {
    const std::size_t m = op.size();
    thread_local std::vector<double> P, Q;
    P.resize(m);
    Q.resize(m);
    for (std::size_t k = 0; k < m; ++k) std::tie(P[k], Q[k]) = op.affine(k, nl);
    auto eval = [&](double v, double& slope) {
        double best = std::numeric_limits<double>::infinity();
        double q = 0;
        for (std::size_t k = 0; k < m; ++k) {
            double val = P[k] - Q[k] * v;
            if (val < best) {
                best = val;
                q = Q[k];
            }
        }
        auto [r, dr] = rhs(i, v);
        slope = -q - dr;
        double f = best - r;
        if (std::isnan(f)) f = -std::numeric_limits<double>::infinity();
        return f;
    };
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    double v = v0, slope = 0;
    double step = std::max(1.0, std::abs(v0));
    for (int it = 0; it < 200; ++it) {
        double f = eval(v, slope);
        if (f == 0.0) return v;
        if (f > 0) lo = v;
        else hi = v;
        if (std::isfinite(lo) && std::isfinite(hi) && hi - lo <= 1e-13 * (1.0 + std::abs(v))) break;
        double next = (std::isfinite(f) && slope < 0) ? v - f / slope : std::numeric_limits<double>::quiet_NaN();
        bool inside = std::isfinite(next) && next > lo && next < hi;
        if (!inside) {
            if (std::isfinite(lo) && std::isfinite(hi)) next = 0.5 * (lo + hi);
            else if (!std::isfinite(hi)) next = lo + step, step *= 2;
            else next = hi - step, step *= 2;
        }
        if (std::abs(next - v) <= 1e-14 * (1.0 + std::abs(v))) {
            v = next;
            break;
        }
        v = next;
    }
    return v;
}

/// Smallest modulus m and weights so that no stencil direction maps to 0 mod m:
/// nodes of equal colour never appear in each other's stencils.
inline std::vector<std::vector<std::size_t>> colour_classes(const DeltaOperator& op) {
    const auto& g = op.grid();
    const int d = g.dim();
    std::vector<Direction> used;
    for (int l : op.used_lines()) used.push_back(g.directions()[g.lines()[l]]);
    auto fits = [&](const std::array<int, 4>& wt, int mod) {
        for (const auto& w : used) {
            int s = 0;
            for (int p = 0; p < d; ++p) s += wt[p] * w[p];
            if (((s % mod) + mod) % mod == 0) return false;
        }
        return true;
    };
    std::array<int, 4> wt{1, 1, 1, 1};
    int mod = 2;
    if (!fits(wt, mod)) {
        wt = {1, 2, 3, 4};
        mod = 2;
        while (!fits(wt, mod)) ++mod;
    }
    std::vector<std::vector<std::size_t>> classes(mod);
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        const auto& idx = g.lattice_index(i);
        int s = 0;
        for (int p = 0; p < d; ++p) s += wt[p] * idx[p];
        classes[((s % mod) + mod) % mod].push_back(i);
    }
    return classes;
}

template <class Rhs>
double sweep(const DeltaOperator& op, Slice& u, const Rhs& rhs, const SolverOptions& opt,
             const std::vector<std::vector<std::size_t>>* colours) {
    double max_update = 0;
    if (opt.order == SweepOrder::sequential || colours == nullptr) {
        NodeLines nl;
        for (std::size_t i = 0; i < u.nodes.size(); ++i) {
            op.node_lines(u, i, nl);
            double v = solve_node(op, nl, i, u.nodes[i], rhs);
            max_update = std::max(max_update, std::abs(v - u.nodes[i]));
            u.nodes[i] = v;
        }
        return max_update;
    }
    const int threads = std::max(1, opt.threads);
    for (const auto& cls : *colours) {
        std::vector<double> local(threads, 0.0);
        auto work = [&](int t) {
            NodeLines nl;
            std::size_t begin = cls.size() * t / threads, end = cls.size() * (t + 1) / threads;
            for (std::size_t c = begin; c < end; ++c) {
                std::size_t i = cls[c];
                op.node_lines(u, i, nl);
                double v = solve_node(op, nl, i, u.nodes[i], rhs);
                local[t] = std::max(local[t], std::abs(v - u.nodes[i]));
                u.nodes[i] = v;
            }
        };
        if (threads == 1) {
            work(0);
        } else {
            std::vector<std::jthread> pool;
            for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
        }
        for (double v : local) max_update = std::max(max_update, v);
    }
    return max_update;
}

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

inline Eigen::VectorXd solve_linear(const SparseMatrix& a, const Eigen::VectorXd& b, bool direct) {
    if (direct) {
        Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
        lu.compute(a);
        if (lu.info() == Eigen::Success) {
            Eigen::VectorXd x = lu.solve(b);
            if (lu.info() == Eigen::Success) return x;
        }
    }
    Eigen::BiCGSTAB<SparseMatrix, Eigen::DiagonalPreconditioner<double>> it;
    it.setTolerance(1e-14);
    it.setMaxIterations(20000);
    it.compute(a);
    Eigen::VectorXd x = it.solve(b);
    log().debug("BiCGSTAB: {} iterations, error {:.3g}", it.iterations(), it.error());
    return x;
}

/// Newton iterations on the semismooth system (policy iteration): freeze the
/// minimizing matrix per node, linearize R, solve the M-matrix system.
template <class Rhs>
int newton(const DeltaOperator& op, Slice& u, const Rhs& rhs, const SolverOptions& opt) {
    const auto& g = op.grid();
    const std::size_t N = g.node_count();
    const double s = 2.0 / (g.h() * g.h());
    NodeLines nl;
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd phi(N);
    auto residual = [&](const Slice& w, bool assemble) {
        double worst = 0;
        if (assemble) trip.clear();
        for (std::size_t i = 0; i < N; ++i) {
            op.node_lines(w, i, nl);
            auto [val, k] = op.min_value(nl, w.nodes[i]);
            auto [r, dr] = rhs(i, w.nodes[i]);
            phi[i] = val - r;
            if (!std::isfinite(phi[i])) return std::numeric_limits<double>::infinity();
            worst = std::max(worst, std::abs(phi[i]));
            if (!assemble) continue;
            auto [p, q] = op.affine(k, nl);
            trip.emplace_back(i, i, q + dr);
            for (const auto& t : op.terms(k)) {
                LineStencil st = g.line_stencil(i, t.line);
                if (st.plus >= 0) trip.emplace_back(i, st.plus, -t.coef * s * st.alpha_plus);
                if (st.minus >= 0) trip.emplace_back(i, st.minus, -t.coef * s * st.alpha_minus);
            }
        }
        return worst;
    };
    int it = 0;
    double res = residual(u, true);
    for (; it < opt.max_newton; ++it) {
        if (!std::isfinite(res)) return it;
        SparseMatrix jac(N, N);
        jac.setFromTriplets(trip.begin(), trip.end());
        Eigen::VectorXd delta = solve_linear(jac, phi, g.dim() == 2);
        if (!delta.allFinite()) return it;
        double damping = 1.0;
        Slice trial = u;
        double trial_res = std::numeric_limits<double>::infinity();
        for (int half = 0; half < 30; ++half) {
            for (std::size_t i = 0; i < N; ++i) trial.nodes[i] = u.nodes[i] + damping * delta[i];
            trial_res = residual(trial, false);
            if (std::isfinite(trial_res)) break;
            damping *= 0.5;
        }
        if (!std::isfinite(trial_res)) return it;
        double step = damping * delta.cwiseAbs().maxCoeff();
        u = std::move(trial);
        if (opt.sweep_log) *opt.sweep_log << "newton," << it << ',' << step << '\n';
        res = residual(u, true);
        if (step < 0.1 * opt.update_tol) return it + 1;
    }
    return it;
}

} // namespace detail

/// Solves min_A Delta_A u = rhs(i, u_i) in place; `u.hits` holds the Dirichlet data.
/// `rhs(i, v)` returns {R_i(v), R_i'(v)} with R_i nondecreasing.
template <class Rhs>
SolverStats solve_nodal(const DeltaOperator& op, Slice& u, const Rhs& rhs, const SolverOptions& opt = {}) {
    SolverStats stats;
    if (opt.newton) stats.newton_iterations = detail::newton(op, u, rhs, opt);
    std::vector<std::vector<std::size_t>> colours;
    if (opt.order == SweepOrder::multicolor) colours = detail::colour_classes(op);
    double update = std::numeric_limits<double>::infinity();
    while (stats.sweeps < opt.max_sweeps) {
        update = detail::sweep(op, u, rhs, opt, opt.order == SweepOrder::multicolor ? &colours : nullptr);
        ++stats.sweeps;
        if (opt.sweep_log) *opt.sweep_log << "sweep," << stats.sweeps << ',' << update << '\n';
        if (update < opt.update_tol) break;
    }
    stats.last_update = update;
    NodeLines nl;
    for (std::size_t i = 0; i < u.nodes.size(); ++i) {
        op.node_lines(u, i, nl);
        double r = op.min_value(nl, u.nodes[i]).first - rhs(i, u.nodes[i]).first;
        stats.max_residual = std::max(stats.max_residual, std::abs(r));
    }
    if (!(update < opt.update_tol))
        throw Error(ErrorKind::non_convergence, "nodal solver exceeded its sweep cap",
                    {{"sweeps", stats.sweeps}, {"last_update", update}, {"max_residual", stats.max_residual}});
    return stats;
}

// ---------------------------------------------------------------------------
// Elliptic problems built on the nodal solver

/// Shift-invariance cache for Dirichlet problems whose solution commutes with
/// adding constants (harmonic extension, maximal psh): data equal up to a
/// constant reuse the stored solution.
class ShiftCache {
public:
    const Slice* find(const std::vector<double>& data, double& shift) const {
        for (const auto& [key, sol] : entries_) {
            if (key.size() != data.size()) continue;
            double c = data.empty() ? 0.0 : data[0] - key[0];
            bool same = true;
            for (std::size_t j = 0; j < data.size() && same; ++j)
                same = std::abs(data[j] - key[j] - c) <= 1e-13 * (1.0 + std::abs(data[j]));
            if (same) {
                shift = c;
                return &sol;
            }
        }
        return nullptr;
    }
    void insert(std::vector<double> data, Slice sol) { entries_.emplace_back(std::move(data), std::move(sol)); }

private:
    std::vector<std::pair<std::vector<double>, Slice>> entries_;
};

namespace detail {

inline bool constant_data(const std::vector<double>& data, double& c) {
    if (data.empty()) return false;
    c = data[0];
    for (double v : data)
        if (std::abs(v - c) > 1e-14 * (1.0 + std::abs(c))) return false;
    return true;
}

} // namespace detail

/// Discrete harmonic function (Delta_I H = 0) with H = data at the boundary hits.
inline Slice harmonic_extension(const std::vector<double>& hit_values, std::shared_ptr<const SpaceGrid> grid,
                                const SolverOptions& opt = {}, ShiftCache* cache = nullptr) {
    if (hit_values.size() != grid->hit_count())
        throw Error(ErrorKind::invalid_argument, "need one lateral sample per boundary hit");
    Slice h(*grid);
    h.hits = hit_values;
    double c = 0;
    if (detail::constant_data(hit_values, c)) {
        std::fill(h.nodes.begin(), h.nodes.end(), c);
        return h;
    }
    double shift = 0;
    if (cache)
        if (const Slice* hit = cache->find(hit_values, shift)) {
            Slice r = *hit;
            r += shift;
            r.hits = hit_values;
            return r;
        }
    DeltaOperator op(grid, HermitianMatrix::Identity(grid->n(), grid->n()));
    double mean = 0;
    for (double v : hit_values) mean += v;
    mean /= static_cast<double>(hit_values.size());
    std::fill(h.nodes.begin(), h.nodes.end(), mean);
    solve_nodal(op, h, [](std::size_t, double) { return std::pair{0.0, 0.0}; }, opt);
    if (cache) cache->insert(hit_values, h);
    return h;
}

struct RhoReport {
    double rho_sup = 0.0;        // ||rho||_inf
    double g_lp_root = 0.0;      // ||g||_{L^p}^{1/n}
    double observed_cn = 0.0;    // rho_sup / g_lp_root
    std::size_t zero_g_nodes = 0;
    SolverStats stats;
};

/// rho <= 0 with min_A Delta_A rho = g^{1/n} inside and rho = 0 on the sphere.
inline std::pair<Slice, RhoReport> solve_rho(const std::vector<double>& g, double p, const DeltaOperator& op,
                                             const SolverOptions& opt = {}) {
    const auto& grid = op.grid();
    if (g.size() != grid.node_count()) throw Error(ErrorKind::invalid_argument, "need one g sample per node");
    RhoReport rep;
    std::vector<double> root(g.size());
    const int n = grid.n();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(g[i] >= 0) || !std::isfinite(g[i]))
            throw Error(ErrorKind::validation, "density g must be finite and nonnegative",
                        {{"node", i}, {"g", g[i]}});
        if (g[i] == 0) ++rep.zero_g_nodes;
        root[i] = std::pow(g[i], 1.0 / n);
    }
    if (rep.zero_g_nodes > 0) log().info("solve_rho: {} nodes with g = 0", rep.zero_g_nodes);
    Slice rho(grid, 0.0);
    rep.stats = solve_nodal(op, rho, [&](std::size_t i, double) { return std::pair{root[i], 0.0}; }, opt);
    double lp = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        rep.rho_sup = std::max(rep.rho_sup, std::abs(rho.nodes[i]));
        lp += std::pow(g[i], p) * grid.cell_volume();
    }
    rep.g_lp_root = std::pow(std::pow(lp, 1.0 / p), 1.0 / n);
    rep.observed_cn = rep.g_lp_root > 0 ? rep.rho_sup / rep.g_lp_root : 0.0;
    return {std::move(rho), rep};
}

/// Maximal psh function: min_A Delta_A u = 0 with the given boundary values.
inline Slice maximal_psh(const std::vector<double>& hit_values, const DeltaOperator& op,
                         const SolverOptions& opt = {}, ShiftCache* cache = nullptr) {
    const auto& grid = op.grid();
    if (hit_values.size() != grid.hit_count())
        throw Error(ErrorKind::invalid_argument, "need one boundary sample per boundary hit");
    Slice u(grid);
    u.hits = hit_values;
    double c = 0;
    if (detail::constant_data(hit_values, c)) {
        std::fill(u.nodes.begin(), u.nodes.end(), c);
        return u;
    }
    double shift = 0;
    if (cache)
        if (const Slice* hit = cache->find(hit_values, shift)) {
            Slice r = *hit;
            r += shift;
            r.hits = hit_values;
            return r;
        }
    u = harmonic_extension(hit_values, op.grid_ptr(), opt);
    solve_nodal(op, u, [](std::size_t, double) { return std::pair{0.0, 0.0}; }, opt);
    if (cache) cache->insert(hit_values, u);
    return u;
}

struct MixedMaReport {
    bool preconditions_met = false;
    std::string skipped_reason;
    double min_margin = 0.0; // min over nodes of density(mix) - e^{lambda f1 + (1-lambda) f2} mu
    std::size_t violations = 0;
    bool pass = false;
};

/// Checks (dd^c (lambda u + (1-lambda) v))^n >= e^{lambda f1 + (1-lambda) f2} mu
/// given the hypotheses on u and v, on interior nodes.
inline MixedMaReport mixed_ma_check(const Slice& u, const Slice& v, double lambda, const std::vector<double>& f1,
                                    const std::vector<double>& f2, const std::vector<double>& mu,
                                    const DeltaOperator& op, double tol) {
    const auto& g = op.grid();
    MixedMaReport rep;
    if (lambda < 0 || lambda > 1) throw Error(ErrorKind::invalid_argument, "lambda must lie in [0, 1]");
    auto du = ma_density(u, g), dv = ma_density(v, g);
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        if (g.tag(i) != NodeTag::interior) continue;
        if (op.apply_min(u, i) < -tol || op.apply_min(v, i) < -tol) {
            rep.skipped_reason = "u or v is not psh at grid scale";
            return rep;
        }
        if (du.density[i] < std::exp(f1[i]) * mu[i] - tol || dv.density[i] < std::exp(f2[i]) * mu[i] - tol) {
            rep.skipped_reason = "Monge-Ampere lower bound hypothesis fails";
            return rep;
        }
    }
    rep.preconditions_met = true;
    Slice mix = combine(u, v, [lambda](double a, double b) { return lambda * a + (1 - lambda) * b; });
    auto dm = ma_density(mix, g);
    rep.min_margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        if (g.tag(i) != NodeTag::interior) continue;
        double margin = dm.density[i] - std::exp(lambda * f1[i] + (1 - lambda) * f2[i]) * mu[i];
        rep.min_margin = std::min(rep.min_margin, margin);
        if (margin < -tol) ++rep.violations;
    }
    rep.pass = rep.violations == 0;
    return rep;
}

} // namespace cmaf
