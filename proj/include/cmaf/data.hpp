#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "cmaf/domain.hpp"
#include "cmaf/error.hpp"
#include "cmaf/log.hpp"
#include "cmaf/potentials.hpp"

namespace cmaf {

// ---------------------------------------------------------------------------
// Nonlinearity F(t, z, r)

enum class FFamily { zero, affine, softplus, custom };

inline const char* to_string(FFamily f) {
    switch (f) {
    case FFamily::zero: return "zero";
    case FFamily::affine: return "affine";
    case FFamily::softplus: return "softplus";
    case FFamily::custom: return "custom";
    }
    return "?";
}

/// F(t, z, r), nondecreasing in r, with declared Lipschitz constant kappa_F in
/// (t, r) and semi-convexity constant C_F (F + C_F (t^2 + r^2) convex in (t, r)).
///   affine:   lambda r + mu t + psi(z), lambda >= 0
///   softplus: lambda log(1 + e^r) + mu t + psi(z), lambda >= 0
struct FSpec {
    FFamily family = FFamily::zero;
    double lambda = 0.0;
    double mu = 0.0;
    std::function<double(const Point&)> psi; // empty means 0
    double kappa_F = 0.0;
    double C_F = 0.0;
    std::function<double(double, const Point&, double)> custom_eval;
    std::function<double(double, const Point&, double)> custom_dr;

    double operator()(double t, const Point& z, double r) const {
        double base = psi ? psi(z) : 0.0;
        switch (family) {
        case FFamily::zero: return 0.0;
        case FFamily::affine: return lambda * r + mu * t + base;
        case FFamily::softplus: return lambda * softplus(r) + mu * t + base;
        case FFamily::custom: return custom_eval(t, z, r);
        }
        return 0.0;
    }

    /// dF/dr.
    double dr(double t, const Point& z, double r) const {
        switch (family) {
        case FFamily::zero: return 0.0;
        case FFamily::affine: return lambda;
        case FFamily::softplus: return lambda / (1.0 + std::exp(-r));
        case FFamily::custom: {
            if (custom_dr) return custom_dr(t, z, r);
            double e = 1e-6 * (1.0 + std::abs(r));
            return (custom_eval(t, z, r + e) - custom_eval(t, z, r - e)) / (2 * e);
        }
        }
        return 0.0;
    }

    static FSpec zero() { return {}; }

    static FSpec affine(double lambda, double mu, std::function<double(const Point&)> psi = {}) {
        FSpec f;
        f.family = FFamily::affine;
        f.lambda = lambda;
        f.mu = mu;
        f.psi = std::move(psi);
        f.kappa_F = std::max(lambda, std::abs(mu));
        f.C_F = 0.0;
        return f;
    }

    static FSpec softplus_family(double lambda, double mu, std::function<double(const Point&)> psi = {}) {
        FSpec f = affine(lambda, mu, std::move(psi));
        f.family = FFamily::softplus;
        return f;
    }

    static double softplus(double r) { return r > 30 ? r + std::log1p(std::exp(-r)) : std::log1p(std::exp(r)); }
};

/// Samples F on a probe lattice of (t, z, r) in [0, T] x nodes x [-r_box, r_box]
/// and throws a validation error if F decreases in r, or if the declared
/// kappa_F or C_F is contradicted.
inline void verify_f_spec(const FSpec& F, const SpaceGrid& grid, double T, double r_box) {
    if (F.family == FFamily::zero) return;
    if ((F.family == FFamily::affine || F.family == FFamily::softplus) && F.lambda < 0)
        throw Error(ErrorKind::validation, "F must be nondecreasing in r (lambda >= 0)", {{"lambda", F.lambda}});
    const int nt = 9, nr = 17;
    std::size_t stride = std::max<std::size_t>(1, grid.node_count() / 64);
    const double dt = T / (nt - 1), dr = 2 * r_box / (nr - 1);
    for (std::size_t i = 0; i < grid.node_count(); i += stride) {
        const Point& z = grid.node(i);
        std::vector<double> val(nt * nr);
        for (int a = 0; a < nt; ++a)
            for (int b = 0; b < nr; ++b) val[a * nr + b] = F(a * dt, z, -r_box + b * dr);
        auto at = [&](int a, int b) { return val[a * nr + b]; };
        for (int a = 0; a < nt; ++a)
            for (int b = 0; b < nr; ++b) {
                double t = a * dt, r = -r_box + b * dr;
                if (b + 1 < nr) {
                    double q = at(a, b + 1) - at(a, b);
                    if (q < -1e-9)
                        throw Error(ErrorKind::validation, "F is not nondecreasing in r",
                                    {{"t", t}, {"r", r}, {"z", z}});
                    if (std::abs(q) / dr > F.kappa_F * (1 + 1e-9) + 1e-9)
                        throw Error(ErrorKind::validation, "declared kappa_F is smaller than a sampled r-quotient",
                                    {{"t", t}, {"r", r}, {"quotient", std::abs(q) / dr}, {"kappa_F", F.kappa_F}});
                }
                if (a + 1 < nt && std::abs(at(a + 1, b) - at(a, b)) / dt > F.kappa_F * (1 + 1e-9) + 1e-9)
                    throw Error(ErrorKind::validation, "declared kappa_F is smaller than a sampled t-quotient",
                                {{"t", t}, {"r", r}, {"kappa_F", F.kappa_F}});
                // Second differences of F + C_F (t^2 + r^2) along t, r and both diagonals.
                if (a > 0 && a + 1 < nt && b > 0 && b + 1 < nr) {
                    double c = at(a, b);
                    double d_tt = (at(a + 1, b) - 2 * c + at(a - 1, b)) / (dt * dt) + 2 * F.C_F;
                    double d_rr = (at(a, b + 1) - 2 * c + at(a, b - 1)) / (dr * dr) + 2 * F.C_F;
                    double d_pp = (at(a + 1, b + 1) - 2 * c + at(a - 1, b - 1)) + 2 * F.C_F * (dt * dt + dr * dr);
                    double d_pm = (at(a + 1, b - 1) - 2 * c + at(a - 1, b + 1)) + 2 * F.C_F * (dt * dt + dr * dr);
                    if (std::min({d_tt, d_rr, d_pp, d_pm}) < -1e-7)
                        throw Error(ErrorKind::validation, "declared C_F does not make F semi-convex",
                                    {{"t", t}, {"r", r}, {"C_F", F.C_F}});
                }
            }
    }
}

// ---------------------------------------------------------------------------
// Density g(z)

/// Density g >= 0 with declared integrability exponent p > 1.
struct GSpec {
    std::string kind = "const";
    std::function<double(const Point&)> eval = [](const Point&) { return 1.0; };
    double p = 2.0;
    /// a > 0 for c |z|^{-a}: the node at the origin takes the cell average.
    double singular_power = 0.0;
    double singular_coef = 0.0;

    static GSpec constant(double c) {
        GSpec g;
        g.kind = "const";
        g.eval = [c](const Point&) { return c; };
        return g;
    }
    /// c0 + c1 |z|^2 + c2 |z|^4.
    static GSpec radial_poly(double c0, double c1, double c2) {
        GSpec g;
        g.kind = "radial_poly";
        g.eval = [=](const Point& z) {
            double s = squared_norm(z);
            return c0 + c1 * s + c2 * s * s;
        };
        return g;
    }
    /// c |z|^{-a}.
    static GSpec power(double c, double a, double p) {
        GSpec g;
        g.kind = "power";
        g.p = p;
        g.singular_power = a;
        g.singular_coef = c;
        g.eval = [=](const Point& z) { return c * std::pow(squared_norm(z), -0.5 * a); };
        return g;
    }
    /// c exp(a |z|^2).
    static GSpec exp_radial(double c, double a) {
        GSpec g;
        g.kind = "exp_radial";
        g.eval = [=](const Point& z) { return c * std::exp(a * squared_norm(z)); };
        return g;
    }
    /// Piecewise-linear in |z| through (r_k, v_k), constant beyond the ends.
    static GSpec radial_table(std::vector<double> r, std::vector<double> v) {
        if (r.size() != v.size() || r.size() < 2 || !std::is_sorted(r.begin(), r.end()))
            throw Error(ErrorKind::validation, "radial table needs matching sorted abscissae");
        GSpec g;
        g.kind = "radial_table";
        g.eval = [r = std::move(r), v = std::move(v)](const Point& z) {
            double x = std::sqrt(squared_norm(z));
            if (x <= r.front()) return v.front();
            if (x >= r.back()) return v.back();
            std::size_t k = std::upper_bound(r.begin(), r.end(), x) - r.begin() - 1;
            double w = (x - r[k]) / (r[k + 1] - r[k]);
            return (1 - w) * v[k] + w * v[k + 1];
        };
        return g;
    }

    std::vector<double> samples(const SpaceGrid& grid) const {
        std::vector<double> out(grid.node_count());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = eval(grid.node(i));
        if (singular_power > 0) {
            int origin = grid.node_at({0, 0, 0, 0});
            if (origin >= 0) out[origin] = cell_average_at_origin(grid);
        }
        return out;
    }

private:
    double cell_average_at_origin(const SpaceGrid& grid) const {
        const int d = grid.dim();
        const int m = d == 2 ? 64 : 8;
        const double h = grid.h();
        double sum = 0;
        long count = 0;
        std::array<int, 4> idx{};
        std::function<void(int)> rec = [&](int p) {
            if (p == d) {
                Point x{};
                for (int q = 0; q < d; ++q) x[q] = h * ((idx[q] + 0.5) / m - 0.5);
                sum += eval(x);
                ++count;
                return;
            }
            for (idx[p] = 0; idx[p] < m; ++idx[p]) rec(p + 1);
        };
        rec(0);
        return sum / static_cast<double>(count);
    }
};

// ---------------------------------------------------------------------------
// Boundary data families

/// h_0 = c + beta |z|^2 + gamma |z|^4 + a Re z_1 and lateral h = c + beta + gamma + a Re zeta_1 + b t.
inline BoundaryData polynomial_boundary(double c, double beta, double gamma, double a, double b, double kappa_h,
                                        double C_h) {
    BoundaryData bd;
    bd.initial = [=](const Point& z) {
        double s = squared_norm(z);
        return c + beta * s + gamma * s * s + a * z[0];
    };
    bd.lateral = [=](double t, const Point& z) { return c + beta + gamma + a * z[0] + b * t; };
    bd.kappa_h = kappa_h;
    bd.C_h = C_h;
    return bd;
}

/// Traces of a space-time function u on the parabolic boundary.
inline BoundaryData trace_boundary(std::function<double(double, const Point&)> u, double kappa_h, double C_h) {
    BoundaryData bd;
    bd.initial = [u](const Point& z) { return u(0.0, z); };
    bd.lateral = std::move(u);
    bd.kappa_h = kappa_h;
    bd.C_h = C_h;
    return bd;
}

// ---------------------------------------------------------------------------
// Problem

/// One Cauchy-Dirichlet instance on the unit ball of C^n over [0, T), solved up to S.
struct FlowProblem {
    std::string name = "unnamed";
    int n = 1;
    double T = 1.0;
    double S = 0.75;
    GSpec g;
    FSpec F;
    BoundaryData h;
    /// Exact solution when known (manufactured problems).
    std::function<double(double, const Point&)> exact;
    /// Fraction of nodes with g = 0 above which a warning is logged.
    double zero_g_warn_fraction = 0.01;

    void validate_shape() const {
        if (n != 1 && n != 2) throw Error(ErrorKind::validation, "n must be 1 or 2", {{"n", n}});
        if (!(S > 0 && S < T)) throw Error(ErrorKind::validation, "need 0 < S < T", {{"S", S}, {"T", T}});
        if (!(g.p > 1)) throw Error(ErrorKind::validation, "g must be declared in L^p with p > 1", {{"p", g.p}});
        if (!h.lateral || !h.initial) throw Error(ErrorKind::validation, "boundary data missing");
    }

    /// g at nodes; throws on negative or non-finite samples.
    std::vector<double> g_samples(const SpaceGrid& grid) const {
        auto v = g.samples(grid);
        std::size_t zeros = 0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!std::isfinite(v[i]) || v[i] < 0)
                throw Error(ErrorKind::validation, "density g must be finite and nonnegative",
                            {{"node", i}, {"z", grid.node(i)}, {"g", std::isfinite(v[i]) ? v[i] : -1.0}});
            zeros += v[i] == 0;
        }
        if (static_cast<double>(zeros) > zero_g_warn_fraction * static_cast<double>(v.size()))
            log().warn("problem {}: g vanishes on {} of {} nodes", name, zeros, v.size());
        return v;
    }
};

// ---------------------------------------------------------------------------
// Manufactured solutions

/// Radial space-time profile u*(t, z) = c + beta |z|^2 + gamma |z|^4 + a t.
struct RadialProfile {
    double c = 0.0, beta = 1.0, gamma = 0.0, a = 0.0;

    double operator()(double t, const Point& z) const {
        double s = squared_norm(z);
        return c + beta * s + gamma * s * s + a * t;
    }
    /// det of the complex Hessian: phi'^{n-1} (phi' + s phi'') with phi(s) = c + beta s + gamma s^2.
    double hessian_det(int n, const Point& z) const {
        double s = squared_norm(z);
        double d1 = beta + 2 * gamma * s;
        double d2 = 2 * gamma;
        return std::pow(d1, n - 1) * (d1 + s * d2);
    }
    bool psh() const { return beta > 0 && gamma >= 0; }
};

struct ManufacturedProblem {
    FlowProblem problem;
    /// g(t, z) = det(u*) e^{-d_t u* - F(t, z, u*)} for the F requested, before the
    /// time dependence is moved into F.
    std::function<double(double, const Point&)> g_unfolded;
};

/// Builds a problem with exact solution u*. For F = lambda r + mu t + psi, the
/// term lambda a t of F(t, z, u*) is moved into mu so that g does not depend on t.
inline ManufacturedProblem manufacture(const RadialProfile& u, int n, const FSpec& F_requested, double T, double S,
                                       const SpaceGrid* grid_for_check = nullptr) {
    if (!u.psh()) throw Error(ErrorKind::validation, "manufactured profile is not plurisubharmonic");
    if (grid_for_check) {
        DeltaOperator op(std::shared_ptr<const SpaceGrid>(grid_for_check, [](const SpaceGrid*) {}),
                         HermitianDictionary::build(n));
        auto rep = psh_check(sample(*grid_for_check, [&](const Point& z) { return u(0.0, z); }), op, 1e-12);
        if (!rep.pass)
            throw Error(ErrorKind::validation, "manufactured profile fails the discrete psh test",
                        {{"node", rep.worst_node}, {"margin", rep.min_margin}});
    }
    if (F_requested.family == FFamily::softplus || F_requested.family == FFamily::custom)
        throw Error(ErrorKind::invalid_argument, "manufacture supports zero and affine F");
    ManufacturedProblem m;
    m.g_unfolded = [u, n, F_requested](double t, const Point& z) {
        return u.hessian_det(n, z) * std::exp(-u.a - F_requested(t, z, u(t, z)));
    };
    FSpec F = F_requested;
    if (F.family == FFamily::affine) {
        F.mu = F_requested.mu - F.lambda * u.a;
        F.kappa_F = std::max(F.kappa_F, std::abs(F.mu));
    }
    auto& p = m.problem;
    p.name = "manufactured";
    p.n = n;
    p.T = T;
    p.S = S;
    p.F = F;
    p.g.kind = "manufactured";
    p.g.eval = [u, n, F](const Point& z) { return u.hessian_det(n, z) * std::exp(-u.a - F(0.0, z, u(0.0, z))); };
    p.h = trace_boundary(u, std::abs(u.a) * T, 0.0);
    p.exact = u;
    return m;
}

} // namespace cmaf
