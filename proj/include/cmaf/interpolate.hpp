#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "cmaf/domain.hpp"
#include "cmaf/grid_function.hpp"

namespace cmaf {

enum class InterpOrder { multilinear, quadratic };

/// Tensor-product interpolation weights at one point: node ids and weights.
struct InterpStencil {
    std::vector<int> nodes;
    std::vector<double> weights;
    InterpOrder order = InterpOrder::quadratic;

    double apply(const Slice& s) const {
        double v = 0;
        for (std::size_t q = 0; q < nodes.size(); ++q) v += weights[q] * s.nodes[nodes[q]];
        return v;
    }
};

/// Interpolation stencil at x from active nodes only. The quadratic stencil uses
/// the 3^{2n} lattice points around the nearest lattice point; when one of them
/// is not an active node the 2^{2n} multilinear cell is tried; std::nullopt when
/// neither is fully active.
inline std::optional<InterpStencil> interp_stencil(const SpaceGrid& g, const Point& x,
                                                   InterpOrder order = InterpOrder::quadratic) {
    const int d = g.dim();
    const double h = g.h();
    if (order == InterpOrder::quadratic) {
        std::array<int, 4> c{};
        std::array<std::array<double, 3>, 4> w{};
        for (int p = 0; p < d; ++p) {
            double q = x[p] / h;
            c[p] = static_cast<int>(std::lround(q));
            double r = q - c[p];
            w[p] = {0.5 * r * (r - 1), 1 - r * r, 0.5 * r * (r + 1)};
        }
        InterpStencil st;
        st.order = InterpOrder::quadratic;
        int total = 1;
        for (int p = 0; p < d; ++p) total *= 3;
        st.nodes.reserve(total);
        st.weights.reserve(total);
        bool ok = true;
        for (int m = 0; m < total && ok; ++m) {
            std::array<int, 4> idx{};
            double wt = 1;
            int rem = m;
            for (int p = 0; p < d; ++p) {
                int o = rem % 3;
                rem /= 3;
                idx[p] = c[p] + o - 1;
                wt *= w[p][o];
            }
            int node = g.node_at(idx);
            if (node < 0) ok = false;
            st.nodes.push_back(node);
            st.weights.push_back(wt);
        }
        if (ok) return st;
    }
    std::array<int, 4> lo{};
    std::array<double, 4> f{};
    for (int p = 0; p < d; ++p) {
        double q = x[p] / h;
        lo[p] = static_cast<int>(std::floor(q));
        f[p] = q - lo[p];
    }
    InterpStencil st;
    st.order = InterpOrder::multilinear;
    for (int m = 0; m < (1 << d); ++m) {
        std::array<int, 4> idx{};
        double wt = 1;
        for (int p = 0; p < d; ++p) {
            int b = (m >> p) & 1;
            idx[p] = lo[p] + b;
            wt *= b ? f[p] : 1 - f[p];
        }
        if (wt == 0.0) continue;
        int node = g.node_at(idx);
        if (node < 0) return std::nullopt;
        st.nodes.push_back(node);
        st.weights.push_back(wt);
    }
    if (st.nodes.empty()) return std::nullopt;
    return st;
}

/// Largest |second difference| along the coordinate axes at interior nodes of
/// one slice, an estimate of max |D^2 u| for interpolation tolerances.
inline double max_axis_second_difference(const SpaceGrid& g, const Slice& u) {
    double m = 0;
    const double h2 = g.h() * g.h();
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        if (g.tag(i) != NodeTag::interior) continue;
        for (int p = 0; p < g.dim(); ++p) {
            Direction e{};
            e[p] = 1;
            Direction me{};
            me[p] = -1;
            int a = g.neighbour(i, g.direction_index(e)), b = g.neighbour(i, g.direction_index(me));
            m = std::max(m, std::abs(u.at(a) - 2 * u.nodes[i] + u.at(b)) / h2);
        }
    }
    return m;
}

/// (dim / 8) max|D^2 u| h^2 over all slices: the multilinear interpolation error bound.
inline double space_interp_tolerance(const GridFunction& u) {
    double m = 0;
    for (std::size_t k = 0; k < u.size(); ++k) m = std::max(m, max_axis_second_difference(u.space(), u[k]));
    return u.space().dim() / 8.0 * m * u.space().h() * u.space().h();
}

/// (1/8) max|D_t^2 u| dt^2: the linear-in-time interpolation error bound.
inline double time_interp_tolerance(const GridFunction& u) {
    const auto& tg = u.time();
    double m = 0, dt = 0;
    for (std::size_t k = 1; k < tg.size(); ++k) dt = std::max(dt, tg.step(k));
    for (std::size_t k = 1; k + 1 < tg.size(); ++k) {
        double hm = tg.step(k), hp = tg.step(k + 1);
        for (std::size_t i = 0; i < u.space().node_count(); ++i) {
            double d2 = 2.0 * ((u[k + 1].nodes[i] - u[k].nodes[i]) / hp - (u[k].nodes[i] - u[k - 1].nodes[i]) / hm) /
                        (hp + hm);
            m = std::max(m, std::abs(d2));
        }
    }
    return m * dt * dt / 8.0;
}

} // namespace cmaf
