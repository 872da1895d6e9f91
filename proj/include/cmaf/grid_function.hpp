#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmaf/domain.hpp"

namespace cmaf {

/// Values of a function of z on the closed ball at grid resolution: one value
/// per active node plus one per boundary hit (the trace on the sphere).
struct Slice {
    std::vector<double> nodes;
    std::vector<double> hits;

    Slice() = default;
    explicit Slice(const SpaceGrid& grid, double fill = 0.0)
        : nodes(grid.node_count(), fill), hits(grid.hit_count(), fill) {}

    /// Value at a stencil reference (node id, or -(hit+1)).
    double at(int ref) const { return ref >= 0 ? nodes[ref] : hits[-ref - 1]; }

    Slice& operator+=(const Slice& o) {
        for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] += o.nodes[i];
        for (std::size_t i = 0; i < hits.size(); ++i) hits[i] += o.hits[i];
        return *this;
    }
    Slice& operator*=(double s) {
        for (auto& v : nodes) v *= s;
        for (auto& v : hits) v *= s;
        return *this;
    }
    Slice& operator+=(double c) {
        for (auto& v : nodes) v += c;
        for (auto& v : hits) v += c;
        return *this;
    }
    friend Slice operator+(Slice a, const Slice& b) { return a += b; }
    friend Slice operator*(double s, Slice a) { return a *= s; }
};

/// Samples f on every node and boundary hit.
inline Slice sample(const SpaceGrid& grid, const std::function<double(const Point&)>& f) {
    Slice s(grid);
    for (std::size_t i = 0; i < grid.node_count(); ++i) s.nodes[i] = f(grid.node(i));
    for (std::size_t j = 0; j < grid.hit_count(); ++j) s.hits[j] = f(grid.hits()[j].point);
    return s;
}

inline Slice combine(const Slice& a, const Slice& b, const std::function<double(double, double)>& op) {
    Slice r = a;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) r.nodes[i] = op(a.nodes[i], b.nodes[i]);
    for (std::size_t i = 0; i < r.hits.size(); ++i) r.hits[i] = op(a.hits[i], b.hits[i]);
    return r;
}

/// Space-time samples of a parabolic potential: one Slice per time node.
class GridFunction {
public:
    GridFunction(std::shared_ptr<const SpaceGrid> space, std::shared_ptr<const TimeGrid> time)
        : space_(std::move(space)), time_(std::move(time)), slices_(time_->size(), Slice(*space_)) {}

    GridFunction(std::shared_ptr<const SpaceGrid> space, std::shared_ptr<const TimeGrid> time,
                 std::vector<Slice> slices)
        : space_(std::move(space)), time_(std::move(time)), slices_(std::move(slices)) {
        if (slices_.size() != time_->size())
            throw Error(ErrorKind::invalid_argument, "slice count does not match time grid");
        for (const auto& s : slices_)
            if (s.nodes.size() != space_->node_count() || s.hits.size() != space_->hit_count())
                throw Error(ErrorKind::invalid_argument, "slice shape does not match space grid");
    }

    /// f(t, x) sampled on the whole space-time lattice.
    static GridFunction sampled(std::shared_ptr<const SpaceGrid> space, std::shared_ptr<const TimeGrid> time,
                                const std::function<double(double, const Point&)>& f) {
        GridFunction u(space, time);
        for (std::size_t k = 0; k < time->size(); ++k) {
            double t = (*time)[k];
            u.slices_[k] = sample(*space, [&](const Point& x) { return f(t, x); });
        }
        return u;
    }

    const SpaceGrid& space() const noexcept { return *space_; }
    const TimeGrid& time() const noexcept { return *time_; }
    const std::shared_ptr<const SpaceGrid>& space_ptr() const noexcept { return space_; }
    const std::shared_ptr<const TimeGrid>& time_ptr() const noexcept { return time_; }

    std::size_t size() const noexcept { return slices_.size(); }
    const Slice& operator[](std::size_t k) const { return slices_[k]; }
    Slice& operator[](std::size_t k) { return slices_[k]; }
    const std::vector<Slice>& slices() const noexcept { return slices_; }

    bool all_finite() const {
        for (const auto& s : slices_) {
            for (double v : s.nodes)
                if (!std::isfinite(v)) return false;
            for (double v : s.hits)
                if (!std::isfinite(v)) return false;
        }
        return true;
    }

    /// Linear interpolation in time of the slice at t in [0, S].
    Slice at_time(double t) const {
        const auto& tg = *time_;
        if (t < -1e-14 || t > tg.S() * (1 + 1e-12))
            throw Error(ErrorKind::invalid_argument, "time outside the grid", {{"t", t}, {"S", tg.S()}});
        std::size_t k = tg.locate(t);
        double w = (t - tg[k]) / tg.step(k + 1);
        w = std::clamp(w, 0.0, 1.0);
        if (w == 0.0) return slices_[k];
        if (w == 1.0) return slices_[k + 1];
        return combine(slices_[k], slices_[k + 1], [w](double a, double b) { return (1 - w) * a + w * b; });
    }

    GridFunction map(const std::function<double(double)>& f) const {
        GridFunction r = *this;
        for (auto& s : r.slices_) {
            for (auto& v : s.nodes) v = f(v);
            for (auto& v : s.hits) v = f(v);
        }
        return r;
    }

    friend GridFunction operator-(const GridFunction& a, const GridFunction& b) {
        GridFunction r = a;
        for (std::size_t k = 0; k < r.size(); ++k)
            r.slices_[k] = combine(a[k], b[k], [](double x, double y) { return x - y; });
        return r;
    }
    friend GridFunction operator+(const GridFunction& a, const GridFunction& b) {
        GridFunction r = a;
        for (std::size_t k = 0; k < r.size(); ++k)
            r.slices_[k] = combine(a[k], b[k], [](double x, double y) { return x + y; });
        return r;
    }

    static GridFunction max(const GridFunction& a, const GridFunction& b) {
        GridFunction r = a;
        for (std::size_t k = 0; k < r.size(); ++k)
            r.slices_[k] = combine(a[k], b[k], [](double x, double y) { return std::max(x, y); });
        return r;
    }

private:
    std::shared_ptr<const SpaceGrid> space_;
    std::shared_ptr<const TimeGrid> time_;
    std::vector<Slice> slices_;
};

// ---------------------------------------------------------------------------
// Serialization: CSV rows (k, t_k, node_index, x..., value) for the node values
// and a JSON sidecar with the grid metadata. Boundary traces are not stored.

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_csv(const GridFunction& u, std::ostream& os) {
    const auto& g = u.space();
    os << "k,t_k,node_index";
    for (int p = 0; p < g.dim(); ++p) os << ",x" << p;
    os << ",value\n";
    for (std::size_t k = 0; k < u.size(); ++k) {
        std::string tk = format_double(u.time()[k]);
        for (std::size_t i = 0; i < g.node_count(); ++i) {
            os << k << ',' << tk << ',' << i;
            for (int p = 0; p < g.dim(); ++p) os << ',' << format_double(g.node(i)[p]);
            os << ',' << format_double(u[k].nodes[i]) << '\n';
        }
    }
}

inline nlohmann::json sidecar_json(const GridFunction& u) {
    return {{"n", u.space().n()},
            {"h_x", u.space().h()},
            {"node_count", u.space().node_count()},
            {"hit_count", u.space().hit_count()},
            {"T", u.time().T()},
            {"S", u.time().S()},
            {"K", u.time().K()},
            {"grading", u.time().grading() == TimeGrading::uniform ? "uniform" : "geometric"},
            {"time_nodes", u.time().nodes()}};
}

/// Reads node values written by write_csv. Boundary traces come from `trace(t, zeta)`.
inline GridFunction read_csv(std::istream& is, std::shared_ptr<const SpaceGrid> space,
                             std::shared_ptr<const TimeGrid> time,
                             const std::function<double(double, const Point&)>& trace) {
    GridFunction u(space, time);
    std::string line;
    if (!std::getline(is, line)) throw Error(ErrorKind::validation, "empty solution CSV");
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != static_cast<std::size_t>(space->dim()) + 4)
            throw Error(ErrorKind::validation, "malformed CSV row", {{"row", line}});
        std::size_t k = std::stoul(cells[0]);
        std::size_t i = std::stoul(cells[2]);
        if (k >= time->size() || i >= space->node_count())
            throw Error(ErrorKind::validation, "CSV row outside the grid", {{"row", line}});
        u[k].nodes[i] = std::stod(cells.back());
        ++rows;
    }
    if (rows != time->size() * space->node_count())
        throw Error(ErrorKind::validation, "CSV does not cover the grid",
                    {{"rows", rows}, {"expected", time->size() * space->node_count()}});
    for (std::size_t k = 0; k < time->size(); ++k)
        for (std::size_t j = 0; j < space->hit_count(); ++j)
            u[k].hits[j] = trace((*time)[k], space->hits()[j].point);
    return u;
}

} // namespace cmaf
