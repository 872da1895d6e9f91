#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmaf/error.hpp"

namespace cmaf {

/// Point of C^n viewed as R^{2n}, interleaved (Re z_1, Im z_1, Re z_2, Im z_2).
/// Unused trailing coordinates stay zero when n = 1.
using Point = std::array<double, 4>;

/// Integer lattice direction in R^{2n}.
using Direction = std::array<int, 4>;

inline double squared_norm(const Point& x) { return x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]; }

/// The unit ball of C^n, n in {1, 2}, with defining function |z|^2 - 1.
class BallDomain {
public:
    explicit BallDomain(int n) : n_(n) {
        if (n != 1 && n != 2)
            throw Error(ErrorKind::invalid_argument, "complex dimension must be 1 or 2", {{"n", n}});
    }

    int n() const noexcept { return n_; }
    int real_dim() const noexcept { return 2 * n_; }

    static double rho0(const Point& x) { return squared_norm(x) - 1.0; }

    static Point grad_rho0(const Point& x) { return {2 * x[0], 2 * x[1], 2 * x[2], 2 * x[3]}; }

    /// Euclidean volume of the ball in R^{2n}.
    double volume() const { return n_ == 1 ? M_PI : M_PI * M_PI / 2.0; }

private:
    int n_;
};

enum class NodeTag : std::uint8_t { interior, near_boundary, exterior };

inline const char* to_string(NodeTag tag) {
    switch (tag) {
    case NodeTag::interior: return "interior";
    case NodeTag::near_boundary: return "near_boundary";
    case NodeTag::exterior: return "exterior";
    }
    return "?";
}

/// Intersection of the segment node -> node + h*w with the unit sphere.
struct BoundaryHit {
    int node = 0;
    int direction = 0;
    double theta = 1.0; // fraction of the full lattice step, in (0, 1]
    Point point{};
};

/// Second-difference data of one node along one lattice line (w, -w):
/// D^2_w u ~ (2/h^2) [alpha_plus (u_+ - u_0) + alpha_minus (u_- - u_0)].
/// Neighbour references are node ids when >= 0, else -(hit + 1).
struct LineStencil {
    int plus = 0;
    int minus = 0;
    double alpha_plus = 1.0;
    double alpha_minus = 1.0;
};

struct GridOptions {
    /// Include the directions e_p +- e_q. Needed by off-diagonal Hermitian
    /// operators; defaults to on for n = 2.
    int diagonals = -1; // -1: automatic
};

/// Cartesian lattice of spacing h restricted to the ball, with Shortley-Weller
/// boundary intersections. Immutable after construction.
class SpaceGrid {
public:
    SpaceGrid(const BallDomain& domain, double h, GridOptions options = {}) : domain_(domain), h_(h) {
        if (!(h > 0.0) || !std::isfinite(h))
            throw Error(ErrorKind::invalid_argument, "grid spacing must be positive", {{"h_x", h}});
        d_ = domain.real_dim();
        half_ = static_cast<int>(std::floor(1.0 / h + 1e-9));
        side_ = 2 * half_ + 1;
        bool diagonals = options.diagonals < 0 ? domain.n() == 2 : options.diagonals != 0;
        build_directions(diagonals);
        build_nodes();
        if (interior_count_ == 0)
            throw Error(ErrorKind::grid_too_coarse, "grid has no interior node", {{"h_x", h}, {"n", domain.n()}});
        build_neighbours();
    }

    const BallDomain& domain() const noexcept { return domain_; }
    int n() const noexcept { return domain_.n(); }
    int dim() const noexcept { return d_; }
    double h() const noexcept { return h_; }
    /// Lattice cell volume h^{2n}, the quadrature weight of a node.
    double cell_volume() const { return std::pow(h_, d_); }

    std::size_t node_count() const noexcept { return coords_.size(); }
    std::size_t interior_count() const noexcept { return interior_count_; }
    const Point& node(std::size_t i) const { return coords_[i]; }
    NodeTag tag(std::size_t i) const { return tags_[i]; }
    const std::array<int, 4>& lattice_index(std::size_t i) const { return index_[i]; }

    const std::vector<Direction>& directions() const noexcept { return dirs_; }
    int opposite(int k) const { return opposite_[k]; }
    int direction_index(const Direction& w) const {
        for (std::size_t k = 0; k < dirs_.size(); ++k)
            if (dirs_[k] == w) return static_cast<int>(k);
        return -1;
    }

    /// Neighbour reference of node i along direction k (node id, or -(hit+1)).
    int neighbour(std::size_t i, int k) const { return nbr_[i * dirs_.size() + k]; }

    const std::vector<BoundaryHit>& hits() const noexcept { return hits_; }
    std::size_t hit_count() const noexcept { return hits_.size(); }

    /// Lines are the directions whose first nonzero entry is +1.
    const std::vector<int>& lines() const noexcept { return lines_; }
    int line_of(const Direction& w) const {
        int k = direction_index(w);
        if (k < 0) return -1;
        auto it = std::find(lines_.begin(), lines_.end(), k);
        return it == lines_.end() ? -1 : static_cast<int>(it - lines_.begin());
    }

    LineStencil line_stencil(std::size_t i, int line) const {
        int kp = lines_[line];
        int km = opposite_[kp];
        LineStencil s;
        s.plus = neighbour(i, kp);
        s.minus = neighbour(i, km);
        double tp = s.plus >= 0 ? 1.0 : hits_[-s.plus - 1].theta;
        double tm = s.minus >= 0 ? 1.0 : hits_[-s.minus - 1].theta;
        s.alpha_plus = 1.0 / (tp * (tp + tm));
        s.alpha_minus = 1.0 / (tm * (tp + tm));
        return s;
    }

    /// Node id of a lattice index, or -1 when the lattice point is not an active node.
    int node_at(const std::array<int, 4>& idx) const {
        std::size_t flat = 0;
        for (int p = 0; p < d_; ++p) {
            int v = idx[p] + half_;
            if (v < 0 || v >= side_) return -1;
            flat = flat * side_ + v;
        }
        return lattice_node_[flat];
    }

    int half_width() const noexcept { return half_; }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["n"] = n();
        j["h_x"] = h_;
        auto& nodes = j["nodes"] = nlohmann::json::array();
        auto& mask = j["mask"] = nlohmann::json::array();
        for (std::size_t i = 0; i < node_count(); ++i) {
            nodes.push_back(std::vector<double>(coords_[i].begin(), coords_[i].begin() + d_));
            mask.push_back(to_string(tags_[i]));
        }
        auto& hits = j["boundary_hits"] = nlohmann::json::array();
        for (const auto& hit : hits_) {
            const auto& w = dirs_[hit.direction];
            hits.push_back({{"node", hit.node},
                            {"direction", std::vector<int>(w.begin(), w.begin() + d_)},
                            {"theta", hit.theta},
                            {"point", std::vector<double>(hit.point.begin(), hit.point.begin() + d_)}});
        }
        return j;
    }

private:
    static constexpr double kSphereTol = 1e-12;

    void build_directions(bool diagonals) {
        for (int p = 0; p < d_; ++p) {
            for (int s : {1, -1}) {
                Direction w{};
                w[p] = s;
                dirs_.push_back(w);
            }
        }
        if (diagonals) {
            for (int p = 0; p < d_; ++p)
                for (int q = p + 1; q < d_; ++q)
                    for (int sp : {1, -1})
                        for (int sq : {1, -1}) {
                            Direction w{};
                            w[p] = sp;
                            w[q] = sq;
                            dirs_.push_back(w);
                        }
        }
        opposite_.resize(dirs_.size());
        for (std::size_t k = 0; k < dirs_.size(); ++k) {
            Direction neg{};
            for (int p = 0; p < 4; ++p) neg[p] = -dirs_[k][p];
            opposite_[k] = direction_index(neg);
            int first = 0;
            for (int p = 0; p < d_; ++p)
                if (dirs_[k][p] != 0) {
                    first = dirs_[k][p];
                    break;
                }
            if (first == 1) lines_.push_back(static_cast<int>(k));
        }
    }

    Point lattice_point(const std::array<int, 4>& idx) const {
        Point x{};
        for (int p = 0; p < d_; ++p) x[p] = h_ * idx[p];
        return x;
    }

    void build_nodes() {
        std::size_t total = 1;
        for (int p = 0; p < d_; ++p) total *= side_;
        lattice_node_.assign(total, -1);
        std::array<int, 4> idx{};
        for (std::size_t flat = 0; flat < total; ++flat) {
            std::size_t rem = flat;
            for (int p = d_ - 1; p >= 0; --p) {
                idx[p] = static_cast<int>(rem % side_) - half_;
                rem /= side_;
            }
            Point x = lattice_point(idx);
            if (squared_norm(x) < 1.0 - kSphereTol) {
                lattice_node_[flat] = static_cast<int>(coords_.size());
                coords_.push_back(x);
                index_.push_back(idx);
            }
        }
        tags_.resize(coords_.size());
        for (std::size_t i = 0; i < coords_.size(); ++i) {
            bool interior = true;
            for (int p = 0; p < d_ && interior; ++p)
                for (int s : {1, -1}) {
                    Point y = coords_[i];
                    y[p] += s * h_;
                    if (squared_norm(y) > 1.0 + kSphereTol) interior = false;
                }
            tags_[i] = interior ? NodeTag::interior : NodeTag::near_boundary;
            if (interior) ++interior_count_;
        }
    }

    void build_neighbours() {
        const std::size_t nd = dirs_.size();
        nbr_.assign(coords_.size() * nd, 0);
        for (std::size_t i = 0; i < coords_.size(); ++i) {
            for (std::size_t k = 0; k < nd; ++k) {
                std::array<int, 4> idx = index_[i];
                for (int p = 0; p < d_; ++p) idx[p] += dirs_[k][p];
                int j = node_at(idx);
                if (j >= 0) {
                    nbr_[i * nd + k] = j;
                    continue;
                }
                // Segment leaves the open ball: intersect with the sphere.
                const Point& x = coords_[i];
                double a = 0, b = 0, c = squared_norm(x) - 1.0;
                for (int p = 0; p < d_; ++p) {
                    double wp = h_ * dirs_[k][p];
                    a += wp * wp;
                    b += 2 * x[p] * wp;
                }
                double disc = std::sqrt(b * b - 4 * a * c);
                double s = b >= 0 ? -2 * c / (b + disc) : (-b + disc) / (2 * a);
                if (std::abs(s - 1.0) < 1e-12 || s > 1.0) s = 1.0;
                BoundaryHit hit;
                hit.node = static_cast<int>(i);
                hit.direction = static_cast<int>(k);
                hit.theta = s;
                for (int p = 0; p < d_; ++p) hit.point[p] = x[p] + s * h_ * dirs_[k][p];
                double r = std::sqrt(squared_norm(hit.point));
                for (int p = 0; p < d_; ++p) hit.point[p] /= r;
                nbr_[i * nd + k] = -static_cast<int>(hits_.size()) - 1;
                hits_.push_back(hit);
            }
        }
    }

    BallDomain domain_;
    double h_;
    int d_ = 2;
    int half_ = 0;
    int side_ = 1;
    std::vector<Direction> dirs_;
    std::vector<int> opposite_;
    std::vector<int> lines_;
    std::vector<int> lattice_node_;
    std::vector<Point> coords_;
    std::vector<std::array<int, 4>> index_;
    std::vector<NodeTag> tags_;
    std::size_t interior_count_ = 0;
    std::vector<int> nbr_;
    std::vector<BoundaryHit> hits_;
};

inline std::shared_ptr<const SpaceGrid> build_grid(const BallDomain& domain, double h, GridOptions options = {}) {
    return std::make_shared<const SpaceGrid>(domain, h, options);
}

/// Sphere points where the lateral data h(t, .) is sampled, one per boundary hit.
inline std::vector<Point> lateral_trace_points(const SpaceGrid& grid) {
    std::vector<Point> pts;
    pts.reserve(grid.hit_count());
    for (const auto& hit : grid.hits()) pts.push_back(hit.point);
    return pts;
}

enum class TimeGrading { uniform, geometric };

/// Time nodes 0 = t_0 < ... < t_K = S <= T.
class TimeGrid {
public:
    TimeGrid(double T, std::vector<double> nodes, TimeGrading grading)
        : T_(T), nodes_(std::move(nodes)), grading_(grading) {
        if (nodes_.size() < 2 || nodes_.front() != 0.0)
            throw Error(ErrorKind::invalid_argument, "time grid needs t_0 = 0 and at least one step");
        for (std::size_t k = 1; k < nodes_.size(); ++k)
            if (!(nodes_[k] > nodes_[k - 1]))
                throw Error(ErrorKind::invalid_argument, "time nodes must be strictly increasing");
        if (nodes_.back() > T_ * (1 + 1e-14))
            throw Error(ErrorKind::invalid_argument, "final time node exceeds horizon",
                        {{"S", nodes_.back()}, {"T", T_}});
    }

    static TimeGrid uniform(double T, double S, int K) {
        if (K < 1) throw Error(ErrorKind::invalid_argument, "step count must be positive", {{"K", K}});
        std::vector<double> t(K + 1);
        for (int k = 0; k <= K; ++k) t[k] = S * k / K;
        t[K] = S;
        return TimeGrid(T, std::move(t), TimeGrading::uniform);
    }

    /// `levels` geometric steps of ratio `ratio` growing toward the uniform
    /// step, followed by `K_uniform` uniform steps, ending exactly at S.
    static TimeGrid geometric(double T, double S, int K_uniform, double ratio = 1.2, int levels = 8) {
        if (K_uniform < 1 || levels < 0 || ratio < 1.0 || ratio > 2.0)
            throw Error(ErrorKind::invalid_argument, "bad geometric time grid parameters",
                        {{"K", K_uniform}, {"ratio", ratio}, {"levels", levels}});
        double graded = 0;
        for (int j = 1; j <= levels; ++j) graded += std::pow(ratio, -j);
        double du = S / (K_uniform + graded);
        std::vector<double> t{0.0};
        for (int j = levels; j >= 1; --j) t.push_back(t.back() + du * std::pow(ratio, -j));
        for (int k = 0; k < K_uniform; ++k) t.push_back(t.back() + du);
        t.back() = S;
        return TimeGrid(T, std::move(t), TimeGrading::geometric);
    }

    double T() const noexcept { return T_; }
    double S() const noexcept { return nodes_.back(); }
    int K() const noexcept { return static_cast<int>(nodes_.size()) - 1; }
    std::size_t size() const noexcept { return nodes_.size(); }
    double operator[](std::size_t k) const { return nodes_[k]; }
    double step(std::size_t k) const { return nodes_[k] - nodes_[k - 1]; } // k >= 1
    const std::vector<double>& nodes() const noexcept { return nodes_; }
    TimeGrading grading() const noexcept { return grading_; }

    /// Index k with t_k <= t <= t_{k+1}; clamps to the last interval.
    std::size_t locate(double t) const {
        auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
        std::size_t k = it == nodes_.begin() ? 0 : static_cast<std::size_t>(it - nodes_.begin()) - 1;
        return std::min(k, nodes_.size() - 2);
    }

private:
    double T_;
    std::vector<double> nodes_;
    TimeGrading grading_;
};

} // namespace cmaf
