#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cmaf/domain.hpp"
#include "cmaf/error.hpp"
#include "cmaf/log.hpp"

namespace cmaf {

using HermitianMatrix = Eigen::MatrixXcd;
using cplx = std::complex<double>;

inline bool is_hermitian(const HermitianMatrix& a, double tol = 1e-12) {
    return a.rows() == a.cols() && (a - a.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

inline Eigen::VectorXd hermitian_eigenvalues(const HermitianMatrix& a) {
    Eigen::SelfAdjointEigenSolver<HermitianMatrix> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

inline double hermitian_det(const HermitianMatrix& a) { return a.determinant().real(); }

/// Real symmetric 2n x 2n matrix M with (1/n) tr(A H(u)) = sum_{pq} M_pq d^2u/dx_p dx_q,
/// where H(u)_{kj} = d^2 u / dz_k dzbar_j and coordinates are interleaved (x_j, y_j).
inline Eigen::MatrixXd real_form(const HermitianMatrix& a) {
    const int n = static_cast<int>(a.rows());
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
            double re = a(j, k).real(), im = a(j, k).imag();
            int xj = 2 * j, yj = 2 * j + 1, xk = 2 * k, yk = 2 * k + 1;
            m(xk, xj) += re / 4;
            m(yk, yj) += re / 4;
            m(xk, yj) -= im / 4;
            m(yk, xj) += im / 4;
        }
    m = (m + m.transpose()) / 2.0;
    return m / n;
}

/// A = cosh(s) I + sinh(s) (v . sigma) for a unit vector v: Hermitian, det 1,
/// eigenvalues e^{+-s}.
inline HermitianMatrix pauli_matrix(double s, const std::array<double, 3>& v) {
    HermitianMatrix a(2, 2);
    double c = std::cosh(s), sh = std::sinh(s);
    a(0, 0) = c + sh * v[2];
    a(1, 1) = c - sh * v[2];
    a(0, 1) = cplx(sh * v[0], -sh * v[1]);
    a(1, 0) = cplx(sh * v[0], sh * v[1]);
    return a;
}

/// Hyperbolic distance between unit-determinant positive 2x2 Hermitian
/// matrices: arccosh((1/2) tr(A^{-1} B)).
inline double cone_distance(const HermitianMatrix& a, const HermitianMatrix& b) {
    // A^{-1} = adj(A) since det A = 1.
    cplx c = a(1, 1) * b(0, 0) - a(0, 1) * b(1, 0) - a(1, 0) * b(0, 1) + a(0, 0) * b(1, 1);
    return std::acosh(std::max(1.0, 0.5 * c.real()));
}

struct DictionaryOptions {
    double spacing = 0.2;  // ladder step in s (eigenvalues e^{+-s})
    int shells = 3;        // s in {spacing, 2 spacing, ..., shells * spacing}
    int hemisphere = 8;    // low-discrepancy directions per hemisphere (mirrored under conjugation)
};

namespace detail {

/// Directions on the half sphere v_y > 0 from a Fibonacci lattice, then mirrored
/// in v_y so the set is closed under complex conjugation of the matrices.
inline std::vector<std::array<double, 3>> conjugation_closed_directions(int hemisphere) {
    std::vector<std::array<double, 3>> dirs;
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < hemisphere; ++i) {
        double y = (i + 0.5) / hemisphere;
        double r = std::sqrt(1 - y * y);
        double phi = golden * i;
        dirs.push_back({r * std::cos(phi), y, r * std::sin(phi)});
    }
    std::size_t m = dirs.size();
    for (std::size_t i = 0; i < m; ++i) dirs.push_back({dirs[i][0], -dirs[i][1], dirs[i][2]});
    return dirs;
}

inline bool diagonally_dominant(const Eigen::MatrixXd& m, double tol = 1e-14) {
    for (int p = 0; p < m.rows(); ++p) {
        double off = 0;
        for (int q = 0; q < m.cols(); ++q)
            if (q != p) off += std::abs(m(p, q));
        if (m(p, p) < off - tol) return false;
    }
    return true;
}

} // namespace detail

/// Finite set of positive Hermitian matrices with unit determinant. The
/// minimum of (1/n) tr(A H) over the set over-approximates det(H)^{1/n} by at
/// most a factor (1 + resolution) whenever the optimal matrix det(H)^{1/n} H^{-1}
/// lies within `covered_radius` of the identity in the cone metric.
class HermitianDictionary {
public:
    HermitianDictionary() = default;
    HermitianDictionary(int n, std::vector<HermitianMatrix> matrices, double resolution, double covered_radius)
        : n_(n), matrices_(std::move(matrices)), resolution_(resolution), covered_radius_(covered_radius) {
        validate();
    }

    static HermitianDictionary build(int n, DictionaryOptions opt = {}) {
        if (n == 1) return HermitianDictionary(1, {HermitianMatrix::Identity(1, 1)}, 0.0, 0.0);
        if (n != 2) throw Error(ErrorKind::invalid_argument, "dictionary supports n = 1, 2", {{"n", n}});
        auto dirs = detail::conjugation_closed_directions(opt.hemisphere);
        std::vector<HermitianMatrix> mats{HermitianMatrix::Identity(2, 2)};
        int dropped = 0;
        for (int shell = 1; shell <= opt.shells; ++shell) {
            double s = shell * opt.spacing;
            for (const auto& v : dirs) {
                HermitianMatrix a = pauli_matrix(s, v);
                if (!detail::diagonally_dominant(real_form(a))) {
                    ++dropped;
                    continue;
                }
                mats.push_back(a);
            }
        }
        if (dropped > 0)
            log().warn("dictionary: dropped {} matrices violating diagonal dominance of the real stencil", dropped);
        double radius = (opt.shells + 0.5) * opt.spacing;
        HermitianDictionary dict(2, std::move(mats), 0.0, radius);
        dict.resolution_ = dict.measure_resolution(radius);
        return dict;
    }

    int n() const noexcept { return n_; }
    std::size_t size() const noexcept { return matrices_.size(); }
    const HermitianMatrix& operator[](std::size_t i) const { return matrices_[i]; }
    const std::vector<HermitianMatrix>& matrices() const noexcept { return matrices_; }
    double resolution() const noexcept { return resolution_; }
    double covered_radius() const noexcept { return covered_radius_; }

    /// min over the dictionary of (1/n) tr(A H).
    double min_trace(const HermitianMatrix& hess) const {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& a : matrices_) best = std::min(best, (a * hess).trace().real() / n_);
        return best;
    }

    /// cosh(r) - 1 where r bounds the covering radius of the dictionary over the
    /// cone ball of the given radius: the largest probe-to-dictionary distance
    /// plus the probe spacing (triangle inequality).
    double measure_resolution(double radius, int radial = 48, int directions = 2000) const {
        if (n_ == 1) return 0.0;
        std::vector<std::array<double, 3>> probes;
        const double golden = M_PI * (3.0 - std::sqrt(5.0));
        for (int i = 0; i < directions; ++i) {
            double z = 1 - (2.0 * i + 1) / directions;
            double r = std::sqrt(1 - z * z);
            probes.push_back({r * std::cos(golden * i), r * std::sin(golden * i), z});
        }
        double worst = 0;
        for (int k = 0; k <= radial; ++k) {
            double s = radius * k / radial;
            for (const auto& v : probes) {
                HermitianMatrix p = pauli_matrix(s, v);
                double best = std::numeric_limits<double>::infinity();
                for (const auto& a : matrices_) best = std::min(best, cone_distance(a, p));
                worst = std::max(worst, best);
            }
        }
        // Mean spacing of an N-point Fibonacci set on the unit sphere.
        double angular = std::sqrt(4 * M_PI / directions);
        double slack = 0.5 * radius / radial + std::sinh(radius) * angular;
        return std::cosh(worst + slack) - 1.0;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["n"] = n_;
        j["resolution"] = resolution_;
        j["covered_radius"] = covered_radius_;
        auto& ms = j["matrices"] = nlohmann::json::array();
        for (const auto& a : matrices_) {
            std::vector<double> flat;
            for (int r = 0; r < a.rows(); ++r)
                for (int c = 0; c < a.cols(); ++c) {
                    flat.push_back(a(r, c).real());
                    flat.push_back(a(r, c).imag());
                }
            ms.push_back(flat);
        }
        return j;
    }

    static HermitianDictionary from_json(const nlohmann::json& j) {
        int n = j.at("n").get<int>();
        std::vector<HermitianMatrix> mats;
        for (const auto& flat : j.at("matrices")) {
            auto v = flat.get<std::vector<double>>();
            if (v.size() != static_cast<std::size_t>(2 * n * n))
                throw Error(ErrorKind::validation, "dictionary matrix must have 2n^2 reals");
            HermitianMatrix a(n, n);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) a(r, c) = cplx(v[2 * (r * n + c)], v[2 * (r * n + c) + 1]);
            mats.push_back(a);
        }
        return HermitianDictionary(n, std::move(mats), j.value("resolution", 0.0), j.value("covered_radius", 0.0));
    }

private:
    void validate() const {
        if (matrices_.empty()) throw Error(ErrorKind::invalid_argument, "empty dictionary");
        bool has_identity = false;
        for (const auto& a : matrices_) {
            if (a.rows() != n_ || !is_hermitian(a))
                throw Error(ErrorKind::invalid_argument, "dictionary entry is not Hermitian n x n");
            if (hermitian_eigenvalues(a).minCoeff() <= 0)
                throw Error(ErrorKind::invalid_argument, "dictionary entry is not positive definite");
            if (std::abs(hermitian_det(a) - 1.0) > 1e-12)
                throw Error(ErrorKind::invalid_argument, "dictionary entry must have unit determinant");
            if ((a - HermitianMatrix::Identity(n_, n_)).cwiseAbs().maxCoeff() < 1e-14) has_identity = true;
        }
        if (!has_identity) throw Error(ErrorKind::invalid_argument, "dictionary must contain the identity");
        for (const auto& a : matrices_) {
            HermitianMatrix c = a.conjugate();
            bool found = false;
            for (const auto& b : matrices_)
                if ((b - c).cwiseAbs().maxCoeff() < 1e-12) found = true;
            if (!found)
                throw Error(ErrorKind::invalid_argument, "dictionary must be closed under complex conjugation");
        }
    }

    int n_ = 1;
    std::vector<HermitianMatrix> matrices_;
    double resolution_ = 0.0;
    double covered_radius_ = 0.0;
};

} // namespace cmaf
