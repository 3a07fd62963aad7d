// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

#include <Eigen/Dense>

#include "koopman_reach/errors.hpp"

namespace koopman_reach {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct SvdResult {
    Matrix u;
    Vector singular_values;  // descending
    Matrix v;
};

/// Thin SVD, X = U diag(s) V^T.
inline SvdResult svd(const Matrix& x) {
    if (x.size() == 0) throw DimensionError("svd of an empty matrix");
    if (!x.allFinite()) throw NumericError("svd of a matrix with non-finite entries");
    Eigen::JacobiSVD<Matrix, Eigen::ColPivHouseholderQRPreconditioner> solver(
        x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return {solver.matrixU(), solver.singularValues(), solver.matrixV()};
}

/// How many singular values a pseudoinverse keeps.
struct Truncation {
    enum class Kind { rank, energy };
    Kind kind = Kind::energy;
    std::size_t rank = 0;
    double energy = 1.0 - 1e-10;

    static Truncation keep_rank(std::size_t r) { return {Kind::rank, r, 0.0}; }
    static Truncation keep_energy(double eps) { return {Kind::energy, 0, eps}; }
    /// Rank min(rows, cols); only the noise floor applies.
    static Truncation full() { return keep_rank(static_cast<std::size_t>(-1)); }

    friend bool operator==(const Truncation&, const Truncation&) = default;
};

/// Number of leading singular values retained. Values below 1e-12 * sigma_max
/// are always dropped.
inline std::size_t retained_rank(const Vector& s, const Truncation& t) {
    if (s.size() == 0 || s(0) <= 0.0) throw NumericError("matrix has no dominant mode");
    const double floor = 1e-12 * s(0);
    std::size_t r = 0;
    while (r < static_cast<std::size_t>(s.size()) && s(static_cast<Eigen::Index>(r)) > floor) ++r;
    if (t.kind == Truncation::Kind::rank) {
        return std::min(r, t.rank);
    }
    if (!(t.energy > 0.0 && t.energy <= 1.0)) throw NumericError("energy fraction must lie in (0, 1]");
    const double total = s.squaredNorm();
    double acc = 0.0;
    std::size_t k = 0;
    while (k < r) {
        acc += s(static_cast<Eigen::Index>(k)) * s(static_cast<Eigen::Index>(k));
        ++k;
        if (acc >= t.energy * total) break;
    }
    return k;
}

/// X^+ = V_r diag(1/s_r) U_r^T from a precomputed decomposition.
inline Matrix pseudoinverse_from_svd(const SvdResult& d, std::size_t r) {
    const auto rr = static_cast<Eigen::Index>(r);
    return d.v.leftCols(rr) * d.singular_values.head(rr).cwiseInverse().asDiagonal() * d.u.leftCols(rr).transpose();
}

inline Matrix truncated_pseudoinverse(const Matrix& x, const Truncation& t = {}) {
    if (x.size() == 0) throw DimensionError("pseudoinverse of an empty matrix");
    const SvdResult d = svd(x);
    return pseudoinverse_from_svd(d, retained_rank(d.singular_values, t));
}

/// e^{A t} by scaling and squaring around a degree-13 Pade approximant.
inline Matrix matrix_exponential(const Matrix& a, double t = 1.0) {
    if (a.rows() != a.cols()) throw DimensionError("matrix exponential needs a square matrix");
    const Eigen::Index n = a.rows();
    Matrix at = a * t;
    if (!at.allFinite()) throw NumericError("matrix exponential of non-finite matrix");
    if (at.isDiagonal(0.0)) {
        Matrix d = Matrix::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) d(i, i) = std::exp(at(i, i));
        return d;
    }
    // Strictly triangular matrices are nilpotent: the series terminates.
    if (at.isUpperTriangular(0.0) || at.isLowerTriangular(0.0)) {
        if (at.diagonal().isZero(0.0)) {
            Matrix sum = Matrix::Identity(n, n), term = Matrix::Identity(n, n);
            for (Eigen::Index k = 1; k < n; ++k) {
                term = term * at / static_cast<double>(k);
                sum += term;
            }
            return sum;
        }
    }
    static constexpr std::array<double, 14> b = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                                                 1187353796428800.0,  129060195264000.0,   10559470521600.0,
                                                 670442572800.0,      33522128640.0,       1323241920.0,
                                                 40840800.0,          960960.0,            16380.0,
                                                 182.0,               1.0};
    constexpr double theta13 = 5.371920351148152;
    const double norm1 = at.cwiseAbs().colwise().sum().maxCoeff();
    int s = 0;
    if (norm1 > theta13) s = std::max(0, static_cast<int>(std::ceil(std::log2(norm1 / theta13))));
    if (s > 0) at /= std::ldexp(1.0, s);

    const Matrix id = Matrix::Identity(n, n);
    const Matrix a2 = at * at;
    const Matrix a4 = a2 * a2;
    const Matrix a6 = a4 * a2;
    const Matrix u_inner = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id;
    const Matrix u = at * u_inner;
    const Matrix v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
    Matrix r = (v - u).partialPivLu().solve(v + u);
    for (int i = 0; i < s; ++i) r = r * r;
    return r;
}

}  // namespace koopman_reach
