// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "koopman_reach/halfspace.hpp"
#include "koopman_reach/interval.hpp"
#include "koopman_reach/linalg.hpp"

namespace koopman_reach {

enum class LpStatus { optimal, infeasible, unbounded };

struct LpResult {
    LpStatus status = LpStatus::infeasible;
    double value = 0.0;
    Vector x;
};

namespace detail {

class SimplexTableau {
public:
    static constexpr double eps = 1e-10;

    SimplexTableau(Eigen::Index rows, Eigen::Index cols) : t_(Matrix::Zero(rows + 1, cols + 1)), basis_(rows, -1) {}

    double& at(Eigen::Index r, Eigen::Index c) { return t_(r, c); }
    double& rhs(Eigen::Index r) { return t_(r, t_.cols() - 1); }
    double& cost(Eigen::Index c) { return t_(rows(), c); }
    double objective() const { return t_(rows(), t_.cols() - 1); }
    Eigen::Index rows() const { return t_.rows() - 1; }
    Eigen::Index cols() const { return t_.cols() - 1; }
    std::vector<Eigen::Index>& basis() { return basis_; }

    void pivot(Eigen::Index r, Eigen::Index c) {
        t_.row(r) /= t_(r, c);
        for (Eigen::Index i = 0; i < t_.rows(); ++i) {
            if (i == r) continue;
            const double f = t_(i, c);
            if (f != 0.0) t_.row(i) -= f * t_.row(r);
        }
        basis_[static_cast<std::size_t>(r)] = c;
    }

    void price_out_basis() {
        for (Eigen::Index r = 0; r < rows(); ++r) {
            const double f = cost(basis_[static_cast<std::size_t>(r)]);
            if (f != 0.0) t_.row(rows()) -= f * t_.row(r);
        }
    }

    // Bland's rule: lowest-index improving column, lowest-index leaving basis
    // variable among ratio ties. Returns false when unbounded.
    bool optimize(Eigen::Index allowed_cols) {
        for (;;) {
            Eigen::Index enter = -1;
            for (Eigen::Index c = 0; c < allowed_cols; ++c) {
                if (cost(c) < -eps) {
                    enter = c;
                    break;
                }
            }
            if (enter < 0) return true;
            Eigen::Index leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (Eigen::Index r = 0; r < rows(); ++r) {
                const double a = t_(r, enter);
                if (a <= eps) continue;
                const double ratio = rhs(r) / a;
                if (leave < 0 || ratio < best - eps) {
                    best = ratio;
                    leave = r;
                } else if (ratio <= best + eps &&
                           basis_[static_cast<std::size_t>(r)] < basis_[static_cast<std::size_t>(leave)]) {
                    best = ratio;
                    leave = r;
                }
            }
            if (leave < 0) return false;
            pivot(leave, enter);
        }
    }

private:
    Matrix t_;
    std::vector<Eigen::Index> basis_;
};

}  // namespace detail

/// maximize c^T x subject to A x <= b, x free. Dense two-phase simplex.
inline LpResult lp_maximize(const Vector& c, const Matrix& a, const Vector& b) {
    const Eigen::Index m = a.rows();
    const Eigen::Index n = a.cols();
    if (c.size() != n || b.size() != m) throw DimensionError("lp dimension mismatch");
    // Columns: u (n), v (n), slack (m), artificial (one per negative rhs row).
    std::vector<Eigen::Index> art_rows;
    for (Eigen::Index i = 0; i < m; ++i)
        if (b(i) < 0.0) art_rows.push_back(i);
    const Eigen::Index n_art = static_cast<Eigen::Index>(art_rows.size());
    const Eigen::Index n_real = 2 * n + m;
    detail::SimplexTableau tab(m, n_real + n_art);

    Eigen::Index next_art = n_real;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double sign = b(i) < 0.0 ? -1.0 : 1.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            tab.at(i, j) = sign * a(i, j);
            tab.at(i, n + j) = -sign * a(i, j);
        }
        tab.at(i, 2 * n + i) = sign;
        tab.rhs(i) = sign * b(i);
        if (sign < 0.0) {
            tab.at(i, next_art) = 1.0;
            tab.basis()[static_cast<std::size_t>(i)] = next_art++;
        } else {
            tab.basis()[static_cast<std::size_t>(i)] = 2 * n + i;
        }
    }

    if (n_art > 0) {
        for (Eigen::Index j = n_real; j < n_real + n_art; ++j) tab.cost(j) = 1.0;
        tab.price_out_basis();
        tab.optimize(n_real + n_art);
        if (tab.objective() < -1e-8) return {LpStatus::infeasible, 0.0, {}};
        // Drive zero-level artificials out of the basis where possible.
        for (Eigen::Index r = 0; r < m; ++r) {
            if (tab.basis()[static_cast<std::size_t>(r)] < n_real) continue;
            for (Eigen::Index j = 0; j < n_real; ++j) {
                if (std::abs(tab.at(r, j)) > detail::SimplexTableau::eps) {
                    tab.pivot(r, j);
                    break;
                }
            }
        }
        for (Eigen::Index j = 0; j <= n_real + n_art; ++j) tab.cost(j) = 0.0;
    }

    for (Eigen::Index j = 0; j < n; ++j) {
        tab.cost(j) = -c(j);
        tab.cost(n + j) = c(j);
    }
    tab.price_out_basis();
    if (!tab.optimize(n_real)) return {LpStatus::unbounded, std::numeric_limits<double>::infinity(), {}};

    Vector x = Vector::Zero(n);
    for (Eigen::Index r = 0; r < m; ++r) {
        const Eigen::Index bv = tab.basis()[static_cast<std::size_t>(r)];
        if (bv < n) x(bv) += tab.rhs(r);
        else if (bv < 2 * n) x(bv - n) -= tab.rhs(r);
    }
    return {LpStatus::optimal, c.dot(x), x};
}

struct VariableBound {
    LpStatus status = LpStatus::infeasible;  // optimal means both bounds are finite
    std::optional<Interval> bounds;
};

/// [min x_index, max x_index] over the polytope {x : q_j^T x <= r_j}.
inline VariableBound bound_variable(std::span<const HalfSpace> constraints, std::size_t index) {
    if (constraints.empty()) return {LpStatus::unbounded, std::nullopt};
    const Eigen::Index n = constraints.front().dim();
    if (static_cast<Eigen::Index>(index) >= n) throw DimensionError("bound_variable index out of range");
    Matrix a(static_cast<Eigen::Index>(constraints.size()), n);
    Vector b(a.rows());
    for (std::size_t i = 0; i < constraints.size(); ++i) {
        if (constraints[i].dim() != n) throw DimensionError("constraints differ in dimension");
        a.row(static_cast<Eigen::Index>(i)) = constraints[i].normal().transpose();
        b(static_cast<Eigen::Index>(i)) = constraints[i].offset();
    }
    Vector c = Vector::Zero(n);
    c(static_cast<Eigen::Index>(index)) = 1.0;
    const LpResult hi = lp_maximize(c, a, b);
    if (hi.status != LpStatus::optimal) return {hi.status, std::nullopt};
    const LpResult lo = lp_maximize(-c, a, b);
    if (lo.status != LpStatus::optimal) return {lo.status, std::nullopt};
    const double l = -lo.value;
    const double h = hi.value;
    return {LpStatus::optimal, Interval(std::min(l, h), std::max(l, h))};
}

}  // namespace koopman_reach
