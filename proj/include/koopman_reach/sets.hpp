// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "koopman_reach/errors.hpp"
#include "koopman_reach/halfspace.hpp"
#include "koopman_reach/interval.hpp"
#include "koopman_reach/linalg.hpp"
#include "koopman_reach/observables.hpp"

namespace koopman_reach {

/// Conjunction of half-spaces over the state space.
class UnsafeSet {
public:
    explicit UnsafeSet(std::vector<HalfSpace> constraints) : cs_(std::move(constraints)) {
        if (cs_.empty()) throw DimensionError("unsafe set needs at least one constraint");
        for (const auto& h : cs_)
            if (h.dim() != cs_.front().dim()) throw DimensionError("unsafe constraints differ in dimension");
    }

    const std::vector<HalfSpace>& constraints() const { return cs_; }
    Eigen::Index dim() const { return cs_.front().dim(); }

    bool contains(const Vector& x, double tol = 0.0) const {
        for (const auto& h : cs_)
            if (!h.contains(x, tol)) return false;
        return true;
    }

    /// Largest constraint slack; positive means outside.
    double violation(const Vector& x) const {
        double v = -std::numeric_limits<double>::infinity();
        for (const auto& h : cs_) v = std::max(v, h.slack(x));
        return v;
    }

private:
    std::vector<HalfSpace> cs_;
};

/// {c + G a : a in domain}.
class Zonotope {
public:
    Zonotope(Vector center, Matrix generators, IntervalBox domain)
        : c_(std::move(center)), g_(std::move(generators)), dom_(std::move(domain)) {
        if (g_.rows() != c_.size()) throw DimensionError("generator rows must match the center");
        if (static_cast<std::size_t>(g_.cols()) != dom_.size())
            throw DimensionError("generator count must match the domain dimension");
    }

    /// The box itself as a zonotope: zero center, identity generators.
    static Zonotope from_box(const IntervalBox& box) {
        const auto k = static_cast<Eigen::Index>(box.size());
        return Zonotope(Vector::Zero(k), Matrix::Identity(k, k), box);
    }

    const Vector& center() const { return c_; }
    const Matrix& generators() const { return g_; }
    const IntervalBox& domain() const { return dom_; }
    Eigen::Index dim() const { return c_.size(); }

    Vector at(const Vector& alpha) const { return c_ + g_ * alpha; }

    Zonotope with_domain(IntervalBox d) const { return Zonotope(c_, g_, std::move(d)); }

private:
    Vector c_;
    Matrix g_;
    IntervalBox dom_;
};

/// State constraint c^T x <= d becomes (M^T c)^T y <= d in the lifted space.
inline std::vector<HalfSpace> lift_unsafe(const UnsafeSet& u, std::size_t lifted_dim) {
    if (static_cast<std::size_t>(u.dim()) > lifted_dim) throw DimensionError("lifted space is too small");
    std::vector<HalfSpace> out;
    for (const auto& h : u.constraints()) {
        Vector q = Vector::Zero(static_cast<Eigen::Index>(lifted_dim));
        q.head(h.dim()) = h.normal();
        out.emplace_back(std::move(q), h.offset());
    }
    return out;
}

inline std::vector<HalfSpace> lift_unsafe(const UnsafeSet& u, const Dictionary& dict) {
    if (static_cast<std::size_t>(u.dim()) != dict.state_dim()) throw DimensionError("unsafe set dimension differs");
    return lift_unsafe(u, dict.size());
}

/// Pre-image of q^T y <= r under y -> K y, i.e. (K^T q)^T y <= r.
inline HalfSpace backpropagate_halfspace(const Matrix& k, const HalfSpace& hs) {
    if (k.rows() != k.cols() || k.rows() != hs.dim()) throw DimensionError("backpropagation dimension mismatch");
    return HalfSpace::pulled_back(k.transpose() * hs.normal(), hs.offset());
}

/// K applied to the box: center K mid, generators K diag(rad), domain [-1,1]^k.
inline Zonotope reach_zonotope(const IntervalBox& init_obs, const Matrix& k) {
    const auto n = static_cast<Eigen::Index>(init_obs.size());
    if (k.cols() != n) throw DimensionError("reach_zonotope dimension mismatch");
    Vector mid(n), rad(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        mid(j) = init_obs[static_cast<std::size_t>(j)].mid();
        rad(j) = init_obs[static_cast<std::size_t>(j)].rad();
    }
    return Zonotope(k * mid, k * rad.asDiagonal(), IntervalBox(std::vector<Interval>(init_obs.size(), Interval(-1.0, 1.0))));
}

/// max over the zonotope of d^T y.
inline double support(const Zonotope& z, const Vector& d) {
    if (d.size() != z.dim()) throw DimensionError("support direction has wrong size");
    const Vector a = z.generators().transpose() * d;
    double s = d.dot(z.center());
    for (Eigen::Index j = 0; j < a.size(); ++j) {
        const Interval& iv = z.domain()[static_cast<std::size_t>(j)];
        s += std::max(a(j) * iv.lo(), a(j) * iv.hi());
    }
    return s;
}

namespace detail {

inline std::optional<IntervalBox> contract_linear(const double* a, double b, const IntervalBox& box) {
    const std::size_t n = box.size();
    // Lower bounds of each term a_j x_j, then prefix/suffix sums of the others,
    // all rounded downward so the derived budgets stay sound.
    std::vector<double> term_lo(n), prefix(n + 1, 0.0), suffix(n + 1, 0.0);
    for (std::size_t j = 0; j < n; ++j)
        term_lo[j] = a[j] == 0.0 ? 0.0
                                 : std::min(rounding::mul_down(a[j], box[j].lo()), rounding::mul_down(a[j], box[j].hi()));
    for (std::size_t j = 0; j < n; ++j) prefix[j + 1] = rounding::add_down(prefix[j], term_lo[j]);
    for (std::size_t j = n; j-- > 0;) suffix[j] = rounding::add_down(suffix[j + 1], term_lo[j]);
    if (prefix[n] > b) return std::nullopt;
    IntervalBox out = box;
    for (std::size_t j = 0; j < n; ++j) {
        if (a[j] == 0.0) continue;
        const double budget = rounding::add_up(b, -rounding::add_down(prefix[j], suffix[j + 1]));
        const Interval& xj = out[j];
        if (a[j] > 0.0) {
            const double ub = rounding::div_up(budget, a[j]);
            if (ub < xj.lo()) return std::nullopt;
            if (ub < xj.hi()) out[j] = Interval(xj.lo(), ub);
        } else {
            const double lb = rounding::div_down(budget, a[j]);
            if (lb > xj.hi()) return std::nullopt;
            if (lb > xj.lo()) out[j] = Interval(lb, xj.hi());
        }
    }
    return out;
}

}  // namespace detail

/// Contracts the box under sum_j a_j x_j <= b, tightening each x_j with
/// interval bounds of the other terms. nullopt means infeasible over the box.
inline std::optional<IntervalBox> contract_linear(const Vector& a, double b, const IntervalBox& box) {
    if (static_cast<std::size_t>(a.size()) != box.size()) throw DimensionError("contract_linear dimension mismatch");
    return detail::contract_linear(a.data(), b, box);
}

/// Contracts the domain of z under hs, mapped to domain coordinates:
/// sum_j (q^T g_j) a_j <= r - q^T c.
inline std::optional<IntervalBox> contract_domain(const Zonotope& z, const HalfSpace& hs) {
    if (hs.dim() != z.dim()) throw DimensionError("contract_domain dimension mismatch");
    const Vector a = z.generators().transpose() * hs.normal();
    if (z.center().isZero(0.0) && z.generators().isIdentity(0.0)) return contract_linear(a, hs.offset(), z.domain());
    double qc_hi = 0.0;
    for (Eigen::Index i = 0; i < z.dim(); ++i) {
        const double qi = hs.normal()(i);
        if (qi != 0.0) qc_hi = rounding::add_up(qc_hi, rounding::mul_up(qi, z.center()(i)));
    }
    // The coefficients q^T g_j carry floating-point error; widen the budget by
    // a bound on its effect over the domain.
    double err = 0.0;
    for (Eigen::Index j = 0; j < a.size(); ++j)
        err += (z.generators().col(j).cwiseAbs().dot(hs.normal().cwiseAbs())) * z.domain()[static_cast<std::size_t>(j)].mag();
    const double slack = 2.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(z.dim() + 1) * err;
    const double rhs = rounding::add_up(rounding::add_down(hs.offset(), -qc_hi), slack);
    return contract_linear(a, rhs, z.domain());
}

/// Bisects the widest dimension (lowest index on ties) at its midpoint.
inline std::pair<IntervalBox, IntervalBox> split_box(const IntervalBox& box) {
    const std::size_t d = box.widest_dim();
    const Interval& iv = box[d];
    if (!(iv.width() > 0.0)) throw NumericError("cannot split a box with no positive-width dimension");
    const double m = iv.mid();
    IntervalBox left = box, right = box;
    left[d] = Interval(iv.lo(), m);
    right[d] = Interval(m, iv.hi());
    return {std::move(left), std::move(right)};
}

/// Text form used in logs.
inline std::ostream& operator<<(std::ostream& os, const Zonotope& z) {
    os << "Zonotope{c=";
    for (Eigen::Index i = 0; i < z.dim(); ++i) os << (i ? "," : "") << z.center()(i);
    return os << ";gens=" << z.generators().cols() << ";domain=" << z.domain() << '}';
}

}  // namespace koopman_reach
