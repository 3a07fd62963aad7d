// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <ostream>
#include <utility>

#include "koopman_reach/errors.hpp"
#include "koopman_reach/linalg.hpp"

namespace koopman_reach {

/// The set {y : q^T y <= r}.
class HalfSpace {
public:
    HalfSpace(Vector normal, double offset) : q_(std::move(normal)), r_(offset) {
        if (q_.size() == 0) throw DimensionError("half-space over an empty space");
        if (!q_.allFinite() || !std::isfinite(r_)) throw NumericError("half-space with non-finite data");
        if (q_.isZero(0.0)) throw NumericError("half-space normal must be nonzero");
    }

    /// Image of a pull-back; the normal may vanish when the map is singular.
    static HalfSpace pulled_back(Vector normal, double offset) {
        HalfSpace h;
        h.q_ = std::move(normal);
        h.r_ = offset;
        return h;
    }

    const Vector& normal() const { return q_; }
    double offset() const { return r_; }
    Eigen::Index dim() const { return q_.size(); }
    bool is_trivial() const { return q_.isZero(0.0); }

    /// q^T y - r; nonpositive inside.
    double slack(const Vector& y) const { return q_.dot(y) - r_; }
    bool contains(const Vector& y, double tol = 0.0) const { return slack(y) <= tol; }

private:
    HalfSpace() = default;
    Vector q_;
    double r_ = 0.0;
};

/// Text form used in logs: HalfSpace{q1,q2;r}.
inline std::ostream& operator<<(std::ostream& os, const HalfSpace& h) {
    os << "HalfSpace{";
    for (Eigen::Index i = 0; i < h.dim(); ++i) os << (i ? "," : "") << h.normal()(i);
    return os << ';' << h.offset() << '}';
}

}  // namespace koopman_reach
