// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <vector>

#include "koopman_reach/errors.hpp"

namespace koopman_reach {

namespace rounding {

inline double down(double x) { return std::nextafter(x, -std::numeric_limits<double>::infinity()); }
inline double up(double x) { return std::nextafter(x, std::numeric_limits<double>::infinity()); }

// Directed rounding emulated with error-free transformations: the
// round-to-nearest result is stepped one ulp outward only when the exact
// value lies on the other side of it.
inline double add_down(double a, double b) {
    const double s = a + b;
    const double bb = s - a;
    const double err = (a - (s - bb)) + (b - bb);
    return err < 0.0 ? down(s) : s;
}
inline double add_up(double a, double b) {
    const double s = a + b;
    const double bb = s - a;
    const double err = (a - (s - bb)) + (b - bb);
    return err > 0.0 ? up(s) : s;
}
inline double mul_down(double a, double b) {
    const double p = a * b;
    if (!std::isfinite(p)) return p;
    return std::fma(a, b, -p) < 0.0 ? down(p) : p;
}
inline double mul_up(double a, double b) {
    const double p = a * b;
    if (!std::isfinite(p)) return p;
    return std::fma(a, b, -p) > 0.0 ? up(p) : p;
}
// a / b = q + r / b with r = a - q*b exact.
inline double div_down(double a, double b) {
    const double q = a / b;
    if (!std::isfinite(q)) return q;
    const double r = std::fma(-q, b, a);
    return (r != 0.0 && ((r < 0.0) != (b < 0.0))) ? down(q) : q;
}
inline double div_up(double a, double b) {
    const double q = a / b;
    if (!std::isfinite(q)) return q;
    const double r = std::fma(-q, b, a);
    return (r != 0.0 && ((r < 0.0) == (b < 0.0))) ? up(q) : q;
}

}  // namespace rounding

/// Closed interval [lo, hi] with finite endpoints.
class Interval {
public:
    constexpr Interval() = default;
    Interval(double lo, double hi) : lo_(lo), hi_(hi) {
        if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
            std::ostringstream os;
            os << "invalid interval [" << lo << ", " << hi << "]";
            throw NumericError(os.str());
        }
    }
    static Interval point(double x) { return {x, x}; }

    double lo() const { return lo_; }
    double hi() const { return hi_; }
    double width() const { return hi_ - lo_; }
    double mid() const { return lo_ + 0.5 * (hi_ - lo_); }
    double rad() const { return 0.5 * (hi_ - lo_); }
    double mag() const { return std::max(std::abs(lo_), std::abs(hi_)); }
    bool is_point() const { return lo_ == hi_; }
    bool contains(double x) const { return lo_ <= x && x <= hi_; }
    bool contains(const Interval& o) const { return lo_ <= o.lo_ && o.hi_ <= hi_; }
    bool contains_zero() const { return lo_ <= 0.0 && 0.0 <= hi_; }

    std::optional<Interval> intersect(const Interval& o) const {
        const double l = std::max(lo_, o.lo_);
        const double h = std::min(hi_, o.hi_);
        if (l > h) return std::nullopt;
        return Interval(l, h);
    }
    Interval hull(const Interval& o) const { return {std::min(lo_, o.lo_), std::max(hi_, o.hi_)}; }

    friend bool operator==(const Interval&, const Interval&) = default;

private:
    double lo_ = 0.0;
    double hi_ = 0.0;
};

inline std::ostream& operator<<(std::ostream& os, const Interval& a) {
    return os << '[' << a.lo() << ',' << a.hi() << ']';
}

enum class BinaryOp { add, sub, mul, div };
enum class UnaryOp { neg, pow, sin, cos, exp };

inline Interval operator+(const Interval& a, const Interval& b) {
    return {rounding::add_down(a.lo(), b.lo()), rounding::add_up(a.hi(), b.hi())};
}
inline Interval operator-(const Interval& a) { return {-a.hi(), -a.lo()}; }
inline Interval operator-(const Interval& a, const Interval& b) {
    return {rounding::add_down(a.lo(), -b.hi()), rounding::add_up(a.hi(), -b.lo())};
}

inline Interval operator*(const Interval& a, const Interval& b) {
    const double l[4] = {rounding::mul_down(a.lo(), b.lo()), rounding::mul_down(a.lo(), b.hi()),
                         rounding::mul_down(a.hi(), b.lo()), rounding::mul_down(a.hi(), b.hi())};
    const double h[4] = {rounding::mul_up(a.lo(), b.lo()), rounding::mul_up(a.lo(), b.hi()),
                         rounding::mul_up(a.hi(), b.lo()), rounding::mul_up(a.hi(), b.hi())};
    return {*std::min_element(l, l + 4), *std::max_element(h, h + 4)};
}

/// Throws DivisionByZeroInterval when the divisor contains zero.
inline Interval operator/(const Interval& a, const Interval& b) {
    if (b.contains_zero()) throw DivisionByZeroInterval("interval division by an interval containing zero");
    const double l[4] = {rounding::div_down(a.lo(), b.lo()), rounding::div_down(a.lo(), b.hi()),
                         rounding::div_down(a.hi(), b.lo()), rounding::div_down(a.hi(), b.hi())};
    const double h[4] = {rounding::div_up(a.lo(), b.lo()), rounding::div_up(a.lo(), b.hi()),
                         rounding::div_up(a.hi(), b.lo()), rounding::div_up(a.hi(), b.hi())};
    return {*std::min_element(l, l + 4), *std::max_element(h, h + 4)};
}

inline Interval operator*(double s, const Interval& a) { return Interval::point(s) * a; }

namespace detail {

// |x|^k for x >= 0 with the given rounding direction.
inline double pow_nonneg(double x, int k, bool upward) {
    double r = 1.0;
    double base = x;
    int e = k;
    // Monotone for nonnegative operands, so rounding each product in one
    // direction bounds the exact power.
    while (e > 0) {
        if (e & 1) r = upward ? rounding::mul_up(r, base) : rounding::mul_down(r, base);
        e >>= 1;
        if (e > 0) base = upward ? rounding::mul_up(base, base) : rounding::mul_down(base, base);
    }
    return r;
}

// Two-ulp widening for libm transcendental results, clamped to [lo_cap, hi_cap].
inline double widen_down(double x, double cap) { return std::max(cap, rounding::down(rounding::down(x))); }
inline double widen_up(double x, double cap) { return std::min(cap, rounding::up(rounding::up(x))); }

// sin/cos value at an endpoint; exact when the endpoint is zero.
inline Interval sin_at(double x) {
    if (x == 0.0) return Interval::point(0.0);
    const double s = std::sin(x);
    return {widen_down(s, -1.0), widen_up(s, 1.0)};
}
inline Interval cos_at(double x) {
    if (x == 0.0) return Interval::point(1.0);
    const double c = std::cos(x);
    return {widen_down(c, -1.0), widen_up(c, 1.0)};
}

// True when some x = offset + 2*pi*k may lie in [lo, hi]. Errs towards true.
inline bool may_contain_phase(double lo, double hi, double offset) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double slack = 1e-12 * std::max({1.0, std::abs(lo), std::abs(hi)});
    const double k = std::ceil((lo - offset - slack) / two_pi);
    return offset + two_pi * k <= hi + slack;
}

}  // namespace detail

inline Interval pow(const Interval& a, int k) {
    if (k < 0) throw NumericError("negative interval power");
    if (k == 0) return Interval::point(1.0);
    if (k == 1) return a;
    const double alo = std::abs(a.lo());
    const double ahi = std::abs(a.hi());
    if (k % 2 == 0) {
        if (a.contains_zero()) return {0.0, detail::pow_nonneg(std::max(alo, ahi), k, true)};
        const double small = std::min(alo, ahi);
        const double big = std::max(alo, ahi);
        return {detail::pow_nonneg(small, k, false), detail::pow_nonneg(big, k, true)};
    }
    const double lo = a.lo() >= 0.0 ? detail::pow_nonneg(alo, k, false) : -detail::pow_nonneg(alo, k, true);
    const double hi = a.hi() >= 0.0 ? detail::pow_nonneg(ahi, k, true) : -detail::pow_nonneg(ahi, k, false);
    return {lo, hi};
}

inline Interval sin(const Interval& a) {
    constexpr double half_pi = 0.5 * std::numbers::pi;
    if (a.width() >= 2.0 * std::numbers::pi) return {-1.0, 1.0};
    Interval r = detail::sin_at(a.lo()).hull(detail::sin_at(a.hi()));
    const double lo = detail::may_contain_phase(a.lo(), a.hi(), -half_pi) ? -1.0 : r.lo();
    const double hi = detail::may_contain_phase(a.lo(), a.hi(), half_pi) ? 1.0 : r.hi();
    return {lo, hi};
}

inline Interval cos(const Interval& a) {
    if (a.width() >= 2.0 * std::numbers::pi) return {-1.0, 1.0};
    Interval r = detail::cos_at(a.lo()).hull(detail::cos_at(a.hi()));
    const double lo = detail::may_contain_phase(a.lo(), a.hi(), std::numbers::pi) ? -1.0 : r.lo();
    const double hi = detail::may_contain_phase(a.lo(), a.hi(), 0.0) ? 1.0 : r.hi();
    return {lo, hi};
}

inline Interval exp(const Interval& a) {
    auto at = [](double x, bool upward) {
        if (x == 0.0) return 1.0;
        const double e = std::exp(x);
        return upward ? detail::widen_up(e, std::numeric_limits<double>::max())
                      : detail::widen_down(e, 0.0);
    };
    return {at(a.lo(), false), at(a.hi(), true)};
}

inline Interval interval_binary(BinaryOp op, const Interval& a, const Interval& b) {
    switch (op) {
        case BinaryOp::add: return a + b;
        case BinaryOp::sub: return a - b;
        case BinaryOp::mul: return a * b;
        case BinaryOp::div: return a / b;
    }
    throw NumericError("unknown binary op");
}

inline Interval interval_unary(UnaryOp op, const Interval& a, int k = 0) {
    switch (op) {
        case UnaryOp::neg: return -a;
        case UnaryOp::pow: return pow(a, k);
        case UnaryOp::sin: return sin(a);
        case UnaryOp::cos: return cos(a);
        case UnaryOp::exp: return exp(a);
    }
    throw NumericError("unknown unary op");
}

/// Axis-aligned box; one Interval per dimension, at least one dimension.
class IntervalBox {
public:
    IntervalBox() = default;
    explicit IntervalBox(std::vector<Interval> dims) : dims_(std::move(dims)) {
        if (dims_.empty()) throw DimensionError("interval box needs at least one dimension");
    }
    IntervalBox(std::initializer_list<Interval> dims) : IntervalBox(std::vector<Interval>(dims)) {}

    static IntervalBox from_bounds(std::span<const double> lo, std::span<const double> hi) {
        if (lo.size() != hi.size()) throw DimensionError("bound vectors differ in length");
        std::vector<Interval> d;
        d.reserve(lo.size());
        for (std::size_t i = 0; i < lo.size(); ++i) d.emplace_back(lo[i], hi[i]);
        return IntervalBox(std::move(d));
    }
    static IntervalBox point(std::span<const double> x) { return from_bounds(x, x); }

    std::size_t size() const { return dims_.size(); }
    const Interval& operator[](std::size_t i) const { return dims_[i]; }
    Interval& operator[](std::size_t i) { return dims_[i]; }
    auto begin() const { return dims_.begin(); }
    auto end() const { return dims_.end(); }
    const std::vector<Interval>& dims() const { return dims_; }

    std::vector<double> midpoint() const {
        std::vector<double> m(dims_.size());
        for (std::size_t i = 0; i < dims_.size(); ++i) m[i] = dims_[i].mid();
        return m;
    }
    double max_width() const {
        double w = 0.0;
        for (const auto& d : dims_) w = std::max(w, d.width());
        return w;
    }
    /// Lowest index among the widest dimensions.
    std::size_t widest_dim() const {
        std::size_t best = 0;
        for (std::size_t i = 1; i < dims_.size(); ++i)
            if (dims_[i].width() > dims_[best].width()) best = i;
        return best;
    }
    bool contains(std::span<const double> x) const {
        if (x.size() != dims_.size()) return false;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (!dims_[i].contains(x[i])) return false;
        return true;
    }
    bool contains(const IntervalBox& o) const {
        if (o.size() != size()) return false;
        for (std::size_t i = 0; i < size(); ++i)
            if (!dims_[i].contains(o[i])) return false;
        return true;
    }
    std::optional<IntervalBox> intersect(const IntervalBox& o) const {
        if (o.size() != size()) throw DimensionError("box dimension mismatch");
        std::vector<Interval> d;
        d.reserve(size());
        for (std::size_t i = 0; i < size(); ++i) {
            auto x = dims_[i].intersect(o[i]);
            if (!x) return std::nullopt;
            d.push_back(*x);
        }
        return IntervalBox(std::move(d));
    }
    /// Leading dimensions [0, n).
    IntervalBox head(std::size_t n) const {
        return IntervalBox(std::vector<Interval>(dims_.begin(), dims_.begin() + static_cast<std::ptrdiff_t>(n)));
    }

    friend bool operator==(const IntervalBox&, const IntervalBox&) = default;

private:
    std::vector<Interval> dims_;
};

/// Text form used in logs: Box{[lo,hi];[lo,hi]}.
inline std::ostream& operator<<(std::ostream& os, const IntervalBox& b) {
    os << "Box{";
    for (std::size_t i = 0; i < b.size(); ++i) os << (i ? ";" : "") << b[i];
    return os << '}';
}

}  // namespace koopman_reach
