// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "koopman_reach/expr.hpp"
#include "koopman_reach/interval.hpp"

namespace koopman_reach {

namespace detail {

// Smallest double r >= 0 with r^k >= v (v >= 0).
inline double root_up(double v, int k) {
    if (v <= 0.0) return 0.0;
    double r = std::pow(v, 1.0 / k);
    while (pow_nonneg(r, k, false) < v) r = rounding::up(r);
    return r;
}

// Largest double r >= 0 with r^k <= v (v >= 0).
inline double root_down(double v, int k) {
    if (v <= 0.0) return 0.0;
    double r = std::pow(v, 1.0 / k);
    while (r > 0.0 && pow_nonneg(r, k, true) > v) r = rounding::down(r);
    return r;
}

inline std::optional<Interval> meet(const Interval& a, double lo, double hi) {
    const double l = std::max(a.lo(), lo);
    const double h = std::min(a.hi(), hi);
    if (l > h) return std::nullopt;
    return Interval(l, h);
}

}  // namespace detail

/// Expression DAG flattened into a post-order instruction list. Shared
/// subexpressions occupy a single slot.
class Tape {
public:
    struct Instr {
        ExprKind kind;
        int index;     // variable index or exponent
        double value;  // constant value
        std::size_t first_arg;
        std::size_t n_args;
    };

    Tape() = default;

    explicit Tape(std::span<const Expr> roots) {
        std::unordered_map<const Expr::Node*, std::size_t> slot;
        for (const auto& r : roots) roots_.push_back(compile(r, slot));
    }

    std::size_t size() const { return code_.size(); }
    const std::vector<std::size_t>& roots() const { return roots_; }
    const std::vector<Instr>& code() const { return code_; }
    std::span<const std::size_t> args_of(const Instr& in) const { return {args_.data() + in.first_arg, in.n_args}; }

    void eval(std::span<const double> x, double t, std::vector<double>& v) const {
        v.resize(code_.size());
        for (std::size_t i = 0; i < code_.size(); ++i) {
            const Instr& in = code_[i];
            const auto a = args_of(in);
            switch (in.kind) {
                case ExprKind::constant: v[i] = in.value; break;
                case ExprKind::variable: v[i] = x[static_cast<std::size_t>(in.index)]; break;
                case ExprKind::time: v[i] = t; break;
                case ExprKind::add: {
                    double s = 0.0;
                    for (auto j : a) s += v[j];
                    v[i] = s;
                    break;
                }
                case ExprKind::mul: {
                    double p = 1.0;
                    for (auto j : a) p *= v[j];
                    v[i] = p;
                    break;
                }
                case ExprKind::pow: v[i] = detail::int_pow(v[a[0]], in.index); break;
                case ExprKind::sin: v[i] = std::sin(v[a[0]]); break;
                case ExprKind::cos: v[i] = std::cos(v[a[0]]); break;
            }
        }
    }

    void eval(std::span<const Interval> x, const Interval& t, std::vector<Interval>& v) const {
        v.resize(code_.size());
        for (std::size_t i = 0; i < code_.size(); ++i) {
            const Instr& in = code_[i];
            const auto a = args_of(in);
            switch (in.kind) {
                case ExprKind::constant: v[i] = Interval::point(in.value); break;
                case ExprKind::variable: v[i] = x[static_cast<std::size_t>(in.index)]; break;
                case ExprKind::time: v[i] = t; break;
                case ExprKind::add: {
                    Interval s = v[a[0]];
                    for (std::size_t j = 1; j < a.size(); ++j) s = s + v[a[j]];
                    v[i] = s;
                    break;
                }
                case ExprKind::mul: {
                    Interval p = v[a[0]];
                    for (std::size_t j = 1; j < a.size(); ++j) p = p * v[a[j]];
                    v[i] = p;
                    break;
                }
                case ExprKind::pow: v[i] = pow(v[a[0]], in.index); break;
                case ExprKind::sin: v[i] = sin(v[a[0]]); break;
                case ExprKind::cos: v[i] = cos(v[a[0]]); break;
            }
        }
    }

    std::vector<double> eval_roots(std::span<const double> x, double t = 0.0) const {
        std::vector<double> v;
        eval(x, t, v);
        std::vector<double> out;
        out.reserve(roots_.size());
        for (auto r : roots_) out.push_back(v[r]);
        return out;
    }

    std::vector<Interval> eval_roots(std::span<const Interval> x, const Interval& t = Interval::point(0.0)) const {
        std::vector<Interval> v;
        eval(x, t, v);
        std::vector<Interval> out;
        out.reserve(roots_.size());
        for (auto r : roots_) out.push_back(v[r]);
        return out;
    }

    /// Backward pass of HC4-revise. Expects v from a forward pass with root
    /// slots already narrowed by the caller; narrows x in place. Returns false
    /// when some slot becomes empty.
    bool backward(std::vector<Interval>& v, std::span<Interval> x) const {
        std::vector<Interval> prefix;
        std::vector<Interval> suffix;
        for (std::size_t ii = code_.size(); ii-- > 0;) {
            const Instr& in = code_[ii];
            const auto a = args_of(in);
            const Interval z = v[ii];
            switch (in.kind) {
                case ExprKind::constant:
                    if (!z.contains(in.value)) return false;
                    break;
                case ExprKind::variable: {
                    auto& xi = x[static_cast<std::size_t>(in.index)];
                    auto m = xi.intersect(z);
                    if (!m) return false;
                    xi = *m;
                    break;
                }
                case ExprKind::time: break;
                case ExprKind::add: {
                    const std::size_t n = a.size();
                    prefix.assign(n + 1, Interval::point(0.0));
                    suffix.assign(n + 1, Interval::point(0.0));
                    for (std::size_t j = 0; j < n; ++j) prefix[j + 1] = prefix[j] + v[a[j]];
                    for (std::size_t j = n; j-- > 0;) suffix[j] = suffix[j + 1] + v[a[j]];
                    for (std::size_t j = 0; j < n; ++j) {
                        const Interval proj = z - (prefix[j] + suffix[j + 1]);
                        auto m = v[a[j]].intersect(proj);
                        if (!m) return false;
                        v[a[j]] = *m;
                    }
                    break;
                }
                case ExprKind::mul: {
                    const std::size_t n = a.size();
                    prefix.assign(n + 1, Interval::point(1.0));
                    suffix.assign(n + 1, Interval::point(1.0));
                    for (std::size_t j = 0; j < n; ++j) prefix[j + 1] = prefix[j] * v[a[j]];
                    for (std::size_t j = n; j-- > 0;) suffix[j] = suffix[j + 1] * v[a[j]];
                    if (!z.contains_zero() && prefix[n].lo() > z.hi()) return false;
                    for (std::size_t j = 0; j < n; ++j) {
                        const Interval others = prefix[j] * suffix[j + 1];
                        if (others.contains_zero()) continue;
                        auto m = v[a[j]].intersect(z / others);
                        if (!m) return false;
                        v[a[j]] = *m;
                    }
                    break;
                }
                case ExprKind::pow: {
                    auto& b = v[a[0]];
                    const int k = in.index;
                    if (k % 2 == 0) {
                        if (z.hi() < 0.0) return false;
                        const double rh = detail::root_up(z.hi(), k);
                        const double rl = z.lo() > 0.0 ? detail::root_down(z.lo(), k) : 0.0;
                        auto neg = detail::meet(b, -rh, -rl);
                        auto pos = detail::meet(b, rl, rh);
                        if (!neg && !pos) return false;
                        if (neg && pos) b = neg->hull(*pos);
                        else b = neg ? *neg : *pos;
                    } else {
                        const double lo = z.lo() >= 0.0 ? detail::root_down(z.lo(), k) : -detail::root_up(-z.lo(), k);
                        const double hi = z.hi() >= 0.0 ? detail::root_up(z.hi(), k) : -detail::root_down(-z.hi(), k);
                        auto m = detail::meet(b, lo, hi);
                        if (!m) return false;
                        b = *m;
                    }
                    break;
                }
                case ExprKind::sin:
                case ExprKind::cos:
                    if (z.hi() < -1.0 || z.lo() > 1.0) return false;
                    break;
            }
        }
        return true;
    }

private:
    std::size_t compile(const Expr& e, std::unordered_map<const Expr::Node*, std::size_t>& slot) {
        if (auto it = slot.find(e.id()); it != slot.end()) return it->second;
        std::vector<std::size_t> a;
        a.reserve(e.args().size());
        for (const auto& c : e.args()) a.push_back(compile(c, slot));
        Instr in{e.kind(), e.kind() == ExprKind::variable || e.kind() == ExprKind::pow ? e.index() : 0,
                 e.is_constant() ? e.value() : 0.0, args_.size(), a.size()};
        args_.insert(args_.end(), a.begin(), a.end());
        code_.push_back(in);
        slot.emplace(e.id(), code_.size() - 1);
        return code_.size() - 1;
    }

    std::vector<Instr> code_;
    std::vector<std::size_t> args_;
    std::vector<std::size_t> roots_;
};

}  // namespace koopman_reach
