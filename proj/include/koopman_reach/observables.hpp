// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <utility>
#include <span>
#include <string>
#include <vector>

#include "koopman_reach/errors.hpp"
#include "koopman_reach/expr.hpp"
#include "koopman_reach/interval.hpp"
#include "koopman_reach/linalg.hpp"
#include "koopman_reach/models.hpp"
#include "koopman_reach/tape.hpp"

namespace koopman_reach {

/// Ordered observables g_1..g_k. The first n are the identity observables
/// x_1..x_n, so state recovery is a coordinate selection.
class Dictionary {
public:
    Dictionary(std::size_t state_dim, std::vector<Expr> exprs) : n_(state_dim), exprs_(std::move(exprs)) {
        if (n_ == 0) throw DimensionError("dictionary needs a positive state dimension");
        if (exprs_.size() < n_) throw DimensionError("dictionary is shorter than the state dimension");
        for (std::size_t i = 0; i < n_; ++i)
            if (!(exprs_[i] == Expr::variable(static_cast<int>(i))))
                throw DimensionError("dictionary must start with the identity observables");
        for (std::size_t i = 0; i < exprs_.size(); ++i) {
            if (max_variable_index(exprs_[i]) >= static_cast<int>(n_))
                throw DimensionError("observable references an undeclared variable: " + to_string(exprs_[i]));
            for (std::size_t j = 0; j < i; ++j)
                if (exprs_[i] == exprs_[j]) throw DimensionError("duplicate observable: " + to_string(exprs_[i]));
        }
        tape_ = std::make_shared<const Tape>(exprs_);
    }

    static Dictionary from_strings(std::size_t state_dim, std::span<const std::string> text) {
        std::vector<Expr> e;
        e.reserve(text.size());
        for (const auto& s : text) e.push_back(parse_expr(s));
        return Dictionary(state_dim, std::move(e));
    }

    std::size_t size() const { return exprs_.size(); }
    std::size_t state_dim() const { return n_; }
    const std::vector<Expr>& exprs() const { return exprs_; }
    const Expr& operator[](std::size_t i) const { return exprs_[i]; }
    const Tape& tape() const { return *tape_; }

    bool uses_time() const {
        for (const auto& e : exprs_)
            if (depends_on_time(e)) return true;
        return false;
    }

    std::vector<std::string> to_strings() const {
        std::vector<std::string> s;
        for (const auto& e : exprs_) s.push_back(to_string(e));
        return s;
    }

    /// n x k matrix selecting the identity coordinates.
    Matrix projection() const {
        Matrix m = Matrix::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(size()));
        for (std::size_t i = 0; i < n_; ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
        return m;
    }

private:
    std::size_t n_;
    std::vector<Expr> exprs_;
    std::shared_ptr<const Tape> tape_;
};

struct TrigSpec {
    int a_max = 0;
    int b_max = 0;
};

namespace detail {

// Exponent vectors of total degree `deg`, lexicographically descending.
inline void monomials_of_degree(std::size_t n, int deg, std::vector<int>& cur, std::size_t pos,
                                std::vector<std::vector<int>>& out) {
    if (pos + 1 == n) {
        cur[pos] = deg;
        out.push_back(cur);
        return;
    }
    for (int e = deg; e >= 0; --e) {
        cur[pos] = e;
        monomials_of_degree(n, deg - e, cur, pos + 1, out);
    }
    cur[pos] = 0;
}

inline Expr monomial(const std::vector<int>& exps) {
    std::vector<Expr> f;
    for (std::size_t i = 0; i < exps.size(); ++i)
        if (exps[i] > 0) f.push_back(Expr::power(Expr::variable(static_cast<int>(i)), exps[i]));
    return Expr::product(std::move(f));
}

}  // namespace detail

/// Monomials of total degree <= d in graded lexicographic order (1 first).
inline std::vector<Expr> graded_monomials(std::size_t n, int d) {
    std::vector<Expr> out;
    for (int deg = 0; deg <= d; ++deg) {
        std::vector<std::vector<int>> exps;
        std::vector<int> cur(n, 0);
        detail::monomials_of_degree(n, deg, cur, 0, exps);
        for (const auto& e : exps) out.push_back(detail::monomial(e));
    }
    return out;
}

/// Identity observables, then the remaining monomials of degree <= d (graded
/// lex, constant included), then sin(t)^a cos(t)^b times every monomial of
/// degree <= d for (a, b) != (0, 0), a outer loop, b inner loop.
inline Dictionary build_dictionary(std::size_t n, int max_poly_degree, TrigSpec trig = {}) {
    if (max_poly_degree < 1) throw DimensionError("polynomial degree must be at least 1");
    if (trig.a_max < 0 || trig.b_max < 0) throw DimensionError("trig degrees must be non-negative");
    std::vector<Expr> exprs;
    for (std::size_t i = 0; i < n; ++i) exprs.push_back(Expr::variable(static_cast<int>(i)));
    const auto monos = graded_monomials(n, max_poly_degree);
    for (const auto& m : monos)
        if (!(m.kind() == ExprKind::variable)) exprs.push_back(m);
    const Expr t = Expr::time();
    for (int a = 0; a <= trig.a_max; ++a) {
        for (int b = 0; b <= trig.b_max; ++b) {
            if (a == 0 && b == 0) continue;
            const Expr factor = Expr::power(Expr::sin(t), a) * Expr::power(Expr::cos(t), b);
            for (const auto& m : monos) exprs.push_back(factor * m);
        }
    }
    return Dictionary(n, std::move(exprs));
}

inline Vector lift_point(const Dictionary& dict, std::span<const double> x, double t = 0.0) {
    if (x.size() != dict.state_dim()) throw DimensionError("lift_point: state has wrong size");
    thread_local std::vector<double> scratch;
    dict.tape().eval(x, t, scratch);
    const auto& r = dict.tape().roots();
    Vector y(static_cast<Eigen::Index>(r.size()));
    for (std::size_t i = 0; i < r.size(); ++i) y(static_cast<Eigen::Index>(i)) = scratch[r[i]];
    return y;
}

inline Vector lift_point(const Dictionary& dict, const Vector& x, double t = 0.0) {
    return lift_point(dict, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), t);
}

inline IntervalBox lift_box(const Dictionary& dict, const IntervalBox& box,
                            const Interval& t = Interval::point(0.0)) {
    if (box.size() != dict.state_dim()) throw DimensionError("lift_box: box has wrong dimension");
    return IntervalBox(dict.tape().eval_roots(std::span<const Interval>(box.dims()), t));
}

/// d g_j / dt along the model's vector field, one expression per observable.
inline std::vector<Expr> differentiate_along(const Dictionary& dict, const OdeModel& model) {
    if (model.dim() != dict.state_dim()) throw DimensionError("model and dictionary dimensions differ");
    std::vector<Expr> out;
    out.reserve(dict.size());
    for (const auto& g : dict.exprs()) out.push_back(lie_derivative(g, model.field()));
    return out;
}

/// Coefficients c with e = sum_j c_j g_j after polynomial expansion, or
/// nullopt when e leaves the span of the dictionary.
inline std::optional<Vector> coordinates_in(const Dictionary& dict, const Expr& e) {
    std::vector<std::pair<double, Expr>> basis;
    for (const auto& g : dict.exprs()) basis.push_back(detail::coeff_term(expand(g)));
    Vector c = Vector::Zero(static_cast<Eigen::Index>(dict.size()));
    const Expr x = expand(e);
    if (x.is_constant(0.0)) return c;
    const std::vector<Expr> terms = x.kind() == ExprKind::add ? x.args() : std::vector<Expr>{x};
    for (const auto& t : terms) {
        const auto [coef, mono] = detail::coeff_term(t);
        bool found = false;
        for (std::size_t j = 0; j < basis.size(); ++j) {
            if (basis[j].second == mono) {
                c(static_cast<Eigen::Index>(j)) += coef / basis[j].first;
                found = true;
                break;
            }
        }
        if (!found) return std::nullopt;
    }
    return c;
}

/// Exact generator matrix when the dictionary spans an invariant subspace of
/// the model: row j holds the coordinates of d g_j / dt.
inline std::optional<Matrix> symbolic_generator(const Dictionary& dict, const OdeModel& model) {
    const auto d = differentiate_along(dict, model);
    Matrix k(static_cast<Eigen::Index>(dict.size()), static_cast<Eigen::Index>(dict.size()));
    for (std::size_t j = 0; j < d.size(); ++j) {
        auto c = coordinates_in(dict, d[j]);
        if (!c) return std::nullopt;
        k.row(static_cast<Eigen::Index>(j)) = c->transpose();
    }
    return k;
}

}  // namespace koopman_reach
