// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "koopman_reach/errors.hpp"
#include "koopman_reach/expr.hpp"
#include "koopman_reach/halfspace.hpp"
#include "koopman_reach/interval.hpp"
#include "koopman_reach/linalg.hpp"
#include "koopman_reach/sets.hpp"
#include "koopman_reach/tape.hpp"

namespace koopman_reach {

/// sum_k coeff_k v_k <= rhs over the system's variables (free, then defined).
struct LinearConstraint {
    std::vector<std::pair<std::size_t, double>> terms;
    double rhs = 0.0;
};

enum class Relation { le, ge, eq };

/// Free variables x0..x(n-1) with box bounds, defined variables y_j = g_j(x)
/// and linear constraints over (x, y). The nonlinear layer is the definitions.
class ConstraintSystem {
public:
    explicit ConstraintSystem(IntervalBox bounds) : bounds_(std::move(bounds)) {}

    std::size_t num_free() const { return bounds_.size(); }
    std::size_t num_defs() const { return defs_.size(); }
    std::size_t num_vars() const { return num_free() + num_defs(); }
    const IntervalBox& bounds() const { return bounds_; }
    const std::vector<Expr>& definitions() const { return defs_; }
    const std::vector<LinearConstraint>& linear() const { return linear_; }

    void set_bounds(IntervalBox b) {
        if (b.size() != bounds_.size()) throw DimensionError("bounds dimension differs");
        bounds_ = std::move(b);
    }

    /// Index of the variable equal to g (a new definition unless g is already
    /// defined or is a free variable).
    std::size_t define(const Expr& g) {
        if (depends_on_time(g)) throw DimensionError("constraint definitions must not depend on time");
        if (max_variable_index(g) >= static_cast<int>(num_free()))
            throw DimensionError("definition references an undeclared variable");
        if (g.kind() == ExprKind::variable) return static_cast<std::size_t>(g.index());
        if (g.is_constant()) throw DimensionError("constant definitions are folded, not defined");
        for (std::size_t j = 0; j < defs_.size(); ++j)
            if (defs_[j] == g) return num_free() + j;
        defs_.push_back(g);
        return num_free() + defs_.size() - 1;
    }

    void add_linear(LinearConstraint c) {
        for (const auto& [k, v] : c.terms) {
            if (k >= num_vars()) throw DimensionError("linear constraint references an unknown variable");
            if (!std::isfinite(v)) throw NumericError("non-finite linear coefficient");
        }
        if (!std::isfinite(c.rhs)) throw NumericError("non-finite right-hand side");
        linear_.push_back(std::move(c));
    }

    /// lhs REL rhs for an arbitrary expression over the free variables; the
    /// nonlinear monomials of the expanded lhs become definitions.
    void add_constraint(const Expr& lhs, Relation rel, double rhs) {
        const Expr e = expand(lhs);
        const std::vector<Expr> terms = e.kind() == ExprKind::add ? e.args() : std::vector<Expr>{e};
        LinearConstraint c;
        double r = rhs;
        for (const auto& t : terms) {
            auto [coef, mono] = detail::coeff_term(t);
            if (mono.is_constant(1.0)) {
                r -= coef;
                continue;
            }
            const std::size_t v = define(mono);
            auto it = std::find_if(c.terms.begin(), c.terms.end(), [&](const auto& p) { return p.first == v; });
            if (it == c.terms.end()) c.terms.emplace_back(v, coef);
            else it->second += coef;
        }
        std::sort(c.terms.begin(), c.terms.end());
        c.rhs = r;
        if (rel == Relation::le || rel == Relation::eq) add_linear(c);
        if (rel == Relation::ge || rel == Relation::eq) {
            LinearConstraint neg = c;
            for (auto& [k, v] : neg.terms) v = -v;
            neg.rhs = -c.rhs;
            add_linear(std::move(neg));
        }
    }

    /// Dense view of the linear constraints over all variables.
    std::vector<HalfSpace> linear_as_halfspaces() const {
        std::vector<HalfSpace> out;
        for (const auto& c : linear_) {
            Vector q = Vector::Zero(static_cast<Eigen::Index>(num_vars()));
            for (const auto& [k, v] : c.terms) q(static_cast<Eigen::Index>(k)) += v;
            out.push_back(HalfSpace::pulled_back(std::move(q), c.rhs));
        }
        return out;
    }

    /// Largest constraint violation at a free-variable point (<= 0 means all
    /// constraints hold), with definitions evaluated exactly at x.
    std::vector<double> residuals(std::span<const double> x) const {
        std::vector<double> z(x.begin(), x.end());
        for (const auto& g : defs_) z.push_back(g.eval(x));
        std::vector<double> out;
        for (const auto& c : linear_) {
            double s = -c.rhs;
            for (const auto& [k, v] : c.terms) s += v * z[k];
            out.push_back(s);
        }
        return out;
    }

    std::string variable_name(std::size_t k) const {
        return k < num_free() ? "x" + std::to_string(k) : "y" + std::to_string(k - num_free() + 1);
    }

private:
    IntervalBox bounds_;
    std::vector<Expr> defs_;
    std::vector<LinearConstraint> linear_;
};

struct SolverOptions {
    double delta = 1e-4;
    std::size_t max_boxes = 1000000;
    double timeout_s = 60.0;
    double hc4_tolerance = 0.01;  // stop when no dimension shrinks by more than this fraction
    std::size_t hc4_max_sweeps = 50;
};

enum class DeltaKind { delta_sat, unsat };

struct DeltaVerdict {
    DeltaKind kind = DeltaKind::unsat;
    std::optional<IntervalBox> witness;  // free variables only
    double delta = 0.0;
    std::size_t boxes = 0;
};

/// Forward-backward interval contraction of a constraint system.
class Contractor {
public:
    Contractor(const ConstraintSystem& sys, const SolverOptions& opt) : opt_(opt), tape_(sys.definitions()) {
        for (const auto& c : sys.linear()) {
            bool trivial = true;
            for (const auto& [k, v] : c.terms)
                if (v != 0.0) trivial = false;
            if (trivial) {
                if (c.rhs < 0.0) infeasible_ = true;
                continue;
            }
            Row row;
            for (const auto& [k, v] : c.terms) {
                if (v == 0.0) continue;
                row.index.push_back(k);
                row.coeff.push_back(v);
            }
            row.rhs = c.rhs;
            rows_.push_back(std::move(row));
        }
    }

    bool trivially_infeasible() const { return infeasible_; }

    /// Forward enclosure of all variables over the free box.
    std::vector<Interval> enclose(const IntervalBox& x) const {
        std::vector<Interval> z(x.dims());
        if (tape_.size() > 0) {
            std::vector<Interval> vals;
            tape_.eval(std::span<const Interval>(x.dims()), Interval::point(0.0), vals);
            for (auto r : tape_.roots()) z.push_back(vals[r]);
        }
        return z;
    }

    /// Magnitude of each constraint's terms over the box; used to scale the
    /// witness residual tolerance.
    std::vector<double> scales(const IntervalBox& x) const {
        const auto z = enclose(x);
        std::vector<double> s;
        for (const auto& row : rows_) {
            double m = 0.0;
            for (std::size_t i = 0; i < row.index.size(); ++i) m += std::abs(row.coeff[i]) * z[row.index[i]].mag();
            s.push_back(m);
        }
        return s;
    }

    std::optional<IntervalBox> contract(const IntervalBox& box) const {
        if (infeasible_) return std::nullopt;
        const std::size_t n = box.size();
        std::vector<Interval> x(box.dims());
        std::vector<Interval> y(tape_.roots().size());
        std::vector<Interval> vals;
        bool first = true;
        for (std::size_t sweep = 0; sweep < opt_.hc4_max_sweeps; ++sweep) {
            const std::vector<Interval> before = x;
            // Forward: enclosures of the defined variables.
            if (tape_.size() > 0) {
                tape_.eval(std::span<const Interval>(x), Interval::point(0.0), vals);
                for (std::size_t j = 0; j < y.size(); ++j) {
                    const Interval f = vals[tape_.roots()[j]];
                    if (first) y[j] = f;
                    else {
                        auto m = y[j].intersect(f);
                        if (!m) return std::nullopt;
                        y[j] = *m;
                    }
                }
            }
            first = false;
            // Linear rows.
            for (const auto& row : rows_)
                if (!revise_linear(row, x, y)) return std::nullopt;
            // Backward through the definitions.
            if (tape_.size() > 0) {
                tape_.eval(std::span<const Interval>(x), Interval::point(0.0), vals);
                for (std::size_t j = 0; j < y.size(); ++j) {
                    auto m = vals[tape_.roots()[j]].intersect(y[j]);
                    if (!m) return std::nullopt;
                    vals[tape_.roots()[j]] = *m;
                    y[j] = *m;
                }
                if (!tape_.backward(vals, std::span<Interval>(x))) return std::nullopt;
            }
            double shrink = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double w0 = before[i].width();
                if (w0 > 0.0) shrink = std::max(shrink, (w0 - x[i].width()) / w0);
            }
            if (shrink <= opt_.hc4_tolerance) break;
        }
        return IntervalBox(std::move(x));
    }

private:
    struct Row {
        std::vector<std::size_t> index;
        std::vector<double> coeff;
        double rhs = 0.0;
    };

    Interval& var(std::size_t k, std::vector<Interval>& x, std::vector<Interval>& y) const {
        return k < x.size() ? x[k] : y[k - x.size()];
    }

    bool revise_linear(const Row& row, std::vector<Interval>& x, std::vector<Interval>& y) const {
        const std::size_t m = row.index.size();
        std::vector<double> term_lo(m), prefix(m + 1, 0.0), suffix(m + 1, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            const Interval& v = var(row.index[i], x, y);
            const double a = row.coeff[i];
            term_lo[i] = std::min(rounding::mul_down(a, v.lo()), rounding::mul_down(a, v.hi()));
        }
        for (std::size_t i = 0; i < m; ++i) prefix[i + 1] = rounding::add_down(prefix[i], term_lo[i]);
        for (std::size_t i = m; i-- > 0;) suffix[i] = rounding::add_down(suffix[i + 1], term_lo[i]);
        if (prefix[m] > row.rhs) return false;
        for (std::size_t i = 0; i < m; ++i) {
            const double a = row.coeff[i];
            const double budget = rounding::add_up(row.rhs, -rounding::add_down(prefix[i], suffix[i + 1]));
            Interval& v = var(row.index[i], x, y);
            if (a > 0.0) {
                const double ub = rounding::div_up(budget, a);
                if (ub < v.lo()) return false;
                if (ub < v.hi()) v = Interval(v.lo(), ub);
            } else {
                const double lb = rounding::div_down(budget, a);
                if (lb > v.hi()) return false;
                if (lb > v.lo()) v = Interval(lb, v.hi());
            }
        }
        return true;
    }

    SolverOptions opt_;
    Tape tape_;
    std::vector<Row> rows_;
    bool infeasible_ = false;
};

/// Single HC4 contraction of the system over a box.
inline std::optional<IntervalBox> hc4_contract(const ConstraintSystem& sys, const IntervalBox& box,
                                               const SolverOptions& opt = {}) {
    return Contractor(sys, opt).contract(box);
}

/// Deterministic depth-first branch-and-prune: widest-first bisection, left
/// child first. Throws ResourceExhausted past the box or time budget.
inline DeltaVerdict solve(const ConstraintSystem& sys, const SolverOptions& opt = {}) {
    if (!(opt.delta > 0.0)) throw NumericError("delta must be positive");
    const auto start = std::chrono::steady_clock::now();
    const Contractor contractor(sys, opt);
    DeltaVerdict out;
    out.delta = opt.delta;
    if (contractor.trivially_infeasible()) return out;
    const std::vector<double> scale = contractor.scales(sys.bounds());
    const double floor_width = opt.delta * 1e-6;

    std::vector<IntervalBox> stack{sys.bounds()};
    while (!stack.empty()) {
        IntervalBox box = std::move(stack.back());
        stack.pop_back();
        if (++out.boxes > opt.max_boxes) throw ResourceExhausted("delta-sat search exceeded the box budget");
        if ((out.boxes & 1023U) == 0) {
            const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            if (elapsed > opt.timeout_s) throw ResourceExhausted("delta-sat search exceeded the time budget");
        }
        auto c = contractor.contract(box);
        if (!c) continue;
        const double w = c->max_width();
        if (w <= opt.delta) {
            const auto mid = c->midpoint();
            const auto res = sys.residuals(mid);
            bool ok = true;
            for (std::size_t i = 0, r = 0; i < sys.linear().size(); ++i) {
                bool trivial = std::all_of(sys.linear()[i].terms.begin(), sys.linear()[i].terms.end(),
                                           [](const auto& p) { return p.second == 0.0; });
                if (trivial) continue;
                if (res[i] > opt.delta * (1.0 + scale[r++])) ok = false;
            }
            if (ok || w <= floor_width) {
                out.kind = DeltaKind::delta_sat;
                out.witness = std::move(*c);
                return out;
            }
        }
        auto [left, right] = split_box(*c);
        stack.push_back(std::move(right));
        stack.push_back(std::move(left));
    }
    return out;
}

// ---------------------------------------------------------------------------
// SMT-LIB2 (QF_NRA) emission.

namespace detail {

inline std::string smt_number(double v) {
    const bool neg = v < 0.0;
    char buf[512];
    auto r = std::to_chars(buf, buf + sizeof buf, std::abs(v), std::chars_format::fixed);
    std::string s(buf, r.ptr);
    if (s.find('.') == std::string::npos) s += ".0";
    return neg ? "(- " + s + ")" : s;
}

inline void smt_expr(const Expr& e, std::string& out) {
    switch (e.kind()) {
        case ExprKind::constant: out += smt_number(e.value()); return;
        case ExprKind::variable: out += "x" + std::to_string(e.index()); return;
        case ExprKind::time: out += "0.0"; return;
        case ExprKind::add:
        case ExprKind::mul:
            out += e.kind() == ExprKind::add ? "(+" : "(*";
            for (const auto& a : e.args()) {
                out += ' ';
                smt_expr(a, out);
            }
            out += ')';
            return;
        case ExprKind::pow:
            out += "(*";
            for (int i = 0; i < e.exponent(); ++i) {
                out += ' ';
                smt_expr(e.args()[0], out);
            }
            out += ')';
            return;
        case ExprKind::sin:
        case ExprKind::cos:
            out += e.kind() == ExprKind::sin ? "(sin " : "(cos ";
            smt_expr(e.args()[0], out);
            out += ')';
            return;
    }
}

}  // namespace detail

inline std::string emit_smtlib(const ConstraintSystem& sys, double delta) {
    std::string out;
    out += "; delta " + detail::smt_number(delta) + "\n";
    out += "(set-logic QF_NRA)\n";
    for (std::size_t k = 0; k < sys.num_vars(); ++k) out += "(declare-fun " + sys.variable_name(k) + " () Real)\n";
    for (std::size_t i = 0; i < sys.num_free(); ++i) {
        const auto name = sys.variable_name(i);
        out += "(assert (<= " + detail::smt_number(sys.bounds()[i].lo()) + " " + name + "))\n";
        out += "(assert (<= " + name + " " + detail::smt_number(sys.bounds()[i].hi()) + "))\n";
    }
    for (std::size_t j = 0; j < sys.num_defs(); ++j) {
        out += "(assert (= " + sys.variable_name(sys.num_free() + j) + " ";
        detail::smt_expr(sys.definitions()[j], out);
        out += "))\n";
    }
    for (const auto& c : sys.linear()) {
        std::string lhs;
        std::size_t count = 0;
        for (const auto& [k, v] : c.terms) {
            if (v == 0.0) continue;
            ++count;
            lhs += ' ';
            lhs += v == 1.0 ? sys.variable_name(k) : "(* " + detail::smt_number(v) + " " + sys.variable_name(k) + ")";
        }
        if (count == 0) lhs = " 0.0";
        if (count > 1) lhs = "(+" + lhs + ")";
        else lhs.erase(0, 1);
        out += "(assert (<= " + lhs + " " + detail::smt_number(c.rhs) + "))\n";
    }
    out += "(check-sat)\n(exit)\n";
    return out;
}

/// Pipes the emitted problem to an external solver (`path file.smt2`) and
/// reads sat / unsat / delta-sat from its first output line. A sat answer is
/// paired with a witness from the internal solver.
inline DeltaVerdict solve_external(const ConstraintSystem& sys, const std::string& solver_path,
                                   const SolverOptions& opt = {}) {
    namespace fs = std::filesystem;
    static std::atomic<unsigned> counter{0};
    const fs::path file = fs::temp_directory_path() /
                          ("koopman_reach_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".smt2");
    {
        std::ofstream os(file, std::ios::binary);
        if (!os) throw Error("cannot write " + file.string());
        os << emit_smtlib(sys, opt.delta);
    }
    const std::string cmd = "'" + solver_path + "' '" + file.string() + "' 2>/dev/null";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) {
        fs::remove(file);
        throw Error("cannot start external solver " + solver_path);
    }
    std::array<char, 256> buf{};
    std::string first;
    if (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) first = buf.data();
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) {
    }
    ::pclose(pipe);
    std::error_code ec;
    fs::remove(file, ec);
    while (!first.empty() && (first.back() == '\n' || first.back() == '\r' || first.back() == ' ')) first.pop_back();
    if (first == "unsat") {
        DeltaVerdict v;
        v.kind = DeltaKind::unsat;
        v.delta = opt.delta;
        return v;
    }
    if (first == "sat" || first == "delta-sat") {
        DeltaVerdict v = solve(sys, opt);
        if (v.kind != DeltaKind::delta_sat)
            throw ResourceExhausted("external solver reported sat but no witness box was found");
        return v;
    }
    throw ResourceExhausted("external solver gave an unrecognized answer: '" + first + "'");
}

}  // namespace koopman_reach
