// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <future>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "koopman_reach/deltasat.hpp"
#include "koopman_reach/errors.hpp"
#include "koopman_reach/halfspace.hpp"
#include "koopman_reach/interval.hpp"
#include "koopman_reach/koopman.hpp"
#include "koopman_reach/lp.hpp"
#include "koopman_reach/models.hpp"
#include "koopman_reach/observables.hpp"
#include "koopman_reach/sets.hpp"

namespace koopman_reach {

enum class Algorithm { direct, interval, backprop, zono_split };

inline std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::direct: return "direct";
        case Algorithm::interval: return "interval";
        case Algorithm::backprop: return "backprop";
        case Algorithm::zono_split: return "zono_split";
    }
    return "?";
}

inline Algorithm algorithm_from_string(const std::string& s) {
    if (s == "direct") return Algorithm::direct;
    if (s == "interval") return Algorithm::interval;
    if (s == "backprop") return Algorithm::backprop;
    if (s == "zono_split") return Algorithm::zono_split;
    throw ConfigError("unknown algorithm '" + s + "'");
}

/// Initial states: a box, optionally intersected with half-spaces over x.
struct InitialSet {
    IntervalBox box;
    std::vector<HalfSpace> constraints;

    static InitialSet from_box(IntervalBox b) { return {std::move(b), {}}; }

    /// Bounding box from LP bounds on each variable.
    static InitialSet from_halfspaces(std::vector<HalfSpace> hs) {
        if (hs.empty()) throw DimensionError("initial set needs constraints");
        std::vector<Interval> dims;
        for (Eigen::Index i = 0; i < hs.front().dim(); ++i) {
            const auto b = bound_variable(hs, static_cast<std::size_t>(i));
            if (b.status == LpStatus::infeasible) throw ConfigError("initial set is empty");
            if (b.status == LpStatus::unbounded) throw ConfigError("initial set is unbounded");
            dims.push_back(*b.bounds);
        }
        return {IntervalBox(std::move(dims)), std::move(hs)};
    }

    bool contains(const Vector& x, double tol = 0.0) const {
        for (std::size_t i = 0; i < box.size(); ++i) {
            const double v = x(static_cast<Eigen::Index>(i));
            if (v < box[i].lo() - tol || v > box[i].hi() + tol) return false;
        }
        for (const auto& h : constraints)
            if (!h.contains(x, tol)) return false;
        return true;
    }
};

struct VerifyOptions {
    Algorithm algorithm = Algorithm::zono_split;
    std::size_t max_level = 0;
    SolverOptions solver;  // solver.delta is the verification delta
    std::size_t contract_from_level = 0;  // > 0 delays backpropagation until boxes shrink
    double contraction_tolerance = 0.01;
    std::size_t contraction_max_sweeps = 50;
    std::optional<std::string> external_solver;
    std::size_t workers = 1;
};

struct VerificationProblem {
    std::shared_ptr<const KoopmanModel> model;
    InitialSet init;
    UnsafeSet unsafe;
    double h = 0.0;
    double horizon = 0.0;
    VerifyOptions options;
    std::shared_ptr<const OdeModel> original;        // for black-box validation
    std::shared_ptr<const StepOperator> powers;      // shared power cache (optional)

    std::size_t steps() const {
        if (!model) throw DimensionError("problem has no model");
        if (std::abs(h - model->step()) > 1e-12 * std::max(1.0, h))
            throw ConfigError("problem step differs from the model step");
        return detail::step_count(h, horizon);
    }
};

enum class VerdictKind { safe, unsafe, unknown };

inline std::string to_string(VerdictKind k) {
    switch (k) {
        case VerdictKind::safe: return "safe";
        case VerdictKind::unsafe: return "unsafe";
        case VerdictKind::unknown: return "unknown";
    }
    return "?";
}

struct StepStats {
    std::size_t step = 0;
    double seconds = 0.0;
    std::size_t solver_calls = 0;
    std::size_t splits = 0;
    std::string outcome;  // safe, unsafe, unknown
};

struct CounterexampleReport {
    Vector linear_state;
    double linear_slack = 0.0;  // min over constraints of r - q^T x; >= 0 inside
    double linear_tolerance = 0.0;
    bool linear_ok = false;
    bool blackbox_available = false;
    Vector blackbox_state;
    double blackbox_slack = 0.0;
    bool blackbox_in_unsafe = false;
    double discrepancy = 0.0;  // |x_linear - x_blackbox|_2
    std::string blackbox_error;
};

struct Verdict {
    VerdictKind kind = VerdictKind::safe;
    std::optional<std::size_t> step;
    std::optional<Vector> witness_x0;
    std::optional<IntervalBox> witness_box;
    std::vector<StepStats> steps;
    std::size_t solver_calls = 0;
    std::size_t splits = 0;
    double runtime_s = 0.0;
    std::string message;
    std::optional<CounterexampleReport> validation;
};

// ---------------------------------------------------------------------------

/// Constraint system for step i: x0 in I, y = g(x0, 0), and each unsafe
/// constraint pulled back through K^i onto y. Identity observables land on
/// x directly and constant observables fold into the right-hand side.
inline ConstraintSystem build_system(const Dictionary& dict, const Matrix& k_i, const InitialSet& init,
                                     const UnsafeSet& unsafe) {
    const std::size_t n = dict.state_dim();
    if (init.box.size() != n) throw DimensionError("initial set dimension differs");
    ConstraintSystem sys(init.box);
    std::vector<std::optional<std::size_t>> var_of(dict.size());
    std::vector<double> const_of(dict.size(), 0.0);
    for (std::size_t j = 0; j < dict.size(); ++j) {
        const Expr g = substitute_time(dict[j], 0.0);
        if (g.is_constant()) const_of[j] = g.value();
        else var_of[j] = sys.define(g);
    }
    for (const auto& hs : lift_unsafe(unsafe, dict)) {
        const HalfSpace p = backpropagate_halfspace(k_i, hs);
        LinearConstraint c;
        double rhs = p.offset();
        std::vector<double> coeff(sys.num_vars(), 0.0);
        for (std::size_t j = 0; j < dict.size(); ++j) {
            const double pj = p.normal()(static_cast<Eigen::Index>(j));
            if (pj == 0.0) continue;
            if (var_of[j]) coeff[*var_of[j]] += pj;
            else rhs -= pj * const_of[j];
        }
        for (std::size_t v = 0; v < coeff.size(); ++v)
            if (coeff[v] != 0.0) c.terms.emplace_back(v, coeff[v]);
        c.rhs = rhs;
        sys.add_linear(std::move(c));
    }
    for (const auto& h : init.constraints) {
        LinearConstraint c;
        for (std::size_t i = 0; i < n; ++i) {
            const double q = h.normal()(static_cast<Eigen::Index>(i));
            if (q != 0.0) c.terms.emplace_back(i, q);
        }
        c.rhs = h.offset();
        sys.add_linear(std::move(c));
    }
    return sys;
}

inline ConstraintSystem build_system(const KoopmanModel& model, const InitialSet& init, const UnsafeSet& unsafe,
                                     std::size_t i) {
    return build_system(model.dictionary(), step_operator(model, i), init, unsafe);
}

/// Algorithm 1 fixpoint: lift the box, contract the lifted box against every
/// pulled-back constraint, project back onto the identity coordinates and
/// repeat until no dimension shrinks by more than `tol`. nullopt means no
/// initial state can reach the constraints.
inline std::optional<IntervalBox> backprop_contract(const Dictionary& dict, const IntervalBox& x_box,
                                                    std::span<const HalfSpace> pulled,
                                                    std::span<const HalfSpace> init_constraints, double tol = 0.01,
                                                    std::size_t max_sweeps = 50) {
    const std::size_t n = dict.state_dim();
    IntervalBox cur = x_box;
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        std::optional<IntervalBox> y = lift_box(dict, cur);
        for (const auto& hs : pulled) {
            y = contract_linear(hs.normal(), hs.offset(), *y);
            if (!y) return std::nullopt;
        }
        IntervalBox next = y->head(n);
        for (const auto& hs : init_constraints) {
            auto c = contract_linear(hs.normal(), hs.offset(), next);
            if (!c) return std::nullopt;
            next = std::move(*c);
        }
        auto meet = next.intersect(cur);
        if (!meet) return std::nullopt;
        double shrink = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w0 = cur[i].width();
            if (w0 > 0.0) shrink = std::max(shrink, (w0 - (*meet)[i].width()) / w0);
        }
        cur = std::move(*meet);
        if (shrink <= tol) break;
    }
    return cur;
}

namespace detail {

struct StepContext {
    const VerificationProblem* p;
    const Matrix* k_i;
    std::vector<HalfSpace> lifted;
    std::vector<HalfSpace> pulled;
};

struct LeafResult {
    VerdictKind kind = VerdictKind::safe;
    std::optional<IntervalBox> witness;
    std::size_t solver_calls = 0;
    std::size_t splits = 0;
    std::string message;
};

inline LeafResult run_solver(const StepContext& ctx, const IntervalBox& bounds) {
    InitialSet init{bounds, ctx.p->init.constraints};
    const ConstraintSystem sys = build_system(ctx.p->model->dictionary(), *ctx.k_i, init, ctx.p->unsafe);
    LeafResult r;
    r.solver_calls = 1;
    try {
        const auto& opt = ctx.p->options;
        const DeltaVerdict v =
            opt.external_solver ? solve_external(sys, *opt.external_solver, opt.solver) : solve(sys, opt.solver);
        if (v.kind == DeltaKind::delta_sat) {
            r.kind = VerdictKind::unsafe;
            r.witness = v.witness;
        }
    } catch (const ResourceExhausted& e) {
        r.kind = VerdictKind::unknown;
        r.message = e.what();
    }
    return r;
}

inline std::optional<IntervalBox> contract_step(const StepContext& ctx, const IntervalBox& box) {
    const auto& opt = ctx.p->options;
    return backprop_contract(ctx.p->model->dictionary(), box, ctx.pulled, ctx.p->init.constraints,
                             opt.contraction_tolerance, opt.contraction_max_sweeps);
}

inline LeafResult zono_split(const StepContext& ctx, const IntervalBox& box, std::size_t level,
                             std::atomic<int>& free_workers) {
    const auto& opt = ctx.p->options;
    IntervalBox cur = box;
    if (level >= opt.contract_from_level) {
        auto c = contract_step(ctx, box);
        if (!c) return {};
        cur = std::move(*c);
    }
    if (level >= opt.max_level || !(cur.max_width() > 0.0)) return run_solver(ctx, cur);
    auto [left, right] = split_box(cur);

    LeafResult a, b;
    bool b_done = false;
    if (free_workers.fetch_sub(1) > 0) {
        auto fut = std::async(std::launch::async,
                              [&, r = right] { return zono_split(ctx, r, level + 1, free_workers); });
        a = zono_split(ctx, left, level + 1, free_workers);
        b = fut.get();
        b_done = true;
        free_workers.fetch_add(1);
    } else {
        free_workers.fetch_add(1);
        a = zono_split(ctx, left, level + 1, free_workers);
    }
    // Deterministic reduction: the left subtree wins, and an unsafe left leaf
    // hides the right subtree's work from the accounting.
    LeafResult out;
    out.splits = 1 + a.splits;
    out.solver_calls = a.solver_calls;
    if (a.kind == VerdictKind::unsafe) {
        out.kind = VerdictKind::unsafe;
        out.witness = std::move(a.witness);
        return out;
    }
    if (!b_done) b = zono_split(ctx, right, level + 1, free_workers);
    out.splits += b.splits;
    out.solver_calls += b.solver_calls;
    if (b.kind == VerdictKind::unsafe) {
        out.kind = VerdictKind::unsafe;
        out.witness = std::move(b.witness);
    } else if (a.kind == VerdictKind::unknown || b.kind == VerdictKind::unknown) {
        out.kind = VerdictKind::unknown;
        out.message = a.kind == VerdictKind::unknown ? a.message : b.message;
    }
    return out;
}

inline bool zonotope_misses(const Zonotope& z, const HalfSpace& hs) {
    // min q^T y over z exceeds r by more than the rounding error of the bound.
    const double lower = -support(z, -hs.normal());
    const Vector a = z.generators().transpose() * hs.normal();
    const double scale = std::abs(hs.offset()) + std::abs(hs.normal().dot(z.center())) + a.cwiseAbs().sum();
    return lower > hs.offset() + 64.0 * std::numeric_limits<double>::epsilon() * scale;
}

inline LeafResult verify_step(const StepContext& ctx) {
    const auto& p = *ctx.p;
    switch (p.options.algorithm) {
        case Algorithm::direct: return run_solver(ctx, p.init.box);
        case Algorithm::interval: {
            const IntervalBox y = lift_box(p.model->dictionary(), p.init.box);
            const Zonotope z = reach_zonotope(y, *ctx.k_i);
            for (const auto& hs : ctx.lifted)
                if (zonotope_misses(z, hs)) return {};
            return run_solver(ctx, p.init.box);
        }
        case Algorithm::backprop: {
            auto c = contract_step(ctx, p.init.box);
            if (!c) return {};
            return run_solver(ctx, *c);
        }
        case Algorithm::zono_split: {
            std::atomic<int> free_workers{static_cast<int>(std::max<std::size_t>(1, p.options.workers)) - 1};
            return zono_split(ctx, p.init.box, 0, free_workers);
        }
    }
    return {};
}

}  // namespace detail

/// Model-level and black-box checks of an unsafe verdict.
inline CounterexampleReport validate_counterexample(const VerificationProblem& p, const Verdict& v) {
    if (v.kind != VerdictKind::unsafe || !v.step || !v.witness_x0)
        throw Error("validation needs an unsafe verdict with a witness");
    const auto& model = *p.model;
    const std::size_t i = *v.step;
    const Vector& x0 = *v.witness_x0;
    CounterexampleReport r;
    const Matrix k_i = p.powers ? *p.powers->power(i) : step_operator(model, i);
    const Vector y = k_i * lift_point(model.dictionary(), x0, 0.0);
    r.linear_state = y.head(static_cast<Eigen::Index>(model.state_dim()));
    r.linear_slack = -p.unsafe.violation(r.linear_state);
    // Tolerance matches the solver's witness criterion on the pulled-back
    // constraints: delta * (1 + magnitude of the constraint terms over I).
    const IntervalBox lifted = lift_box(model.dictionary(), p.init.box);
    double scale = 0.0;
    for (const auto& hs : lift_unsafe(p.unsafe, model.dictionary())) {
        const Vector q = k_i.transpose() * hs.normal();
        double s = 0.0;
        for (Eigen::Index j = 0; j < q.size(); ++j) s += std::abs(q(j)) * lifted[static_cast<std::size_t>(j)].mag();
        scale = std::max(scale, s);
    }
    r.linear_tolerance = p.options.solver.delta * (1.0 + scale);
    r.linear_ok = r.linear_slack >= -r.linear_tolerance;
    if (p.original) {
        try {
            r.blackbox_state = i == 0 ? x0 : integrate(*p.original, x0, p.h, static_cast<double>(i) * p.h).states.back();
            r.blackbox_available = true;
            r.blackbox_slack = -p.unsafe.violation(r.blackbox_state);
            r.blackbox_in_unsafe = r.blackbox_slack >= 0.0;
            r.discrepancy = (r.blackbox_state - r.linear_state).norm();
        } catch (const IntegrationError& e) {
            r.blackbox_error = e.what();
        }
    }
    return r;
}

/// Runs the configured algorithm over steps 0..T/h, stopping at the first
/// unsafe or unknown step.
inline Verdict verify(const VerificationProblem& p) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t steps = p.steps();
    if (p.init.box.size() != p.model->state_dim()) throw DimensionError("initial set dimension differs");
    if (static_cast<std::size_t>(p.unsafe.dim()) != p.model->state_dim())
        throw DimensionError("unsafe set dimension differs");
    auto powers = p.powers ? p.powers : std::make_shared<const StepOperator>(p.model->k_step());
    const auto lifted = lift_unsafe(p.unsafe, p.model->dictionary());

    Verdict v;
    for (std::size_t i = 0; i <= steps; ++i) {
        const auto ts = std::chrono::steady_clock::now();
        const auto k_i = powers->power(i);
        detail::StepContext ctx{&p, k_i.get(), lifted, {}};
        for (const auto& hs : lifted) ctx.pulled.push_back(backpropagate_halfspace(*k_i, hs));
        detail::LeafResult r = detail::verify_step(ctx);
        StepStats st;
        st.step = i;
        st.solver_calls = r.solver_calls;
        st.splits = r.splits;
        st.outcome = to_string(r.kind);
        st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - ts).count();
        v.steps.push_back(st);
        v.solver_calls += r.solver_calls;
        v.splits += r.splits;
        if (r.kind == VerdictKind::unsafe) {
            v.kind = VerdictKind::unsafe;
            v.step = i;
            v.witness_box = r.witness;
            v.witness_x0 = Eigen::Map<const Vector>(r.witness->midpoint().data(),
                                                    static_cast<Eigen::Index>(r.witness->size()));
            break;
        }
        if (r.kind == VerdictKind::unknown) {
            v.kind = VerdictKind::unknown;
            v.step = i;
            v.message = r.message;
            break;
        }
    }
    v.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (v.kind == VerdictKind::unsafe) v.validation = validate_counterexample(p, v);
    return v;
}

inline Verdict verify_direct(VerificationProblem p) {
    p.options.algorithm = Algorithm::direct;
    return verify(p);
}
inline Verdict verify_interval(VerificationProblem p) {
    p.options.algorithm = Algorithm::interval;
    return verify(p);
}
inline Verdict verify_backprop(VerificationProblem p) {
    p.options.algorithm = Algorithm::backprop;
    return verify(p);
}
inline Verdict verify_zono_split(VerificationProblem p) {
    p.options.algorithm = Algorithm::zono_split;
    return verify(p);
}

}  // namespace koopman_reach
