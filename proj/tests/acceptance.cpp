// SPDX-License-Identifier: Apache-2.0
// Acceptance battery: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "oracles.hpp"

namespace kr = koopman_reach;
namespace fs = std::filesystem;
using kr::Algorithm;
using kr::Interval;
using kr::IntervalBox;
using kr::Matrix;
using kr::Relation;
using kr::Vector;
using kr::VerdictKind;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const std::string& title, bool ok, double seconds, double limit, const std::string& detail) {
    const bool in_time = limit <= 0.0 || seconds < limit;
    const bool pass = ok && in_time;
    if (!pass) ++failures;
    std::ostringstream os;
    os << (pass ? "PASS" : "FAIL") << " criterion " << id << " " << title << ": " << detail;
    os << " [" << seconds << " s";
    if (limit > 0.0) os << " / limit " << limit << " s";
    os << "]";
    if (!in_time) os << " runtime limit exceeded";
    std::cout << os.str() << std::endl;
}

std::size_t jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------------------
// Benchmark setups built from the shipped configuration files.

struct Bench {
    kr::RunConfig config;
    std::optional<kr::OdeModel> ode;
    std::vector<std::string> names;
    kr::InitialSet init;
    std::shared_ptr<const kr::KoopmanModel> model;
    std::shared_ptr<const kr::StepOperator> powers;
};

Bench load_bench(const std::string& name) {
    Bench b;
    b.config = kr::load_config(fs::path(KR_SOURCE_DIR) / "configs" / (name + ".json"));
    b.ode = kr::config_ode(b.config);
    b.names = kr::config_state_names(b.config, b.ode->dim(), b.ode);
    b.init = kr::config_initial_set(b.config, b.names);
    b.model = std::make_shared<const kr::KoopmanModel>(kr::fit_from_config(b.config, b.ode, b.names, b.init, jobs()));
    b.powers = std::make_shared<const kr::StepOperator>(b.model->k_step());
    return b;
}

kr::VerificationProblem problem(const Bench& b, long i, Algorithm alg, std::size_t level = 0,
                                std::optional<double> horizon = std::nullopt) {
    kr::VerificationProblem p{b.model, b.init, kr::config_unsafe(b.config, b.names, i), b.config.problem.h,
                              horizon.value_or(b.config.problem.horizon)};
    p.options.algorithm = alg;
    p.options.max_level = level;
    p.options.solver.delta = b.config.verify.delta;
    p.original = std::make_shared<const kr::OdeModel>(*b.ode);
    p.powers = b.powers;
    return p;
}

/// Verdict of one warm-up run with the median runtime of `reps` further runs.
kr::Verdict timed_verify(const kr::VerificationProblem& p, int reps = 5) {
    kr::Verdict v = kr::verify(p);
    std::vector<double> t;
    for (int r = 0; r < reps; ++r) t.push_back(kr::verify(p).runtime_s);
    std::sort(t.begin(), t.end());
    v.runtime_s = t[t.size() / 2];
    return v;
}

struct UnsafeRecord {
    std::string label;
    kr::Verdict verdict;
};
std::vector<UnsafeRecord> unsafe_verdicts;

void record(const std::string& label, const kr::Verdict& v) {
    if (v.kind == VerdictKind::unsafe) unsafe_verdicts.push_back({label, v});
}

// ---------------------------------------------------------------------------

void criterion1() {
    const auto t0 = Clock::now();
    const auto c = kr_test::interval_property_suite(10000);
    const Interval prod = Interval(-1, 2) * Interval(3, 4);
    const bool exact = prod.lo() == -4.0 && prod.hi() == 8.0;
    std::ostringstream d;
    d << c.trials << " trials, containment violations " << c.containment << ", monotonicity violations "
      << c.monotonicity << ", [-1,2]*[3,4] = [" << prod.lo() << "," << prod.hi() << "]";
    report(1, "interval kernel", c.containment == 0 && c.monotonicity == 0 && exact, seconds_since(t0), 5.0, d.str());
}

void criterion2() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const Matrix a = kr_test::random_matrix_with_norm(5, kr_test::uniform(0.1, 2.0));
        const double s = kr_test::uniform(0.0, 1.0), u = kr_test::uniform(0.0, 1.0);
        const Matrix lhs = kr::matrix_exponential(a, s + u);
        const Matrix rhs = kr::matrix_exponential(a, s) * kr::matrix_exponential(a, u);
        worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
    }
    Matrix nil = Matrix::Zero(3, 3);
    nil(0, 1) = 1.0;
    nil(1, 2) = 1.0;
    Matrix nil_expected = Matrix::Identity(3, 3) + nil + nil * nil / 2.0;
    const bool nil_exact = kr::matrix_exponential(nil, 1.0) == nil_expected;
    Matrix diag = Matrix::Zero(2, 2);
    diag(0, 0) = -0.05;
    diag(1, 1) = -0.05;
    Matrix diag_expected = Matrix::Zero(2, 2);
    diag_expected(0, 0) = std::exp(-0.1);
    diag_expected(1, 1) = std::exp(-0.1);
    const bool diag_exact = kr::matrix_exponential(diag, 2.0) == diag_expected;
    std::ostringstream d;
    d << "max semigroup defect " << worst << " (tol 1e-9), nilpotent exact " << nil_exact << ", diagonal exact "
      << diag_exact;
    report(2, "matrix exponential", worst <= 1e-9 && nil_exact && diag_exact, seconds_since(t0), 5.0, d.str());
}

void criterion3() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::vector<kr::Expr> ids;
    for (int i = 0; i < 4; ++i) ids.push_back(kr::Expr::variable(i));
    const kr::Dictionary dict(4, ids);
    const double h = 0.05;
    for (int t = 0; t < 20; ++t) {
        const Matrix a = kr_test::random_matrix_with_norm(4, kr_test::uniform(0.2, 2.0));
        const auto data = kr::generate_snapshots(kr::linear_model(a), IntervalBox(std::vector<Interval>(4, Interval(-1, 1))),
                                                 30, h, 1.0);
        const auto m = kr::fit_edmd(dict, data);
        worst = std::max(worst, (m.k_step() - kr::matrix_exponential(a, h)).cwiseAbs().maxCoeff());
    }
    std::ostringstream d;
    d << "20 systems, max |K_step - expm(A h)| " << worst << " (tol 1e-6)";
    report(3, "EDMD on linear systems", worst <= 1e-6, seconds_since(t0), 30.0, d.str());
}

void criterion4() {
    const auto t0 = Clock::now();
    const Bench b = load_bench("invariant_subspace");
    const double mu = -0.05, lambda = -1.0;
    // Generator on [x1, x2, x1^4, x1^3, x1^2] written out by hand.
    Matrix expected = Matrix::Zero(5, 5);
    expected(0, 0) = mu;
    expected(1, 1) = lambda;
    expected(1, 2) = -lambda;
    expected(2, 2) = 4.0 * mu;
    expected(3, 3) = 3.0 * mu;
    expected(4, 4) = 2.0 * mu;
    const auto& k_inf = b.model->k_inf();
    double gen_err = k_inf ? (*k_inf - expected).cwiseAbs().maxCoeff() : INFINITY;
    double row_err = INFINITY;
    if (k_inf) {
        Vector row(5);
        row << 0, lambda, -lambda, 0, 0;
        row_err = ((*k_inf).row(1).transpose() - row).cwiseAbs().maxCoeff();
    }
    const double h = b.model->step(), horizon = 10.0;
    const std::size_t steps = kr::detail::step_count(h, horizon);
    auto starts = kr::corners_and_center(b.init.box);
    for (const auto& x : kr::sobol_points(b.init.box, 16)) starts.push_back(x);
    double traj_err = 0.0;
    for (const auto& x0 : starts) {
        const auto ref = kr::integrate(*b.ode, x0, h, horizon);
        const auto lin = b.model->predict(x0, steps);
        for (std::size_t s = 0; s <= steps; ++s) traj_err = std::max(traj_err, (ref.states[s] - lin[s]).cwiseAbs().maxCoeff());
    }
    std::ostringstream d;
    d << "generator error " << gen_err << ", lambda-row error " << row_err << " (tol 1e-6), trajectory error " << traj_err
      << " over T=10 (tol 1e-5)";
    report(4, "exact invariant subspace", gen_err <= 1e-6 && row_err <= 1e-6 && traj_err <= 1e-5, seconds_since(t0), 30.0,
           d.str());
}

void criterion5() {
    const auto t0 = Clock::now();
    std::size_t violations = 0, inside = 0, near = 0;
    for (int t = 0; t < 10000; ++t) {
        const int k = kr_test::uniform_int(2, 8);
        const Matrix kt = kr_test::random_matrix(k, k, kr_test::uniform(0.1, 3.0));
        Vector q = kr_test::random_vector(k);
        if (q.isZero(0.0)) q(0) = 1.0;
        const Vector y = kr_test::random_vector(k, kr_test::uniform(0.1, 10.0));
        const Vector image = kt * y;
        const double scale = (q.cwiseAbs().array() * image.cwiseAbs().array()).sum();
        double r = kr_test::uniform(-scale, scale);
        if (t % 2 == 0) {
            // Place the boundary within a few ulps of the image to stress rounding.
            r = q.dot(image) + kr_test::uniform(-1e-14, 1e-14) * scale;
            ++near;
        }
        const kr::HalfSpace hs = kr::HalfSpace::pulled_back(q, r);
        const kr::HalfSpace pulled = kr::backpropagate_halfspace(kt, hs);
        if (!pulled.contains(y)) continue;
        ++inside;
        if (hs.slack(image) > 1e-12 * (scale + std::abs(r))) ++violations;
    }
    std::ostringstream d;
    d << "10000 triples (" << near << " near the boundary), " << inside << " inside the pull-back, violations "
      << violations << " (tol 1e-12 relative)";
    report(5, "pull-back soundness", violations == 0 && inside > 0, seconds_since(t0), 5.0, d.str());
}

void criterion6() {
    const auto t0 = Clock::now();
    std::size_t checks = 0, violations = 0;
    double worst = -INFINITY;
    for (int t = 0; t < 100; ++t) {
        const int n = kr_test::uniform_int(2, 8);
        std::vector<Interval> iv;
        for (int j = 0; j < n; ++j) iv.push_back(kr_test::random_interval(2.0));
        const kr::Zonotope parent = kr::reach_zonotope(IntervalBox(iv), kr_test::random_matrix(n, n, 2.0));
        // A few nested split levels per zonotope.
        std::vector<kr::Zonotope> chain{parent};
        for (int level = 0; level < 3; ++level) {
            const auto [l, r] = kr::split_box(chain.back().domain());
            chain.push_back(chain.back().with_domain(kr_test::uniform_int(0, 1) ? l : r));
        }
        for (int dct = 0; dct < 100; ++dct) {
            const Vector dir = kr_test::random_vector(n);
            for (std::size_t c = 1; c < chain.size(); ++c) {
                const double excess = kr::support(chain[c], dir) - kr::support(chain[c - 1], dir);
                worst = std::max(worst, excess);
                ++checks;
                if (excess > 1e-12) ++violations;
            }
        }
    }
    std::ostringstream d;
    d << checks << " child/parent comparisons, max excess " << worst << ", violations " << violations << " (tol 1e-12)";
    report(6, "zonotope split refinement", violations == 0, seconds_since(t0), 10.0, d.str());
}

// ---------------------------------------------------------------------------

struct HandSystem {
    std::string label;
    std::vector<std::pair<double, double>> domain;
    std::vector<std::tuple<std::string, Relation, double>> constraints;
};

std::vector<HandSystem> battery() {
    const auto ge = Relation::ge, le = Relation::le;
    const std::pair<double, double> sym{-1.0, 1.0}, small{0.0, 0.15};
    return {
        {"disc/line sat", {sym, sym}, {{"x1^2 + x2^2", le, 0.25}, {"x1 + x2", ge, 0.6}}},
        {"disc/line unsat", {sym, sym}, {{"x1^2 + x2^2", le, 0.25}, {"x1 + x2", ge, 0.8}}},
        {"hyperbola unsat", {sym, sym}, {{"x1*x2", ge, 0.3}, {"x1 + x2", le, 1.0}, {"x1", ge, 0.0}}},
        {"hyperbola sat", {sym, sym}, {{"x1*x2", ge, 0.2}, {"x1 + x2", le, 1.0}, {"x1", ge, 0.0}}},
        {"sine sum sat", {{0.0, 3.0}, {0.0, 1.0}}, {{"sin(x1) + x2", ge, 1.4}, {"x2", le, 0.5}}},
        {"sine sum unsat", {{0.0, 3.0}, {0.0, 1.0}}, {{"sin(x1) + x2", ge, 1.6}, {"x2", le, 0.5}}},
        {"cosine product sat", {{1.0, 2.0}, {0.0, 1.0}}, {{"cos(x1)*x2", ge, 0.5}}},
        {"cosine product unsat", {{1.0, 2.0}, {0.0, 1.0}}, {{"cos(x1)*x2", ge, 0.6}}},
        {"cubic unsat", {sym, sym}, {{"x2 - x1^3 + x1", ge, 0.0}, {"x2", le, -0.5}}},
        {"cubic sat", {sym, sym}, {{"x2 - x1^3 + x1", ge, 0.0}, {"x2", le, -0.3}}},
        {"saddle sat", {sym, sym}, {{"x1^2 - x2^2", ge, 0.5}, {"x1^2 + x2^2", le, 0.6}}},
        {"saddle unsat", {sym, sym}, {{"x1^2 - x2^2", ge, 0.7}, {"x1^2 + x2^2", le, 0.6}}},
        {"quartic sat", {sym, sym}, {{"x1^4 + x2^4", le, 0.01}, {"x1 + x2", ge, 0.5}}},
        {"quartic unsat", {sym, sym}, {{"x1^4 + x2^4", le, 0.01}, {"x1 + x2", ge, 0.6}}},
        {"sine of product unsat", {{0.0, 1.0}, {0.0, 1.0}}, {{"sin(x1*x2)", ge, 0.5}, {"x1", le, 0.6}, {"x2", le, 0.6}}},
        {"sine of product sat", {{0.0, 1.0}, {0.0, 1.0}}, {{"sin(x1*x2)", ge, 0.3}, {"x1", le, 0.6}, {"x2", le, 0.6}}},
        {"ball/plane sat", {small, small, small}, {{"x1 + x2 + x3", ge, 0.4}, {"x1^2 + x2^2 + x3^2", le, 0.06}}},
        {"ball/plane unsat", {small, small, small}, {{"x1 + x2 + x3", ge, 0.45}, {"x1^2 + x2^2 + x3^2", le, 0.06}}},
        {"triple product unsat", {small, small, small}, {{"1000*x1*x2*x3", ge, 3.0}, {"x1 + x2 + x3", le, 0.4}}},
        {"triple product sat", {small, small, small}, {{"1000*x1*x2*x3", ge, 2.0}, {"x1 + x2 + x3", le, 0.4}}},
        {"paraboloid sat", {small, small, small},
         {{"100*x3 - 100*x1^2 - 100*x2^2", ge, 0.0}, {"100*x3", le, 2.0}, {"10*x1 + 10*x2", ge, 1.5}}},
        {"paraboloid unsat", {small, small, small},
         {{"100*x3 - 100*x1^2 - 100*x2^2", ge, 0.0}, {"100*x3", le, 0.8}, {"10*x1 + 10*x2", ge, 1.5}}},
        {"triple sine sat", {small, small, small}, {{"sin(10*x1) + sin(10*x2) + sin(10*x3)", ge, 2.9}}},
        {"triple sine unsat", {small, small, small}, {{"sin(10*x1) + sin(10*x2) + sin(10*x3)", ge, 3.05}}},
        {"mixed trig sat", {small, small, small}, {{"10*x1*cos(10*x2) + 10*x3", ge, 2.5}, {"x1 - x3", ge, 0.02}}},
    };
}

void criterion7() {
    const auto t0 = Clock::now();
    const double delta = 1e-3;
    std::size_t agree = 0, sat = 0, witness_bad = 0;
    std::string mismatches;
    const auto systems = battery();
    for (const auto& hs : systems) {
        std::vector<Interval> iv;
        for (const auto& [lo, hi] : hs.domain) iv.emplace_back(lo, hi);
        kr::ConstraintSystem sys{IntervalBox(iv)};
        for (const auto& [e, rel, rhs] : hs.constraints) sys.add_constraint(kr::parse_expr(e), rel, rhs);
        kr::SolverOptions opt;
        opt.delta = delta;
        const auto v = kr::solve(sys, opt);
        const bool solver_sat = v.kind == kr::DeltaKind::delta_sat;
        const auto grid = kr_test::grid_oracle(sys, 1e-3, delta);
        if (solver_sat == grid.robust_solution) ++agree;
        else mismatches += " [" + hs.label + "]";
        if (!solver_sat) continue;
        ++sat;
        if (!v.witness) {
            ++witness_bad;
            continue;
        }
        // Residual scale: magnitude of each constraint's terms at the witness plus its right-hand side.
        const auto mid = v.witness->midpoint();
        std::vector<double> z(mid.begin(), mid.end());
        for (const auto& g : sys.definitions()) z.push_back(g.eval(mid));
        const auto res = sys.residuals(mid);
        for (std::size_t r = 0; r < sys.linear().size(); ++r) {
            double scale = std::abs(sys.linear()[r].rhs);
            for (const auto& [k, c] : sys.linear()[r].terms) scale += std::abs(c * z[k]);
            if (res[r] > delta * (1.0 + scale)) ++witness_bad;
        }
    }
    std::ostringstream d;
    d << agree << "/" << systems.size() << " verdicts agree with the 1e-3 grid (delta 1e-3), " << sat
      << " delta-sat witnesses, " << witness_bad << " witness residual violations" << mismatches;
    report(7, "delta-sat solver vs grid", agree == systems.size() && witness_bad == 0, seconds_since(t0), 120.0, d.str());
}

// ---------------------------------------------------------------------------

constexpr Algorithm kAlgorithms[] = {Algorithm::direct, Algorithm::interval, Algorithm::backprop, Algorithm::zono_split};

void criterion8() {
    const auto t0 = Clock::now();
    const std::vector<std::pair<std::string, std::vector<long>>> plan{
        {"steam", {0, 8, 9, 10}}, {"vdp", {1, 4, 12, 16}}, {"invariant_subspace", {0, 2, 3, 4}}};
    std::size_t instances = 0, agreeing = 0, unsafe = 0;
    std::string detail_kinds;
    for (const auto& [name, is] : plan) {
        const Bench b = load_bench(name);
        // Short horizons: the full sweep horizon, capped at 3 time units.
        const double horizon = std::min(b.config.problem.horizon, 3.0);
        for (long i : is) {
            ++instances;
            std::vector<VerdictKind> kinds;
            for (Algorithm a : kAlgorithms) {
                const auto v = kr::verify(problem(b, i, a, 0, horizon));
                kinds.push_back(v.kind);
                record(name + " i=" + std::to_string(i) + " " + kr::to_string(a), v);
            }
            const bool same = std::all_of(kinds.begin(), kinds.end(), [&](VerdictKind k) { return k == kinds[0]; }) &&
                              kinds[0] != VerdictKind::unknown;
            if (same) ++agreeing;
            if (kinds[0] == VerdictKind::unsafe) ++unsafe;
            detail_kinds += " " + name + ":" + std::to_string(i) + "=";
            for (auto k : kinds) detail_kinds += kr::to_string(k).substr(0, 1);
        }
    }
    std::ostringstream d;
    d << agreeing << "/" << instances << " instances with identical kinds (" << unsafe << " unsafe);" << detail_kinds;
    report(8, "cross-algorithm agreement", agreeing == instances, seconds_since(t0), 600.0, d.str());
}

void criterion9() {
    // a. Biological model, smallest i.
    {
        const auto t0 = Clock::now();
        const Bench b = load_bench("bio");
        const long i = kr::config_sweep(b.config).front();
        const auto z = timed_verify(problem(b, i, Algorithm::zono_split));
        const auto dv = timed_verify(problem(b, i, Algorithm::direct));
        record("bio zono_split", z);
        record("bio direct", dv);
        const double ratio = dv.runtime_s / std::max(z.runtime_s, 1e-12);
        std::ostringstream d;
        d << "i=" << i << " zono_split " << kr::to_string(z.kind) << " with " << z.solver_calls << " calls in "
          << z.runtime_s << " s; direct " << kr::to_string(dv.kind) << " in " << dv.runtime_s << " s; speedup " << ratio
          << " (need >= 50)";
        report(9, "a biological zono_split speedup", z.solver_calls == 0 && z.kind == dv.kind && ratio >= 50.0,
               seconds_since(t0), 0.0, d.str());
    }
    // b. Roessler sweep, backprop against the interval encoding.
    {
        const auto t0 = Clock::now();
        const Bench b = load_bench("roessler");
        bool calls_ok = true, runtime_ok = true;
        std::string calls, times;
        double prev = INFINITY;
        for (long i : kr::config_sweep(b.config)) {
            const auto bp = timed_verify(problem(b, i, Algorithm::backprop));
            const auto in = kr::verify(problem(b, i, Algorithm::interval));
            record("roessler i=" + std::to_string(i) + " backprop", bp);
            record("roessler i=" + std::to_string(i) + " interval", in);
            if (bp.solver_calls > in.solver_calls) calls_ok = false;
            if (bp.runtime_s > 1.2 * prev) runtime_ok = false;
            prev = bp.runtime_s;
            calls += " " + std::to_string(bp.solver_calls) + "/" + std::to_string(in.solver_calls);
            char buf[32];
            std::snprintf(buf, sizeof buf, " %.2g", bp.runtime_s);
            times += buf;
        }
        std::ostringstream d;
        d << "backprop/interval calls per i:" << calls << "; backprop median runtimes:" << times
          << "; calls ok " << calls_ok << ", runtime non-increasing within 20% " << runtime_ok;
        report(9, "b roessler backprop sweep", calls_ok && runtime_ok, seconds_since(t0), 0.0, d.str());
    }
    // c. Coupled Van der Pol, max_level 0 against 5.
    {
        const auto t0 = Clock::now();
        const Bench b = load_bench("vdp");
        const auto safe0 = timed_verify(problem(b, 4, Algorithm::zono_split, 0));
        const auto safe5 = timed_verify(problem(b, 4, Algorithm::zono_split, 5));
        const auto unsafe0 = timed_verify(problem(b, 12, Algorithm::zono_split, 0));
        const auto unsafe5 = timed_verify(problem(b, 12, Algorithm::zono_split, 5));
        record("vdp i=12 L0", unsafe0);
        record("vdp i=12 L5", unsafe5);
        const bool kinds_ok = safe0.kind == VerdictKind::safe && safe5.kind == VerdictKind::safe &&
                              unsafe0.kind == VerdictKind::unsafe && unsafe5.kind == VerdictKind::unsafe;
        std::ostringstream d;
        d << "safe i=4: L0 " << safe0.runtime_s << " s (" << safe0.solver_calls << " calls), L5 " << safe5.runtime_s
          << " s (" << safe5.solver_calls << " calls); unsafe i=12: L0 " << unsafe0.runtime_s << " s ("
          << unsafe0.solver_calls << " calls), L5 " << unsafe5.runtime_s << " s (" << unsafe5.solver_calls
          << " calls); need safe L5 < L0 and unsafe L5 > L0";
        report(9, "c van der pol split levels",
               kinds_ok && safe5.runtime_s < safe0.runtime_s && unsafe5.runtime_s > unsafe0.runtime_s, seconds_since(t0),
               0.0, d.str());
    }
    // d. Linearization error tables.
    {
        const auto t0 = Clock::now();
        auto worst = [](const Bench& b, double horizon, auto field) {
            const auto ref = kr::simulate_from(*b.ode, kr::corners_and_center(b.init.box), b.model->step(), horizon, jobs());
            double w = 0.0;
            for (const auto& row : kr::error_table(*b.model, ref)) w = std::max(w, field(row));
            return w;
        };
        const Bench fx = load_bench("invariant_subspace");
        const Bench ro = load_bench("roessler");
        const double fx_abs = worst(fx, fx.config.problem.horizon, [](const kr::ErrorRow& r) { return r.max_abs; });
        const double ro_rel = worst(ro, ro.config.problem.horizon, [](const kr::ErrorRow& r) { return r.max_rel; });
        std::ostringstream d;
        d << "fixture max error " << fx_abs << " (tol 1e-5); roessler max relative error " << ro_rel << " (tol 0.15)";
        report(9, "d linearization error", fx_abs <= 1e-5 && ro_rel <= 0.15, seconds_since(t0), 0.0, d.str());
    }
}

void criterion10() {
    const auto t0 = Clock::now();
    std::size_t ok = 0, with_blackbox = 0;
    double worst_discrepancy = 0.0;
    std::string bad;
    for (const auto& u : unsafe_verdicts) {
        const bool valid = u.verdict.validation && u.verdict.validation->linear_ok;
        if (valid) ++ok;
        else bad += " [" + u.label + "]";
        if (u.verdict.validation && u.verdict.validation->blackbox_available) {
            ++with_blackbox;
            worst_discrepancy = std::max(worst_discrepancy, u.verdict.validation->discrepancy);
        }
    }
    // Exact fixture: the model is the closed-form generator, so the linear and black-box states coincide.
    const auto dict = kr::Dictionary::from_strings(2, std::vector<std::string>{"x1", "x2", "x1^4", "x1^3", "x1^2"});
    const auto ode = kr::builtin::make("invariant_subspace");
    const Matrix k_inf = *kr::symbolic_generator(dict, ode);
    const auto exact = std::make_shared<const kr::KoopmanModel>(dict, kr::matrix_exponential(k_inf, 0.1), 0.1,
                                                                kr::FitMeta{}, k_inf);
    const IntervalBox box({Interval(0.9, 1.1), Interval(0.4, 0.6)});
    Vector q(2);
    q << 0, -1;
    double fixture_disc = INFINITY;
    bool fixture_ok = false;
    for (double thr : {1.05, 1.0}) {
        kr::VerificationProblem p{exact, kr::InitialSet::from_box(box), kr::UnsafeSet({kr::HalfSpace(q, -thr)}), 0.1, 10.0};
        p.original = std::make_shared<const kr::OdeModel>(ode);
        const auto v = kr::verify(p);
        fixture_ok = v.kind == VerdictKind::unsafe && v.validation && v.validation->linear_ok &&
                     v.validation->blackbox_available;
        if (!fixture_ok) break;
        fixture_disc = thr == 1.05 ? v.validation->discrepancy : std::max(fixture_disc, v.validation->discrepancy);
    }
    std::ostringstream d;
    d << ok << "/" << unsafe_verdicts.size() << " unsafe verdicts pass the linear check" << bad << "; black-box discrepancy "
      << "reported for " << with_blackbox << ", worst " << worst_discrepancy << "; exact fixture discrepancy "
      << fixture_disc << " (tol 1e-5)";
    report(10, "unsafe witness validity",
           ok == unsafe_verdicts.size() && !unsafe_verdicts.empty() && fixture_ok && fixture_disc <= 1e-5,
           seconds_since(t0), 0.0, d.str());
}

}  // namespace

int main() {
    try {
        criterion1();
        criterion2();
        criterion3();
        criterion4();
        criterion5();
        criterion6();
        criterion7();
        criterion8();
        criterion9();
        criterion10();
    } catch (const std::exception& e) {
        std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
        return 1;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
