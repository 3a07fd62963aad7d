// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <boost/numeric/odeint.hpp>
#include <boost/random/sobol.hpp>

#include "koopman_reach/errors.hpp"
#include "koopman_reach/expr.hpp"
#include "koopman_reach/interval.hpp"
#include "koopman_reach/linalg.hpp"
#include "koopman_reach/tape.hpp"

namespace koopman_reach {

/// Autonomous ODE dx/dt = f(x). The field is symbolic so that observables can
/// be differentiated along it; evaluation goes through a compiled tape.
class OdeModel {
public:
    OdeModel(std::string name, std::vector<std::string> var_names, std::map<std::string, double> parameters,
             std::vector<Expr> field)
        : name_(std::move(name)),
          var_names_(std::move(var_names)),
          params_(std::move(parameters)),
          field_(std::move(field)) {
        if (field_.empty()) throw DimensionError("model has no state variables");
        if (var_names_.empty()) {
            for (std::size_t i = 0; i < field_.size(); ++i) var_names_.push_back("x" + std::to_string(i + 1));
        }
        if (var_names_.size() != field_.size()) throw DimensionError("variable names do not match field size");
        for (const auto& f : field_) {
            if (max_variable_index(f) >= static_cast<int>(field_.size()))
                throw DimensionError("vector field references an undeclared variable");
            if (depends_on_time(f)) throw DimensionError("vector field must be autonomous");
        }
        tape_ = std::make_shared<const Tape>(field_);
    }

    const std::string& name() const { return name_; }
    std::size_t dim() const { return field_.size(); }
    const std::vector<std::string>& var_names() const { return var_names_; }
    const std::map<std::string, double>& parameters() const { return params_; }
    const std::vector<Expr>& field() const { return field_; }

    void rhs(std::span<const double> x, std::span<double> dx) const {
        thread_local std::vector<double> scratch;
        tape_->eval(x, 0.0, scratch);
        const auto& r = tape_->roots();
        for (std::size_t i = 0; i < r.size(); ++i) dx[i] = scratch[r[i]];
    }

    Vector rhs(const Vector& x) const {
        Vector dx(x.size());
        rhs(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
            std::span<double>(dx.data(), static_cast<std::size_t>(dx.size())));
        return dx;
    }

private:
    std::string name_;
    std::vector<std::string> var_names_;
    std::map<std::string, double> params_;
    std::vector<Expr> field_;
    std::shared_ptr<const Tape> tape_;
};

namespace builtin {

inline Expr x(int i) { return Expr::variable(i); }
inline Expr c(double v) { return Expr::constant(v); }

inline double param(const std::map<std::string, double>& p, const std::string& key) {
    auto it = p.find(key);
    if (it == p.end()) throw ConfigError("missing model parameter '" + key + "'");
    return it->second;
}

inline std::map<std::string, double> default_parameters(const std::string& name) {
    if (name == "roessler") return {{"a", 0.2}, {"b", 0.2}, {"c", 5.7}};
    if (name == "steam_governor") return {{"epsilon", 3.0}, {"alpha", 1.0}, {"beta", 0.7}};
    if (name == "coupled_vdp") return {{"mu", 1.0}, {"coupling", 1.0}};
    if (name == "biological") return {{"k1", 0.4}, {"k2", 5.0}, {"k3", 0.5}};
    if (name == "invariant_subspace") return {{"mu", -0.05}, {"lambda", -1.0}};
    throw ConfigError("unknown builtin model '" + name + "'");
}

inline std::vector<std::string> names() {
    return {"biological", "coupled_vdp", "invariant_subspace", "roessler", "steam_governor"};
}

inline OdeModel roessler(const std::map<std::string, double>& p) {
    const double a = param(p, "a"), b = param(p, "b"), cc = param(p, "c");
    return OdeModel("roessler", {"x", "y", "z"}, p,
                    {-x(1) - x(2), x(0) + a * x(1), c(b) + x(2) * (x(0) + c(-cc))});
}

inline OdeModel steam_governor(const std::map<std::string, double>& p) {
    const double eps = param(p, "epsilon"), alpha = param(p, "alpha"), beta = param(p, "beta");
    return OdeModel("steam_governor", {"x", "y", "z"}, p,
                    {x(1), pow(x(2), 2) * sin(x(0)) * cos(x(0)) - sin(x(0)) - eps * x(1),
                     alpha * (cos(x(0)) + c(-beta))});
}

inline OdeModel coupled_vdp(const std::map<std::string, double>& p) {
    const double mu = param(p, "mu"), k = param(p, "coupling");
    return OdeModel("coupled_vdp", {"x1", "y1", "x2", "y2"}, p,
                    {x(1), mu * (c(1.0) - pow(x(0), 2)) * x(1) - x(0) + k * (x(2) - x(0)), x(3),
                     mu * (c(1.0) - pow(x(2), 2)) * x(3) - x(2) + k * (x(0) - x(2))});
}

inline OdeModel biological(const std::map<std::string, double>& p) {
    const double k1 = param(p, "k1"), k2 = param(p, "k2"), k3 = param(p, "k3");
    return OdeModel("biological", {"x1", "x2", "x3", "x4", "x5", "x6", "x7"}, p,
                    {-k1 * x(0) + k2 * x(2) * x(3), k1 * x(0) - x(1), x(1) - k2 * x(2) * x(3),
                     k2 * x(4) * x(5) - k2 * x(2) * x(3), -k2 * x(4) * x(5) + k2 * x(2) * x(3),
                     k3 * x(6) - k2 * x(4) * x(5), -k3 * x(6) + k2 * x(4) * x(5)});
}

/// dx1/dt = mu x1, dx2/dt = lambda (x2 - x1^4); span{x1, x2, x1^4} is invariant.
inline OdeModel invariant_subspace(const std::map<std::string, double>& p) {
    const double mu = param(p, "mu"), lambda = param(p, "lambda");
    return OdeModel("invariant_subspace", {"x1", "x2"}, p, {mu * x(0), lambda * (x(1) - pow(x(0), 4))});
}

inline OdeModel make(const std::string& name, std::map<std::string, double> overrides = {}) {
    auto p = default_parameters(name);
    for (const auto& [k, v] : overrides) {
        if (!p.count(k)) throw ConfigError("model '" + name + "' has no parameter '" + k + "'");
        p[k] = v;
    }
    if (name == "roessler") return roessler(p);
    if (name == "steam_governor") return steam_governor(p);
    if (name == "coupled_vdp") return coupled_vdp(p);
    if (name == "biological") return biological(p);
    return invariant_subspace(p);
}

}  // namespace builtin

/// dx/dt = A x.
inline OdeModel linear_model(const Matrix& a, std::string name = "linear") {
    if (a.rows() != a.cols() || a.rows() == 0) throw DimensionError("linear model needs a square matrix");
    std::vector<Expr> f;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        std::vector<Expr> terms;
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            terms.push_back(Expr::constant(a(i, j)) * Expr::variable(static_cast<int>(j)));
        f.push_back(Expr::sum(std::move(terms)));
    }
    return OdeModel(std::move(name), {}, {}, std::move(f));
}

struct Trajectory {
    std::vector<double> times;
    std::vector<Vector> states;
};

struct IntegratorOptions {
    double atol = 1e-10;
    double rtol = 1e-8;
};

namespace detail {

using OdeState = std::vector<double>;

struct OdeSystem {
    const OdeModel* model;
    void operator()(const OdeState& x, OdeState& dx, double /*t*/) const {
        dx.resize(x.size());
        model->rhs(x, dx);
    }
};

inline std::size_t step_count(double h, double horizon) {
    if (!(h > 0.0) || !(horizon > 0.0)) throw NumericError("step and horizon must be positive");
    const double q = horizon / h;
    const double n = std::round(q);
    if (std::abs(q - n) > 1e-9 * std::max(1.0, n)) throw NumericError("horizon is not a multiple of the step");
    return static_cast<std::size_t>(n);
}

}  // namespace detail

/// Adaptive Dormand-Prince RK45 with dense output, sampled at 0, h, ..., T.
inline Trajectory integrate(const OdeModel& model, const Vector& x0, double h, double horizon,
                            const IntegratorOptions& opt = {}) {
    namespace odeint = boost::numeric::odeint;
    if (static_cast<std::size_t>(x0.size()) != model.dim()) throw DimensionError("initial state has wrong size");
    const std::size_t steps = detail::step_count(h, horizon);
    std::vector<double> times(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) times[i] = static_cast<double>(i) * h;

    Trajectory out;
    out.times.reserve(steps + 1);
    out.states.reserve(steps + 1);
    detail::OdeState x(x0.data(), x0.data() + x0.size());
    double last_time = 0.0;
    auto observer = [&](const detail::OdeState& s, double t) {
        for (double v : s)
            if (!std::isfinite(v)) throw IntegrationError("state became non-finite", last_time);
        last_time = t;
        out.times.push_back(t);
        out.states.push_back(Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size())));
    };
    try {
        auto stepper = odeint::make_dense_output(opt.atol, opt.rtol, odeint::runge_kutta_dopri5<detail::OdeState>());
        odeint::integrate_times(stepper, detail::OdeSystem{&model}, x, times.begin(), times.end(), h / 10.0, observer,
                                odeint::max_step_checker(100000));
    } catch (const IntegrationError&) {
        throw;
    } catch (const std::exception& e) {
        throw IntegrationError(std::string("integration failed: ") + e.what(), last_time);
    }
    if (out.times.size() != steps + 1) throw IntegrationError("integration stopped early", last_time);
    return out;
}

/// State at t1 starting from x0 at t0; t1 < t0 integrates backward.
inline Vector propagate(const OdeModel& model, const Vector& x0, double t0, double t1,
                        const IntegratorOptions& opt = {}) {
    namespace odeint = boost::numeric::odeint;
    detail::OdeState x(x0.data(), x0.data() + x0.size());
    if (t0 == t1) return x0;
    try {
        auto stepper = odeint::make_controlled(opt.atol, opt.rtol, odeint::runge_kutta_dopri5<detail::OdeState>());
        odeint::integrate_adaptive(stepper, detail::OdeSystem{&model}, x, t0, t1, (t1 - t0) / 100.0);
    } catch (const std::exception& e) {
        throw IntegrationError(std::string("integration failed: ") + e.what(), t0);
    }
    Vector r = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
    if (!r.allFinite()) throw IntegrationError("state became non-finite", t0);
    return r;
}

/// First N points of the Sobol sequence scaled into the box.
inline std::vector<Vector> sobol_points(const IntervalBox& box, std::size_t count) {
    const std::size_t n = box.size();
    boost::random::sobol gen(n);
    std::vector<Vector> pts;
    pts.reserve(count);
    constexpr double scale = 0x1p-64;
    for (std::size_t k = 0; k < count; ++k) {
        Vector p(static_cast<Eigen::Index>(n));
        for (std::size_t d = 0; d < n; ++d) {
            const double u = static_cast<double>(gen()) * scale;
            const Interval& iv = box[d];
            p(static_cast<Eigen::Index>(d)) = std::min(iv.hi(), iv.lo() + u * iv.width());
        }
        pts.push_back(std::move(p));
    }
    return pts;
}

/// Column-aligned snapshot pairs. Column k of x_prime is the stored state one
/// step after column k of x within the same trajectory.
struct SnapshotData {
    Matrix x;
    Matrix x_prime;
    double step = 0.0;
    std::vector<double> times;          // absolute time of each x column
    std::vector<std::size_t> traj_ids;  // trajectory of each column
};

inline SnapshotData snapshots_from_trajectories(std::span<const Trajectory> trajs, double h) {
    if (trajs.empty()) throw DimensionError("no trajectories");
    const std::size_t n = static_cast<std::size_t>(trajs.front().states.at(0).size());
    std::size_t cols = 0;
    for (const auto& tr : trajs) {
        if (tr.states.size() != tr.times.size()) throw DimensionError("trajectory times and states differ in length");
        if (tr.states.size() >= 2) cols += tr.states.size() - 1;
    }
    SnapshotData d;
    d.step = h;
    d.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols));
    d.x_prime.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols));
    Eigen::Index c = 0;
    for (std::size_t t = 0; t < trajs.size(); ++t) {
        const auto& tr = trajs[t];
        for (std::size_t k = 0; k + 1 < tr.states.size(); ++k, ++c) {
            if (static_cast<std::size_t>(tr.states[k].size()) != n) throw DimensionError("state size mismatch");
            d.x.col(c) = tr.states[k];
            d.x_prime.col(c) = tr.states[k + 1];
            d.times.push_back(tr.times[k]);
            d.traj_ids.push_back(t);
        }
    }
    return d;
}

/// Runs fn(i) for i in [0, count) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next.store(count);
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

inline std::vector<Trajectory> simulate_from(const OdeModel& model, const std::vector<Vector>& starts, double h,
                                             double horizon, std::size_t workers = 1) {
    std::vector<Trajectory> trajs(starts.size());
    parallel_for(starts.size(), workers, [&](std::size_t i) {
        try {
            trajs[i] = integrate(model, starts[i], h, horizon);
        } catch (const IntegrationError& e) {
            std::ostringstream os;
            os << e.what() << " (initial point " << i << ": " << starts[i].transpose() << ")";
            throw IntegrationError(os.str(), e.last_valid_time());
        }
    });
    return trajs;
}

inline SnapshotData generate_snapshots(const OdeModel& model, const IntervalBox& init, std::size_t n_traj, double h,
                                       double horizon, std::size_t workers = 1) {
    if (n_traj == 0) throw DimensionError("need at least one trajectory");
    if (init.size() != model.dim()) throw DimensionError("initial box has wrong dimension");
    const auto trajs = simulate_from(model, sobol_points(init, n_traj), h, horizon, workers);
    return snapshots_from_trajectories(trajs, h);
}

// ---------------------------------------------------------------------------
// CSV snapshot format: header traj_id,t,x1,...,xn; one row per snapshot.

inline std::string format_double(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline void write_trajectories_csv(std::ostream& os, std::span<const Trajectory> trajs, std::size_t first_id = 0) {
    if (trajs.empty()) throw DimensionError("no trajectories to write");
    const auto n = trajs.front().states.at(0).size();
    os << "traj_id,t";
    for (Eigen::Index i = 0; i < n; ++i) os << ",x" << (i + 1);
    os << '\n';
    for (std::size_t k = 0; k < trajs.size(); ++k) {
        const auto& tr = trajs[k];
        for (std::size_t j = 0; j < tr.times.size(); ++j) {
            os << (first_id + k) << ',' << format_double(tr.times[j]);
            for (Eigen::Index i = 0; i < n; ++i) os << ',' << format_double(tr.states[j](i));
            os << '\n';
        }
    }
}

inline std::vector<Trajectory> read_trajectories_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty snapshot CSV");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 3 || header[0] != "traj_id" || header[1] != "t")
        throw ParseError("snapshot CSV header must start with traj_id,t");
    for (std::size_t i = 2; i < header.size(); ++i)
        if (header[i] != "x" + std::to_string(i - 1)) throw ParseError("unexpected CSV column '" + header[i] + "'");
    const std::size_t n = header.size() - 2;

    std::vector<Trajectory> out;
    std::map<long long, std::size_t> index;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> vals;
        long long id = 0;
        std::size_t pos = 0;
        for (std::size_t col = 0; col < n + 2; ++col) {
            const std::size_t end = std::min(line.find(',', pos), line.size());
            const char* b = line.data() + pos;
            const char* e = line.data() + end;
            std::from_chars_result r{};
            if (col == 0) r = std::from_chars(b, e, id);
            else {
                double v = 0.0;
                r = std::from_chars(b, e, v);
                vals.push_back(v);
            }
            if (r.ec != std::errc{} || r.ptr != e)
                throw ParseError("bad CSV value on line " + std::to_string(lineno));
            if (col + 1 < n + 2 && end >= line.size())
                throw ParseError("too few CSV columns on line " + std::to_string(lineno));
            pos = end + 1;
        }
        if (pos <= line.size()) throw ParseError("too many CSV columns on line " + std::to_string(lineno));
        auto [it, fresh] = index.emplace(id, out.size());
        if (fresh) out.emplace_back();
        Trajectory& tr = out[it->second];
        if (!tr.times.empty() && !(vals[0] > tr.times.back()))
            throw ParseError("times must increase within a trajectory (line " + std::to_string(lineno) + ")");
        tr.times.push_back(vals[0]);
        tr.states.push_back(Eigen::Map<const Vector>(vals.data() + 1, static_cast<Eigen::Index>(n)));
    }
    if (out.empty()) throw ParseError("snapshot CSV has no rows");
    return out;
}

/// Common sampling step of CSV trajectories; they must be uniformly sampled.
inline double infer_step(std::span<const Trajectory> trajs) {
    double h = 0.0;
    for (const auto& tr : trajs) {
        for (std::size_t k = 0; k + 1 < tr.times.size(); ++k) {
            const double d = tr.times[k + 1] - tr.times[k];
            if (h == 0.0) h = d;
            else if (std::abs(d - h) > 1e-9 * std::max(1.0, std::abs(h)))
                throw ParseError("trajectories are not uniformly sampled");
        }
    }
    if (h <= 0.0) throw ParseError("cannot infer a sampling step from single-sample trajectories");
    return h;
}

}  // namespace koopman_reach
