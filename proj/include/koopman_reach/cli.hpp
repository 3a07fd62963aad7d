// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <unistd.h>

#include "koopman_reach/config.hpp"
#include "koopman_reach/errors.hpp"
#include "koopman_reach/koopman.hpp"
#include "koopman_reach/models.hpp"
#include "koopman_reach/observables.hpp"
#include "koopman_reach/sets.hpp"
#include "koopman_reach/verify.hpp"

namespace koopman_reach {

enum class LogLevel { error = 0, info = 1, debug = 2 };

inline LogLevel log_level_from_string(const std::string& s) {
    if (s == "error") return LogLevel::error;
    if (s == "info") return LogLevel::info;
    if (s == "debug") return LogLevel::debug;
    throw ConfigError("log level must be error, info or debug");
}

using LogSink = std::function<void(LogLevel, const std::string&)>;

struct CliOptions {
    bool plot = false;
    std::optional<std::string> external_solver;
    std::size_t jobs = 1;
    std::optional<std::filesystem::path> results_dir;  // report: overrides the config output
    LogSink log = [](LogLevel, const std::string&) {};
    std::ostream* out = &std::cout;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config = 2;
inline constexpr int fit = 3;
inline constexpr int internal = 4;
}  // namespace exit_code

/// Writes through a temporary file in the same directory and renames it over
/// the target, so readers never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    static std::atomic<unsigned> counter{0};
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter.fetch_add(1));
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error("cannot write " + tmp.string());
        os << content;
        os.flush();
        if (!os) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Training.

struct FittedSetup {
    std::optional<OdeModel> ode;
    std::shared_ptr<const KoopmanModel> model;
    std::vector<std::string> names;
    InitialSet init;
};

namespace detail {

// The config sections a fitted model depends on.
inline nlohmann::json training_key(const RunConfig& c) {
    const nlohmann::json j = config_to_json(c);
    return {{"model", j.at("model")},
            {"dictionary", j.at("dictionary")},
            {"training", j.at("training")},
            {"init", j.at("problem").at("init")}};
}

}  // namespace detail

inline KoopmanModel fit_from_config(const RunConfig& c, const std::optional<OdeModel>& ode,
                                    std::span<const std::string> names, const InitialSet& init, std::size_t jobs) {
    const std::size_t n = names.size();
    const Dictionary dict = config_dictionary(c, n, names);
    const auto& tr = c.training;
    try {
        std::optional<KoopmanModel> m;
        if (ode) {
            const SnapshotData data = generate_snapshots(*ode, init.box, tr.n_traj, tr.h, tr.horizon, jobs);
            if (tr.variant == "step") m = fit_edmd(dict, data, tr.truncation);
            else m = fit_edmd_derivative(dict, symbolic_derivative_data(dict, *ode, data), tr.h, tr.truncation);
        } else {
            const auto trajs = config_csv_trajectories(c);
            const double h = infer_step(trajs);
            if (tr.variant == "step") m = fit_edmd(dict, snapshots_from_trajectories(trajs, h), tr.truncation);
            else m = fit_edmd_derivative(dict, finite_difference_derivative_data(dict, trajs), h, tr.truncation);
        }
        FitMeta meta = m->meta();
        meta.provenance = detail::training_key(c);
        return KoopmanModel(m->dictionary(), m->k_step(), m->step(), std::move(meta), m->k_inf(),
                            std::vector<std::string>(names.begin(), names.end()));
    } catch (const IntegrationError& e) {
        throw FitError(std::string("training simulation failed: ") + e.what());
    } catch (const DimensionError& e) {
        throw FitError(e.what());
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
}

/// Loads <output>/model.json when it was fitted from the same training
/// settings; otherwise fits and saves a fresh model.
inline FittedSetup prepare(const RunConfig& c, const CliOptions& opt, bool force_fit = false) {
    FittedSetup s;
    s.ode = config_ode(c);
    std::size_t n = 0;
    if (s.ode) n = s.ode->dim();
    else n = static_cast<std::size_t>(config_csv_trajectories(c).front().states.front().size());
    s.names = config_state_names(c, n, s.ode);
    s.init = config_initial_set(c, s.names);
    if (s.init.box.size() != n) throw ConfigError("initial set has the wrong dimension");
    const auto path = c.output_dir() / "model.json";
    if (!force_fit && std::filesystem::exists(path)) {
        try {
            auto m = std::make_shared<const KoopmanModel>(load_model(path.string()));
            if (m->meta().provenance == detail::training_key(c)) {
                opt.log(LogLevel::info, "reusing fitted model " + path.string());
                s.model = std::move(m);
                return s;
            }
        } catch (const Error&) {
            opt.log(LogLevel::info, "ignoring unreadable model file " + path.string());
        }
    }
    opt.log(LogLevel::info, "fitting Koopman model");
    s.model = std::make_shared<const KoopmanModel>(fit_from_config(c, s.ode, s.names, s.init, opt.jobs));
    opt.log(LogLevel::info, "fitted " + std::to_string(s.model->lifted_dim()) + " observables, rank " +
                                std::to_string(s.model->meta().retained_rank));
    write_file_atomic(path, to_json(*s.model).dump(1) + "\n");
    return s;
}

// ---------------------------------------------------------------------------
// Linearization error report.

struct ErrorRow {
    double time_frac = 0.0;
    double max_abs = 0.0;
    double avg_abs = 0.0;
    double max_rel = 0.0;
    double avg_rel = 0.0;
};

/// Corners and center of a box.
inline std::vector<Vector> corners_and_center(const IntervalBox& box) {
    const std::size_t n = box.size();
    if (n > 20) throw DimensionError("too many dimensions for corner enumeration");
    std::vector<Vector> out;
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
        Vector v(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = (mask >> i) & 1U ? box[i].hi() : box[i].lo();
        out.push_back(std::move(v));
    }
    const auto mid = box.midpoint();
    out.push_back(Eigen::Map<const Vector>(mid.data(), static_cast<Eigen::Index>(n)));
    return out;
}

/// Errors of the linear model against reference trajectories at the time
/// fractions 0.2, 0.4, ..., 1.0 of the horizon. Absolute error is the
/// Euclidean distance; relative error divides by the reference norm.
inline std::vector<ErrorRow> error_table(const KoopmanModel& model, std::span<const Trajectory> reference) {
    if (reference.empty()) throw DimensionError("no reference trajectories");
    const std::size_t steps = reference.front().states.size() - 1;
    if (steps == 0) throw DimensionError("reference trajectories need at least two samples");
    std::vector<ErrorRow> rows;
    std::vector<std::vector<Vector>> preds;
    for (const auto& tr : reference) {
        if (tr.states.size() != steps + 1) throw DimensionError("reference trajectories differ in length");
        preds.push_back(model.predict(tr.states.front(), steps, tr.times.front()));
    }
    for (int f = 1; f <= 5; ++f) {
        ErrorRow r;
        r.time_frac = 0.2 * f;
        const auto s = static_cast<std::size_t>(std::lround(r.time_frac * static_cast<double>(steps)));
        for (std::size_t k = 0; k < reference.size(); ++k) {
            const Vector& truth = reference[k].states[s];
            const double e = (preds[k][s] - truth).norm();
            const double nt = truth.norm();
            const double rel = nt > 0.0 ? e / nt : e;
            r.max_abs = std::max(r.max_abs, e);
            r.max_rel = std::max(r.max_rel, rel);
            r.avg_abs += e;
            r.avg_rel += rel;
        }
        r.avg_abs /= static_cast<double>(reference.size());
        r.avg_rel /= static_cast<double>(reference.size());
        rows.push_back(r);
    }
    return rows;
}

inline std::string error_table_csv(std::span<const ErrorRow> rows) {
    std::string out = "time_frac,max_abs,avg_abs,max_rel,avg_rel\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.1f,%.6e,%.6e,%.6e,%.6e\n", r.time_frac, r.max_abs, r.avg_abs, r.max_rel,
                      r.avg_rel);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Verification output.

inline nlohmann::json verdict_to_json(const Verdict& v, long i, const std::string& model_name, Algorithm alg) {
    nlohmann::json j;
    j["model"] = model_name;
    j["algorithm"] = to_string(alg);
    j["i"] = i;
    j["kind"] = to_string(v.kind);
    j["step"] = v.step ? nlohmann::json(*v.step) : nlohmann::json(nullptr);
    nlohmann::json w = nlohmann::json::array();
    if (v.witness_x0)
        for (Eigen::Index k = 0; k < v.witness_x0->size(); ++k) w.push_back((*v.witness_x0)(k));
    j["witness"] = w;
    j["runtime_s"] = v.runtime_s;
    j["solver_calls"] = v.solver_calls;
    j["splits"] = v.splits;
    j["steps_checked"] = v.steps.size();
    if (v.kind == VerdictKind::unknown) j["flag"] = "UNKNOWN";
    if (!v.message.empty()) j["message"] = v.message;
    if (v.validation) {
        const auto& r = *v.validation;
        nlohmann::json val = {{"linear_slack", r.linear_slack},
                              {"linear_tolerance", r.linear_tolerance},
                              {"linear_ok", r.linear_ok},
                              {"blackbox_available", r.blackbox_available}};
        if (r.blackbox_available) {
            val["blackbox_slack"] = r.blackbox_slack;
            val["blackbox_in_unsafe"] = r.blackbox_in_unsafe;
            val["discrepancy"] = r.discrepancy;
        }
        if (!r.blackbox_error.empty()) val["blackbox_error"] = r.blackbox_error;
        j["validation"] = val;
    }
    return j;
}

namespace detail {

// Vertices of the 2-D projection of a zonotope, counter-clockwise.
inline std::vector<std::pair<double, double>> zonotope_polygon(const Zonotope& z, Eigen::Index a, Eigen::Index b) {
    std::vector<std::pair<double, double>> gens;
    double cx = z.center()(a), cy = z.center()(b);
    for (Eigen::Index j = 0; j < z.generators().cols(); ++j) {
        const Interval& d = z.domain()[static_cast<std::size_t>(j)];
        double gx = z.generators()(a, j) * d.rad(), gy = z.generators()(b, j) * d.rad();
        cx += z.generators()(a, j) * d.mid();
        cy += z.generators()(b, j) * d.mid();
        if (gx == 0.0 && gy == 0.0) continue;
        if (gy < 0.0 || (gy == 0.0 && gx < 0.0)) {
            gx = -gx;
            gy = -gy;
        }
        gens.emplace_back(gx, gy);
    }
    std::sort(gens.begin(), gens.end(),
              [](const auto& p, const auto& q) { return std::atan2(p.second, p.first) < std::atan2(q.second, q.first); });
    double x = cx, y = cy;
    for (const auto& g : gens) {
        x -= g.first;
        y -= g.second;
    }
    std::vector<std::pair<double, double>> pts;
    for (const auto& g : gens) {
        pts.emplace_back(x, y);
        x += 2.0 * g.first;
        y += 2.0 * g.second;
    }
    for (const auto& g : gens) {
        pts.emplace_back(x, y);
        x -= 2.0 * g.first;
        y -= 2.0 * g.second;
    }
    if (pts.empty()) pts.emplace_back(cx, cy);
    return pts;
}

}  // namespace detail

/// SVG of the per-step reach zonotopes projected onto state dimensions a, b,
/// with the boundary of each unsafe half-space restricted to that plane.
inline std::string reach_svg(const KoopmanModel& model, const InitialSet& init, const UnsafeSet& unsafe,
                             std::size_t steps, std::size_t a, std::size_t b, std::span<const std::string> names) {
    const IntervalBox lifted = lift_box(model.dictionary(), init.box);
    const StepOperator powers(model.k_step());
    std::vector<std::vector<std::pair<double, double>>> polys;
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (std::size_t i = 0; i <= steps; ++i) {
        const Zonotope z = reach_zonotope(lifted, *powers.power(i));
        polys.push_back(detail::zonotope_polygon(z, static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
        for (const auto& [x, y] : polys.back()) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    }
    const double px = std::max(x1 - x0, 1e-9) * 0.05, py = std::max(y1 - y0, 1e-9) * 0.05;
    x0 -= px;
    x1 += px;
    y0 -= py;
    y1 += py;
    const double w = 640.0, h = 480.0;
    auto sx = [&](double x) { return (x - x0) / (x1 - x0) * w; };
    auto sy = [&](double y) { return h - (y - y0) / (y1 - y0) * h; };
    std::ostringstream os;
    os << std::setprecision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h + 20 << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (const auto& poly : polys) {
        os << "<polygon fill=\"steelblue\" fill-opacity=\"0.15\" stroke=\"steelblue\" stroke-width=\"0.5\" points=\"";
        for (const auto& [x, y] : poly) os << sx(x) << ',' << sy(y) << ' ';
        os << "\"/>\n";
    }
    for (const auto& hs : unsafe.constraints()) {
        const double qa = hs.normal()(static_cast<Eigen::Index>(a)), qb = hs.normal()(static_cast<Eigen::Index>(b));
        // Other coordinates contribute nothing when they are absent from the normal.
        if (qa == 0.0 && qb == 0.0) continue;
        double ax, ay, bx, by;
        if (std::abs(qb) > std::abs(qa)) {
            ax = x0;
            bx = x1;
            ay = (hs.offset() - qa * ax) / qb;
            by = (hs.offset() - qa * bx) / qb;
        } else {
            ay = y0;
            by = y1;
            ax = (hs.offset() - qb * ay) / qa;
            bx = (hs.offset() - qb * by) / qa;
        }
        os << "<line x1=\"" << sx(ax) << "\" y1=\"" << sy(ay) << "\" x2=\"" << sx(bx) << "\" y2=\"" << sy(by)
           << "\" stroke=\"crimson\" stroke-width=\"1.5\"/>\n";
    }
    os << "<text x=\"4\" y=\"" << h + 15 << "\" font-size=\"12\">" << names[a] << " in [" << x0 << ", " << x1
       << "], " << names[b] << " in [" << y0 << ", " << y1 << "]</text>\n";
    os << "</svg>\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Commands.

inline int cmd_simulate(const RunConfig& c, const CliOptions& opt) {
    const auto ode = config_ode(c);
    if (!ode) throw ConfigError("simulate needs a builtin or equation model");
    const auto names = config_state_names(c, ode->dim(), ode);
    const InitialSet init = config_initial_set(c, names);
    const double h = c.simulate.h.value_or(c.problem.h);
    const double horizon = c.simulate.horizon.value_or(c.problem.horizon);
    const auto starts = sobol_points(init.box, c.simulate.n_traj);
    std::vector<Trajectory> trajs;
    try {
        trajs = simulate_from(*ode, starts, h, horizon, opt.jobs);
    } catch (const IntegrationError& e) {
        throw Error(std::string("simulation failed: ") + e.what());
    }
    const auto dir = c.output_dir() / "simulate";
    nlohmann::json manifest = {{"model", ode->name()}, {"state_names", names}, {"h", h}, {"T", horizon}};
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t k = 0; k < trajs.size(); ++k) {
        std::ostringstream name;
        name << "traj_" << std::setw(4) << std::setfill('0') << k << ".csv";
        std::ostringstream csv;
        write_trajectories_csv(csv, std::span<const Trajectory>(&trajs[k], 1), k);
        write_file_atomic(dir / name.str(), csv.str());
        files.push_back(name.str());
    }
    manifest["files"] = files;
    write_file_atomic(dir / "manifest.json", manifest.dump(1) + "\n");
    opt.log(LogLevel::info, "wrote " + std::to_string(trajs.size()) + " trajectories to " + dir.string());
    *opt.out << "simulate: " << trajs.size() << " trajectories in " << dir.string() << '\n';
    return exit_code::ok;
}

inline int cmd_linearize(const RunConfig& c, const CliOptions& opt) {
    const FittedSetup s = prepare(c, opt, true);
    std::vector<Trajectory> reference;
    if (s.ode) {
        try {
            reference = simulate_from(*s.ode, corners_and_center(s.init.box), s.model->step(), c.problem.horizon, opt.jobs);
        } catch (const IntegrationError& e) {
            throw FitError(std::string("validation simulation failed: ") + e.what());
        }
    } else {
        reference = config_csv_trajectories(c);
    }
    const auto rows = error_table(*s.model, reference);
    const auto path = c.output_dir() / "errors.csv";
    write_file_atomic(path, error_table_csv(rows));
    *opt.out << "linearize: " << s.model->lifted_dim() << " observables, rank " << s.model->meta().retained_rank
             << ", residual " << s.model->meta().residual << '\n'
             << error_table_csv(rows);
    return exit_code::ok;
}

inline int cmd_verify(const RunConfig& c, const CliOptions& opt) {
    const FittedSetup s = prepare(c, opt);
    const auto sweep = config_sweep(c);
    const std::string model_name = c.name.empty() ? "model" : c.name;
    auto powers = std::make_shared<const StepOperator>(s.model->k_step());
    std::shared_ptr<const OdeModel> original;
    if (s.ode) original = std::make_shared<const OdeModel>(*s.ode);
    std::vector<Verdict> verdicts(sweep.size());
    const std::size_t outer = std::min(opt.jobs, sweep.size());
    parallel_for(sweep.size(), outer, [&](std::size_t k) {
        VerificationProblem p{s.model, s.init, config_unsafe(c, s.names, sweep[k]), c.problem.h, c.problem.horizon,
                              config_verify_options(c), original, powers};
        p.options.external_solver = opt.external_solver;
        p.options.workers = outer > 1 ? 1 : opt.jobs;
        verdicts[k] = verify(p);
        opt.log(LogLevel::info, "i=" + std::to_string(sweep[k]) + ": " + to_string(verdicts[k].kind));
    });
    const auto dir = c.output_dir();
    const std::string alg = to_string(c.verify.algorithm);
    std::ostringstream stats;
    stats << "model,algorithm,i,kind,step,solver_calls,splits,runtime_s,steps_checked\n";
    for (std::size_t k = 0; k < sweep.size(); ++k) {
        const auto j = verdict_to_json(verdicts[k], sweep[k], model_name, c.verify.algorithm);
        write_file_atomic(dir / "verdicts" / alg / ("i_" + std::to_string(sweep[k]) + ".json"), j.dump(1) + "\n");
        const auto& v = verdicts[k];
        stats << model_name << ',' << alg << ',' << sweep[k] << ',' << to_string(v.kind) << ','
              << (v.step ? std::to_string(*v.step) : "") << ',' << v.solver_calls << ',' << v.splits << ','
              << format_double(v.runtime_s) << ',' << v.steps.size() << '\n';
        *opt.out << "verify i=" << sweep[k] << ": " << to_string(v.kind);
        if (v.step) *opt.out << " at step " << *v.step;
        *opt.out << " (" << v.solver_calls << " solver calls)\n";
        if (v.kind == VerdictKind::unknown) opt.log(LogLevel::error, "i=" + std::to_string(sweep[k]) + ": " + v.message);
    }
    write_file_atomic(dir / ("stats_" + alg + ".csv"), stats.str());
    if (opt.plot) {
        const UnsafeSet u = config_unsafe(c, s.names, sweep.front());
        // Plot the most constrained coordinate against its neighbour.
        Eigen::Index a = 0;
        u.constraints().front().normal().cwiseAbs().maxCoeff(&a);
        const std::size_t n = s.names.size();
        const std::size_t ia = static_cast<std::size_t>(a);
        const std::size_t ib = n == 1 ? ia : (ia == 0 ? 1 : 0);
        const std::size_t steps = detail::step_count(c.problem.h, c.problem.horizon);
        write_file_atomic(dir / ("reach_" + alg + ".svg"), reach_svg(*s.model, s.init, u, steps, ib, ia, s.names));
    }
    return exit_code::ok;
}

struct ReportRow {
    std::string model;
    long i = 0;
    std::string algorithm;
    std::string kind;
    std::string step;
    std::size_t solver_calls = 0;
    std::size_t splits = 0;
    double runtime_s = 0.0;
    bool disagree = false;
};

/// Collates verdict files under `dir` into rows sorted by (model, i,
/// algorithm); rows whose (model, i) group has differing kinds are flagged.
inline std::vector<ReportRow> collect_report(const std::filesystem::path& dir) {
    std::vector<ReportRow> rows;
    if (!std::filesystem::is_directory(dir)) throw ConfigError("results directory not found: " + dir.string());
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".json") continue;
        if (e.path().parent_path().parent_path().filename() != "verdicts") continue;
        std::ifstream is(e.path(), std::ios::binary);
        nlohmann::json j;
        try {
            is >> j;
            ReportRow r;
            r.model = j.at("model").get<std::string>();
            r.i = j.at("i").get<long>();
            r.algorithm = j.at("algorithm").get<std::string>();
            r.kind = j.at("kind").get<std::string>();
            r.step = j.at("step").is_null() ? "" : std::to_string(j.at("step").get<std::size_t>());
            r.solver_calls = j.at("solver_calls").get<std::size_t>();
            r.splits = j.at("splits").get<std::size_t>();
            r.runtime_s = j.at("runtime_s").get<double>();
            rows.push_back(std::move(r));
        } catch (const nlohmann::json::exception& ex) {
            throw ConfigError("malformed verdict file " + e.path().string() + ": " + ex.what());
        }
    }
    if (rows.empty()) throw ConfigError("no verdict files under " + dir.string());
    std::sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        return std::tie(a.model, a.i, a.algorithm) < std::tie(b.model, b.i, b.algorithm);
    });
    std::map<std::pair<std::string, long>, std::set<std::string>> kinds;
    for (const auto& r : rows) kinds[{r.model, r.i}].insert(r.kind);
    for (auto& r : rows) r.disagree = kinds[{r.model, r.i}].size() > 1;
    return rows;
}

inline std::string report_csv(std::span<const ReportRow> rows) {
    std::ostringstream os;
    os << "model,i,algorithm,kind,step,solver_calls,splits,runtime_s,flag\n";
    for (const auto& r : rows)
        os << r.model << ',' << r.i << ',' << r.algorithm << ',' << r.kind << ',' << r.step << ',' << r.solver_calls
           << ',' << r.splits << ',' << format_double(r.runtime_s) << ',' << (r.disagree ? "DISAGREE" : "") << '\n';
    return os.str();
}

inline std::string report_text(std::span<const ReportRow> rows) {
    std::ostringstream os;
    os << std::left << std::setw(20) << "model" << std::right << std::setw(5) << "i" << "  " << std::left
       << std::setw(12) << "algorithm" << std::setw(9) << "kind" << std::right << std::setw(6) << "step"
       << std::setw(8) << "calls" << std::setw(8) << "splits" << std::setw(12) << "runtime_s" << "  flag\n";
    for (const auto& r : rows)
        os << std::left << std::setw(20) << r.model << std::right << std::setw(5) << r.i << "  " << std::left
           << std::setw(12) << r.algorithm << std::setw(9) << r.kind << std::right << std::setw(6) << r.step
           << std::setw(8) << r.solver_calls << std::setw(8) << r.splits << std::setw(12) << std::fixed
           << std::setprecision(4) << r.runtime_s << "  " << (r.disagree ? "DISAGREE" : "") << '\n';
    return os.str();
}

inline int cmd_report(const std::filesystem::path& dir, const CliOptions& opt) {
    const auto rows = collect_report(dir);
    write_file_atomic(dir / "report.csv", report_csv(rows));
    const std::string text = report_text(rows);
    write_file_atomic(dir / "report.txt", text);
    *opt.out << text;
    return exit_code::ok;
}

/// Dispatches a command and maps failures to exit codes: 2 config, 3 fit,
/// 4 internal.
inline int run_command(const std::string& command, const std::filesystem::path& config_path, const CliOptions& opt) {
    auto fail = [&](int code, const std::string& what) {
        opt.log(LogLevel::error, what);
        std::cerr << "koopman-reach: " << what << '\n';
        return code;
    };
    try {
        if (command == "report" && opt.results_dir) return cmd_report(*opt.results_dir, opt);
        const RunConfig c = load_config(config_path);
        if (command == "simulate") return cmd_simulate(c, opt);
        if (command == "linearize") return cmd_linearize(c, opt);
        if (command == "verify") return cmd_verify(c, opt);
        if (command == "report") return cmd_report(c.output_dir(), opt);
        return fail(exit_code::config, "unknown command '" + command + "'");
    } catch (const ConfigError& e) {
        return fail(exit_code::config, e.what());
    } catch (const FitError& e) {
        return fail(exit_code::fit, e.what());
    } catch (const std::exception& e) {
        return fail(exit_code::internal, e.what());
    }
}

}  // namespace koopman_reach
