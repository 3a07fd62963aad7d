// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "koopman_reach/errors.hpp"
#include "koopman_reach/expr.hpp"
#include "koopman_reach/halfspace.hpp"
#include "koopman_reach/interval.hpp"
#include "koopman_reach/koopman.hpp"
#include "koopman_reach/models.hpp"
#include "koopman_reach/observables.hpp"
#include "koopman_reach/verify.hpp"

namespace koopman_reach {

/// Half-space whose offset may depend on the sweep parameter i:
/// q^T x <= r0 + r1 * i.
struct LinearTemplate {
    std::string text;
    Vector normal;
    double offset = 0.0;
    double offset_per_i = 0.0;

    bool uses_i() const { return offset_per_i != 0.0; }

    HalfSpace at(long i) const { return HalfSpace(normal, offset + offset_per_i * static_cast<double>(i)); }
};

namespace detail {

// Affine form sum_k c_k v_k + c0 where v_n is the symbol i.
inline void affine_terms(const Expr& e, std::size_t n, Vector& coeff, double& constant) {
    const Expr x = expand(e);
    if (x.is_constant()) {
        constant += x.value();
        return;
    }
    const std::vector<Expr> terms = x.kind() == ExprKind::add ? x.args() : std::vector<Expr>{x};
    for (const auto& t : terms) {
        const auto [c, mono] = coeff_term(t);
        if (mono.is_constant(1.0)) constant += c;
        else if (mono.kind() == ExprKind::variable && static_cast<std::size_t>(mono.index()) <= n)
            coeff(mono.index()) += c;
        else throw ConfigError("expression is not linear: " + to_string(mono));
    }
}

}  // namespace detail

/// Parses "lhs <= rhs" or "lhs >= rhs" where both sides are linear in the
/// named state variables, literals and the sweep symbol i. The state part
/// may not depend on i.
inline LinearTemplate parse_linear_template(const std::string& text, std::span<const std::string> names) {
    std::size_t pos = std::string::npos;
    bool le = true;
    for (std::size_t k = 0; k + 1 < text.size(); ++k) {
        if ((text[k] == '<' || text[k] == '>') && text[k + 1] == '=') {
            if (pos != std::string::npos) throw ConfigError("more than one relation in '" + text + "'");
            pos = k;
            le = text[k] == '<';
        }
    }
    if (pos == std::string::npos) throw ConfigError("constraint needs '<=' or '>=': '" + text + "'");
    const std::size_t n = names.size();
    const std::function<std::optional<int>(std::string_view)> resolve =
        [&](std::string_view s) -> std::optional<int> {
        for (std::size_t k = 0; k < n; ++k)
            if (names[k] == s) return static_cast<int>(k);
        if (s == "i") return static_cast<int>(n);
        return std::nullopt;
    };
    Expr lhs, rhs;
    try {
        lhs = detail::ExprParser(std::string_view(text).substr(0, pos), resolve).parse();
        rhs = detail::ExprParser(std::string_view(text).substr(pos + 2), resolve).parse();
    } catch (const ParseError& e) {
        throw ConfigError(std::string("bad constraint: ") + e.what());
    }
    Vector coeff = Vector::Zero(static_cast<Eigen::Index>(n + 1));
    double constant = 0.0;
    // lhs - rhs <= 0, or rhs - lhs <= 0.
    detail::affine_terms(le ? lhs - rhs : rhs - lhs, n, coeff, constant);
    LinearTemplate t;
    t.text = text;
    t.normal = coeff.head(static_cast<Eigen::Index>(n));
    if (t.normal.isZero(0.0)) throw ConfigError("constraint has no state variable: '" + text + "'");
    t.offset = -constant;
    t.offset_per_i = -coeff(static_cast<Eigen::Index>(n));
    return t;
}

struct ModelSource {
    enum class Kind { builtin, csv, equations };
    Kind kind = Kind::builtin;
    std::string builtin;
    std::map<std::string, double> parameters;
    std::string csv;  // as written in the config
    std::vector<std::string> state_names;
    std::vector<std::string> equations;
};

struct DictionarySpec {
    int max_poly_degree = 1;
    TrigSpec trig;
    std::vector<std::string> observables;  // explicit list overrides the generated one
};

struct TrainingSpec {
    std::size_t n_traj = 10000;
    double h = 0.01;
    double horizon = 1.0;
    Truncation truncation;
    std::string variant = "step";
};

struct UnsafeTemplate {
    std::string expr;
    std::optional<std::pair<long, long>> i_range;
};

struct ProblemSpec {
    std::optional<IntervalBox> init_box;
    std::vector<std::string> init_halfspaces;
    std::vector<UnsafeTemplate> unsafe;
    double h = 0.01;
    double horizon = 1.0;
};

struct VerifySpec {
    Algorithm algorithm = Algorithm::zono_split;
    std::size_t max_level = 0;
    double delta = 1e-4;
    std::size_t contract_from_level = 0;
    double timeout_s = 60.0;
    std::size_t max_boxes = 1000000;
};

struct SimulateSpec {
    std::size_t n_traj = 2;
    std::optional<double> h;
    std::optional<double> horizon;
};

struct RunConfig {
    std::string name;
    ModelSource model;
    DictionarySpec dictionary;
    TrainingSpec training;
    ProblemSpec problem;
    VerifySpec verify;
    SimulateSpec simulate;
    std::string output = "out";
    std::filesystem::path base_dir;  // directory of the config file; not serialized

    std::filesystem::path resolve(const std::string& p) const {
        const std::filesystem::path path(p);
        return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    }
    std::filesystem::path output_dir() const { return resolve(output); }
};

namespace detail {

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : keys) ok = ok || it.key() == k;
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

inline IntervalBox box_from_json(const nlohmann::json& j) {
    std::vector<Interval> dims;
    for (const auto& d : j) {
        if (!d.is_array() || d.size() != 2) throw ConfigError("box entries must be [lo, hi] pairs");
        const double lo = d[0].get<double>(), hi = d[1].get<double>();
        if (!(std::isfinite(lo) && std::isfinite(hi)) || lo > hi) throw ConfigError("box bounds must be finite, lo <= hi");
        dims.emplace_back(lo, hi);
    }
    if (dims.empty()) throw ConfigError("box must have at least one dimension");
    return IntervalBox(std::move(dims));
}

inline nlohmann::json box_to_json(const IntervalBox& b) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& d : b.dims()) j.push_back({d.lo(), d.hi()});
    return j;
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j, std::filesystem::path base_dir = {}) {
    RunConfig c;
    c.base_dir = std::move(base_dir);
    try {
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        detail::reject_unknown(j, {"version", "name", "model", "dictionary", "training", "problem", "verify", "simulate", "output"},
                               "config");
        if (!j.contains("version") || j.at("version").get<int>() != 1) throw ConfigError("config needs \"version\": 1");
        c.name = detail::get_or<std::string>(j, "name", "");

        const auto& m = j.at("model");
        detail::reject_unknown(m, {"builtin", "parameters", "csv", "state_names", "equations"}, "model");
        const int sources = int(m.contains("builtin")) + int(m.contains("csv")) + int(m.contains("equations"));
        if (sources != 1) throw ConfigError("model needs exactly one of builtin, csv, equations");
        c.model.state_names = detail::get_or<std::vector<std::string>>(m, "state_names", {});
        if (m.contains("builtin")) {
            c.model.kind = ModelSource::Kind::builtin;
            c.model.builtin = m.at("builtin").get<std::string>();
            c.model.parameters = detail::get_or<std::map<std::string, double>>(m, "parameters", {});
        } else if (m.contains("csv")) {
            c.model.kind = ModelSource::Kind::csv;
            c.model.csv = m.at("csv").get<std::string>();
        } else {
            c.model.kind = ModelSource::Kind::equations;
            c.model.equations = m.at("equations").get<std::vector<std::string>>();
            if (c.model.state_names.size() != c.model.equations.size())
                throw ConfigError("equations need one state name per equation");
        }

        const auto& d = j.at("dictionary");
        detail::reject_unknown(d, {"max_poly_degree", "trig", "observables"}, "dictionary");
        c.dictionary.max_poly_degree = detail::get_or<int>(d, "max_poly_degree", 1);
        if (d.contains("trig")) {
            detail::reject_unknown(d.at("trig"), {"a_max", "b_max"}, "dictionary.trig");
            c.dictionary.trig.a_max = detail::get_or<int>(d.at("trig"), "a_max", 0);
            c.dictionary.trig.b_max = detail::get_or<int>(d.at("trig"), "b_max", 0);
        }
        c.dictionary.observables = detail::get_or<std::vector<std::string>>(d, "observables", {});
        if (c.dictionary.max_poly_degree < 1) throw ConfigError("max_poly_degree must be at least 1");
        if (c.dictionary.trig.a_max < 0 || c.dictionary.trig.b_max < 0) throw ConfigError("trig degrees must be >= 0");

        if (j.contains("training")) {
            const auto& t = j.at("training");
            detail::reject_unknown(t, {"n_traj", "h", "T", "truncation", "variant"}, "training");
            c.training.n_traj = detail::get_or<std::size_t>(t, "n_traj", c.training.n_traj);
            c.training.h = detail::get_or<double>(t, "h", c.training.h);
            c.training.horizon = detail::get_or<double>(t, "T", c.training.horizon);
            if (t.contains("truncation")) c.training.truncation = truncation_from_json(t.at("truncation"));
            c.training.variant = detail::get_or<std::string>(t, "variant", "step");
            if (c.training.variant != "step" && c.training.variant != "derivative")
                throw ConfigError("training.variant must be step or derivative");
            if (c.training.n_traj == 0) throw ConfigError("training.n_traj must be positive");
            if (!(c.training.h > 0.0) || !(c.training.horizon > 0.0)) throw ConfigError("training h and T must be positive");
        }

        const auto& p = j.at("problem");
        detail::reject_unknown(p, {"init", "unsafe", "h", "T"}, "problem");
        const auto& init = p.at("init");
        detail::reject_unknown(init, {"box", "halfspaces"}, "problem.init");
        if (init.contains("box")) c.problem.init_box = detail::box_from_json(init.at("box"));
        c.problem.init_halfspaces = detail::get_or<std::vector<std::string>>(init, "halfspaces", {});
        if (!c.problem.init_box && c.problem.init_halfspaces.empty())
            throw ConfigError("problem.init needs a box or halfspaces");
        for (const auto& u : p.at("unsafe")) {
            UnsafeTemplate t;
            if (u.is_string()) t.expr = u.get<std::string>();
            else {
                detail::reject_unknown(u, {"expr", "i_range"}, "problem.unsafe");
                t.expr = u.at("expr").get<std::string>();
                if (u.contains("i_range")) {
                    const auto r = u.at("i_range").get<std::vector<long>>();
                    if (r.size() != 2 || r[0] > r[1]) throw ConfigError("i_range must be [lo, hi] with lo <= hi");
                    t.i_range = std::make_pair(r[0], r[1]);
                }
            }
            c.problem.unsafe.push_back(std::move(t));
        }
        if (c.problem.unsafe.empty()) throw ConfigError("problem.unsafe must not be empty");
        c.problem.h = p.at("h").get<double>();
        c.problem.horizon = p.at("T").get<double>();
        if (!(c.problem.h > 0.0) || !(c.problem.horizon >= 0.0)) throw ConfigError("problem h must be positive, T >= 0");
        try {
            (void)detail::step_count(c.problem.h, c.problem.horizon);
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }

        if (j.contains("verify")) {
            const auto& v = j.at("verify");
            detail::reject_unknown(v, {"algorithm", "max_level", "delta", "contract_from_level", "timeout_s", "max_boxes"},
                                   "verify");
            c.verify.algorithm = algorithm_from_string(detail::get_or<std::string>(v, "algorithm", "zono_split"));
            c.verify.max_level = detail::get_or<std::size_t>(v, "max_level", 0);
            c.verify.delta = detail::get_or<double>(v, "delta", 1e-4);
            c.verify.contract_from_level = detail::get_or<std::size_t>(v, "contract_from_level", 0);
            c.verify.timeout_s = detail::get_or<double>(v, "timeout_s", 60.0);
            c.verify.max_boxes = detail::get_or<std::size_t>(v, "max_boxes", 1000000);
            if (!(c.verify.delta > 0.0)) throw ConfigError("verify.delta must be positive");
            if (!(c.verify.timeout_s > 0.0)) throw ConfigError("verify.timeout_s must be positive");
        }

        if (j.contains("simulate")) {
            const auto& s = j.at("simulate");
            detail::reject_unknown(s, {"n_traj", "h", "T"}, "simulate");
            c.simulate.n_traj = detail::get_or<std::size_t>(s, "n_traj", 2);
            if (s.contains("h")) c.simulate.h = s.at("h").get<double>();
            if (s.contains("T")) c.simulate.horizon = s.at("T").get<double>();
            if (c.simulate.n_traj == 0) throw ConfigError("simulate.n_traj must be positive");
        }
        c.output = detail::get_or<std::string>(j, "output", "out");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    if (c.model.kind == ModelSource::Kind::csv && !std::filesystem::exists(c.resolve(c.model.csv)))
        throw ConfigError("snapshot CSV not found: " + c.resolve(c.model.csv).string());
    return c;
}

/// Canonical form with every default written out.
inline nlohmann::json config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["version"] = 1;
    j["name"] = c.name;
    nlohmann::json m;
    switch (c.model.kind) {
        case ModelSource::Kind::builtin:
            m["builtin"] = c.model.builtin;
            m["parameters"] = c.model.parameters;
            break;
        case ModelSource::Kind::csv: m["csv"] = c.model.csv; break;
        case ModelSource::Kind::equations: m["equations"] = c.model.equations; break;
    }
    if (!c.model.state_names.empty()) m["state_names"] = c.model.state_names;
    j["model"] = m;
    nlohmann::json d = {{"max_poly_degree", c.dictionary.max_poly_degree},
                        {"trig", {{"a_max", c.dictionary.trig.a_max}, {"b_max", c.dictionary.trig.b_max}}}};
    if (!c.dictionary.observables.empty()) d["observables"] = c.dictionary.observables;
    j["dictionary"] = d;
    j["training"] = {{"n_traj", c.training.n_traj},
                     {"h", c.training.h},
                     {"T", c.training.horizon},
                     {"truncation", truncation_to_json(c.training.truncation)},
                     {"variant", c.training.variant}};
    nlohmann::json init = nlohmann::json::object();
    if (c.problem.init_box) init["box"] = detail::box_to_json(*c.problem.init_box);
    if (!c.problem.init_halfspaces.empty()) init["halfspaces"] = c.problem.init_halfspaces;
    nlohmann::json unsafe = nlohmann::json::array();
    for (const auto& u : c.problem.unsafe) {
        nlohmann::json e = {{"expr", u.expr}};
        if (u.i_range) e["i_range"] = {u.i_range->first, u.i_range->second};
        unsafe.push_back(e);
    }
    j["problem"] = {{"init", init}, {"unsafe", unsafe}, {"h", c.problem.h}, {"T", c.problem.horizon}};
    j["verify"] = {{"algorithm", to_string(c.verify.algorithm)},
                   {"max_level", c.verify.max_level},
                   {"delta", c.verify.delta},
                   {"contract_from_level", c.verify.contract_from_level},
                   {"timeout_s", c.verify.timeout_s},
                   {"max_boxes", c.verify.max_boxes}};
    nlohmann::json s = {{"n_traj", c.simulate.n_traj}};
    if (c.simulate.h) s["h"] = *c.simulate.h;
    if (c.simulate.horizon) s["T"] = *c.simulate.horizon;
    j["simulate"] = s;
    j["output"] = c.output;
    return j;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot read config file " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Materializing a config into library objects.

/// The ODE behind the config, or nullopt for CSV-only sources.
inline std::optional<OdeModel> config_ode(const RunConfig& c) {
    try {
        switch (c.model.kind) {
            case ModelSource::Kind::builtin: return builtin::make(c.model.builtin, c.model.parameters);
            case ModelSource::Kind::csv: return std::nullopt;
            case ModelSource::Kind::equations: {
                std::vector<Expr> field;
                for (const auto& e : c.model.equations) field.push_back(parse_expr(e, c.model.state_names));
                return OdeModel(c.name.empty() ? "equations" : c.name, c.model.state_names, {}, std::move(field));
            }
        }
    } catch (const ParseError& e) {
        throw ConfigError(std::string("bad model equation: ") + e.what());
    } catch (const DimensionError& e) {
        throw ConfigError(std::string("bad model: ") + e.what());
    }
    return std::nullopt;
}

inline std::vector<Trajectory> config_csv_trajectories(const RunConfig& c) {
    std::ifstream is(c.resolve(c.model.csv), std::ios::binary);
    if (!is) throw ConfigError("cannot read snapshot CSV " + c.resolve(c.model.csv).string());
    try {
        return read_trajectories_csv(is);
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
}

/// State variable names: explicit, from the ODE, or x1..xn.
inline std::vector<std::string> config_state_names(const RunConfig& c, std::size_t n,
                                                   const std::optional<OdeModel>& ode = std::nullopt) {
    if (!c.model.state_names.empty()) {
        if (c.model.state_names.size() != n) throw ConfigError("state_names has the wrong length");
        return c.model.state_names;
    }
    if (ode) return ode->var_names();
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) names.push_back("x" + std::to_string(i + 1));
    return names;
}

inline Dictionary config_dictionary(const RunConfig& c, std::size_t n, std::span<const std::string> names) {
    try {
        if (!c.dictionary.observables.empty()) {
            std::vector<Expr> e;
            for (const auto& s : c.dictionary.observables) e.push_back(parse_expr(s, names));
            return Dictionary(n, std::move(e));
        }
        return build_dictionary(n, c.dictionary.max_poly_degree, c.dictionary.trig);
    } catch (const ParseError& e) {
        throw ConfigError(std::string("bad observable: ") + e.what());
    } catch (const DimensionError& e) {
        throw ConfigError(std::string("bad dictionary: ") + e.what());
    }
}

inline InitialSet config_initial_set(const RunConfig& c, std::span<const std::string> names) {
    std::vector<HalfSpace> hs;
    for (const auto& s : c.problem.init_halfspaces) {
        const auto t = parse_linear_template(s, names);
        if (t.uses_i()) throw ConfigError("initial constraints may not use i");
        hs.push_back(t.at(0));
    }
    if (c.problem.init_box) {
        if (c.problem.init_box->size() != names.size()) throw ConfigError("initial box has the wrong dimension");
        return {*c.problem.init_box, std::move(hs)};
    }
    return InitialSet::from_halfspaces(std::move(hs));
}

/// Sweep values of i: the common i_range of the templates, or {0}.
inline std::vector<long> config_sweep(const RunConfig& c) {
    std::optional<std::pair<long, long>> range;
    for (const auto& u : c.problem.unsafe) {
        if (!u.i_range) continue;
        if (range && *range != *u.i_range) throw ConfigError("unsafe templates disagree on i_range");
        range = u.i_range;
    }
    if (!range) return {0};
    std::vector<long> out;
    for (long i = range->first; i <= range->second; ++i) out.push_back(i);
    return out;
}

inline UnsafeSet config_unsafe(const RunConfig& c, std::span<const std::string> names, long i) {
    std::vector<HalfSpace> hs;
    for (const auto& u : c.problem.unsafe) {
        const auto t = parse_linear_template(u.expr, names);
        if (t.uses_i() && !u.i_range) throw ConfigError("template uses i but has no i_range: '" + u.expr + "'");
        hs.push_back(t.at(i));
    }
    return UnsafeSet(std::move(hs));
}

inline VerifyOptions config_verify_options(const RunConfig& c) {
    VerifyOptions o;
    o.algorithm = c.verify.algorithm;
    o.max_level = c.verify.max_level;
    o.contract_from_level = c.verify.contract_from_level;
    o.solver.delta = c.verify.delta;
    o.solver.timeout_s = c.verify.timeout_s;
    o.solver.max_boxes = c.verify.max_boxes;
    return o;
}

}  // namespace koopman_reach
