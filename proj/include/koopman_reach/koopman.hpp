// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "koopman_reach/errors.hpp"
#include "koopman_reach/linalg.hpp"
#include "koopman_reach/models.hpp"
#include "koopman_reach/observables.hpp"
#include "koopman_reach/tape.hpp"

namespace koopman_reach {

struct FitMeta {
    std::string variant = "step";  // "step" or "derivative"
    std::size_t snapshots = 0;
    std::size_t trajectories = 0;
    std::size_t retained_rank = 0;
    Truncation truncation;
    double residual = 0.0;
    std::vector<std::string> warnings;
    nlohmann::json provenance = nlohmann::json::object();
};

/// Finite Koopman approximation y(t + h) ~= K_step y(t) on a dictionary.
class KoopmanModel {
public:
    KoopmanModel(Dictionary dict, Matrix k_step, double h, FitMeta meta = {}, std::optional<Matrix> k_inf = {},
                 std::vector<std::string> state_names = {})
        : dict_(std::move(dict)),
          k_step_(std::move(k_step)),
          k_inf_(std::move(k_inf)),
          h_(h),
          meta_(std::move(meta)),
          names_(std::move(state_names)) {
        const auto k = static_cast<Eigen::Index>(dict_.size());
        if (k_step_.rows() != k || k_step_.cols() != k) throw DimensionError("K_step must be k x k");
        if (k_inf_ && (k_inf_->rows() != k || k_inf_->cols() != k)) throw DimensionError("K_inf must be k x k");
        if (!k_step_.allFinite()) throw FitError("K_step has non-finite entries");
        if (!(h_ > 0.0)) throw DimensionError("step must be positive");
        if (names_.empty())
            for (std::size_t i = 0; i < dict_.state_dim(); ++i) names_.push_back("x" + std::to_string(i + 1));
        if (names_.size() != dict_.state_dim()) throw DimensionError("state names do not match dimension");
    }

    const Dictionary& dictionary() const { return dict_; }
    const Matrix& k_step() const { return k_step_; }
    const std::optional<Matrix>& k_inf() const { return k_inf_; }
    double step() const { return h_; }
    const FitMeta& meta() const { return meta_; }
    const std::vector<std::string>& state_names() const { return names_; }
    std::size_t state_dim() const { return dict_.state_dim(); }
    std::size_t lifted_dim() const { return dict_.size(); }
    Matrix projection() const { return dict_.projection(); }

    /// x_i = M K^i g(x0, t0) for i = 0..steps.
    std::vector<Vector> predict(const Vector& x0, std::size_t steps, double t0 = 0.0) const {
        std::vector<Vector> out;
        Vector y = lift_point(dict_, x0, t0);
        const auto n = static_cast<Eigen::Index>(state_dim());
        out.push_back(y.head(n));
        for (std::size_t i = 0; i < steps; ++i) {
            y = k_step_ * y;
            out.push_back(y.head(n));
        }
        return out;
    }

private:
    Dictionary dict_;
    Matrix k_step_;
    std::optional<Matrix> k_inf_;
    double h_;
    FitMeta meta_;
    std::vector<std::string> names_;
};

namespace detail {

inline void lift_columns(const Dictionary& dict, const Matrix& x, std::span<const double> times, double dt,
                         Matrix& g) {
    g.resize(static_cast<Eigen::Index>(dict.size()), x.cols());
    std::vector<double> scratch;
    const auto& roots = dict.tape().roots();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double t = times.empty() ? 0.0 : times[static_cast<std::size_t>(c)] + dt;
        dict.tape().eval(std::span<const double>(x.col(c).data(), static_cast<std::size_t>(x.rows())), t, scratch);
        for (std::size_t j = 0; j < roots.size(); ++j) g(static_cast<Eigen::Index>(j), c) = scratch[roots[j]];
    }
}

// Least-squares fit B ~= K A with a truncated pseudoinverse of A.
inline Matrix regress(const Matrix& a, const Matrix& b, const Truncation& t, FitMeta& meta) {
    if (a.cols() == 0) throw FitError("no snapshot columns");
    if (!a.allFinite() || !b.allFinite()) throw FitError("lifted data contains non-finite values");
    if (a.isZero(0.0)) throw FitError("degenerate data: lifted snapshot matrix is zero");
    if (a.cols() < a.rows())
        meta.warnings.push_back("fewer snapshot columns (" + std::to_string(a.cols()) + ") than observables (" +
                                std::to_string(a.rows()) + ")");
    const SvdResult d = svd(a);
    std::size_t r = 0;
    try {
        r = retained_rank(d.singular_values, t);
    } catch (const NumericError& e) {
        throw FitError(e.what());
    }
    const auto rr = static_cast<Eigen::Index>(r);
    const Matrix bv = b * d.v.leftCols(rr);
    const Matrix k = (bv * d.singular_values.head(rr).cwiseInverse().asDiagonal()) * d.u.leftCols(rr).transpose();
    meta.retained_rank = r;
    meta.truncation = t;
    meta.snapshots = static_cast<std::size_t>(a.cols());
    const double nb = b.norm();
    meta.residual = nb > 0.0 ? (b - k * a).norm() / nb : (k * a).norm();
    return k;
}

inline std::size_t count_trajectories(const std::vector<std::size_t>& ids) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (i == 0 || ids[i] != ids[i - 1]) ++c;
    return c;
}

}  // namespace detail

/// K_step = G' G^+ on lifted snapshot pairs; each snapshot is lifted with its
/// own absolute time.
inline KoopmanModel fit_edmd(const Dictionary& dict, const SnapshotData& data, const Truncation& t = {}) {
    if (static_cast<std::size_t>(data.x.rows()) != dict.state_dim()) throw DimensionError("data dimension differs");
    if (data.x.cols() != data.x_prime.cols() || data.x.rows() != data.x_prime.rows())
        throw DimensionError("X and X' differ in shape");
    Matrix g, gp;
    detail::lift_columns(dict, data.x, data.times, 0.0, g);
    detail::lift_columns(dict, data.x_prime, data.times, data.times.empty() ? 0.0 : data.step, gp);
    FitMeta meta;
    meta.variant = "step";
    Matrix k = detail::regress(g, gp, t, meta);
    meta.trajectories = detail::count_trajectories(data.traj_ids);
    return KoopmanModel(dict, std::move(k), data.step, std::move(meta));
}

/// Lifted states G and their time derivatives dG/dt, column-aligned.
struct DerivativeData {
    Matrix g;
    Matrix g_dot;
};

/// dG/dt from the symbolic derivative of the dictionary along the field.
inline DerivativeData symbolic_derivative_data(const Dictionary& dict, const OdeModel& model,
                                               const SnapshotData& data) {
    const auto d = differentiate_along(dict, model);
    const Tape tape(d);
    DerivativeData out;
    detail::lift_columns(dict, data.x, data.times, 0.0, out.g);
    out.g_dot.resize(out.g.rows(), out.g.cols());
    std::vector<double> scratch;
    for (Eigen::Index c = 0; c < data.x.cols(); ++c) {
        const double t = data.times.empty() ? 0.0 : data.times[static_cast<std::size_t>(c)];
        tape.eval(std::span<const double>(data.x.col(c).data(), static_cast<std::size_t>(data.x.rows())), t, scratch);
        for (std::size_t j = 0; j < tape.roots().size(); ++j)
            out.g_dot(static_cast<Eigen::Index>(j), c) = scratch[tape.roots()[j]];
    }
    return out;
}

/// dG/dt by central differences of lifted samples at interior trajectory points.
inline DerivativeData finite_difference_derivative_data(const Dictionary& dict, std::span<const Trajectory> trajs) {
    std::vector<Vector> g_cols, d_cols;
    for (const auto& tr : trajs) {
        for (std::size_t k = 1; k + 1 < tr.states.size(); ++k) {
            const double dt = tr.times[k + 1] - tr.times[k - 1];
            const Vector gp = lift_point(dict, tr.states[k + 1], tr.times[k + 1]);
            const Vector gm = lift_point(dict, tr.states[k - 1], tr.times[k - 1]);
            g_cols.push_back(lift_point(dict, tr.states[k], tr.times[k]));
            d_cols.push_back((gp - gm) / dt);
        }
    }
    DerivativeData out;
    out.g.resize(static_cast<Eigen::Index>(dict.size()), static_cast<Eigen::Index>(g_cols.size()));
    out.g_dot.resizeLike(out.g);
    for (std::size_t c = 0; c < g_cols.size(); ++c) {
        out.g.col(static_cast<Eigen::Index>(c)) = g_cols[c];
        out.g_dot.col(static_cast<Eigen::Index>(c)) = d_cols[c];
    }
    return out;
}

/// dG/dt ~= K_inf G, then K_step = exp(K_inf h).
inline KoopmanModel fit_edmd_derivative(const Dictionary& dict, const DerivativeData& data, double h,
                                        const Truncation& t = {}) {
    if (static_cast<std::size_t>(data.g.rows()) != dict.size()) throw DimensionError("lifted data has wrong size");
    FitMeta meta;
    meta.variant = "derivative";
    Matrix k_inf = detail::regress(data.g, data.g_dot, t, meta);
    Matrix k_step = matrix_exponential(k_inf, h);
    return KoopmanModel(dict, std::move(k_step), h, std::move(meta), std::move(k_inf));
}

/// K^i by repeated squaring; K^0 = I.
inline Matrix matrix_power(const Matrix& k, std::size_t i) {
    Matrix result = Matrix::Identity(k.rows(), k.cols());
    Matrix base = k;
    while (i > 0) {
        if (i & 1U) result = result * base;
        i >>= 1U;
        if (i > 0) base = base * base;
    }
    return result;
}

/// Thread-safe cache of K_step powers keyed by step index.
class StepOperator {
public:
    explicit StepOperator(Matrix k) : k_(std::move(k)) {
        if (k_.rows() != k_.cols()) throw DimensionError("step operator must be square");
    }

    const Matrix& base() const { return k_; }

    std::shared_ptr<const Matrix> power(std::size_t i) const {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = cache_.find(i);
        if (it != cache_.end()) return it->second;
        auto m = std::make_shared<const Matrix>(matrix_power(k_, i));
        cache_.emplace(i, m);
        return m;
    }

private:
    Matrix k_;
    mutable std::mutex mutex_;
    mutable std::map<std::size_t, std::shared_ptr<const Matrix>> cache_;
};

inline Matrix step_operator(const KoopmanModel& model, std::size_t i) { return matrix_power(model.k_step(), i); }

// ---------------------------------------------------------------------------
// JSON model files. Doubles are written in shortest round-trip form.

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json data = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    return {{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.at("shape").at(0).get<Eigen::Index>();
    const auto cols = j.at("shape").at(1).get<Eigen::Index>();
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ParseError("matrix data does not match shape");
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data.at(static_cast<std::size_t>(r * cols + c)).get<double>();
    return m;
}

}  // namespace detail

inline nlohmann::json truncation_to_json(const Truncation& t) {
    if (t.kind == Truncation::Kind::rank) {
        if (t.rank == static_cast<std::size_t>(-1)) return {{"mode", "full"}};
        return {{"mode", "rank"}, {"rank", t.rank}};
    }
    return {{"mode", "energy"}, {"energy", t.energy}};
}

inline Truncation truncation_from_json(const nlohmann::json& j) {
    const auto mode = j.at("mode").get<std::string>();
    if (mode == "full") return Truncation::full();
    if (mode == "rank") return Truncation::keep_rank(j.at("rank").get<std::size_t>());
    if (mode == "energy") {
        const double e = j.at("energy").get<double>();
        if (!(e > 0.0 && e <= 1.0)) throw ConfigError("energy fraction must lie in (0, 1]");
        return Truncation::keep_energy(e);
    }
    throw ConfigError("unknown truncation mode '" + mode + "'");
}

inline nlohmann::json to_json(const KoopmanModel& m) {
    nlohmann::json j;
    j["format"] = "koopman-reach-model";
    j["version"] = 1;
    j["state_dim"] = m.state_dim();
    j["state_names"] = m.state_names();
    j["dictionary"] = m.dictionary().to_strings();
    j["h"] = m.step();
    j["K_step"] = detail::matrix_to_json(m.k_step());
    if (m.k_inf()) j["K_inf"] = detail::matrix_to_json(*m.k_inf());
    const auto& meta = m.meta();
    j["meta"] = {{"variant", meta.variant},
                 {"snapshots", meta.snapshots},
                 {"trajectories", meta.trajectories},
                 {"retained_rank", meta.retained_rank},
                 {"truncation", truncation_to_json(meta.truncation)},
                 {"residual", meta.residual},
                 {"warnings", meta.warnings},
                 {"provenance", meta.provenance}};
    return j;
}

inline KoopmanModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "koopman-reach-model") throw ParseError("not a model file");
        if (j.at("version").get<int>() != 1) throw ParseError("unsupported model file version");
        const auto n = j.at("state_dim").get<std::size_t>();
        const auto strs = j.at("dictionary").get<std::vector<std::string>>();
        Dictionary dict = Dictionary::from_strings(n, strs);
        FitMeta meta;
        const auto& mj = j.at("meta");
        meta.variant = mj.at("variant").get<std::string>();
        meta.snapshots = mj.at("snapshots").get<std::size_t>();
        meta.trajectories = mj.at("trajectories").get<std::size_t>();
        meta.retained_rank = mj.at("retained_rank").get<std::size_t>();
        meta.truncation = truncation_from_json(mj.at("truncation"));
        meta.residual = mj.at("residual").get<double>();
        meta.warnings = mj.at("warnings").get<std::vector<std::string>>();
        meta.provenance = mj.at("provenance");
        std::optional<Matrix> k_inf;
        if (j.contains("K_inf")) k_inf = detail::matrix_from_json(j.at("K_inf"));
        return KoopmanModel(std::move(dict), detail::matrix_from_json(j.at("K_step")), j.at("h").get<double>(),
                            std::move(meta), std::move(k_inf), j.at("state_names").get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed model file: ") + e.what());
    }
}

inline void save_model(const KoopmanModel& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write model file " + path);
    os << to_json(m).dump(1) << '\n';
}

inline KoopmanModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read model file " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed model file: ") + e.what());
    }
    return model_from_json(j);
}

}  // namespace koopman_reach
