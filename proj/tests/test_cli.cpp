// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"

namespace kr = koopman_reach;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("kr_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write_config(const json& j, const std::string& name = "c.json") {
        std::ofstream os(dir_ / name);
        os << j.dump(2);
        return dir_ / name;
    }

    static json fixture(const std::string& algorithm = "zono_split") {
        json j = json::parse(R"({
          "version": 1,
          "name": "fixture",
          "model": {"builtin": "invariant_subspace"},
          "dictionary": {"observables": ["x1", "x2", "x1^4", "x1^3", "x1^2"]},
          "training": {"n_traj": 8, "h": 0.1, "T": 1, "truncation": {"mode": "full"}, "variant": "derivative"},
          "problem": {"init": {"box": [[0.9, 1.1], [0.4, 0.6]]},
                      "unsafe": [{"expr": "x2 >= 1.2 - 0.05*i", "i_range": [0, 4]}], "h": 0.1, "T": 3},
          "simulate": {"n_traj": 3},
          "output": "out"
        })");
        j["verify"] = json{{"algorithm", algorithm}};
        return j;
    }

    int run(const std::string& cmd, const fs::path& cfg, kr::CliOptions opt = {}) {
        std::ostringstream sink;
        opt.out = &sink;
        const int rc = kr::run_command(cmd, cfg, opt);
        output_ = sink.str();
        return rc;
    }

    static int tool(const std::string& args) {
        const std::string cmd = std::string("'") + KR_TOOL_PATH + "' " + args + " >/dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    static std::string slurp(const fs::path& p) {
        std::ifstream is(p, std::ios::binary);
        std::stringstream ss;
        ss << is.rdbuf();
        return ss.str();
    }

    fs::path dir_;
    std::string output_;
};

}  // namespace

TEST_F(CliTest, SimulateWritesTrajectoriesAndManifest) {
    ASSERT_EQ(run("simulate", write_config(fixture())), kr::exit_code::ok);
    const fs::path sim = dir_ / "out" / "simulate";
    EXPECT_TRUE(fs::exists(sim / "manifest.json"));
    std::ifstream is(sim / "traj_0000.csv");
    const auto trajs = kr::read_trajectories_csv(is);
    ASSERT_EQ(trajs.size(), 1u);
    EXPECT_EQ(trajs[0].states.size(), 31u);
    EXPECT_TRUE(fs::exists(sim / "traj_0002.csv"));
}

TEST_F(CliTest, LinearizePrintsFiveRowErrorTable) {
    ASSERT_EQ(run("linearize", write_config(fixture())), kr::exit_code::ok);
    const std::string csv = slurp(dir_ / "out" / "errors.csv");
    EXPECT_NE(output_.find(csv), std::string::npos);
    std::istringstream ss(csv);
    std::string line;
    std::getline(ss, line);
    EXPECT_EQ(line, "time_frac,max_abs,avg_abs,max_rel,avg_rel");
    int rows = 0;
    while (std::getline(ss, line)) {
        ++rows;
        double frac = 0, max_abs = 0;
        ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf", &frac, &max_abs), 2);
        EXPECT_NEAR(frac, 0.2 * rows, 1e-12);
        EXPECT_LE(max_abs, 1e-5);  // exact invariant subspace
    }
    EXPECT_EQ(rows, 5);
    EXPECT_TRUE(fs::exists(dir_ / "out" / "model.json"));
}

TEST_F(CliTest, VerifyWritesOneVerdictPerInstanceDeterministically) {
    const auto cfg = write_config(fixture());
    kr::CliOptions opt;
    opt.plot = true;
    ASSERT_EQ(run("verify", cfg, opt), kr::exit_code::ok);
    const fs::path vdir = dir_ / "out" / "verdicts" / "zono_split";
    std::vector<json> first;
    for (int i = 0; i <= 4; ++i) {
        const fs::path f = vdir / ("i_" + std::to_string(i) + ".json");
        ASSERT_TRUE(fs::exists(f)) << f;
        first.push_back(json::parse(slurp(f)));
    }
    EXPECT_EQ(first[0]["kind"], "safe");
    EXPECT_EQ(first[4]["kind"], "unsafe");
    EXPECT_TRUE(first[4]["validation"]["linear_ok"].get<bool>());
    EXPECT_TRUE(fs::exists(dir_ / "out" / "stats_zono_split.csv"));
    EXPECT_TRUE(fs::exists(dir_ / "out" / "reach_zono_split.svg"));

    // A second run with more workers reproduces every field but the runtime.
    opt.jobs = 3;
    opt.plot = false;
    ASSERT_EQ(run("verify", cfg, opt), kr::exit_code::ok);
    for (int i = 0; i <= 4; ++i) {
        json again = json::parse(slurp(vdir / ("i_" + std::to_string(i) + ".json")));
        json a = first[static_cast<std::size_t>(i)];
        a.erase("runtime_s");
        again.erase("runtime_s");
        EXPECT_EQ(a, again) << i;
    }
}

TEST_F(CliTest, ReportSortsAndFlagsDisagreement) {
    const fs::path res = dir_ / "results";
    auto put = [&](const std::string& model, const std::string& alg, long i, const std::string& kind) {
        const fs::path d = res / model / "verdicts" / alg;
        fs::create_directories(d);
        json j = {{"model", model}, {"algorithm", alg}, {"i", i}, {"kind", kind},
                  {"step", kind == "unsafe" ? json(3) : json(nullptr)}, {"witness", json::array()},
                  {"runtime_s", 0.5}, {"solver_calls", 1}, {"splits", 0}, {"steps_checked", 4}};
        std::ofstream os(d / ("i_" + std::to_string(i) + ".json"));
        os << j.dump();
    };
    put("b_model", "direct", 1, "safe");
    put("a_model", "interval", 2, "unsafe");
    put("a_model", "direct", 2, "safe");
    put("a_model", "direct", 10, "safe");
    kr::CliOptions opt;
    opt.results_dir = res;
    ASSERT_EQ(run("report", "", opt), kr::exit_code::ok);
    const auto rows = kr::collect_report(res);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].model, "a_model");
    EXPECT_EQ(rows[0].i, 2);
    EXPECT_EQ(rows[0].algorithm, "direct");
    EXPECT_TRUE(rows[0].disagree);
    EXPECT_TRUE(rows[1].disagree);
    EXPECT_EQ(rows[2].i, 10);  // numeric, not lexicographic, order
    EXPECT_FALSE(rows[2].disagree);
    EXPECT_EQ(rows[3].model, "b_model");
    const std::string csv = slurp(res / "report.csv");
    EXPECT_NE(csv.find("DISAGREE"), std::string::npos);
    EXPECT_NE(output_.find("DISAGREE"), std::string::npos);
}

TEST_F(CliTest, ReportOnEmptyDirectoryIsConfigError) {
    kr::CliOptions opt;
    opt.results_dir = dir_;
    EXPECT_EQ(run("report", "", opt), kr::exit_code::config);
    opt.results_dir = dir_ / "missing";
    EXPECT_EQ(run("report", "", opt), kr::exit_code::config);
}

TEST_F(CliTest, ConfigProblemsExitWithTwo) {
    json j = fixture();
    j.erase("model");
    EXPECT_EQ(run("verify", write_config(j)), kr::exit_code::config);
    EXPECT_EQ(run("verify", dir_ / "nope.json"), kr::exit_code::config);
    j = fixture();
    j["problem"]["unsafe"] = {"x1^2 >= 1"};
    EXPECT_EQ(run("verify", write_config(j)), kr::exit_code::config);
}

TEST_F(CliTest, DegenerateTrainingExitsWithThree) {
    json j = fixture();
    // Every trajectory sits at the origin, so the lifted data is all zeros.
    j["problem"]["init"]["box"] = {{0, 0}, {0, 0}};
    EXPECT_EQ(run("linearize", write_config(j)), kr::exit_code::fit);
}

TEST_F(CliTest, BinaryExitCodes) {
    const auto cfg = write_config(fixture());
    EXPECT_EQ(tool("simulate --config '" + cfg.string() + "'"), 0);
    EXPECT_EQ(tool("verify"), 2);  // --config is required
    EXPECT_EQ(tool("frobnicate --config '" + cfg.string() + "'"), 2);
    EXPECT_EQ(tool("verify --config '" + (dir_ / "missing.json").string() + "'"), 2);
    EXPECT_EQ(tool("verify --jobs 0 --config '" + cfg.string() + "'"), 2);
    EXPECT_EQ(tool("--help"), 0);
    EXPECT_EQ(::setenv("KOOPMAN_REACH_LOG", "verbose", 1), 0);
    EXPECT_EQ(tool("simulate --config '" + cfg.string() + "'"), 2);
    ::setenv("KOOPMAN_REACH_LOG", "debug", 1);
    EXPECT_EQ(tool("simulate --config '" + cfg.string() + "'"), 0);
    ::unsetenv("KOOPMAN_REACH_LOG");
}

TEST_F(CliTest, ModelCacheIsReusedOnlyForMatchingTraining) {
    const auto cfg = write_config(fixture());
    ASSERT_EQ(run("verify", cfg), kr::exit_code::ok);
    const auto model = dir_ / "out" / "model.json";
    const auto stamp = fs::last_write_time(model);
    ASSERT_EQ(run("verify", cfg), kr::exit_code::ok);
    EXPECT_EQ(fs::last_write_time(model), stamp);
    json j = fixture();
    j["training"]["n_traj"] = 9;
    ASSERT_EQ(run("verify", write_config(j)), kr::exit_code::ok);
    EXPECT_EQ(kr::load_model(model.string()).meta().provenance["training"]["n_traj"], 9);
}
