// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <iostream>
#include <string>
#include <utility>

#include <CLI11.hpp>

#include "koopman_reach/cli.hpp"

#ifdef KOOPMAN_REACH_HAVE_SPDLOG
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>
#endif

namespace kr = koopman_reach;

namespace {

kr::LogSink make_sink(kr::LogLevel threshold) {
#ifdef KOOPMAN_REACH_HAVE_SPDLOG
    auto logger = spdlog::stderr_color_mt("koopman-reach");
    logger->set_pattern("[%l] %v");
    logger->set_level(threshold == kr::LogLevel::debug  ? spdlog::level::debug
                      : threshold == kr::LogLevel::info ? spdlog::level::info
                                                        : spdlog::level::err);
    return [logger](kr::LogLevel l, const std::string& msg) {
        if (l == kr::LogLevel::error) logger->error(msg);
        else if (l == kr::LogLevel::info) logger->info(msg);
        else logger->debug(msg);
    };
#else
    return [threshold](kr::LogLevel l, const std::string& msg) {
        if (static_cast<int>(l) > static_cast<int>(threshold)) return;
        static const char* names[] = {"error", "info", "debug"};
        std::cerr << '[' << names[static_cast<int>(l)] << "] " << msg << '\n';
    };
#endif
}

}  // namespace

int main(int argc, char** argv) {
    kr::LogLevel level = kr::LogLevel::error;
    if (const char* env = std::getenv("KOOPMAN_REACH_LOG")) {
        try {
            level = kr::log_level_from_string(env);
        } catch (const kr::ConfigError& e) {
            std::cerr << "koopman-reach: KOOPMAN_REACH_LOG: " << e.what() << '\n';
            return kr::exit_code::config;
        }
    }

    CLI::App app{"Koopman linearization and reachability verification"};
    app.require_subcommand(1, 1);
    std::string config;
    std::string results;
    std::string external;
    bool plot = false;
    std::size_t jobs = 1;
    const std::pair<const char*, const char*> commands[] = {
        {"simulate", "integrate sample trajectories of the original system"},
        {"linearize", "fit the Koopman model and print its error table"},
        {"verify", "check every unsafe instance of the sweep"},
        {"report", "collate verdict files into a summary table"}};
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        auto* cfg = sub->add_option("--config", config, "run configuration (JSON)");
        if (std::string(name) == "report") sub->add_option("--results", results, "results directory to collate");
        else cfg->required();
        sub->add_flag("--plot", plot, "write an SVG reach plot (verify)");
        sub->add_option("--external-solver", external, "pipe SMT-LIB2 queries to this solver");
        sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kr::exit_code::config;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    if (command == "report" && config.empty() && results.empty()) {
        std::cerr << "koopman-reach: report needs --config or --results\n";
        return kr::exit_code::config;
    }

    kr::CliOptions opt;
    opt.plot = plot;
    opt.jobs = jobs;
    if (!external.empty()) opt.external_solver = external;
    if (!results.empty()) opt.results_dir = results;
    opt.log = make_sink(level);
    return kr::run_command(command, config, opt);
}
