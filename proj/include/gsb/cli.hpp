#pragma once

// Command-line front end: `gsb run <experiment>`, `gsb sweep`, `gsb validate`.
// A JSON config file may supply any of the options; command-line flags win.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gsb/experiments.hpp"

namespace gsb::cli {

namespace detail {

inline void apply_set_args(experiments::ExperimentConfig& config,
                           const std::vector<std::string>& sets) {
    for (const auto& kv : sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        try {
            config.overrides[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
        } catch (const std::exception&) {
            throw ConfigError("--set value in '" + kv + "' is not a number");
        }
    }
}

inline experiments::ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file '" + path + "'");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& err) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + err.what());
    }
    return experiments::ExperimentConfig::from_json(j);
}

inline void print_headlines(const experiments::RunManifest& manifest,
                            const std::string& out_dir) {
    std::printf("experiment %s finished in %.2f s\n", manifest.experiment.c_str(),
                manifest.wall_seconds);
    std::printf("artifacts in %s:\n", out_dir.c_str());
    for (const auto& [file, sum] : manifest.files)
        std::printf("  %-32s fnv1a64=%s\n", file.c_str(), sum.c_str());
}

}  // namespace detail

inline int main(int argc, const char* const* argv) {
    CLI::App app{"ground-state blockade simulator for Rydberg atoms"};
    app.require_subcommand(1);

    std::string config_file, out_dir, experiment, sweep_pipeline = "blockade";
    std::vector<std::string> sets, grids;
    int samples = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--set", sets, "override a parameter, key=value")->take_all();
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--config", config_file, "JSON config file merged under CLI flags");
    };

    CLI::App* run_cmd = app.add_subcommand("run", "run a named experiment preset");
    run_cmd->add_option("experiment", experiment, "preset name")->required();
    run_cmd->add_option("--samples", samples, "output samples per curve");
    add_common(run_cmd);

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "sweep one or two parameters");
    sweep_cmd->add_option("--grid", grids, "axis spec key=start:stop:count")->take_all();
    sweep_cmd->add_option("--experiment", sweep_pipeline, "sweep pipeline (blockade, spectrum)");
    sweep_cmd->add_option("--samples", samples, "output samples per run");
    add_common(sweep_cmd);

    CLI::App* validate_cmd = app.add_subcommand("validate", "run the cross-model check suite");
    add_common(validate_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        experiments::ExperimentConfig config;
        if (!config_file.empty()) config = detail::load_config_file(config_file);
        if (!out_dir.empty()) config.out_dir = out_dir;
        if (samples > 0) config.samples = samples;
        detail::apply_set_args(config, sets);
        for (const auto& g : grids)
            config.grids.push_back(experiments::ExperimentConfig::parse_grid(g));

        if (run_cmd->parsed()) {
            config.experiment = experiment;
            auto manifest = experiments::run_experiment(config);
            detail::print_headlines(manifest, config.out_dir);
            return 0;
        }
        if (sweep_cmd->parsed()) {
            config.experiment = sweep_pipeline;
            auto manifest = experiments::run_sweep(config);
            detail::print_headlines(manifest, config.out_dir);
            return 0;
        }
        // validate
        config.experiment = "validate";
        auto manifest = experiments::run_validate(config);
        const auto& checks = manifest.resolved.at("notes").at("checks");
        bool all_passed = true;
        for (const auto& c : checks) {
            bool ok = c.at("passed").get<bool>();
            all_passed = all_passed && ok;
            std::printf("[%s] %-24s measured %.3e (threshold %.3e)\n", ok ? "PASS" : "FAIL",
                        c.at("name").get<std::string>().c_str(), c.at("measured").get<double>(),
                        c.at("threshold").get<double>());
        }
        detail::print_headlines(manifest, config.out_dir);
        if (!all_passed) {
            for (const auto& c : checks)
                if (!c.at("passed").get<bool>())
                    std::fprintf(stderr, "validation check failed: %s\n",
                                 c.at("name").get<std::string>().c_str());
            return 1;
        }
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace gsb::cli
