// Command-line front end: solvability checks, weight dumps, sparse-pattern
// decomposition, and the full synthesis pipeline.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "fcm/pipeline.hpp"

namespace {

fcm::PipelineConfig load_config(const std::string& path, std::uint64_t* seed_override,
                                int* threads_override, const std::string* out_override) {
    fcm::PipelineConfig cfg = fcm::parse_config_file(path);
    if (seed_override) cfg.seed = *seed_override;
    if (threads_override) cfg.threads = *threads_override;
    if (out_override) cfg.out_dir = *out_override;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Null-control synthesis for underactuated coupled parabolic systems"};
    app.require_subcommand(1);

    std::string config_path, out_dir, pattern_path, weights_out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
    bool threads_set = false;

    auto add_common = [&](CLI::App* sub, bool with_out) {
        sub->add_option("--config", config_path, "JSON configuration file")->required();
        sub->add_option("--seed", seed, "random seed override")->each([&](const std::string&) {
            seed_set = true;
        });
        sub->add_option("--threads", threads, "worker threads for independent runs")
            ->each([&](const std::string&) { threads_set = true; });
        if (with_out) sub->add_option("--out", out_dir, "output directory");
    };

    CLI::App* cmd_check = app.add_subcommand("check", "decide algebraic solvability");
    add_common(cmd_check, false);

    CLI::App* cmd_synth = app.add_subcommand("synthesize", "run the full control synthesis");
    add_common(cmd_synth, true);

    CLI::App* cmd_weights = app.add_subcommand("weights", "dump the weight family as CSV");
    add_common(cmd_weights, false);
    cmd_weights->add_option("--csv", weights_out, "CSV output path (default stdout)");

    CLI::App* cmd_dm = app.add_subcommand("dm", "block-triangular decomposition of a pattern");
    cmd_dm->add_option("--pattern", pattern_path, "triplet text file: row col value")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_dm->parsed()) {
            std::ifstream is(pattern_path);
            if (!is) throw fcm::ConfigError("cannot read pattern file: " + pattern_path);
            std::cout << fcm::run_dm(is).dump(2) << std::endl;
            return fcm::kExitOk;
        }

        fcm::PipelineConfig cfg =
            load_config(config_path, seed_set ? &seed : nullptr, threads_set ? &threads : nullptr,
                        out_dir.empty() ? nullptr : &out_dir);

        if (cmd_check->parsed()) {
            fcm::PipelineResult res = fcm::run_check(cfg);
            std::cout << res.report.dump(2) << std::endl;
            return res.exit_code;
        }
        if (cmd_weights->parsed()) {
            if (weights_out.empty()) {
                fcm::run_weights(cfg, std::cout);
            } else {
                std::ofstream os(weights_out);
                if (!os) throw fcm::ConfigError("cannot write CSV file: " + weights_out);
                fcm::run_weights(cfg, os);
            }
            return fcm::kExitOk;
        }
        // synthesize
        fcm::PipelineResult res = fcm::run_synthesize(cfg);
        std::filesystem::create_directories(cfg.out_dir);
        std::ofstream rf(cfg.out_dir + "/report.json");
        rf << res.report.dump(2) << std::endl;
        std::cout << res.report.dump(2) << std::endl;
        return res.exit_code;
    } catch (const fcm::ConfigError& e) {
        std::cerr << e.what() << std::endl;
        return fcm::kExitConfig;
    } catch (const fcm::Error& e) {
        std::cerr << e.what() << std::endl;
        return fcm::kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << std::endl;
        return fcm::kExitNumeric;
    }
}
