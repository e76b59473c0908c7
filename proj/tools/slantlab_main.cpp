#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "slantlab/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"slantlab: document slant scoring and panel difference-in-differences"};
    app.require_subcommand(1);

    std::string config_path = "study.json";
    std::string out_override;
    uint64_t seed_override = 0;
    bool seed_given = false;
    int threads = 1;

    app.add_option("-c,--config", config_path, "study config file (JSON)")
        ->capture_default_str();
    app.add_option("--out", out_override, "override the output directory");
    app.add_option("--seed", seed_override, "override the config seed")
        ->each([&](const std::string&) { seed_given = true; });
    app.add_option("--threads", threads, "worker cap for replication loops")
        ->check(CLI::PositiveNumber);

    const char* names[] = {"ingest", "synth",       "score", "panel",
                           "estimate", "event-study", "mc",    "report"};
    const char* descs[] = {
        "validate and filter a raw corpus",
        "generate a synthetic corpus with known ground truth",
        "build poles and score every document",
        "aggregate scores to a user-day panel and derive cohort flags",
        "run the DiD / weekly / imputation battery",
        "daily and binned event studies",
        "Monte Carlo evaluation of the estimators",
        "assemble result tables and plot-ready series",
    };
    for (size_t i = 0; i < 8; ++i) app.add_subcommand(names[i], descs[i])->fallthrough();

    CLI11_PARSE(app, argc, argv);

    slantlab::StudyConfig cfg;
    try {
        cfg = slantlab::load_config(config_path);
    } catch (const slantlab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    if (!out_override.empty()) cfg.output_dir = out_override;
    if (seed_given) {
        cfg.seed = seed_override;
        cfg.synth.master_seed = seed_override;
    }
    cfg.threads = threads;

    std::string message;
    int code = 0;
    for (const auto* sub : app.get_subcommands()) {
        code = slantlab::run_subcommand(sub->get_name(), cfg, message);
        if (code == 0) std::cout << sub->get_name() << ": " << message << "\n";
        else std::cerr << sub->get_name() << ": " << message << "\n";
        if (code != 0) break;
    }
    return code;
}
