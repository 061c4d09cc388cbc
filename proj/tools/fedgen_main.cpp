// fedgen CLI: staged experiment pipeline over a json config.
//
//   fedgen <command> --config <path> [--seed N] [--output DIR]
//
// exit codes: 0 success, 2 config/validation error, 3 missing prerequisite
// stage (the message names the command that produces it).

#include <CLI11.hpp>
#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "fedgen/harness.hpp"

namespace {

struct CommandSpec {
    std::string name;
    std::string help;
    std::function<void(const fedgen::ExperimentConfig&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated generative anomaly detection experiments"};
    app.require_subcommand(1);

    const std::vector<CommandSpec> commands{
        {"generate-data", "synthesise (or ingest) the dataset directory", fedgen::cmd_generate_data},
        {"train", "run the federation rounds; writes checkpoints and rounds.csv", fedgen::cmd_train},
        {"calibrate", "score validation runs and fit per-client thresholds", fedgen::cmd_calibrate},
        {"evaluate", "score test runs; writes metrics.json and offsets.csv", fedgen::cmd_evaluate},
        {"comm-report", "per-round traffic for every (family, policy) pair", fedgen::cmd_comm_report},
        {"run-all", "train/calibrate/evaluate the scenario x family matrix", fedgen::cmd_run_all},
    };

    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> output_override;
    const CommandSpec* chosen = nullptr;
    for (const auto& cmd : commands) {
        CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
        sub->add_option("--config", config_path, "experiment config (json)")->required();
        sub->add_option("--seed", [&seed_override](const CLI::results_t& r) {
            seed_override = std::stoull(r.front());
            return true;
        }, "override the config seed");
        sub->add_option("--output", [&output_override](const CLI::results_t& r) {
            output_override = r.front();
            return true;
        }, "override the config output directory");
        sub->callback([&chosen, &cmd] { chosen = &cmd; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage problems are validation errors
    }

    try {
        fedgen::ExperimentConfig cfg = fedgen::load_config(config_path);
        if (seed_override) cfg.seed = *seed_override;
        if (output_override) cfg.output_dir = *output_override;
        chosen->run(cfg);
        return 0;
    } catch (const fedgen::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const fedgen::PrereqError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
