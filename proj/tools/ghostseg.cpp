#include <CLI11.hpp>

#include <iostream>

#include "ghostseg/commands.hpp"
#include "ghostseg/config.hpp"

int main(int argc, char** argv) {
    using namespace ghostseg;
    CLI::App app{"Synthetic multipath radar data, ghost-aware point segmentation training and evaluation"};
    app.require_subcommand(1, 1);

    CommandOptions o;
    std::string setups;
    std::uint64_t seed = 0;

    auto common = [&](CLI::App* cmd) {
        cmd->add_option("--out", o.out, "Output directory (file for render-scene)")->required();
        cmd->add_option("--seed", seed, "Seed override");
        cmd->add_flag("--verbose", o.verbose, "Per-epoch progress and extra tables");
    };

    auto* gen = app.add_subcommand("generate", "Simulate recordings from a scenario config");
    gen->add_option("--config", o.config, "Scenario-set YAML")->required();
    common(gen);

    auto* tr = app.add_subcommand("train", "Train one or more setups");
    tr->add_option("--config", o.config, "Experiment YAML")->required();
    tr->add_option("--dataset", o.dataset, "Dataset directory (overrides the config)");
    tr->add_option("--setups", setups, "Comma-separated setup ids 1-6");
    common(tr);

    auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on the test recordings");
    ev->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
    ev->add_option("--config", o.config, "Experiment YAML naming the dataset");
    ev->add_option("--dataset", o.dataset, "Dataset directory");
    common(ev);

    auto* mx = app.add_subcommand("experiment-matrix", "Train and evaluate several setups on one split");
    mx->add_option("--config", o.config, "Experiment YAML")->required();
    mx->add_option("--dataset", o.dataset, "Dataset directory (overrides the config)");
    mx->add_option("--setups", setups, "Comma-separated setup ids 1-6");
    common(mx);

    auto* rs = app.add_subcommand("render-scene", "Draw one accumulation window as SVG");
    rs->add_option("--config", o.config, "Experiment YAML naming the dataset");
    rs->add_option("--dataset", o.dataset, "Dataset directory");
    rs->add_option("--recording", o.recording, "Recording id")->required();
    rs->add_option("--start-ms", o.start_ms, "Window start");
    rs->add_option("--window-ms", o.window_ms, "Window length");
    rs->add_option("--checkpoint", o.checkpoint, "Color by the predictions of this checkpoint");
    common(rs);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return e.get_exit_code() == 0 ? app.exit(e) : (app.exit(e), kExitConfigError);
    }

    return guarded(
        [&] {
            if (app.get_subcommands().front()->count("--seed")) o.seed = seed;
            if (!setups.empty()) {
                try {
                    o.setups = parse_setup_list(setups);
                } catch (const std::invalid_argument& e) {
                    throw ConfigError("--setups", 0, e.what());
                }
            }
            if (gen->parsed()) run_generate(o, std::cout);
            else if (tr->parsed()) run_train(o, std::cout);
            else if (ev->parsed()) run_evaluate(o, std::cout);
            else if (mx->parsed()) run_experiment_matrix_command(o, std::cout);
            else run_render_scene(o, std::cout);
        },
        std::cerr);
}
