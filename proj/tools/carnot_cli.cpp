// Experiment runner CLI: parses a run configuration, drives
// assembly -> eigensolve -> checks, and writes the CSV artifacts.
//
// Exit codes: 0 success, 1 configuration/check failure, 2 solver
// non-convergence, 3 I/O failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "carnot/config.hpp"
#include "carnot/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"mixed local/nonlocal (2,q)-eigenvalue solver on stratified Lie groups"};
    app.require_subcommand(1);

    CLI::App* solve = app.add_subcommand("solve", "run one experiment from a config file");
    std::string config_path;
    std::optional<std::string> output_dir;
    std::optional<int> grid_n;
    std::optional<double> s_override;
    std::optional<double> q_override;
    solve->add_option("--config", config_path, "path to a key = value run configuration")
        ->required()
        ->check(CLI::ExistingFile);
    solve->add_option("--output", output_dir, "output directory (overrides output_dir)");
    solve->add_option("--grid", grid_n, "grid resolution N (overrides N)");
    solve->add_option("--s", s_override, "fractional order (overrides s)");
    solve->add_option("--q", q_override, "exponent q (overrides q)");

    CLI11_PARSE(app, argc, argv);

    std::ifstream in(config_path);
    if (!in) {
        std::cerr << "cannot read config file: " << config_path << "\n";
        return 3;
    }
    std::stringstream text;
    text << in.rdbuf();

    try {
        carnot::ExperimentConfig cfg = carnot::parse_config(text.str());
        if (output_dir) cfg.output_dir = *output_dir;
        if (grid_n) cfg.n = *grid_n;
        if (s_override) cfg.s = *s_override;
        if (q_override) cfg.q = *q_override;
        cfg.validate();
        const carnot::ExperimentResult result = carnot::run_experiment(cfg);
        return result.exit_code;
    } catch (const carnot::config_error& err) {
        std::cerr << "config error: " << err.what() << "\n";
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
}
