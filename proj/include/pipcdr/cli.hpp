#pragma once

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pipcdr/commands.hpp"

namespace pipcdr {

namespace detail {

inline std::string resolve_out_dir(const std::string& flag_value, const ExperimentConfig& cfg) {
    if (!flag_value.empty()) return flag_value;
    const std::string from_cfg = cfg.get_str("out_dir", "");
    if (!from_cfg.empty()) return from_cfg;
    const char* env = std::getenv("PIPCDR_OUT_DIR");
    if (env && *env) return env;
    throw ConfigInvalid("no output directory: pass --out, set out_dir in the config, "
                        "or export PIPCDR_OUT_DIR");
}

inline std::vector<std::string> split_values(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        std::size_t a = 0, b = cell.size();
        while (a < b && std::isspace(static_cast<unsigned char>(cell[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(cell[b - 1]))) --b;
        if (b > a) out.push_back(cell.substr(a, b - a));
    }
    return out;
}

} // namespace detail

// Exit codes: 0 success, 2 usage or config problems, 1 runtime failures.
inline int cli_main(int argc, const char* const* argv) {
    CLI::App app{"self-supervised deep clustering with proximity mixing and dispersion"};
    app.require_subcommand(1);

    std::string config_path, out_flag, param, values_csv, truth_path, pred_path;
    long long seed_flag = -1;
    bool parallel = false;

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic mixture dataset");
    gen->add_option("--config", config_path, "experiment config file")->required();
    gen->add_option("--out", out_flag, "output directory");
    gen->add_option("--seed", seed_flag, "override the config seed");

    CLI::App* tr = app.add_subcommand("train", "train on a generated dataset");
    tr->add_option("--config", config_path, "experiment config file")->required();
    tr->add_option("--out", out_flag, "output directory");
    tr->add_option("--seed", seed_flag, "override the config seed");

    CLI::App* sw = app.add_subcommand("sweep", "train once per value of one parameter");
    sw->add_option("--config", config_path, "experiment config file")->required();
    sw->add_option("--out", out_flag, "output directory");
    sw->add_option("--seed", seed_flag, "override the config seed");
    sw->add_option("--param", param, "one of r, sigma, w, K, queue_capacity")->required();
    sw->add_option("--values", values_csv, "comma-separated values")->required();
    sw->add_flag("--parallel", parallel, "run configurations concurrently");

    CLI::App* ev = app.add_subcommand("eval", "score a predicted labeling against ground truth");
    ev->add_option("--truth", truth_path, "ground-truth labels csv")->required();
    ev->add_option("--pred", pred_path, "predicted labels csv")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*ev) {
            cmd_eval(truth_path, pred_path, std::cout);
            return 0;
        }
        ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
        if (seed_flag >= 0) cfg.set("seed", std::to_string(seed_flag));
        const std::string out_dir = detail::resolve_out_dir(out_flag, cfg);
        if (*gen) {
            cmd_gen_data(cfg, out_dir);
        } else if (*tr) {
            cmd_train(cfg, out_dir);
        } else if (*sw) {
            cmd_sweep(cfg, out_dir, param, detail::split_values(values_csv), parallel);
        }
        return 0;
    } catch (const ConfigInvalid& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace pipcdr
