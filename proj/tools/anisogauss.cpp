// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

// anisogauss <train|render|describe|transfer-status> --config <path> [--seed N] [--out DIR]

#include "anisogauss/pipeline/run.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
    using anisogauss::pipeline::Command;

    CLI::App app{"anisogauss: semantic Gaussian training with anisotropic shape encoding"};
    app.require_subcommand(1);

    anisogauss::pipeline::RunOptions options;
    std::uint64_t seed = 0;
    std::string out;
    std::string config;

    const std::pair<const char*, Command> commands[] = {
        {"train", Command::Train},
        {"render", Command::Render},
        {"describe", Command::Describe},
        {"transfer-status", Command::TransferStatus},
    };
    const char* help[] = {
        "run the train/adapt loop over every configured scene",
        "render checkpointed scenes to PNG and semantic NPY",
        "write spectral descriptor CSVs only",
        "print pattern basis ranks and update history",
    };
    std::vector<std::pair<CLI::App*, Command>> subs;
    for (std::size_t i = 0; i < 4; ++i) {
        CLI::App* sub = app.add_subcommand(commands[i].first, help[i]);
        sub->add_option("--config", config, "INI config file")->required();
        sub->add_option("--seed", seed, "override pipeline.seed");
        sub->add_option("--out", out, "override the output directory");
        subs.emplace_back(sub, commands[i].second);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : anisogauss::pipeline::kExitConfig;
    }
    for (const auto& [sub, cmd] : subs) {
        if (sub->parsed()) {
            options.command = cmd;
            options.config = config;
            if (sub->count("--seed") > 0) {
                options.seed = seed;
            }
            if (sub->count("--out") > 0) {
                options.out = out;
            }
        }
    }
    return anisogauss::pipeline::run(options, std::cout, std::cerr);
}
