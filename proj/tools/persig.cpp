// persig: end-to-end driver for the perturbation-signature reconstruction
// pipeline. Subcommands mirror the stages; `run-all` chains them.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "persig/persig.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    int parallelism = 0; // 0 = take from config
    uint64_t seed = 0;
    bool seed_set = false;
};

persig::PipelineConfig load_config(const CommonOpts& opts) {
    persig::PipelineConfig cfg = persig::PipelineConfig::from_file(opts.config_path);
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    if (opts.parallelism > 0) cfg.parallelism = opts.parallelism;
    if (opts.seed_set) cfg.master_seed = opts.seed;
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "pipeline config file (key=value lines)")
        ->required();
    cmd->add_option("--out", opts.out_dir, "artifact directory (overrides config)");
    cmd->add_option("--parallelism", opts.parallelism, "extraction worker count");
    cmd->add_option("--seed", opts.seed, "master seed (overrides config)")
        ->each([&opts](const std::string&) { opts.seed_set = true; });
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"additive perturbation signature pipeline"};
    app.require_subcommand(1);

    CommonOpts opts;
    int exit_code = 0;

    auto wrap = [&](auto&& fn) {
        return [&, fn]() {
            try {
                fn(load_config(opts));
            } catch (const persig::Error& e) {
                std::cerr << "error: " << e.what() << "\n";
                exit_code = 2;
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << "\n";
                exit_code = 2;
            }
        };
    };

    add_common(app.add_subcommand("train-classifier", "train and persist the target model"),
               opts);
    add_common(app.add_subcommand("extract", "build train/test signature datasets"), opts);
    add_common(app.add_subcommand("train-decoder", "train the reconstruction decoder"), opts);
    add_common(app.add_subcommand("evaluate", "metrics, report, and figure grids"), opts);
    add_common(app.add_subcommand("run-all", "all stages in dependency order"), opts);
    add_common(app.add_subcommand("verify", "re-derive artifact digests from the manifest"),
               opts);
    add_common(app.add_subcommand("serve-oracle", "serve the equality oracle wire protocol"),
               opts);

    app.get_subcommand("train-classifier")
        ->callback(wrap([](persig::PipelineConfig cfg) {
            persig::cmd_train_classifier(cfg, std::cout);
        }));
    app.get_subcommand("extract")->callback(
        wrap([](persig::PipelineConfig cfg) { persig::cmd_extract(cfg, std::cout); }));
    app.get_subcommand("train-decoder")
        ->callback(
            wrap([](persig::PipelineConfig cfg) { persig::cmd_train_decoder(cfg, std::cout); }));
    app.get_subcommand("evaluate")->callback(
        wrap([](persig::PipelineConfig cfg) { persig::cmd_evaluate(cfg, std::cout); }));
    app.get_subcommand("run-all")->callback(
        wrap([](persig::PipelineConfig cfg) { persig::cmd_run_all(cfg, std::cout); }));
    app.get_subcommand("verify")->callback(wrap([&](persig::PipelineConfig cfg) {
        if (!persig::cmd_verify(cfg, std::cout)) exit_code = 2;
    }));
    app.get_subcommand("serve-oracle")
        ->callback(
            wrap([](persig::PipelineConfig cfg) { persig::cmd_serve_oracle(cfg, std::cout); }));

    CLI11_PARSE(app, argc, argv);
    return exit_code;
}
