#include "gapnet/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"gapnet: gap-filling autoencoder ensembles for gridded anomaly fields"};
    app.require_subcommand(1, 1);

    std::string config_path;
    std::string stage_dir = "run";
    long long seed = -1;
    long long jobs = 0;
    app.add_option("--config", config_path, "run configuration file")->required()->check(CLI::ExistingFile);
    app.add_option("--stage-dir", stage_dir, "directory holding stage artifacts");
    app.add_option("--seed", seed, "root seed (overrides run.seed)")->check(CLI::NonNegativeNumber);
    app.add_option("--jobs", jobs, "worker threads (overrides run.jobs)")->check(CLI::PositiveNumber);
    app.fallthrough();

    for (const auto& name : gapnet::stage_names()) app.add_subcommand(name, "run the " + name + " stage");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    gapnet::StageContext ctx;
    try {
        ctx.config = gapnet::RunConfig::load(config_path);
        if (seed >= 0) ctx.config.set("run.seed", std::to_string(seed));
        if (jobs > 0) ctx.config.set("run.jobs", std::to_string(jobs));
        ctx.seed = ctx.config.unsigned_integer("run.seed");
        ctx.jobs = ctx.config.integer("run.jobs");
    } catch (const gapnet::RunConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    ctx.stage_dir = stage_dir;
    ctx.log = &std::cerr;

    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        gapnet::run_stage(stage, ctx);
    } catch (const gapnet::RunConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
