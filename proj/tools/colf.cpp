#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "colf/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"colf: continual learning for click-through-rate prediction"};
    app.require_subcommand(1);

    std::string gen_config, gen_out;
    auto* gen = app.add_subcommand("gen", "generate a synthetic click stream");
    gen->add_option("--config", gen_config, "experiment JSON")->required();
    gen->add_option("--out", gen_out, "stream file to write")->required();

    std::string run_config;
    bool force = false;
    std::size_t jobs = 1;
    auto* run = app.add_subcommand("run", "run every strategy and seed of an experiment");
    run->add_option("--config", run_config, "experiment JSON")->required();
    run->add_flag("--force", force, "replace an existing results directory");
    run->add_option("--jobs", jobs, "strategies trained in parallel")->check(CLI::PositiveNumber);

    std::string report_dir;
    auto* report = app.add_subcommand("report", "summarise a results directory");
    report->add_option("--dir", report_dir, "results directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : colf::cli::kConfigError;
    }

    if (*gen) return colf::cli::cmd_gen(gen_config, gen_out, std::cout, std::cerr);
    if (*run) return colf::cli::cmd_run(run_config, force, jobs, std::cout, std::cerr);
    return colf::cli::cmd_report(report_dir, std::cout, std::cerr);
}
