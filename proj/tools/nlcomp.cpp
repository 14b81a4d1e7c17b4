/// @file nlcomp.cpp
/// @brief Command-line experiment runner.
///
///   nlcomp run <config> [--out-dir DIR] [--tol-override TOL]
///   nlcomp describe <config>
///
/// NLCOMP_THREADS sets the worker count.
#include "nlcomp/cli/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"Nonlocal comparison toolkit: verification experiments"};
    app.require_subcommand(1);

    std::string run_path;
    std::string out_dir = ".";
    double tol = 0.0;
    auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
    run->add_option("config", run_path, "Config file")->required();
    run->add_option("--out-dir", out_dir, "Directory for reports and CSV files");
    auto* tol_opt = run->add_option("--tol-override", tol, "Replace the check tolerance");

    std::string describe_path;
    auto* describe = app.add_subcommand("describe", "Print the resolved configuration");
    describe->add_option("config", describe_path, "Config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (run->parsed()) {
        nlcomp::cli::RunOptions opts;
        opts.out_dir = out_dir;
        if (tol_opt->count() > 0) opts.tol_override = tol;
        return nlcomp::cli::run(run_path, opts, std::cout, std::cerr);
    }
    return nlcomp::cli::describe(describe_path, std::cout, std::cerr);
}
