// Command-line experiment runner.

#include "expmsfem/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

int main(int argc, char** argv)
{
    using namespace expmsfem;
    CLI::App app{"Exponentially convergent multiscale FEM experiment runner"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "results", scale = "desk";
    int threads = 1;
    bool no_timing = false;
    auto* run = app.add_subcommand("run", "Run the experiments of a config (embedded desk suite if omitted)");
    run->add_option("config", config_path, "JSON config file")->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--threads", threads, "Worker threads for the offline stage")->check(CLI::PositiveNumber);
    run->add_option("--scale", scale, "Apply each experiment's paper overrides")
        ->check(CLI::IsMember({"desk", "paper"}));
    run->add_flag("--no-timing", no_timing, "Write zero timing columns for byte-reproducible CSVs");

    auto* dflt = app.add_subcommand("default-config", "Print the embedded default config");

    CLI11_PARSE(app, argc, argv);

    if (dflt->parsed()) {
        std::cout << default_config_text() << '\n';
        return 0;
    }

    ExperimentConfig cfg;
    try {
        json doc;
        if (config_path.empty()) {
            doc = json::parse(default_config_text());
        } else {
            std::ifstream in(config_path);
            std::stringstream ss;
            ss << in.rdbuf();
            doc = json::parse(ss.str());
        }
        cfg = parse_config(doc, scale == "paper");
    } catch (const json::exception& err) {
        std::cerr << "config: invalid JSON: " << err.what() << '\n';
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "config: " << err.what() << '\n';
        return 2;
    }

    RunOptions opts;
    opts.threads = threads;
    opts.timing = !no_timing;
    const ExperimentResult res = run_experiment(cfg, opts);
    try {
        write_outputs(out_dir, cfg, res);
    } catch (const std::exception& err) {
        std::cerr << err.what() << '\n';
        return 1;
    }
    std::size_t failed = 0;
    for (const auto& r : res.rows)
        if (r.error) {
            ++failed;
            std::cerr << r.scenario << " H=" << r.H << " m=" << r.m << ": " << *r.error << '\n';
        }
    std::printf("%zu rows, %zu failed; results in %s\n", res.rows.size(), failed, out_dir.c_str());
    return res.ok() ? 0 : 1;
}
