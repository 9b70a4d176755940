// Declarative experiment runner for the noisy-thermalization toolkit.
//
//   gibbsforge <spectrum|thermalize|mi|circuit|sweep> --config cfg.toml [opts]
//   gibbsforge plot --csv metrics.csv --out plot.svg [--metric name]

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gibbsforge/experiment.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
    std::vector<std::string> formats;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config (TOML subset)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", args.out_dir, "output directory (overrides [run].out_dir)");
    cmd->add_option("--seed", args.seed, "master seed (overrides [run].master_seed)")
        ->each([&](const std::string&) { args.seed_set = true; });
    cmd->add_option("--threads", args.threads,
                    "worker threads (0 = GIBBSFORGE_THREADS or hardware)");
    cmd->add_option("--format", args.formats, "output kinds: csv, json, svg (default all)")
        ->delimiter(',');
}

gibbsforge::ExperimentConfig load_config(const CommonArgs& args) {
    gibbsforge::ExperimentConfig cfg = gibbsforge::ExperimentConfig::load(args.config_path);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (args.seed_set) cfg.master_seed = args.seed;
    if (args.threads > 0) cfg.threads = args.threads;
    cfg.threads = gibbsforge::resolve_thread_count(cfg.threads);
    return cfg;
}

gibbsforge::OutputFormats parse_formats(const std::vector<std::string>& formats) {
    if (formats.empty()) return {};
    gibbsforge::OutputFormats out{false, false, false};
    for (const std::string& f : formats) {
        if (f == "csv")
            out.csv = true;
        else if (f == "json")
            out.json_out = true;
        else if (f == "svg")
            out.svg = true;
        else
            throw CLI::ValidationError("--format", "unknown format '" + f + "'");
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gibbsforge: noise-accelerated Gibbs-state preparation toolkit"};
    app.require_subcommand(1);

    CommonArgs spectrum_args, thermalize_args, mi_args, circuit_args, sweep_args;
    add_common(app.add_subcommand("spectrum", "spectrum, density of states and beta*"),
               spectrum_args);
    add_common(app.add_subcommand("thermalize", "plain vs noisy distance-to-thermal runs"),
               thermalize_args);
    add_common(app.add_subcommand("mi", "mutual-information dynamics per noisy set"), mi_args);
    add_common(app.add_subcommand("circuit", "Trotterized noisy-circuit runs"), circuit_args);
    add_common(app.add_subcommand("sweep", "kappa-ratio scaling sweeps"), sweep_args);

    std::string plot_csv, plot_out, plot_metric;
    CLI::App* plot = app.add_subcommand("plot", "re-render an SVG from a metrics CSV");
    plot->add_option("--csv", plot_csv, "metrics CSV")->required()->check(CLI::ExistingFile);
    plot->add_option("--out", plot_out, "output SVG path")->required();
    plot->add_option("--metric", plot_metric, "restrict to one metric");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("spectrum"))
            return gibbsforge::cmd_spectrum(load_config(spectrum_args),
                                            parse_formats(spectrum_args.formats));
        if (app.got_subcommand("thermalize"))
            return gibbsforge::cmd_thermalize(load_config(thermalize_args),
                                              parse_formats(thermalize_args.formats));
        if (app.got_subcommand("mi"))
            return gibbsforge::cmd_mi(load_config(mi_args), parse_formats(mi_args.formats));
        if (app.got_subcommand("circuit"))
            return gibbsforge::cmd_circuit(load_config(circuit_args),
                                           parse_formats(circuit_args.formats));
        if (app.got_subcommand("sweep"))
            return gibbsforge::cmd_sweep(load_config(sweep_args),
                                         parse_formats(sweep_args.formats));
        if (app.got_subcommand("plot"))
            return gibbsforge::cmd_plot(plot_csv, plot_out, plot_metric);
    } catch (const std::exception& e) {
        std::cerr << "gibbsforge: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
