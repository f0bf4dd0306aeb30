// nup: train, sweep, verify and count parameters of νP networks.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nup/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Scaled-SGD training and derivative verification for nuP multilayer perceptrons"};
    app.require_subcommand(1);

    std::string config, out, out_dir, lrs, level = "all", table;
    int trials = 5;
    std::uint64_t seed = 0;
    int l = 0, r = 0;
    nup::Index m = 0, m0 = 0, m_out = 0;

    auto* train = app.add_subcommand("train", "Train one configuration and write a metrics file");
    train->add_option("--config", config, "JSON run configuration")->required();
    train->add_option("--out", out, "Metrics output path (JSON Lines)")->required();

    auto* sweep = app.add_subcommand("sweep", "Train one run per learning rate");
    sweep->add_option("--config", config, "JSON run configuration")->required();
    sweep->add_option("--lrs", lrs, "Comma-separated learning rates")->required();
    sweep->add_option("--out-dir", out_dir, "Directory for metrics files and manifest.json")->required();

    auto* verify = app.add_subcommand("verify", "Run finite-difference and factorization checks");
    verify->add_option("--level", level, "grad|hess|tress|theorem|cumulative|all");
    verify->add_option("--trials", trials, "Random instances per suite")->check(CLI::NonNegativeNumber);
    verify->add_option("--seed", seed, "Base seed");
    verify->add_option("--table", table, "Also write a tab-separated report table here");

    auto* count = app.add_subcommand("paramcount", "Print the number of parameters");
    count->add_option("--l", l, "Hidden layers")->required();
    count->add_option("--m", m, "Width scale")->required();
    count->add_option("--r", r, "Width exponent")->required();
    count->add_option("--m0", m0, "Input dimension")->required();
    count->add_option("--mout", m_out, "Output dimension")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? nup::kExitOk : nup::kExitUsage;
    }

    if (*train) return nup::cmd_train(config, out, std::cout, std::cerr);
    if (*sweep) {
        std::vector<double> grid;
        try {
            grid = nup::parse_lr_list(lrs);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return nup::kExitUsage;
        }
        return nup::cmd_sweep(config, grid, out_dir, std::cout, std::cerr);
    }
    if (*verify) return nup::cmd_verify(level, trials, seed, std::cout, std::cerr, table);
    return nup::cmd_paramcount(l, m, r, m0, m_out, std::cout, std::cerr);
}
