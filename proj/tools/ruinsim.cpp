#include <ruinsim.hpp>

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    CLI::App app{"Monte Carlo and asymptotics for discounted multivariate heavy-tailed risk"};
    app.set_version_flag("--version", std::string("ruinsim ") + ruinsim::kVersion);
    app.require_subcommand(1);

    std::string config;
    ruinsim::RunOptions options;
    unsigned workers = 0;

    auto* run = app.add_subcommand("run", "run every listed estimator and write the report");
    run->add_option("config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--workers", workers, "worker threads (default: config value)")->check(CLI::PositiveNumber);
    run->add_option("--out", options.out_dir, "output directory")->capture_default_str();

    auto* validate = app.add_subcommand("validate", "run the assembly checks without simulating");
    validate->add_option("config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);

    auto* asymptotic = app.add_subcommand("asymptotic", "evaluate the asymptotic right-hand side on the x grid");
    asymptotic->add_option("config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    asymptotic->add_option("--out", options.out_dir, "output directory")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        options.seed_override = ruinsim::seed_from_env();
    } catch (const ruinsim::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ruinsim::exit_invalid;
    }
    if (workers > 0)
        options.workers = workers;

    if (*run)
        return ruinsim::run_command(config, options, std::cout, std::cerr);
    if (*validate)
        return ruinsim::validate_command(config, options.seed_override, std::cout, std::cerr);
    return ruinsim::asymptotic_command(config, options, std::cout, std::cerr);
}
