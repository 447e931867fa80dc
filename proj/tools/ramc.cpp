#include "ramc/experiment.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <iostream>

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> threads;
    bool deterministic_clock = false;
};

ramc::ExperimentConfig load(const std::string& file, const Overrides& o)
{
    auto config = ramc::load_config(file);
    if (o.seed) {
        config.seed = *o.seed;
    }
    if (o.threads) {
        config.threads = *o.threads;
    }
    if (o.deterministic_clock) {
        config.deterministic_clock = true;
    }
    return config;
}

int report_config_error(const ramc::ConfigError& e)
{
    std::cerr << "config has " << e.problems().size() << " problem(s):\n";
    for (const auto& p : e.problems()) {
        std::cerr << "  " << p << "\n";
    }
    return 2;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Resource adequacy estimation with multilevel Monte Carlo and "
                 "actively learned surrogates"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides o;
    std::string config_file;
    app.add_option("--seed", o.seed, "override the master seed");
    app.add_option("--out", o.out, "output directory (overrides $RAMC_OUTPUT_DIR and the config)");
    app.add_option("--threads", o.threads, "worker threads, 0 for one per hardware thread");
    app.add_flag("--deterministic-clock", o.deterministic_clock,
                 "charge time from the config's cost model instead of the wall clock");

    auto* run = app.add_subcommand("run", "run the full experiment");
    run->add_option("config", config_file, "experiment config (JSON)")->required();
    auto* validate = app.add_subcommand("validate", "check a config and print the resolved values");
    validate->add_option("config", config_file, "experiment config (JSON)")->required();

    std::string profile_dir;
    std::size_t n_wind = 30, n_demand = 10;
    std::uint64_t profile_seed = 1;
    auto* profiles = app.add_subcommand("profiles", "write synthetic wind.csv and demand.csv");
    profiles->add_option("directory", profile_dir, "target directory")->required();
    profiles->add_option("--wind-years", n_wind, "number of wind years");
    profiles->add_option("--demand-years", n_demand, "number of demand years");
    profiles->add_option("--profile-seed", profile_seed, "generator seed");
    double demand_peak = ramc::SynthParams{}.demand_peak_mw;
    profiles->add_option("--demand-peak", demand_peak, "demand scale in MW");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) {
            const auto config = load(config_file, o);
            std::cout << "OK\n" << ramc::to_json(config).dump(2) << "\n";
            return 0;
        }
        if (*run) {
            const auto config = load(config_file, o);
            const auto out = ramc::resolve_output_dir(
                config, o.out ? std::optional<std::filesystem::path>(*o.out) : std::nullopt);
            const auto start = std::chrono::steady_clock::now();
            const auto report = ramc::run_experiment(config, out, &std::cerr);
            const double elapsed =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            std::cout << "estimator | train size | t_train [s] | t_sim [s] | LOLE speed | EENS speed\n";
            for (const auto& row : report.table) {
                std::cout << fmt::format("{} | {} | {:.2f} | {:.2f} | {:.4g} | {:.4g}\n",
                                         row.estimator,
                                         row.train_size ? std::to_string(*row.train_size) : "N/A",
                                         row.t_train, row.t_sim, row.speed[0], row.speed[1]);
            }
            std::cout << fmt::format("finished in {:.1f} s, results in {}\n", elapsed, out.string());
            return 0;
        }
        if (*profiles) {
            ramc::SynthParams params;
            params.demand_peak_mw = demand_peak;
            const auto library = ramc::synth_profiles(n_wind, n_demand, profile_seed, params);
            ramc::save_profiles(profile_dir, library);
            std::cout << fmt::format("wrote {} wind and {} demand years to {}\n", n_wind, n_demand,
                                     profile_dir);
            return 0;
        }
    } catch (const ramc::ConfigError& e) {
        return report_config_error(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
