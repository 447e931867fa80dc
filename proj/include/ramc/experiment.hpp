#pragma once

#include "ramc/active_learning.hpp"
#include "ramc/mlmc.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ramc {

inline constexpr int kConfigSchemaVersion = 1;

/// Environment variable that overrides the configured output directory.
inline constexpr const char* kOutputDirEnv = "RAMC_OUTPUT_DIR";

struct ProfileSource {
    enum class Kind { Synthetic, Csv };
    Kind kind = Kind::Synthetic;
    std::size_t wind_years = 30;
    std::size_t demand_years = 10;
    std::uint64_t seed = 1;
    SynthParams params;
    std::filesystem::path directory; ///< Csv only, relative to the config file
};

struct SystemConfig {
    ThermalFleet thermal;
    StorageFleet storage;
    ProfileSource profiles;
};

struct ExperimentConfig {
    int schema_version = kConfigSchemaVersion;
    std::uint64_t seed = 1;
    std::size_t repetitions = 10;
    std::filesystem::path output_dir = "results";
    std::size_t threads = 0; ///< 0 means one per hardware thread
    bool deterministic_clock = false;
    CostModel cost_model;

    SystemConfig system;
    ForestParams surrogate;
    ALConfig active_learning;
    std::vector<std::size_t> al_rounds{5, 10, 20};
    std::vector<std::size_t> random_sizes{3285, 7300, 14600};
    /// Extra random-training sizes for the accuracy sweeps, on top of the
    /// sizes reached by every AL round and the table's random sizes.
    std::vector<std::size_t> sweep_random_sizes;
    std::size_t daily_test_size = 100000;
    std::size_t yearly_test_size = 1000;
    BudgetPlan mlmc;
};

/// Every problem found in a config, each prefixed by its JSON path.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    std::vector<std::string> problems_;
};

/// Parses and validates; missing keys take the defaults above. Relative CSV
/// directories resolve against `base_dir`. Throws ConfigError.
ExperimentConfig parse_config(const nlohmann::json& document,
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& file);

/// Invariant and budget-feasibility problems of an already parsed config.
std::vector<std::string> check_config(const ExperimentConfig& config);

/// The resolved config, every default spelled out.
nlohmann::json to_json(const ExperimentConfig& config);

/// --out, else $RAMC_OUTPUT_DIR, else the configured directory.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config,
                                         const std::optional<std::filesystem::path>& cli_out);

/// The built system shared by every repetition.
struct Setup {
    ThermalFleet thermal;
    StorageFleet storage;
    ProfileLibrary profiles;
    ForestParams forest;
    ALConfig active_learning;
};

Setup build_setup(const ExperimentConfig& config);

struct TestSets {
    LabeledSet daily;
    YearlyTestSet yearly;
};

/// Daily items from streams (seed, DailyTest, i), yearly from (seed, YearlyTest, i).
TestSets make_test_sets(const Setup& setup, std::size_t n_daily, std::size_t n_yearly,
                        std::uint64_t seed, const Executor& executor);

/// One trained surrogate evaluated on the test sets.
struct SweepPoint {
    std::string method; ///< "AL" or "Random"
    std::size_t repetition = 0;
    std::size_t rounds = 0; ///< AL only
    std::size_t train_size = 0;
    double t_train = 0.0;
    SurrogateMetrics metrics;
};

struct SweepResult {
    std::vector<SweepPoint> points;
    std::vector<std::vector<RoundRecord>> histories; ///< per repetition
};

/// Key of repetition r: derive_key(seed, Repetition, r).
std::uint64_t repetition_key(std::uint64_t seed, std::size_t repetition);
/// Seed of the AL chain of a repetition.
std::uint64_t al_seed(std::uint64_t repetition_key);
/// Seed of a random-training run of a given size in a repetition.
std::uint64_t random_seed(std::uint64_t repetition_key, std::size_t n_days);

/// For each repetition: one AL chain of `max_rounds` rounds evaluated after
/// every round, and one random run per entry of `random_sizes`.
SweepResult run_training_sweep(const Setup& setup, const TestSets& tests, std::size_t max_rounds,
                               const std::vector<std::size_t>& random_sizes,
                               std::size_t repetitions, std::uint64_t seed,
                               const Executor& executor, const Clock& clock);

struct TableRow {
    std::string estimator;
    std::optional<std::size_t> train_size; ///< empty for the exact model
    double t_train = 0.0;
    double t_train_std = 0.0;
    double t_sim = 0.0;
    MetricArray estimate{};
    MetricArray estimate_std{};   ///< spread across repetitions
    MetricArray half_width{};     ///< 1.96 sigma, averaged across repetitions
    MetricArray speed{};
    MetricArray speed_std{};
    std::optional<std::string> baseline; ///< row this one is compared against
    std::array<BreakEven, kMetricCount> break_even{};
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<TableRow> table;
    SweepResult sweep;
    nlohmann::json json;
};

/// Runs the whole protocol and writes table1.csv, al_history.csv,
/// sweep_by_size.csv, sweep_by_time.csv and report.json into `output_dir`.
/// Progress goes to `log` when given.
ExperimentReport run_experiment(const ExperimentConfig& config,
                                const std::filesystem::path& output_dir,
                                std::ostream* log = nullptr);

/// Results-table cell text for a break-even result.
std::string format_break_even(const BreakEven& result);

} // namespace ramc
