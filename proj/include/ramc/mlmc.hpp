#pragma once

#include "ramc/adequacy.hpp"
#include "ramc/clock.hpp"
#include "ramc/parallel.hpp"
#include "ramc/scenario.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ramc {

enum class Metric : std::size_t { Lole = 0, Eens = 1 };
inline constexpr std::size_t kMetricCount = 2;
using MetricArray = std::array<double, kMetricCount>;

inline MetricArray to_metrics(const AdequacyOutcome& o) { return {o.lol, o.ens}; }

using ScenarioSampler = std::function<HourlyTrace(Stream&)>;
using Evaluator = std::function<AdequacyOutcome(const HourlyTrace&)>;

/// One model f_l of the hierarchy. Must be deterministic in the scenario.
struct Level {
    std::string name;
    Evaluator evaluate;
    CostKind cost = CostKind::ExactYear;
};

/// Models ordered from cheapest (f_1) to the reference model (f_L); f_0 = 0.
struct Hierarchy {
    ScenarioSampler sample;
    CostKind sample_cost = CostKind::SampleYear;
    std::vector<Level> levels;
};

/// Statistics of Y_l = f_l - f_{l-1} on common scenarios.
struct LevelStats {
    MetricArray mean{};
    MetricArray sigma{}; ///< sample standard deviation (n - 1)
    double tau = 0.0;    ///< seconds per sample pair (scenario + both models)
    std::size_t n = 0;
    double cost = 0.0;   ///< total seconds spent on this level
};

struct MLMCResult {
    MetricArray estimate{};
    MetricArray variance{}; ///< sum_l sigma_l^2 / N_l
    MetricArray std_error{};
    std::vector<LevelStats> levels;
    std::vector<std::size_t> allocation;
    double t_pilot = 0.0;
    double t_sim = 0.0; ///< pilot plus main sampling
};

/// Samples n scenarios per level from independent streams and evaluates both
/// adjacent models on each. Throws std::invalid_argument for n < 2 and
/// std::runtime_error for non-finite evaluator output.
std::vector<LevelStats> pilot(const Hierarchy& hierarchy, std::size_t n_pilot,
                              std::uint64_t seed, const Executor& executor, const Clock& clock);

/// Continuous optimum N_l = t_sim sigma_l / (sqrt(tau_l) sum_k sigma_k sqrt(tau_k)),
/// floored with minimum n_min; leftover budget goes one sample at a time to
/// the level with the largest variance reduction per second.
std::vector<std::size_t> allocate_samples(std::span<const double> sigma,
                                          std::span<const double> tau, double t_sim,
                                          std::size_t n_min = 2);

std::vector<std::size_t> allocate_samples(const std::vector<LevelStats>& stats, double t_sim,
                                          Metric primary, std::size_t n_min = 2);

double predicted_variance(std::span<const double> sigma, std::span<const std::size_t> n);

/// Fresh samples (streams disjoint from the pilot's) at the given allocation.
MLMCResult run_mlmc(const Hierarchy& hierarchy, const std::vector<std::size_t>& allocation,
                    std::uint64_t seed, const Executor& executor, const Clock& clock);

struct BudgetPlan {
    double t_sim = 10.0;       ///< seconds, pilot included
    std::size_t n_pilot = 200;
    Metric primary = Metric::Eens;
};

/// Pilot, allocate the remaining budget, run. Throws std::invalid_argument
/// when the budget left after the pilot cannot fund two samples per level.
MLMCResult estimate_with_budget(const Hierarchy& hierarchy, const BudgetPlan& plan,
                                std::uint64_t seed, const Executor& executor, const Clock& clock);

/// Single-level estimator with a fixed sample count.
MLMCResult run_plain_mc(const Level& level, const ScenarioSampler& sample, CostKind sample_cost,
                        std::size_t n, std::uint64_t seed, const Executor& executor,
                        const Clock& clock);

/// Single-level estimator under a time budget (pilot + allocation).
MLMCResult run_plain_mc(const Level& level, const ScenarioSampler& sample, CostKind sample_cost,
                        const BudgetPlan& plan, std::uint64_t seed, const Executor& executor,
                        const Clock& clock);

/// E[Y_l] for every level over an enumerated scenario space.
std::vector<MetricArray> exact_level_means(const Hierarchy& hierarchy,
                                           std::span<const HourlyTrace> scenarios,
                                           std::span<const double> probabilities);

/// s = q^2 / (t_sim sigma2); +infinity when sigma2 == 0 and q != 0.
double speed(double q, double sigma2, double t_sim);

/// Asymptotic speed at the optimal allocation, q^2 / (sum_l sigma_l sqrt(tau_l))^2.
double optimal_speed(double q, const std::vector<LevelStats>& stats, Metric metric);

/// 1/c^2 = s (t - t_train). Throws std::invalid_argument when t < t_train.
double performance(double s, double t, double t_train);

struct SpeedProfile {
    double speed = 0.0;
    double t_train = 0.0;
};

enum class BreakEvenKind {
    Crossing,     ///< a overtakes b at t_star
    AlwaysBetter, ///< a is at least as good for every usable budget
    Invalid,      ///< a never overtakes b
    Degenerate,   ///< identical speed and training time
};

struct BreakEven {
    BreakEvenKind kind = BreakEvenKind::Invalid;
    double t_star = 0.0;
    double performance = 0.0; ///< 1/c^2 at t_star
};

/// Where estimator a (more training) starts to beat b under a shared budget.
BreakEven break_even(const SpeedProfile& a, const SpeedProfile& b);

} // namespace ramc
