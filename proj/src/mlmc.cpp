#include "ramc/mlmc.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ramc {

namespace {

struct Draw {
    MetricArray y{};
    double cost = 0.0;
};

/// Evaluates Y_l on n scenarios drawn from streams (level_key, MarginYear, i).
LevelStats sample_level(const Hierarchy& hierarchy, std::size_t level, std::size_t n,
                        std::uint64_t level_key, const Executor& executor, const Clock& clock)
{
    const Level& fine = hierarchy.levels[level];
    const Level* coarse = level > 0 ? &hierarchy.levels[level - 1] : nullptr;

    std::vector<Draw> draws(n);
    executor.for_each_index(n, [&](std::size_t i) {
        Stream stream(level_key, Purpose::MarginYear, i);
        HourlyTrace scenario;
        Draw draw;
        draw.cost = clock.time(hierarchy.sample_cost, 1.0,
                               [&] { scenario = hierarchy.sample(stream); });
        AdequacyOutcome upper;
        draw.cost += clock.time(fine.cost, 1.0, [&] { upper = fine.evaluate(scenario); });
        draw.y = to_metrics(upper);
        if (coarse) {
            AdequacyOutcome lower;
            draw.cost += clock.time(coarse->cost, 1.0, [&] { lower = coarse->evaluate(scenario); });
            draw.y[0] -= lower.lol;
            draw.y[1] -= lower.ens;
        }
        for (double v : draw.y) {
            if (!std::isfinite(v)) {
                throw std::runtime_error(
                    fmt::format("level '{}' produced a non-finite output", fine.name));
            }
        }
        draws[i] = draw;
    });

    // Welford accumulation in index order keeps results thread-count independent.
    LevelStats stats;
    MetricArray m2{};
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<double>(i + 1);
        for (std::size_t m = 0; m < kMetricCount; ++m) {
            const double delta = draws[i].y[m] - stats.mean[m];
            stats.mean[m] += delta / k;
            m2[m] += delta * (draws[i].y[m] - stats.mean[m]);
        }
        stats.cost += draws[i].cost;
    }
    stats.n = n;
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        stats.sigma[m] = n > 1 ? std::sqrt(std::max(0.0, m2[m]) / static_cast<double>(n - 1)) : 0.0;
    }
    stats.tau = n > 0 ? std::max(stats.cost / static_cast<double>(n), 1e-12) : 0.0;
    return stats;
}

void check_hierarchy(const Hierarchy& hierarchy)
{
    if (hierarchy.levels.empty()) {
        throw std::invalid_argument("hierarchy needs at least one level");
    }
    if (!hierarchy.sample) {
        throw std::invalid_argument("hierarchy needs a scenario sampler");
    }
    for (const auto& level : hierarchy.levels) {
        if (!level.evaluate) {
            throw std::invalid_argument(fmt::format("level '{}' has no evaluator", level.name));
        }
    }
}

} // namespace

std::vector<LevelStats> pilot(const Hierarchy& hierarchy, std::size_t n_pilot,
                              std::uint64_t seed, const Executor& executor, const Clock& clock)
{
    check_hierarchy(hierarchy);
    if (n_pilot < 2) {
        throw std::invalid_argument("pilot needs at least 2 samples per level");
    }
    std::vector<LevelStats> stats;
    for (std::size_t l = 0; l < hierarchy.levels.size(); ++l) {
        stats.push_back(sample_level(hierarchy, l, n_pilot,
                                     derive_key(seed, Purpose::MlmcPilot, l), executor, clock));
    }
    return stats;
}

std::vector<std::size_t> allocate_samples(std::span<const double> sigma,
                                          std::span<const double> tau, double t_sim,
                                          std::size_t n_min)
{
    const std::size_t levels = sigma.size();
    if (levels == 0 || tau.size() != levels) {
        throw std::invalid_argument("allocate_samples needs matching, non-empty sigma and tau");
    }
    double floor_cost = 0.0;
    for (std::size_t l = 0; l < levels; ++l) {
        if (!(tau[l] > 0.0) || !(sigma[l] >= 0.0)) {
            throw std::invalid_argument("allocate_samples needs tau > 0 and sigma >= 0");
        }
        floor_cost += static_cast<double>(n_min) * tau[l];
    }
    if (!(t_sim >= floor_cost)) {
        throw std::invalid_argument(fmt::format(
            "budget {:.6g} s cannot fund {} samples on every level ({:.6g} s)", t_sim, n_min,
            floor_cost));
    }

    // Continuous optimum, pinning levels that fall below n_min and re-solving.
    std::vector<double> target(levels, 0.0);
    std::vector<bool> pinned(levels, false);
    while (true) {
        double budget = t_sim;
        double weight = 0.0;
        for (std::size_t l = 0; l < levels; ++l) {
            if (pinned[l]) {
                budget -= static_cast<double>(n_min) * tau[l];
            } else {
                weight += sigma[l] * std::sqrt(tau[l]);
            }
        }
        bool changed = false;
        for (std::size_t l = 0; l < levels; ++l) {
            if (pinned[l]) {
                target[l] = static_cast<double>(n_min);
                continue;
            }
            target[l] = weight > 0.0 ? budget / weight * sigma[l] / std::sqrt(tau[l]) : 0.0;
            if (target[l] < static_cast<double>(n_min)) {
                pinned[l] = true;
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
    }

    std::vector<std::size_t> n(levels);
    double spent = 0.0;
    for (std::size_t l = 0; l < levels; ++l) {
        n[l] = std::max(n_min, static_cast<std::size_t>(std::floor(target[l] + 1e-9)));
        spent += static_cast<double>(n[l]) * tau[l];
    }

    double leftover = t_sim - spent;
    while (true) {
        std::size_t best = levels;
        double best_gain = 0.0;
        for (std::size_t l = 0; l < levels; ++l) {
            if (tau[l] > leftover * (1.0 + 1e-12)) {
                continue;
            }
            const double s2 = sigma[l] * sigma[l];
            const auto nl = static_cast<double>(n[l]);
            const double gain = (s2 / nl - s2 / (nl + 1.0)) / tau[l];
            if (gain > best_gain) {
                best_gain = gain;
                best = l;
            }
        }
        if (best == levels) {
            break;
        }
        ++n[best];
        leftover -= tau[best];
    }
    return n;
}

std::vector<std::size_t> allocate_samples(const std::vector<LevelStats>& stats, double t_sim,
                                          Metric primary, std::size_t n_min)
{
    std::vector<double> sigma, tau;
    for (const auto& s : stats) {
        sigma.push_back(s.sigma[static_cast<std::size_t>(primary)]);
        tau.push_back(s.tau);
    }
    return allocate_samples(sigma, tau, t_sim, n_min);
}

double predicted_variance(std::span<const double> sigma, std::span<const std::size_t> n)
{
    double v = 0.0;
    for (std::size_t l = 0; l < sigma.size(); ++l) {
        v += sigma[l] * sigma[l] / static_cast<double>(n[l]);
    }
    return v;
}

MLMCResult run_mlmc(const Hierarchy& hierarchy, const std::vector<std::size_t>& allocation,
                    std::uint64_t seed, const Executor& executor, const Clock& clock)
{
    check_hierarchy(hierarchy);
    if (allocation.size() != hierarchy.levels.size()) {
        throw std::invalid_argument("allocation size does not match the number of levels");
    }
    MLMCResult result;
    result.allocation = allocation;
    for (std::size_t l = 0; l < hierarchy.levels.size(); ++l) {
        if (allocation[l] < 2) {
            throw std::invalid_argument("every level needs at least 2 samples");
        }
        auto stats = sample_level(hierarchy, l, allocation[l],
                                  derive_key(seed, Purpose::MlmcMain, l), executor, clock);
        for (std::size_t m = 0; m < kMetricCount; ++m) {
            result.estimate[m] += stats.mean[m];
            result.variance[m] +=
                stats.sigma[m] * stats.sigma[m] / static_cast<double>(allocation[l]);
        }
        result.t_sim += stats.cost;
        result.levels.push_back(stats);
    }
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        result.std_error[m] = std::sqrt(result.variance[m]);
    }
    return result;
}

MLMCResult estimate_with_budget(const Hierarchy& hierarchy, const BudgetPlan& plan,
                                std::uint64_t seed, const Executor& executor, const Clock& clock)
{
    if (!(plan.t_sim > 0.0)) {
        throw std::invalid_argument("simulation budget must be positive");
    }
    const auto stats = pilot(hierarchy, plan.n_pilot, seed, executor, clock);
    double pilot_cost = 0.0;
    for (const auto& s : stats) {
        pilot_cost += s.cost;
    }
    const double remaining = plan.t_sim - pilot_cost;
    if (!(remaining > 0.0)) {
        throw std::invalid_argument(fmt::format(
            "pilot used {:.6g} s of a {:.6g} s budget; nothing left to allocate", pilot_cost,
            plan.t_sim));
    }
    const auto allocation = allocate_samples(stats, remaining, plan.primary);
    auto result = run_mlmc(hierarchy, allocation, seed, executor, clock);
    result.t_pilot = pilot_cost;
    result.t_sim += pilot_cost;
    return result;
}

MLMCResult run_plain_mc(const Level& level, const ScenarioSampler& sample, CostKind sample_cost,
                        std::size_t n, std::uint64_t seed, const Executor& executor,
                        const Clock& clock)
{
    if (n < 2) {
        throw std::invalid_argument("plain Monte Carlo needs at least 2 samples");
    }
    const Hierarchy single{sample, sample_cost, {level}};
    return run_mlmc(single, {n}, seed, executor, clock);
}

MLMCResult run_plain_mc(const Level& level, const ScenarioSampler& sample, CostKind sample_cost,
                        const BudgetPlan& plan, std::uint64_t seed, const Executor& executor,
                        const Clock& clock)
{
    const Hierarchy single{sample, sample_cost, {level}};
    return estimate_with_budget(single, plan, seed, executor, clock);
}

std::vector<MetricArray> exact_level_means(const Hierarchy& hierarchy,
                                           std::span<const HourlyTrace> scenarios,
                                           std::span<const double> probabilities)
{
    check_hierarchy(hierarchy);
    if (scenarios.size() != probabilities.size() || scenarios.empty()) {
        throw std::invalid_argument("scenario and probability lists must match and be non-empty");
    }
    std::vector<MetricArray> means(hierarchy.levels.size(), MetricArray{});
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
        MetricArray previous{};
        for (std::size_t l = 0; l < hierarchy.levels.size(); ++l) {
            const auto current = to_metrics(hierarchy.levels[l].evaluate(scenarios[s]));
            for (std::size_t m = 0; m < kMetricCount; ++m) {
                means[l][m] += probabilities[s] * (current[m] - previous[m]);
            }
            previous = current;
        }
    }
    return means;
}

double speed(double q, double sigma2, double t_sim)
{
    if (!(t_sim > 0.0) || !(sigma2 >= 0.0)) {
        throw std::invalid_argument("speed needs t_sim > 0 and sigma2 >= 0");
    }
    if (sigma2 == 0.0) {
        return q == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return q * q / (t_sim * sigma2);
}

double optimal_speed(double q, const std::vector<LevelStats>& stats, Metric metric)
{
    double cost_weighted = 0.0;
    for (const auto& s : stats) {
        cost_weighted += s.sigma[static_cast<std::size_t>(metric)] * std::sqrt(s.tau);
    }
    if (cost_weighted == 0.0) {
        return q == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return q * q / (cost_weighted * cost_weighted);
}

double performance(double s, double t, double t_train)
{
    if (t < t_train) {
        throw std::invalid_argument(fmt::format(
            "total time {:.6g} s is shorter than the training time {:.6g} s", t, t_train));
    }
    return s * (t - t_train);
}

BreakEven break_even(const SpeedProfile& a, const SpeedProfile& b)
{
    BreakEven out;
    if (a.speed > b.speed) {
        if (a.t_train > b.t_train) {
            out.kind = BreakEvenKind::Crossing;
            out.t_star = (a.speed * a.t_train - b.speed * b.t_train) / (a.speed - b.speed);
            out.performance = b.speed * (out.t_star - b.t_train);
        } else if (a.t_train == b.t_train) {
            out.kind = BreakEvenKind::Crossing;
            out.t_star = a.t_train;
            out.performance = 0.0;
        } else {
            out.kind = BreakEvenKind::AlwaysBetter;
            out.t_star = b.t_train;
            out.performance = 0.0;
        }
    } else if (a.speed == b.speed) {
        if (a.t_train < b.t_train) {
            out.kind = BreakEvenKind::AlwaysBetter;
            out.t_star = b.t_train;
        } else if (a.t_train == b.t_train) {
            out.kind = BreakEvenKind::Degenerate;
            out.t_star = a.t_train;
        } else {
            out.kind = BreakEvenKind::Invalid;
        }
    } else {
        out.kind = BreakEvenKind::Invalid;
    }
    return out;
}

} // namespace ramc
