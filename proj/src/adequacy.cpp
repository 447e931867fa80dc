#include "ramc/adequacy.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ramc {

namespace {

/// Solves sum_i clamp(alpha_i + beta_i * level, 0, cap_i) == target for the
/// water level and writes the per-unit amounts. Each term is nondecreasing in
/// the level; requires 0 < target < sum_i cap_i.
class WaterFill {
public:
    void solve(std::span<const double> alpha, std::span<const double> beta,
               std::span<const double> cap, double target, std::span<double> amounts)
    {
        const std::size_t n = alpha.size();
        breakpoints_.clear();
        for (std::size_t i = 0; i < n; ++i) {
            if (beta[i] > 0.0 && cap[i] > 0.0) {
                breakpoints_.push_back(-alpha[i] / beta[i]);
                breakpoints_.push_back((cap[i] - alpha[i]) / beta[i]);
            }
        }
        std::sort(breakpoints_.begin(), breakpoints_.end());

        auto total_at = [&](double level) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (beta[i] > 0.0 && cap[i] > 0.0) {
                    total += std::clamp(alpha[i] + beta[i] * level, 0.0, cap[i]);
                }
            }
            return total;
        };

        double level = breakpoints_.empty() ? 0.0 : breakpoints_.back();
        double prev_level = breakpoints_.empty() ? 0.0 : breakpoints_.front();
        double prev_total = total_at(prev_level);
        for (std::size_t k = 1; k < breakpoints_.size(); ++k) {
            const double next_level = breakpoints_[k];
            const double next_total = total_at(next_level);
            if (next_total >= target) {
                const double rise = next_total - prev_total;
                level = rise > 0.0
                    ? prev_level + (target - prev_total) * (next_level - prev_level) / rise
                    : next_level;
                break;
            }
            prev_level = next_level;
            prev_total = next_total;
        }

        for (std::size_t i = 0; i < n; ++i) {
            amounts[i] = (beta[i] > 0.0 && cap[i] > 0.0)
                ? std::clamp(alpha[i] + beta[i] * level, 0.0, cap[i])
                : 0.0;
        }
    }

private:
    std::vector<double> breakpoints_;
};

void check_soc(const StorageFleet& fleet, std::span<const double> soc)
{
    if (soc.size() != fleet.units.size()) {
        throw std::invalid_argument(fmt::format("initial soc has {} entries for {} units",
                                                soc.size(), fleet.units.size()));
    }
    for (std::size_t i = 0; i < soc.size(); ++i) {
        if (!(soc[i] >= 0.0 && soc[i] <= fleet.units[i].energy_cap)) {
            throw std::invalid_argument(fmt::format(
                "soc {} of unit {} outside [0, {}]", soc[i], i, fleet.units[i].energy_cap));
        }
    }
}

bool on_grid(double value, double step)
{
    const double ratio = value / step;
    return std::abs(ratio - std::round(ratio)) <= 1e-9 * std::max(1.0, std::abs(ratio));
}

} // namespace

std::vector<double> StorageFleet::initial_soc() const
{
    std::vector<double> soc;
    soc.reserve(units.size());
    for (const auto& u : units) {
        soc.push_back(u.soc);
    }
    return soc;
}

void StorageFleet::validate() const
{
    if (!(charge_efficiency > 0.0 && charge_efficiency <= 1.0)) {
        throw std::invalid_argument("charge_efficiency must lie in (0, 1]");
    }
    for (std::size_t i = 0; i < units.size(); ++i) {
        const auto& u = units[i];
        if (!(u.power >= 0.0) || !(u.energy_cap >= 0.0) || !std::isfinite(u.power)
            || !std::isfinite(u.energy_cap)) {
            throw std::invalid_argument(
                fmt::format("storage unit {} needs finite nonnegative power and energy", i));
        }
        if (!(u.soc >= 0.0 && u.soc <= u.energy_cap)) {
            throw std::invalid_argument(fmt::format("storage unit {} soc outside [0, energy_cap]", i));
        }
    }
}

DispatchResult dispatch_trace(std::span<const double> margin, const StorageFleet& fleet,
                              std::span<const double> initial_soc)
{
    check_soc(fleet, initial_soc);
    for (double z : margin) {
        if (std::isnan(z)) {
            throw std::invalid_argument("margin trace contains NaN");
        }
    }

    const std::size_t n = fleet.units.size();
    const double eta = fleet.charge_efficiency;
    DispatchResult result;
    result.final_soc.assign(initial_soc.begin(), initial_soc.end());
    auto& soc = result.final_soc;

    std::vector<double> alpha(n), beta(n), cap(n), amounts(n);
    WaterFill water_fill;

    for (double z : margin) {
        if (z < 0.0) {
            const double shortfall = -z;
            double deliverable = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                cap[i] = std::min(fleet.units[i].power, soc[i]);
                deliverable += cap[i];
            }
            if (deliverable <= shortfall) {
                for (std::size_t i = 0; i < n; ++i) {
                    soc[i] = std::max(0.0, soc[i] - cap[i]);
                }
                const double residual = shortfall - deliverable;
                if (residual > kLossOfLoadEpsilon) {
                    result.outcome.lol += 1.0;
                    result.outcome.ens += residual;
                }
            } else {
                // Drain the units with the longest time-to-empty first.
                for (std::size_t i = 0; i < n; ++i) {
                    alpha[i] = soc[i];
                    beta[i] = fleet.units[i].power;
                }
                water_fill.solve(alpha, beta, cap, shortfall, amounts);
                for (std::size_t i = 0; i < n; ++i) {
                    soc[i] = std::max(0.0, soc[i] - amounts[i]);
                }
            }
        } else if (z > 0.0) {
            double absorbable = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                cap[i] = std::min(fleet.units[i].power,
                                  (fleet.units[i].energy_cap - soc[i]) / eta);
                absorbable += cap[i];
            }
            if (absorbable <= 0.0) {
                continue;
            }
            if (absorbable <= z) {
                for (std::size_t i = 0; i < n; ++i) {
                    const auto& unit = fleet.units[i];
                    soc[i] = (unit.energy_cap - soc[i]) / eta <= unit.power
                        ? unit.energy_cap
                        : std::min(unit.energy_cap, soc[i] + eta * cap[i]);
                }
            } else {
                // Fill the units with the shortest time-to-empty first.
                for (std::size_t i = 0; i < n; ++i) {
                    alpha[i] = -soc[i] / eta;
                    beta[i] = fleet.units[i].power / eta;
                }
                water_fill.solve(alpha, beta, cap, z, amounts);
                for (std::size_t i = 0; i < n; ++i) {
                    soc[i] = std::min(fleet.units[i].energy_cap, soc[i] + eta * amounts[i]);
                }
            }
        }
    }
    return result;
}

AdequacyOutcome evaluate_exact_year(const HourlyTrace& margin, const StorageFleet& fleet)
{
    const auto soc = fleet.initial_soc();
    return dispatch_trace(margin.values(), fleet, soc).outcome;
}

AdequacyOutcome label_day(const DailyTrace& day, const StorageFleet& fleet)
{
    const auto soc = fleet.initial_soc();
    return dispatch_trace(day, fleet, soc).outcome;
}

double brute_force_min_ens(std::span<const double> margin, const StorageFleet& fleet,
                           double grid_step)
{
    if (!(grid_step > 0.0)) {
        throw std::invalid_argument("grid_step must be positive");
    }
    if (fleet.charge_efficiency != 1.0) {
        throw std::invalid_argument("brute force requires charge efficiency 1");
    }
    fleet.validate();

    const std::size_t n = fleet.units.size();
    std::vector<std::size_t> levels(n), max_step(n), radix(n);
    std::size_t states = 1;
    std::size_t actions = 1;
    std::size_t start = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& u = fleet.units[i];
        if (!on_grid(u.energy_cap, grid_step) || !on_grid(u.soc, grid_step)) {
            throw std::invalid_argument("energy caps and socs must be multiples of grid_step");
        }
        levels[i] = static_cast<std::size_t>(std::llround(u.energy_cap / grid_step)) + 1;
        max_step[i] = static_cast<std::size_t>(std::floor(u.power / grid_step + 1e-9));
        radix[i] = states;
        start += radix[i] * static_cast<std::size_t>(std::llround(u.soc / grid_step));
        states *= levels[i];
        actions *= std::min(max_step[i], levels[i] - 1) + 1;
    }
    const double work = static_cast<double>(states) * static_cast<double>(actions)
        * static_cast<double>(margin.size());
    if (work > 5.0e7) {
        throw std::invalid_argument(
            fmt::format("brute force search too large ({:.3g} state-actions)", work));
    }

    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> best(states, kInf), next(states, kInf);
    best[start] = 0.0;
    std::vector<std::size_t> soc_index(n), step(n);

    for (double z : margin) {
        std::fill(next.begin(), next.end(), kInf);
        for (std::size_t s = 0; s < states; ++s) {
            if (best[s] == kInf) {
                continue;
            }
            std::size_t rem = s;
            for (std::size_t i = n; i-- > 0;) {
                soc_index[i] = rem / radix[i];
                rem %= radix[i];
            }

            // Per-unit step bounds for this hour: discharge when short, charge when long.
            std::vector<std::size_t> bound(n, 0);
            for (std::size_t i = 0; i < n; ++i) {
                if (z < 0.0) {
                    bound[i] = std::min(max_step[i], soc_index[i]);
                } else if (z > 0.0) {
                    bound[i] = std::min(max_step[i], levels[i] - 1 - soc_index[i]);
                }
            }

            std::fill(step.begin(), step.end(), 0);
            while (true) {
                std::size_t total_steps = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    total_steps += step[i];
                }
                const double energy = static_cast<double>(total_steps) * grid_step;
                bool feasible = true;
                double ens = 0.0;
                std::size_t target = 0;
                if (z < 0.0) {
                    ens = std::max(0.0, -z - energy);
                    for (std::size_t i = 0; i < n; ++i) {
                        target += radix[i] * (soc_index[i] - step[i]);
                    }
                } else {
                    feasible = energy <= z + 1e-12;
                    for (std::size_t i = 0; i < n; ++i) {
                        target += radix[i] * (soc_index[i] + step[i]);
                    }
                }
                if (feasible) {
                    next[target] = std::min(next[target], best[s] + ens);
                }

                std::size_t i = 0;
                for (; i < n; ++i) {
                    if (step[i] < bound[i]) {
                        ++step[i];
                        break;
                    }
                    step[i] = 0;
                }
                if (i == n) {
                    break;
                }
            }
        }
        best.swap(next);
    }
    return *std::min_element(best.begin(), best.end());
}

} // namespace ramc
