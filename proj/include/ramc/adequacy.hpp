#pragma once

#include "ramc/scenario.hpp"

#include <span>
#include <vector>

namespace ramc {

/// Residual shortfall (MW) below which an hour is not counted as loss of load.
inline constexpr double kLossOfLoadEpsilon = 1e-6;

struct StorageUnit {
    double power = 0.0;      ///< MW, symmetric charge/discharge limit
    double energy_cap = 0.0; ///< MWh
    double soc = 0.0;        ///< MWh, initial state of charge
};

struct StorageFleet {
    std::vector<StorageUnit> units;
    double charge_efficiency = 1.0;

    std::vector<double> initial_soc() const;
    void validate() const;
};

/// Loss-of-load hours and energy not served. Exact evaluations yield whole
/// hours in `lol`; surrogate predictions may be fractional.
struct AdequacyOutcome {
    double lol = 0.0; ///< h
    double ens = 0.0; ///< MWh

    friend bool operator==(const AdequacyOutcome&, const AdequacyOutcome&) = default;
};

struct DispatchResult {
    AdequacyOutcome outcome;
    std::vector<double> final_soc;
};

/// Simulates the shortfall-serving storage policy hour by hour.
///
/// Shortfall hours discharge as much as the fleet can deliver; when the fleet
/// could deliver more than needed, discharge lowers the largest
/// time-to-empty (soc / power) values first, equalizing them (water-filling).
/// Surplus hours recharge at the maximal feasible rate, raising the smallest
/// time-to-empty values first. Throws std::invalid_argument on NaN margins or
/// socs outside [0, energy_cap].
DispatchResult dispatch_trace(std::span<const double> margin, const StorageFleet& fleet,
                              std::span<const double> initial_soc);

/// Full-year evaluation starting from each unit's configured soc.
AdequacyOutcome evaluate_exact_year(const HourlyTrace& margin, const StorageFleet& fleet);

/// Daily label; the fleet starts the day at its configured soc.
AdequacyOutcome label_day(const DailyTrace& day, const StorageFleet& fleet);

/// Minimum ENS over every dispatch schedule whose per-hour unit energies are
/// multiples of `grid_step`, by dynamic programming over the soc lattice.
/// Requires charge efficiency 1 and energy caps and socs on the grid. Throws
/// std::invalid_argument when the search exceeds its size guard.
double brute_force_min_ens(std::span<const double> margin, const StorageFleet& fleet,
                           double grid_step);

} // namespace ramc
