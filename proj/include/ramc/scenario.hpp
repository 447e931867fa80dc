#pragma once

#include "ramc/rng.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ramc {

inline constexpr std::size_t kHoursPerDay = 24;
inline constexpr std::size_t kDaysPerYear = 365;
inline constexpr std::size_t kHoursPerYear = kHoursPerDay * kDaysPerYear;

/// One year of hourly values in MW.
using HourlyProfile = std::vector<double>;

/// 24 hourly generation-margin values (MW) for a single day.
using DailyTrace = std::array<double, kHoursPerDay>;

/// One year (8760 hours) of generation margin in MW; negative means shortfall.
class HourlyTrace {
public:
    HourlyTrace() : values_(kHoursPerYear, 0.0) {}

    /// Throws std::invalid_argument unless values.size() == 8760.
    explicit HourlyTrace(std::vector<double> values);

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    double operator[](std::size_t hour) const noexcept { return values_[hour]; }
    std::size_t size() const noexcept { return values_.size(); }

    friend bool operator==(const HourlyTrace&, const HourlyTrace&) = default;

private:
    std::vector<double> values_;
};

/// Wind and demand years that scenarios are resampled from.
struct ProfileLibrary {
    std::vector<HourlyProfile> wind_years;
    std::vector<HourlyProfile> demand_years;
    std::vector<std::string> wind_names;
    std::vector<std::string> demand_names;

    /// Throws std::invalid_argument on any invariant violation.
    void validate() const;

    friend bool operator==(const ProfileLibrary&, const ProfileLibrary&) = default;
};

enum class OutageModel { IidHourly, TwoStateMarkov };

struct ThermalFleet {
    std::vector<double> capacities = std::vector<double>(12, 100.0);
    double availability = 0.9;
    OutageModel outage_model = OutageModel::IidHourly;
    double mttr_hours = 8.0; ///< mean repair time, two-state Markov only

    double total_capacity() const noexcept;
    void validate() const;
};

/// Parameters of the closed-form synthetic wind/demand generator.
///
/// wind[t]   = C_w * clamp(cf + A_s cos(2 pi t / 8760) + A_n e_w[t], 0, 1)
/// demand[t] = P * max(0, 0.75 + S cos(2 pi t / 8760) + D cos(2 pi (h - 18) / 24)
///                        - W [weekend] + N e_d[t])
///
/// where h is the hour of day, the week starts on day 0, and e_w, e_d are
/// unit-variance stationary AR(1) sequences with the given persistence.
struct SynthParams {
    double wind_capacity_mw = 500.0;
    double wind_mean_cf = 0.35;
    double wind_seasonal_amplitude = 0.10;
    double wind_noise_amplitude = 0.25;
    double wind_noise_persistence = 0.97;

    double demand_peak_mw = 1000.0;
    double demand_seasonal_amplitude = 0.10;
    double demand_diurnal_amplitude = 0.12;
    double demand_weekend_reduction = 0.06;
    double demand_noise_amplitude = 0.03;
    double demand_noise_persistence = 0.9;

    void validate() const;
};

/// Deterministic given `seed`; wind year i uses stream (seed, WindProfile, i).
ProfileLibrary synth_profiles(std::size_t n_wind, std::size_t n_demand, std::uint64_t seed,
                              const SynthParams& params = {});

/// Reads `wind.csv` and `demand.csv` from a directory: a header row naming each
/// year, then 8760 rows with one column per year.
ProfileLibrary load_profiles(const std::filesystem::path& directory);

/// Reads a single profile CSV; returns the column names and columns.
std::vector<HourlyProfile> read_profile_csv(const std::filesystem::path& file,
                                            std::vector<std::string>* names = nullptr);

/// Writes `wind.csv` and `demand.csv` with shortest round-trip formatting.
void save_profiles(const std::filesystem::path& directory, const ProfileLibrary& library);

/// Hourly available thermal capacity for `hours` consecutive hours.
std::vector<double> sample_capacity_hours(const ThermalFleet& fleet, Stream& stream,
                                          std::size_t hours);

/// Per-generator up(1)/down(0) states for `hours` consecutive hours.
std::vector<std::vector<unsigned char>> sample_generator_states(const ThermalFleet& fleet,
                                                                Stream& stream,
                                                                std::size_t hours);

HourlyTrace sample_available_capacity(const ThermalFleet& fleet, Stream& stream);

/// z[t] = available capacity + wind year - demand year, with both years drawn
/// uniformly and independently from the library.
HourlyTrace sample_margin_year(const ThermalFleet& fleet, const ProfileLibrary& library,
                               Stream& stream);

/// One day distributed as a uniformly chosen day of sample_margin_year.
DailyTrace sample_margin_day(const ThermalFleet& fleet, const ProfileLibrary& library,
                             Stream& stream);

std::vector<DailyTrace> split_days(std::span<const double> trace);
HourlyTrace concatenate_days(std::span<const DailyTrace> days);

} // namespace ramc
