#include "ramc/scenario.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

using namespace ramc;
namespace fs = std::filesystem;

namespace {

ProfileLibrary constant_library(double wind, double demand)
{
    ProfileLibrary lib;
    lib.wind_years.push_back(HourlyProfile(kHoursPerYear, wind));
    lib.demand_years.push_back(HourlyProfile(kHoursPerYear, demand));
    return lib;
}

fs::path scratch_dir(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("ramc_scenario_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_column(const fs::path& file, const std::string& header, std::size_t rows, double value)
{
    std::ofstream out(file);
    out << header << "\n";
    for (std::size_t i = 0; i < rows; ++i) {
        out << value << "\n";
    }
}

} // namespace

TEST(Capacity, FullAvailabilityIsConstant)
{
    ThermalFleet fleet;
    fleet.availability = 1.0;
    Stream s(1);
    const auto trace = sample_available_capacity(fleet, s);
    for (double v : trace.values()) {
        ASSERT_EQ(v, 1200.0);
    }
}

TEST(Capacity, IidMeanMatchesBernoulliOracle)
{
    ThermalFleet fleet;
    Stream s(2);
    double sum = 0.0;
    const int years = 20;
    for (int y = 0; y < years; ++y) {
        const auto trace = sample_available_capacity(fleet, s);
        sum += std::accumulate(trace.values().begin(), trace.values().end(), 0.0);
    }
    const double n = years * static_cast<double>(kHoursPerYear);
    // Each hour: 100 * Binomial(12, 0.9); variance 100^2 * 12 * 0.09.
    const double sd = std::sqrt(1e4 * 12 * 0.9 * 0.1 / n);
    EXPECT_NEAR(sum / n, 1080.0, 5.0 * sd);
}

TEST(Capacity, StaysWithinFleetBounds)
{
    for (auto model : {OutageModel::IidHourly, OutageModel::TwoStateMarkov}) {
        ThermalFleet fleet;
        fleet.capacities = {50, 80, 120, 120, 300};
        fleet.outage_model = model;
        Stream s(3);
        const auto trace = sample_available_capacity(fleet, s);
        for (double v : trace.values()) {
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, fleet.total_capacity());
        }
    }
}

TEST(Capacity, HeterogeneousIidMean)
{
    ThermalFleet fleet;
    fleet.capacities = {50, 80, 120, 120, 300};
    fleet.availability = 0.85;
    Stream s(4);
    const auto cap = sample_capacity_hours(fleet, s, 200000);
    const double mean = std::accumulate(cap.begin(), cap.end(), 0.0) / cap.size();
    double var = 0.0;
    for (double c : fleet.capacities) {
        var += c * c * 0.85 * 0.15;
    }
    EXPECT_NEAR(mean, 0.85 * 670.0, 5.0 * std::sqrt(var / cap.size()));
}

TEST(Capacity, PerGeneratorAvailabilityBothModels)
{
    for (auto model : {OutageModel::IidHourly, OutageModel::TwoStateMarkov}) {
        ThermalFleet fleet;
        fleet.outage_model = model;
        fleet.mttr_hours = 8.0;
        Stream s(5);
        const auto states = sample_generator_states(fleet, s, 200000);
        for (const auto& unit : states) {
            const double up = std::accumulate(unit.begin(), unit.end(), 0.0) / unit.size();
            EXPECT_NEAR(up, 0.9, 0.01);
        }
    }
}

TEST(Capacity, MarkovOutagesLastAboutMttr)
{
    ThermalFleet fleet;
    fleet.outage_model = OutageModel::TwoStateMarkov;
    fleet.capacities = {100};
    fleet.mttr_hours = 8.0;
    Stream s(6);
    const auto states = sample_generator_states(fleet, s, 500000)[0];
    std::size_t outages = 0, down_hours = 0;
    for (std::size_t t = 0; t < states.size(); ++t) {
        if (!states[t]) {
            ++down_hours;
            if (t == 0 || states[t - 1]) {
                ++outages;
            }
        }
    }
    EXPECT_NEAR(static_cast<double>(down_hours) / outages, 8.0, 0.5);
}

TEST(Margin, ConstantComponents)
{
    ThermalFleet fleet;
    fleet.availability = 1.0;
    Stream s(7);
    const auto z = sample_margin_year(fleet, constant_library(0.0, 0.0), s);
    for (double v : z.values()) {
        ASSERT_EQ(v, 1200.0);
    }
    Stream s2(8);
    const auto zero = sample_margin_year(fleet, constant_library(5.0, 1205.0), s2);
    for (double v : zero.values()) {
        ASSERT_EQ(v, 0.0);
    }
}

TEST(Margin, MeanFollowsLinearityOfExpectation)
{
    ThermalFleet fleet;
    const auto lib = synth_profiles(4, 3, 9);
    double wind = 0.0, demand = 0.0;
    for (const auto& w : lib.wind_years) {
        wind += std::accumulate(w.begin(), w.end(), 0.0) / kHoursPerYear;
    }
    for (const auto& d : lib.demand_years) {
        demand += std::accumulate(d.begin(), d.end(), 0.0) / kHoursPerYear;
    }
    const double expected = 0.9 * 1200.0 + wind / 4.0 - demand / 3.0;

    const int n = 400;
    std::vector<double> means;
    for (int i = 0; i < n; ++i) {
        Stream s(10, Purpose::MarginYear, i);
        const auto z = sample_margin_year(fleet, lib, s);
        means.push_back(std::accumulate(z.values().begin(), z.values().end(), 0.0) / kHoursPerYear);
    }
    const double m = std::accumulate(means.begin(), means.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : means) {
        ss += (x - m) * (x - m);
    }
    const double se = std::sqrt(ss / (n - 1) / n);
    EXPECT_NEAR(m, expected, 4.0 * se);
}

TEST(Margin, DayMatchesOneDayOfTheLibrary)
{
    ThermalFleet fleet;
    fleet.availability = 1.0;
    const auto lib = synth_profiles(2, 2, 11);
    Stream s(12);
    const auto day = sample_margin_day(fleet, lib, s);
    bool found = false;
    for (const auto& w : lib.wind_years) {
        for (const auto& d : lib.demand_years) {
            for (std::size_t k = 0; k < kDaysPerYear && !found; ++k) {
                bool all = true;
                for (std::size_t h = 0; h < kHoursPerDay; ++h) {
                    const std::size_t t = k * kHoursPerDay + h;
                    all = all && day[h] == 1200.0 + w[t] - d[t];
                }
                found = all;
            }
        }
    }
    EXPECT_TRUE(found);
}

TEST(Margin, SameStreamSameTrace)
{
    ThermalFleet fleet;
    const auto lib = synth_profiles(3, 2, 13);
    Stream a(14, Purpose::MarginYear, 3);
    Stream b(14, Purpose::MarginYear, 3);
    EXPECT_EQ(sample_margin_year(fleet, lib, a), sample_margin_year(fleet, lib, b));
}

TEST(Days, SplitIndexesHours)
{
    std::vector<double> v(kHoursPerYear);
    std::iota(v.begin(), v.end(), 0.0);
    const auto days = split_days(v);
    ASSERT_EQ(days.size(), kDaysPerYear);
    for (std::size_t h = 0; h < kHoursPerDay; ++h) {
        EXPECT_EQ(days.front()[h], static_cast<double>(h));
        EXPECT_EQ(days.back()[h], static_cast<double>(8736 + h));
    }
}

TEST(Days, SplitThenConcatenateIsIdentity)
{
    ThermalFleet fleet;
    const auto lib = synth_profiles(2, 2, 15);
    Stream s(16);
    const auto z = sample_margin_year(fleet, lib, s);
    EXPECT_EQ(concatenate_days(split_days(z.values())), z);
}

TEST(Days, ConstantTraceGivesIdenticalDays)
{
    const std::vector<double> v(kHoursPerYear, 3.5);
    const auto days = split_days(v);
    for (const auto& d : days) {
        EXPECT_EQ(d, days.front());
    }
}

TEST(Days, WrongLengthThrows)
{
    EXPECT_THROW(split_days(std::vector<double>(100, 0.0)), std::invalid_argument);
    EXPECT_THROW(HourlyTrace(std::vector<double>(8759, 0.0)), std::invalid_argument);
}

TEST(Synth, CountsLengthsAndSigns)
{
    const auto lib = synth_profiles(30, 10, 1);
    ASSERT_EQ(lib.wind_years.size(), 30u);
    ASSERT_EQ(lib.demand_years.size(), 10u);
    for (const auto& w : lib.wind_years) {
        ASSERT_EQ(w.size(), kHoursPerYear);
        for (double v : w) {
            ASSERT_GE(v, 0.0);
        }
    }
    for (const auto& d : lib.demand_years) {
        ASSERT_EQ(d.size(), kHoursPerYear);
        for (double v : d) {
            ASSERT_GE(v, 0.0);
        }
    }
}

TEST(Synth, Deterministic)
{
    EXPECT_EQ(synth_profiles(3, 2, 5), synth_profiles(3, 2, 5));
    EXPECT_NE(synth_profiles(3, 2, 5), synth_profiles(3, 2, 6));
}

TEST(Synth, ZeroNoiseGivesTheBasePattern)
{
    SynthParams p;
    p.wind_noise_amplitude = 0.0;
    p.demand_noise_amplitude = 0.0;
    const auto lib = synth_profiles(3, 3, 7, p);
    for (const auto& w : lib.wind_years) {
        EXPECT_EQ(w, lib.wind_years.front());
    }
    for (const auto& d : lib.demand_years) {
        EXPECT_EQ(d, lib.demand_years.front());
    }
    // Closed form of the documented base pattern at t = 0 (hour 0, day 0, weekday).
    const double pi = std::acos(-1.0);
    EXPECT_DOUBLE_EQ(lib.wind_years[0][0], 500.0 * (0.35 + 0.10));
    EXPECT_DOUBLE_EQ(lib.demand_years[0][0],
                     1000.0 * (0.75 + 0.10 + 0.12 * std::cos(2.0 * pi * (0.0 - 18.0) / 24.0)));
}

TEST(ProfileCsv, ZeroColumnLoads)
{
    const auto dir = scratch_dir("zeros");
    write_column(dir / "wind.csv", "w1", kHoursPerYear, 0.0);
    write_column(dir / "demand.csv", "d1", kHoursPerYear, 0.0);
    const auto lib = load_profiles(dir);
    ASSERT_EQ(lib.wind_years.size(), 1u);
    for (double v : lib.wind_years[0]) {
        ASSERT_EQ(v, 0.0);
    }
    EXPECT_EQ(lib.wind_names, std::vector<std::string>{"w1"});
}

TEST(ProfileCsv, ShortColumnIsRejected)
{
    const auto dir = scratch_dir("short");
    write_column(dir / "wind.csv", "w1", 8759, 1.0);
    write_column(dir / "demand.csv", "d1", kHoursPerYear, 1.0);
    try {
        load_profiles(dir);
        FAIL() << "expected an error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("profile length mismatch"), std::string::npos);
    }
}

TEST(ProfileCsv, BadRowsReportLineNumbers)
{
    const auto dir = scratch_dir("bad");
    {
        std::ofstream out(dir / "wind.csv");
        out << "a,b\n1,2\n3\n";
    }
    try {
        read_profile_csv(dir / "wind.csv");
        FAIL() << "expected an error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
    }
    {
        std::ofstream out(dir / "wind.csv");
        out << "a\n1\n-2\n";
    }
    try {
        read_profile_csv(dir / "wind.csv");
        FAIL() << "expected an error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("negative"), std::string::npos) << e.what();
    }
    EXPECT_THROW(load_profiles(dir / "missing"), std::runtime_error);
}

TEST(ProfileCsv, SynthRoundTripIsBitExact)
{
    const auto lib = synth_profiles(3, 2, 21);
    const auto dir = scratch_dir("roundtrip");
    save_profiles(dir, lib);
    const auto back = load_profiles(dir);
    ASSERT_EQ(back.wind_years.size(), lib.wind_years.size());
    for (std::size_t y = 0; y < lib.wind_years.size(); ++y) {
        for (std::size_t t = 0; t < kHoursPerYear; ++t) {
            ASSERT_EQ(std::bit_cast<std::uint64_t>(back.wind_years[y][t]),
                      std::bit_cast<std::uint64_t>(lib.wind_years[y][t]));
        }
    }
    EXPECT_EQ(back.demand_years, lib.demand_years);
}

TEST(Fleet, ValidationRejectsBadInput)
{
    ThermalFleet fleet;
    fleet.availability = 0.0;
    EXPECT_THROW(fleet.validate(), std::invalid_argument);
    fleet.availability = 0.9;
    fleet.capacities = {100, -1};
    EXPECT_THROW(fleet.validate(), std::invalid_argument);
}
