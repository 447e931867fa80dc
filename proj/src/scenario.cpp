#include "ramc/scenario.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace ramc {

namespace {

void require(bool ok, const std::string& message)
{
    if (!ok) {
        throw std::invalid_argument(message);
    }
}

/// Generators sharing one capacity value; their up-count per hour is binomial.
struct CapacityGroup {
    double capacity;
    std::vector<double> cumulative; // P(up count <= k)
};

std::vector<CapacityGroup> group_capacities(const ThermalFleet& fleet)
{
    std::vector<std::pair<double, std::size_t>> counts;
    for (double c : fleet.capacities) {
        auto it = std::find_if(counts.begin(), counts.end(),
                               [c](const auto& entry) { return entry.first == c; });
        if (it == counts.end()) {
            counts.emplace_back(c, 1);
        } else {
            ++it->second;
        }
    }

    std::vector<CapacityGroup> groups;
    const double a = fleet.availability;
    for (const auto& [capacity, n] : counts) {
        CapacityGroup group{capacity, {}};
        group.cumulative.resize(n + 1);
        double running = 0.0;
        for (std::size_t k = 0; k <= n; ++k) {
            const double log_pmf = std::lgamma(static_cast<double>(n) + 1.0)
                - std::lgamma(static_cast<double>(k) + 1.0)
                - std::lgamma(static_cast<double>(n - k) + 1.0)
                + (k > 0 ? static_cast<double>(k) * std::log(a) : 0.0)
                + (n - k > 0 ? static_cast<double>(n - k) * std::log1p(-a) : 0.0);
            running += std::exp(log_pmf);
            group.cumulative[k] = running;
        }
        group.cumulative[n] = 2.0; // guard against rounding: the top bin takes all
        groups.push_back(std::move(group));
    }
    return groups;
}

std::size_t draw_up_count(const CapacityGroup& group, Stream& stream)
{
    // Inverse CDF: the smallest k with u < P(count <= k), counted branch-free.
    const double u = stream.uniform();
    const std::size_t n = group.cumulative.size() - 1;
    std::size_t k = 0;
    for (std::size_t j = 0; j < n; ++j) {
        k += u >= group.cumulative[j] ? 1 : 0;
    }
    return k;
}

/// Stationary unit-variance AR(1) sequence.
std::vector<double> ar1_noise(Stream& stream, std::size_t n, double persistence)
{
    std::vector<double> out(n);
    const double innovation = std::sqrt(1.0 - persistence * persistence);
    double state = stream.normal();
    for (std::size_t t = 0; t < n; ++t) {
        if (t > 0) {
            state = persistence * state + innovation * stream.normal();
        }
        out[t] = state;
    }
    return out;
}

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void trim(std::string& line)
{
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) {
        line.pop_back();
    }
}

std::vector<std::string> split_commas(const std::string& line)
{
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        fields.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    return fields;
}

} // namespace

HourlyTrace::HourlyTrace(std::vector<double> values) : values_(std::move(values))
{
    if (values_.size() != kHoursPerYear) {
        throw std::invalid_argument(fmt::format(
            "profile length mismatch: expected {} hours, got {}", kHoursPerYear, values_.size()));
    }
}

void ProfileLibrary::validate() const
{
    require(!wind_years.empty(), "profile library needs at least one wind year");
    require(!demand_years.empty(), "profile library needs at least one demand year");
    auto check = [](const std::vector<HourlyProfile>& years, const char* kind) {
        for (std::size_t y = 0; y < years.size(); ++y) {
            require(years[y].size() == kHoursPerYear,
                    fmt::format("profile length mismatch: {} year {} has {} values, expected {}",
                                kind, y, years[y].size(), kHoursPerYear));
            for (double v : years[y]) {
                require(std::isfinite(v) && v >= 0.0,
                        fmt::format("{} year {} contains a negative or non-finite value", kind, y));
            }
        }
    };
    check(wind_years, "wind");
    check(demand_years, "demand");
}

double ThermalFleet::total_capacity() const noexcept
{
    double total = 0.0;
    for (double c : capacities) {
        total += c;
    }
    return total;
}

void ThermalFleet::validate() const
{
    require(!capacities.empty(), "thermal fleet needs at least one generator");
    for (double c : capacities) {
        require(std::isfinite(c) && c > 0.0, "thermal capacities must be positive");
    }
    require(availability > 0.0 && availability <= 1.0, "availability must lie in (0, 1]");
    if (outage_model == OutageModel::TwoStateMarkov) {
        require(mttr_hours >= 1.0, "mttr_hours must be at least 1 hour");
        if (availability < 1.0) {
            const double mttf = mttr_hours * availability / (1.0 - availability);
            require(mttf >= 1.0, "availability too low for hourly two-state chain (MTTF < 1 h)");
        }
    }
}

void SynthParams::validate() const
{
    require(wind_capacity_mw >= 0.0, "wind_capacity_mw must be nonnegative");
    require(demand_peak_mw >= 0.0, "demand_peak_mw must be nonnegative");
    require(wind_noise_amplitude >= 0.0 && demand_noise_amplitude >= 0.0,
            "noise amplitudes must be nonnegative");
    require(std::abs(wind_noise_persistence) < 1.0 && std::abs(demand_noise_persistence) < 1.0,
            "noise persistence must lie in (-1, 1)");
}

ProfileLibrary synth_profiles(std::size_t n_wind, std::size_t n_demand, std::uint64_t seed,
                              const SynthParams& params)
{
    require(n_wind >= 1 && n_demand >= 1, "synth_profiles needs at least one year of each kind");
    params.validate();

    ProfileLibrary library;
    for (std::size_t y = 0; y < n_wind; ++y) {
        Stream stream(seed, Purpose::WindProfile, y);
        const auto noise = ar1_noise(stream, kHoursPerYear, params.wind_noise_persistence);
        HourlyProfile wind(kHoursPerYear);
        for (std::size_t t = 0; t < kHoursPerYear; ++t) {
            const double season = std::cos(kTwoPi * static_cast<double>(t) / kHoursPerYear);
            double cf = params.wind_mean_cf + params.wind_seasonal_amplitude * season;
            if (params.wind_noise_amplitude > 0.0) {
                cf += params.wind_noise_amplitude * noise[t];
            }
            wind[t] = params.wind_capacity_mw * std::clamp(cf, 0.0, 1.0);
        }
        library.wind_years.push_back(std::move(wind));
        library.wind_names.push_back(fmt::format("synthetic_wind_{}", y + 1));
    }

    for (std::size_t y = 0; y < n_demand; ++y) {
        Stream stream(seed, Purpose::DemandProfile, y);
        const auto noise = ar1_noise(stream, kHoursPerYear, params.demand_noise_persistence);
        HourlyProfile demand(kHoursPerYear);
        for (std::size_t t = 0; t < kHoursPerYear; ++t) {
            const std::size_t day = t / kHoursPerDay;
            const double hour = static_cast<double>(t % kHoursPerDay);
            const double season = std::cos(kTwoPi * static_cast<double>(t) / kHoursPerYear);
            const double diurnal = std::cos(kTwoPi * (hour - 18.0) / kHoursPerDay);
            const bool weekend = day % 7 >= 5;
            double level = 0.75 + params.demand_seasonal_amplitude * season
                + params.demand_diurnal_amplitude * diurnal
                - (weekend ? params.demand_weekend_reduction : 0.0);
            if (params.demand_noise_amplitude > 0.0) {
                level += params.demand_noise_amplitude * noise[t];
            }
            demand[t] = params.demand_peak_mw * std::max(0.0, level);
        }
        library.demand_years.push_back(std::move(demand));
        library.demand_names.push_back(fmt::format("synthetic_demand_{}", y + 1));
    }
    return library;
}

std::vector<HourlyProfile> read_profile_csv(const std::filesystem::path& file,
                                            std::vector<std::string>* names)
{
    std::ifstream in(file);
    if (!in) {
        throw std::runtime_error(fmt::format("cannot open profile file '{}'", file.string()));
    }

    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error(fmt::format("{}:1: missing header row", file.string()));
    }
    trim(line);
    const auto header = split_commas(line);
    const std::size_t columns = header.size();
    if (names) {
        *names = header;
    }

    std::vector<HourlyProfile> profiles(columns);
    for (auto& p : profiles) {
        p.reserve(kHoursPerYear);
    }

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        trim(line);
        if (line.empty()) {
            continue;
        }
        const auto fields = split_commas(line);
        if (fields.size() != columns) {
            throw std::runtime_error(fmt::format("{}:{}: expected {} columns, found {}",
                                                 file.string(), line_no, columns, fields.size()));
        }
        for (std::size_t c = 0; c < columns; ++c) {
            const std::string& field = fields[c];
            double value = 0.0;
            const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
            if (ec != std::errc{} || end != field.data() + field.size() || !std::isfinite(value)) {
                throw std::runtime_error(fmt::format("{}:{}: malformed number '{}' in column {}",
                                                     file.string(), line_no, field, c + 1));
            }
            if (value < 0.0) {
                throw std::runtime_error(fmt::format("{}:{}: negative value {} in column {}",
                                                     file.string(), line_no, field, c + 1));
            }
            profiles[c].push_back(value);
        }
    }

    for (std::size_t c = 0; c < columns; ++c) {
        if (profiles[c].size() != kHoursPerYear) {
            throw std::runtime_error(fmt::format(
                "{}: profile length mismatch: column '{}' has {} rows, expected {}",
                file.string(), header[c], profiles[c].size(), kHoursPerYear));
        }
    }
    return profiles;
}

ProfileLibrary load_profiles(const std::filesystem::path& directory)
{
    ProfileLibrary library;
    library.wind_years = read_profile_csv(directory / "wind.csv", &library.wind_names);
    library.demand_years = read_profile_csv(directory / "demand.csv", &library.demand_names);
    library.validate();
    return library;
}

void save_profiles(const std::filesystem::path& directory, const ProfileLibrary& library)
{
    library.validate();
    std::filesystem::create_directories(directory);

    auto write = [](const std::filesystem::path& file, const std::vector<HourlyProfile>& years,
                    const std::vector<std::string>& names) {
        std::ofstream out(file, std::ios::binary);
        if (!out) {
            throw std::runtime_error(fmt::format("cannot write '{}'", file.string()));
        }
        std::string buffer;
        for (std::size_t y = 0; y < years.size(); ++y) {
            if (y > 0) {
                buffer += ',';
            }
            buffer += y < names.size() ? names[y] : fmt::format("year_{}", y + 1);
        }
        buffer += '\n';
        for (std::size_t t = 0; t < kHoursPerYear; ++t) {
            for (std::size_t y = 0; y < years.size(); ++y) {
                if (y > 0) {
                    buffer += ',';
                }
                buffer += fmt::format("{}", years[y][t]);
            }
            buffer += '\n';
        }
        out << buffer;
    };
    write(directory / "wind.csv", library.wind_years, library.wind_names);
    write(directory / "demand.csv", library.demand_years, library.demand_names);
}

std::vector<std::vector<unsigned char>> sample_generator_states(const ThermalFleet& fleet,
                                                                Stream& stream,
                                                                std::size_t hours)
{
    const double a = fleet.availability;
    std::vector<std::vector<unsigned char>> states(fleet.capacities.size(),
                                                   std::vector<unsigned char>(hours, 1));
    if (a >= 1.0) {
        return states;
    }

    for (auto& unit : states) {
        if (fleet.outage_model == OutageModel::IidHourly) {
            for (auto& s : unit) {
                s = stream.bernoulli(a) ? 1 : 0;
            }
            continue;
        }
        // Two-state chain with hourly repair probability 1/MTTR and failure
        // probability 1/MTTF, MTTF chosen so the stationary availability is a.
        const double mttf = fleet.mttr_hours * a / (1.0 - a);
        const double p_fail = 1.0 / mttf;
        const double p_repair = 1.0 / fleet.mttr_hours;
        bool up = stream.bernoulli(a);
        std::size_t t = 0;
        while (t < hours) {
            const std::uint64_t sojourn = stream.geometric(up ? p_fail : p_repair);
            const std::size_t end = sojourn >= hours - t ? hours : t + static_cast<std::size_t>(sojourn);
            std::fill(unit.begin() + static_cast<std::ptrdiff_t>(t),
                      unit.begin() + static_cast<std::ptrdiff_t>(end), up ? 1 : 0);
            t = end;
            up = !up;
        }
    }
    return states;
}

std::vector<double> sample_capacity_hours(const ThermalFleet& fleet, Stream& stream,
                                          std::size_t hours)
{
    std::vector<double> capacity(hours, 0.0);
    if (fleet.availability >= 1.0) {
        const double total = fleet.total_capacity();
        std::fill(capacity.begin(), capacity.end(), total);
        return capacity;
    }

    if (fleet.outage_model == OutageModel::IidHourly) {
        // Independent generator-hours: only the up-count per capacity class matters.
        const auto groups = group_capacities(fleet);
        for (std::size_t t = 0; t < hours; ++t) {
            double total = 0.0;
            for (const auto& group : groups) {
                total += group.capacity * static_cast<double>(draw_up_count(group, stream));
            }
            capacity[t] = total;
        }
        return capacity;
    }

    const auto states = sample_generator_states(fleet, stream, hours);
    for (std::size_t g = 0; g < states.size(); ++g) {
        const double c = fleet.capacities[g];
        for (std::size_t t = 0; t < hours; ++t) {
            if (states[g][t]) {
                capacity[t] += c;
            }
        }
    }
    return capacity;
}

HourlyTrace sample_available_capacity(const ThermalFleet& fleet, Stream& stream)
{
    return HourlyTrace(sample_capacity_hours(fleet, stream, kHoursPerYear));
}

HourlyTrace sample_margin_year(const ThermalFleet& fleet, const ProfileLibrary& library,
                               Stream& stream)
{
    const auto& wind = library.wind_years[stream.below(library.wind_years.size())];
    const auto& demand = library.demand_years[stream.below(library.demand_years.size())];
    auto margin = sample_capacity_hours(fleet, stream, kHoursPerYear);
    for (std::size_t t = 0; t < kHoursPerYear; ++t) {
        margin[t] += wind[t] - demand[t];
    }
    return HourlyTrace(std::move(margin));
}

DailyTrace sample_margin_day(const ThermalFleet& fleet, const ProfileLibrary& library,
                             Stream& stream)
{
    const auto& wind = library.wind_years[stream.below(library.wind_years.size())];
    const auto& demand = library.demand_years[stream.below(library.demand_years.size())];
    const std::size_t offset = stream.below(kDaysPerYear) * kHoursPerDay;
    const auto capacity = sample_capacity_hours(fleet, stream, kHoursPerDay);
    DailyTrace day{};
    for (std::size_t h = 0; h < kHoursPerDay; ++h) {
        day[h] = capacity[h] + wind[offset + h] - demand[offset + h];
    }
    return day;
}

std::vector<DailyTrace> split_days(std::span<const double> trace)
{
    if (trace.size() != kHoursPerYear) {
        throw std::invalid_argument(fmt::format(
            "split_days expects {} hours, got {}", kHoursPerYear, trace.size()));
    }
    std::vector<DailyTrace> days(kDaysPerYear);
    for (std::size_t d = 0; d < kDaysPerYear; ++d) {
        std::copy_n(trace.begin() + static_cast<std::ptrdiff_t>(d * kHoursPerDay), kHoursPerDay,
                    days[d].begin());
    }
    return days;
}

HourlyTrace concatenate_days(std::span<const DailyTrace> days)
{
    if (days.size() != kDaysPerYear) {
        throw std::invalid_argument(fmt::format(
            "concatenate_days expects {} days, got {}", kDaysPerYear, days.size()));
    }
    std::vector<double> values;
    values.reserve(kHoursPerYear);
    for (const auto& day : days) {
        values.insert(values.end(), day.begin(), day.end());
    }
    return HourlyTrace(std::move(values));
}

} // namespace ramc
