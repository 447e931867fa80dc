#include "ramc/experiment.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <thread>

namespace ramc {

using nlohmann::json;
namespace fs = std::filesystem;

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error([&] {
          std::string text = "invalid config:";
          for (const auto& p : problems) {
              text += "\n  " + p;
          }
          return text;
      }()),
      problems_(std::move(problems))
{
}

namespace {

/// Reads one JSON object, recording type errors and unknown keys by path.
class Reader {
public:
    Reader(const json* node, std::string path, std::vector<std::string>& problems)
        : node_(node), path_(std::move(path)), problems_(problems)
    {
        if (node_ && !node_->is_object()) {
            problem("", "must be an object");
            node_ = nullptr;
        }
    }

    ~Reader()
    {
        if (!node_) {
            return;
        }
        for (const auto& [key, value] : node_->items()) {
            if (!seen_.count(key)) {
                problem(key, "unknown key");
            }
        }
    }

    Reader(const Reader&) = delete;
    Reader& operator=(const Reader&) = delete;

    bool present() const noexcept { return node_ != nullptr; }

    const json* find(const std::string& key)
    {
        seen_.insert(key);
        if (!node_) {
            return nullptr;
        }
        const auto it = node_->find(key);
        return it == node_->end() ? nullptr : &*it;
    }

    Reader child(const std::string& key, bool required = false)
    {
        const json* value = find(key);
        if (!value && required) {
            problem(key, "missing section");
        }
        return Reader(value, join(key), problems_);
    }

    void get(const std::string& key, double& out)
    {
        if (const json* v = find(key)) {
            if (v->is_number()) {
                out = v->get<double>();
            } else {
                problem(key, "must be a number");
            }
        }
    }

    static bool is_count(const json& v)
    {
        return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    }

    void get(const std::string& key, std::size_t& out)
    {
        if (const json* v = find(key)) {
            if (is_count(*v)) {
                out = v->get<std::size_t>();
            } else {
                problem(key, "must be a non-negative integer");
            }
        }
    }

    void get(const std::string& key, bool& out)
    {
        if (const json* v = find(key)) {
            if (v->is_boolean()) {
                out = v->get<bool>();
            } else {
                problem(key, "must be true or false");
            }
        }
    }

    void get(const std::string& key, std::string& out)
    {
        if (const json* v = find(key)) {
            if (v->is_string()) {
                out = v->get<std::string>();
            } else {
                problem(key, "must be a string");
            }
        }
    }

    void get(const std::string& key, std::vector<std::size_t>& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_array()) {
                problem(key, "must be an array of non-negative integers");
                return;
            }
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                if (is_count((*v)[i])) {
                    out.push_back((*v)[i].get<std::size_t>());
                } else {
                    problem(fmt::format("{}[{}]", key, i), "must be a non-negative integer");
                }
            }
        }
    }

    void get(const std::string& key, std::vector<double>& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_array()) {
                problem(key, "must be an array of numbers");
                return;
            }
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                if ((*v)[i].is_number()) {
                    out.push_back((*v)[i].get<double>());
                } else {
                    problem(fmt::format("{}[{}]", key, i), "must be a number");
                }
            }
        }
    }

    std::string join(const std::string& key) const
    {
        return path_.empty() ? key : path_ + "." + key;
    }

    void problem(const std::string& key, const std::string& message) const
    {
        const std::string where = key.empty() ? path_ : join(key);
        problems_.push_back(fmt::format("{}: {}", where.empty() ? "(root)" : where, message));
    }

private:
    const json* node_;
    std::string path_;
    std::vector<std::string>& problems_;
    std::set<std::string> seen_;
};

void read_cost_model(Reader& r, CostModel& m)
{
    r.get("sample_year", m.sample_year);
    r.get("sample_day", m.sample_day);
    r.get("exact_year", m.exact_year);
    r.get("label_day", m.label_day);
    r.get("surrogate_year", m.surrogate_year);
    r.get("fit_tree_row", m.fit_tree_row);
    r.get("score_tree_day", m.score_tree_day);
}

void read_synth(Reader& r, SynthParams& p)
{
    r.get("wind_capacity_mw", p.wind_capacity_mw);
    r.get("wind_mean_cf", p.wind_mean_cf);
    r.get("wind_seasonal_amplitude", p.wind_seasonal_amplitude);
    r.get("wind_noise_amplitude", p.wind_noise_amplitude);
    r.get("wind_noise_persistence", p.wind_noise_persistence);
    r.get("demand_peak_mw", p.demand_peak_mw);
    r.get("demand_seasonal_amplitude", p.demand_seasonal_amplitude);
    r.get("demand_diurnal_amplitude", p.demand_diurnal_amplitude);
    r.get("demand_weekend_reduction", p.demand_weekend_reduction);
    r.get("demand_noise_amplitude", p.demand_noise_amplitude);
    r.get("demand_noise_persistence", p.demand_noise_persistence);
}

void read_system(Reader& r, SystemConfig& s, const fs::path& base_dir,
                 std::vector<std::string>& problems)
{
    {
        Reader t = r.child("thermal", true);
        t.get("capacities_mw", s.thermal.capacities);
        t.get("availability", s.thermal.availability);
        t.get("mttr_hours", s.thermal.mttr_hours);
        std::string model = "iid_hourly";
        t.get("outage_model", model);
        if (model == "iid_hourly") {
            s.thermal.outage_model = OutageModel::IidHourly;
        } else if (model == "two_state_markov") {
            s.thermal.outage_model = OutageModel::TwoStateMarkov;
        } else {
            t.problem("outage_model", "must be \"iid_hourly\" or \"two_state_markov\"");
        }
    }
    {
        Reader st = r.child("storage", true);
        st.get("charge_efficiency", s.storage.charge_efficiency);
        if (const json* units = st.find("units")) {
            if (!units->is_array()) {
                st.problem("units", "must be an array of objects");
            } else {
                s.storage.units.clear();
                for (std::size_t i = 0; i < units->size(); ++i) {
                    Reader u(&(*units)[i], st.join(fmt::format("units[{}]", i)), problems);
                    StorageUnit unit;
                    u.get("power_mw", unit.power);
                    u.get("energy_mwh", unit.energy_cap);
                    unit.soc = unit.energy_cap;
                    u.get("initial_soc_mwh", unit.soc);
                    s.storage.units.push_back(unit);
                }
            }
        } else if (st.present()) {
            st.problem("units", "missing");
        }
    }
    {
        Reader p = r.child("profiles");
        std::string source = "synthetic";
        p.get("source", source);
        p.get("wind_years", s.profiles.wind_years);
        p.get("demand_years", s.profiles.demand_years);
        p.get("seed", s.profiles.seed);
        Reader params = p.child("params");
        read_synth(params, s.profiles.params);
        std::string directory;
        p.get("directory", directory);
        if (source == "synthetic") {
            s.profiles.kind = ProfileSource::Kind::Synthetic;
        } else if (source == "csv") {
            s.profiles.kind = ProfileSource::Kind::Csv;
            if (directory.empty()) {
                p.problem("directory", "required when source is \"csv\"");
            } else {
                const fs::path dir(directory);
                s.profiles.directory = dir.is_absolute() || base_dir.empty() ? dir : base_dir / dir;
            }
        } else {
            p.problem("source", "must be \"synthetic\" or \"csv\"");
        }
    }
}

template <class Fn>
void collect(std::vector<std::string>& problems, const std::string& where, Fn&& fn)
{
    try {
        fn();
    } catch (const std::exception& e) {
        problems.push_back(fmt::format("{}: {}", where, e.what()));
    }
}

const char* metric_name(Metric m) { return m == Metric::Lole ? "lole" : "eens"; }

} // namespace

ExperimentConfig parse_config(const json& document, const fs::path& base_dir)
{
    std::vector<std::string> problems;
    ExperimentConfig c;
    {
        Reader root(&document, "", problems);
        if (const json* v = root.find("schema_version")) {
            if (!v->is_number_integer() || v->get<long long>() != kConfigSchemaVersion) {
                root.problem("schema_version", fmt::format("must be {}", kConfigSchemaVersion));
            }
        } else if (root.present()) {
            root.problem("schema_version", "missing");
        }
        root.get("seed", c.seed);
        root.get("repetitions", c.repetitions);
        root.get("threads", c.threads);
        std::string out = c.output_dir.string();
        root.get("output_dir", out);
        c.output_dir = out;
        std::string clock = "wall";
        root.get("clock", clock);
        if (clock == "wall" || clock == "deterministic") {
            c.deterministic_clock = clock == "deterministic";
        } else {
            root.problem("clock", "must be \"wall\" or \"deterministic\"");
        }
        {
            Reader cm = root.child("cost_model");
            read_cost_model(cm, c.cost_model);
        }
        {
            Reader sys = root.child("system", true);
            if (sys.present()) {
                read_system(sys, c.system, base_dir, problems);
            }
        }
        {
            Reader f = root.child("surrogate");
            f.get("n_trees", c.surrogate.n_trees);
            f.get("max_depth", c.surrogate.max_depth);
            f.get("min_samples_leaf", c.surrogate.min_samples_leaf);
            f.get("features_per_split", c.surrogate.features_per_split);
            f.get("bootstrap", c.surrogate.bootstrap);
        }
        {
            Reader a = root.child("active_learning");
            a.get("n_init", c.active_learning.n_init);
            a.get("pool_size", c.active_learning.pool_size);
            a.get("batch_size", c.active_learning.batch_size);
        }
        {
            Reader v = root.child("variants");
            v.get("al_rounds", c.al_rounds);
            v.get("random_sizes", c.random_sizes);
        }
        {
            Reader s = root.child("sweep");
            s.get("random_sizes", c.sweep_random_sizes);
        }
        {
            Reader t = root.child("test_sets");
            t.get("daily", c.daily_test_size);
            t.get("yearly", c.yearly_test_size);
        }
        {
            Reader m = root.child("mlmc");
            m.get("t_sim", c.mlmc.t_sim);
            m.get("n_pilot", c.mlmc.n_pilot);
            std::string primary = metric_name(c.mlmc.primary);
            m.get("primary_metric", primary);
            if (primary == "lole" || primary == "eens") {
                c.mlmc.primary = primary == "lole" ? Metric::Lole : Metric::Eens;
            } else {
                m.problem("primary_metric", "must be \"lole\" or \"eens\"");
            }
        }
    }
    if (problems.empty()) {
        problems = check_config(c);
    }
    if (!problems.empty()) {
        throw ConfigError(std::move(problems));
    }
    return c;
}

ExperimentConfig load_config(const fs::path& file)
{
    std::ifstream in(file);
    if (!in) {
        throw ConfigError({fmt::format("{}: cannot open", file.string())});
    }
    json document;
    try {
        document = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError({fmt::format("{}: {}", file.string(), e.what())});
    }
    return parse_config(document, file.parent_path());
}

std::vector<std::string> check_config(const ExperimentConfig& c)
{
    std::vector<std::string> problems;
    auto require = [&](bool ok, const std::string& where, const std::string& message) {
        if (!ok) {
            problems.push_back(fmt::format("{}: {}", where, message));
        }
    };
    require(c.repetitions >= 1, "repetitions", "must be positive");
    collect(problems, "system.thermal", [&] { c.system.thermal.validate(); });
    collect(problems, "system.storage", [&] { c.system.storage.validate(); });
    if (c.system.profiles.kind == ProfileSource::Kind::Synthetic) {
        require(c.system.profiles.wind_years >= 1, "system.profiles.wind_years", "must be positive");
        require(c.system.profiles.demand_years >= 1, "system.profiles.demand_years",
                "must be positive");
        collect(problems, "system.profiles.params", [&] { c.system.profiles.params.validate(); });
    }
    collect(problems, "surrogate", [&] { c.surrogate.validate(); });
    collect(problems, "active_learning", [&] { c.active_learning.validate(); });

    require(!c.al_rounds.empty() || !c.random_sizes.empty(), "variants",
            "needs at least one AL or random variant");
    auto distinct = [](std::vector<std::size_t> v) {
        std::sort(v.begin(), v.end());
        return std::adjacent_find(v.begin(), v.end()) == v.end();
    };
    require(distinct(c.al_rounds), "variants.al_rounds", "entries must be distinct");
    require(distinct(c.random_sizes), "variants.random_sizes", "entries must be distinct");
    for (std::size_t i = 0; i < c.random_sizes.size(); ++i) {
        require(c.random_sizes[i] >= 1, fmt::format("variants.random_sizes[{}]", i),
                "must be positive");
    }
    for (std::size_t i = 0; i < c.sweep_random_sizes.size(); ++i) {
        require(c.sweep_random_sizes[i] >= 1, fmt::format("sweep.random_sizes[{}]", i),
                "must be positive");
    }
    require(c.daily_test_size >= 1, "test_sets.daily", "must be positive");
    require(c.yearly_test_size >= 2, "test_sets.yearly", "must be at least 2");
    require(c.mlmc.n_pilot >= 2, "mlmc.n_pilot", "must be at least 2");
    require(c.mlmc.t_sim > 0.0, "mlmc.t_sim", "must be positive");

    const CostModel& m = c.cost_model;
    for (double v : {m.sample_year, m.sample_day, m.exact_year, m.label_day, m.surrogate_year,
                     m.fit_tree_row, m.score_tree_day}) {
        if (!(v > 0.0)) {
            problems.push_back("cost_model: every unit cost must be positive");
            break;
        }
    }

    // Budget feasibility, costed with the cost model (an estimate under the wall clock).
    if (c.mlmc.t_sim > 0.0 && c.mlmc.n_pilot >= 2) {
        const double tau_surrogate = m.sample_year + m.surrogate_year;
        const double tau_correction = m.sample_year + m.surrogate_year + m.exact_year;
        const double needed =
            static_cast<double>(c.mlmc.n_pilot + 2) * (tau_surrogate + tau_correction);
        if (!(c.mlmc.t_sim > needed)) {
            problems.push_back(fmt::format(
                "mlmc.t_sim: {:.6g} s does not cover the pilot plus two samples per level "
                "(about {:.6g} s with the cost model)",
                c.mlmc.t_sim, needed));
        }
    }
    return problems;
}

json to_json(const ExperimentConfig& c)
{
    json units = json::array();
    for (const auto& u : c.system.storage.units) {
        units.push_back({{"power_mw", u.power}, {"energy_mwh", u.energy_cap},
                         {"initial_soc_mwh", u.soc}});
    }
    const auto& p = c.system.profiles.params;
    json profiles;
    if (c.system.profiles.kind == ProfileSource::Kind::Csv) {
        profiles = {{"source", "csv"}, {"directory", c.system.profiles.directory.string()}};
    } else {
        profiles = {{"source", "synthetic"},
                    {"wind_years", c.system.profiles.wind_years},
                    {"demand_years", c.system.profiles.demand_years},
                    {"seed", c.system.profiles.seed},
                    {"params",
                     {{"wind_capacity_mw", p.wind_capacity_mw},
                      {"wind_mean_cf", p.wind_mean_cf},
                      {"wind_seasonal_amplitude", p.wind_seasonal_amplitude},
                      {"wind_noise_amplitude", p.wind_noise_amplitude},
                      {"wind_noise_persistence", p.wind_noise_persistence},
                      {"demand_peak_mw", p.demand_peak_mw},
                      {"demand_seasonal_amplitude", p.demand_seasonal_amplitude},
                      {"demand_diurnal_amplitude", p.demand_diurnal_amplitude},
                      {"demand_weekend_reduction", p.demand_weekend_reduction},
                      {"demand_noise_amplitude", p.demand_noise_amplitude},
                      {"demand_noise_persistence", p.demand_noise_persistence}}}};
    }
    const auto& m = c.cost_model;
    return {
        {"schema_version", c.schema_version},
        {"seed", c.seed},
        {"repetitions", c.repetitions},
        {"threads", c.threads},
        {"output_dir", c.output_dir.string()},
        {"clock", c.deterministic_clock ? "deterministic" : "wall"},
        {"cost_model",
         {{"sample_year", m.sample_year},
          {"sample_day", m.sample_day},
          {"exact_year", m.exact_year},
          {"label_day", m.label_day},
          {"surrogate_year", m.surrogate_year},
          {"fit_tree_row", m.fit_tree_row},
          {"score_tree_day", m.score_tree_day}}},
        {"system",
         {{"thermal",
           {{"capacities_mw", c.system.thermal.capacities},
            {"availability", c.system.thermal.availability},
            {"outage_model", c.system.thermal.outage_model == OutageModel::IidHourly
                                 ? "iid_hourly"
                                 : "two_state_markov"},
            {"mttr_hours", c.system.thermal.mttr_hours}}},
          {"storage",
           {{"charge_efficiency", c.system.storage.charge_efficiency}, {"units", units}}},
          {"profiles", profiles}}},
        {"surrogate",
         {{"n_trees", c.surrogate.n_trees},
          {"max_depth", c.surrogate.max_depth},
          {"min_samples_leaf", c.surrogate.min_samples_leaf},
          {"features_per_split", c.surrogate.features_per_split},
          {"bootstrap", c.surrogate.bootstrap}}},
        {"active_learning",
         {{"n_init", c.active_learning.n_init},
          {"pool_size", c.active_learning.pool_size},
          {"batch_size", c.active_learning.batch_size}}},
        {"variants", {{"al_rounds", c.al_rounds}, {"random_sizes", c.random_sizes}}},
        {"sweep", {{"random_sizes", c.sweep_random_sizes}}},
        {"test_sets", {{"daily", c.daily_test_size}, {"yearly", c.yearly_test_size}}},
        {"mlmc",
         {{"t_sim", c.mlmc.t_sim},
          {"n_pilot", c.mlmc.n_pilot},
          {"primary_metric", metric_name(c.mlmc.primary)}}},
    };
}

fs::path resolve_output_dir(const ExperimentConfig& config, const std::optional<fs::path>& cli_out)
{
    if (cli_out) {
        return *cli_out;
    }
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) {
        return env;
    }
    return config.output_dir;
}

Setup build_setup(const ExperimentConfig& config)
{
    Setup s;
    s.thermal = config.system.thermal;
    s.storage = config.system.storage;
    const auto& src = config.system.profiles;
    s.profiles = src.kind == ProfileSource::Kind::Csv
        ? load_profiles(src.directory)
        : synth_profiles(src.wind_years, src.demand_years, src.seed, src.params);
    s.forest = config.surrogate;
    s.active_learning = config.active_learning;
    return s;
}

TestSets make_test_sets(const Setup& setup, std::size_t n_daily, std::size_t n_yearly,
                        std::uint64_t seed, const Executor& executor)
{
    TestSets t;
    std::vector<DailyTrace> days(n_daily);
    std::vector<AdequacyOutcome> labels(n_daily);
    executor.for_each_index(n_daily, [&](std::size_t i) {
        Stream stream(seed, Purpose::DailyTest, i);
        days[i] = sample_margin_day(setup.thermal, setup.profiles, stream);
        labels[i] = label_day(days[i], setup.storage);
    });
    for (std::size_t i = 0; i < n_daily; ++i) {
        t.daily.add(days[i], labels[i]);
    }
    t.yearly.margins.resize(n_yearly);
    t.yearly.exact.resize(n_yearly);
    executor.for_each_index(n_yearly, [&](std::size_t i) {
        Stream stream(seed, Purpose::YearlyTest, i);
        t.yearly.margins[i] = sample_margin_year(setup.thermal, setup.profiles, stream);
        t.yearly.exact[i] = evaluate_exact_year(t.yearly.margins[i], setup.storage);
    });
    return t;
}

std::uint64_t repetition_key(std::uint64_t seed, std::size_t repetition)
{
    return derive_key(seed, Purpose::Repetition, repetition);
}

std::uint64_t al_seed(std::uint64_t rep_key) { return derive_key(rep_key, Purpose::Variant, 0); }

std::uint64_t random_seed(std::uint64_t rep_key, std::size_t n_days)
{
    return derive_key(rep_key, Purpose::RandomDays, n_days);
}

namespace {

// MLMC stream keys of the results-table rows; disjoint from the training seeds.
constexpr std::uint64_t kExactVariant = 1;
constexpr std::uint64_t kAlVariantBase = std::uint64_t{1} << 32;
constexpr std::uint64_t kRandomVariantBase = std::uint64_t{2} << 32;

TrainingContext training_context(const Setup& setup, const Executor& executor,
                                 const Clock& clock)
{
    return TrainingContext{
        setup.storage,
        [&setup](Stream& s) { return sample_margin_day(setup.thermal, setup.profiles, s); },
        setup.forest, executor, clock};
}

/// The AL chain and the random runs of one repetition. Callbacks see every
/// trained run while its forests are still alive.
void train_repetition(const Setup& setup, std::size_t max_rounds,
                      const std::vector<std::size_t>& random_sizes, std::uint64_t rep_key,
                      const Executor& executor, const Clock& clock,
                      const std::function<void(const TrainingRun&)>& on_al,
                      const std::function<void(std::size_t, const TrainingRun&)>& on_random,
                      std::vector<RoundRecord>& history)
{
    const auto context = training_context(setup, executor, clock);
    ALConfig al = setup.active_learning;
    al.rounds = max_rounds;
    auto run = run_active_learning(al, context, al_seed(rep_key), on_al);
    history = run.history;
    for (std::size_t n : random_sizes) {
        const auto random = train_random(n, context, random_seed(rep_key, n));
        on_random(n, random);
    }
}

SweepPoint make_point(const char* method, std::size_t rep, const TrainingRun& run,
                      const TestSets& tests, const Executor& executor)
{
    SweepPoint p;
    p.method = method;
    p.repetition = rep;
    p.rounds = run.rounds_done;
    p.train_size = run.labeled.size();
    p.t_train = run.t_train;
    p.metrics = surrogate_metrics(run.lol, run.ens, tests.daily, tests.yearly, executor);
    return p;
}

} // namespace

SweepResult run_training_sweep(const Setup& setup, const TestSets& tests, std::size_t max_rounds,
                               const std::vector<std::size_t>& random_sizes,
                               std::size_t repetitions, std::uint64_t seed,
                               const Executor& executor, const Clock& clock)
{
    SweepResult result;
    for (std::size_t r = 0; r < repetitions; ++r) {
        std::vector<RoundRecord> history;
        train_repetition(
            setup, max_rounds, random_sizes, repetition_key(seed, r), executor, clock,
            [&](const TrainingRun& run) {
                result.points.push_back(make_point("AL", r, run, tests, executor));
            },
            [&](std::size_t, const TrainingRun& run) {
                result.points.push_back(make_point("Random", r, run, tests, executor));
            },
            history);
        result.histories.push_back(std::move(history));
    }
    return result;
}

std::string format_break_even(const BreakEven& b)
{
    switch (b.kind) {
    case BreakEvenKind::Crossing:
        return std::isfinite(b.performance) ? fmt::format("{:.2f}", b.performance) : "N/A";
    case BreakEvenKind::AlwaysBetter:
        return "Always";
    case BreakEvenKind::Invalid:
        return "Invalid";
    case BreakEvenKind::Degenerate:
        return "N/A";
    }
    return "N/A";
}

namespace {

const char* kind_name(BreakEvenKind k)
{
    switch (k) {
    case BreakEvenKind::Crossing:
        return "crossing";
    case BreakEvenKind::AlwaysBetter:
        return "always_better";
    case BreakEvenKind::Invalid:
        return "invalid";
    case BreakEvenKind::Degenerate:
        return "degenerate";
    }
    return "invalid";
}

/// One results-table estimator in one repetition.
struct VariantResult {
    std::string name;
    std::optional<std::size_t> train_size;
    double t_train = 0.0;
    std::optional<SurrogateMetrics> metrics;
    MLMCResult mlmc;
    MetricArray speed{};
};

struct Surrogate {
    std::string name;
    std::size_t train_size = 0;
    double t_train = 0.0;
    Forest lol;
    Forest ens;
    SurrogateMetrics metrics;
    std::uint64_t key = 0;
};

MetricArray speeds_of(const MLMCResult& r)
{
    MetricArray s{};
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        s[m] = speed(r.estimate[m], r.variance[m], r.t_sim);
    }
    return s;
}

json metrics_json(const SurrogateMetrics& m)
{
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return {{"rmse_lol", m.rmse_lol},
            {"rmse_ens", m.rmse_ens},
            {"corr_lol", opt(m.corr_lol)},
            {"corr_ens", opt(m.corr_ens)}};
}

json pair_json(const MetricArray& a) { return {{"lole", a[0]}, {"eens", a[1]}}; }

json mlmc_json(const MLMCResult& r)
{
    json levels = json::array();
    for (const auto& s : r.levels) {
        levels.push_back({{"mean", pair_json(s.mean)},
                          {"sigma", pair_json(s.sigma)},
                          {"tau", s.tau},
                          {"n", s.n},
                          {"cost", s.cost}});
    }
    MetricArray half{};
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        half[m] = 1.96 * r.std_error[m];
    }
    return {{"estimate", pair_json(r.estimate)},
            {"std_error", pair_json(r.std_error)},
            {"ci95_half_width", pair_json(half)},
            {"allocation", r.allocation},
            {"t_pilot", r.t_pilot},
            {"t_sim", r.t_sim},
            {"levels", levels}};
}

/// Mean and sample standard deviation; a single value has spread 0.
std::pair<double, double> mean_std(const std::vector<double>& v)
{
    if (v.empty()) {
        return {std::nan(""), std::nan("")};
    }
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2 || !std::isfinite(mean)) {
        return {mean, 0.0};
    }
    double ss = 0.0;
    for (double x : v) {
        ss += (x - mean) * (x - mean);
    }
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

std::string number(double v) { return std::isfinite(v) ? fmt::format("{}", v) : ""; }

std::string number(const std::optional<double>& v) { return v ? number(*v) : ""; }

void write_file(const fs::path& file, const std::string& text)
{
    std::ofstream out(file, std::ios::binary);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write {}", file.string()));
    }
    out << text;
    if (!out) {
        throw std::runtime_error(fmt::format("failed writing {}", file.string()));
    }
}

std::string table_csv(const std::vector<TableRow>& rows)
{
    std::string out = "estimator,train size [days],train time [s],simulation time [s],"
                      "LOLE ± CI,LOLE speed,break-even 1/c²,"
                      "EENS ± CI,EENS speed,break-even 1/c²\n";
    for (const auto& r : rows) {
        auto be = [&](std::size_t m) {
            return r.baseline ? format_break_even(r.break_even[m]) : std::string("N/A");
        };
        auto sp = [](double s) { return std::isfinite(s) ? fmt::format("{:.3f}", s) : "inf"; };
        out += fmt::format("{},{},{:.2f},{:.2f},{:.3f} ± {:.3f},{},{},{:.1f} ± {:.1f},{},{}\n",
                           r.estimator,
                           r.train_size ? std::to_string(*r.train_size) : std::string("N/A"),
                           r.t_train, r.t_sim, r.estimate[0], r.half_width[0], sp(r.speed[0]),
                           be(0), r.estimate[1], r.half_width[1], sp(r.speed[1]), be(1));
    }
    return out;
}

struct SweepRow {
    std::string method;
    std::size_t train_size = 0;
    std::size_t count = 0;
    std::pair<double, double> t_train, rmse_lol, rmse_ens, corr_lol, corr_ens;
};

std::vector<SweepRow> aggregate_sweep(const std::vector<SweepPoint>& points)
{
    std::map<std::pair<std::string, std::size_t>, std::vector<const SweepPoint*>> groups;
    for (const auto& p : points) {
        groups[{p.method, p.train_size}].push_back(&p);
    }
    std::vector<SweepRow> rows;
    for (const auto& [key, members] : groups) {
        std::vector<double> t, rl, re, cl, ce;
        for (const auto* p : members) {
            t.push_back(p->t_train);
            rl.push_back(p->metrics.rmse_lol);
            re.push_back(p->metrics.rmse_ens);
            if (p->metrics.corr_lol) {
                cl.push_back(*p->metrics.corr_lol);
            }
            if (p->metrics.corr_ens) {
                ce.push_back(*p->metrics.corr_ens);
            }
        }
        rows.push_back({key.first, key.second, members.size(), mean_std(t), mean_std(rl),
                        mean_std(re), mean_std(cl), mean_std(ce)});
    }
    return rows;
}

std::string sweep_csv(std::vector<SweepRow> rows, bool by_time)
{
    if (by_time) {
        std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
            return a.method != b.method ? a.method < b.method : a.t_train.first < b.t_train.first;
        });
    }
    std::string out = by_time ? "method,t_train_mean,t_train_std,train_size,repetitions,"
                              : "method,train_size,t_train_mean,t_train_std,repetitions,";
    out += "rmse_lol_mean,rmse_lol_std,rmse_ens_mean,rmse_ens_std,"
           "corr_lol_mean,corr_lol_std,corr_ens_mean,corr_ens_std\n";
    for (const auto& r : rows) {
        if (by_time) {
            out += fmt::format("{},{},{},{},{},", r.method, number(r.t_train.first),
                               number(r.t_train.second), r.train_size, r.count);
        } else {
            out += fmt::format("{},{},{},{},{},", r.method, r.train_size, number(r.t_train.first),
                               number(r.t_train.second), r.count);
        }
        out += fmt::format("{},{},{},{},{},{},{},{}\n", number(r.rmse_lol.first),
                           number(r.rmse_lol.second), number(r.rmse_ens.first),
                           number(r.rmse_ens.second), number(r.corr_lol.first),
                           number(r.corr_lol.second), number(r.corr_ens.first),
                           number(r.corr_ens.second));
    }
    return out;
}

std::string history_csv(const SweepResult& sweep)
{
    std::map<std::pair<std::size_t, std::size_t>, const SweepPoint*> al_points;
    for (const auto& p : sweep.points) {
        if (p.method == "AL") {
            al_points[{p.repetition, p.rounds}] = &p;
        }
    }
    std::string out = "repetition,round,train_size,t_train,pool_std_min,pool_std_median,"
                      "pool_std_q90,pool_std_max,selected_std_min,unselected_std_max,"
                      "rmse_lol,rmse_ens,corr_lol,corr_ens\n";
    for (std::size_t r = 0; r < sweep.histories.size(); ++r) {
        for (const auto& h : sweep.histories[r]) {
            out += fmt::format("{},{},{},{},", r, h.round, h.train_size, number(h.t_train));
            if (h.round == 0) {
                out += ",,,,,,";
            } else {
                out += fmt::format("{},{},{},{},{},{},", number(h.pool_std_min),
                                   number(h.pool_std_median), number(h.pool_std_q90),
                                   number(h.pool_std_max), number(h.selected_std_min),
                                   number(h.unselected_std_max));
            }
            const auto it = al_points.find({r, h.round});
            if (it != al_points.end()) {
                const auto& m = it->second->metrics;
                out += fmt::format("{},{},{},{}\n", number(m.rmse_lol), number(m.rmse_ens),
                                   number(m.corr_lol), number(m.corr_ens));
            } else {
                out += ",,,\n";
            }
        }
    }
    return out;
}

} // namespace

ExperimentReport run_experiment(const ExperimentConfig& config, const fs::path& output_dir,
                                std::ostream* log)
{
    if (auto problems = check_config(config); !problems.empty()) {
        throw ConfigError(std::move(problems));
    }
    auto say = [&](const std::string& line) {
        if (log) {
            *log << line << std::endl;
        }
    };

    const unsigned threads = config.threads > 0
        ? static_cast<unsigned>(config.threads)
        : std::max(1u, std::thread::hardware_concurrency());
    const Executor executor(threads);
    const Clock clock =
        config.deterministic_clock ? Clock::synthetic(config.cost_model) : Clock::wall();

    const Setup setup = build_setup(config);
    say(fmt::format("system: {} wind years, {} demand years, {} thermal units, {} storage units",
                    setup.profiles.wind_years.size(), setup.profiles.demand_years.size(),
                    setup.thermal.capacities.size(), setup.storage.units.size()));
    const TestSets tests = make_test_sets(setup, config.daily_test_size, config.yearly_test_size,
                                          config.seed, executor);
    say(fmt::format("test sets: {} days, {} years", config.daily_test_size,
                    config.yearly_test_size));

    auto al_rounds = config.al_rounds;
    std::sort(al_rounds.begin(), al_rounds.end());
    auto random_sizes = config.random_sizes;
    std::sort(random_sizes.begin(), random_sizes.end());
    std::vector<std::size_t> trained_sizes = random_sizes;
    trained_sizes.insert(trained_sizes.end(), config.sweep_random_sizes.begin(),
                         config.sweep_random_sizes.end());
    std::sort(trained_sizes.begin(), trained_sizes.end());
    trained_sizes.erase(std::unique(trained_sizes.begin(), trained_sizes.end()),
                        trained_sizes.end());
    const std::size_t max_rounds = al_rounds.empty() ? 0 : al_rounds.back();

    const ScenarioSampler sampler = [&setup](Stream& s) {
        return sample_margin_year(setup.thermal, setup.profiles, s);
    };
    const Level exact{"exact",
                      [&setup](const HourlyTrace& z) { return evaluate_exact_year(z, setup.storage); },
                      CostKind::ExactYear};

    ExperimentReport report;
    report.config = config;
    std::vector<std::vector<VariantResult>> per_rep;
    json reps_json = json::array();

    for (std::size_t r = 0; r < config.repetitions; ++r) {
        const std::uint64_t rep_key = repetition_key(config.seed, r);
        std::vector<Surrogate> surrogates;
        std::vector<RoundRecord> history;

        train_repetition(
            setup, max_rounds, trained_sizes, rep_key, executor, clock,
            [&](const TrainingRun& run) {
                auto point = make_point("AL", r, run, tests, executor);
                say(fmt::format("rep {} AL round {}: {} days, t_train {:.3f} s, corr ens {:.4f}",
                                r, run.rounds_done, run.labeled.size(), run.t_train,
                                point.metrics.corr_ens.value_or(std::nan(""))));
                if (std::binary_search(al_rounds.begin(), al_rounds.end(), run.rounds_done)) {
                    surrogates.push_back({fmt::format("AL ({} rounds)", run.rounds_done),
                                          run.labeled.size(), run.t_train, run.lol, run.ens,
                                          point.metrics, kAlVariantBase + run.rounds_done});
                }
                report.sweep.points.push_back(std::move(point));
            },
            [&](std::size_t n, const TrainingRun& run) {
                auto point = make_point("Random", r, run, tests, executor);
                say(fmt::format("rep {} random {} days: t_train {:.3f} s, corr ens {:.4f}", r, n,
                                run.t_train, point.metrics.corr_ens.value_or(std::nan(""))));
                if (std::binary_search(random_sizes.begin(), random_sizes.end(), n)) {
                    surrogates.push_back({fmt::format("Random ({} days)", n), n, run.t_train,
                                          run.lol, run.ens, point.metrics,
                                          kRandomVariantBase + n});
                }
                report.sweep.points.push_back(std::move(point));
            },
            history);
        report.sweep.histories.push_back(std::move(history));

        std::vector<VariantResult> results;
        VariantResult base;
        base.name = "Exact model";
        base.mlmc = run_plain_mc(exact, sampler, CostKind::SampleYear, config.mlmc,
                                 derive_key(rep_key, Purpose::Variant, kExactVariant), executor,
                                 clock);
        base.speed = speeds_of(base.mlmc);
        say(fmt::format("rep {} exact MC: LOLE {:.4f}, EENS {:.2f}, speeds {:.4g} / {:.4g}", r,
                        base.mlmc.estimate[0], base.mlmc.estimate[1], base.speed[0],
                        base.speed[1]));
        results.push_back(std::move(base));

        for (const auto& s : surrogates) {
            const Level surrogate{
                s.name,
                [&s](const HourlyTrace& z) { return predict_year(s.lol, s.ens, z); },
                CostKind::SurrogateYear};
            const Hierarchy hierarchy{sampler, CostKind::SampleYear, {surrogate, exact}};
            VariantResult v;
            v.name = s.name;
            v.train_size = s.train_size;
            v.t_train = s.t_train;
            v.metrics = s.metrics;
            v.mlmc = estimate_with_budget(hierarchy, config.mlmc,
                                          derive_key(rep_key, Purpose::Variant, s.key), executor,
                                          clock);
            v.speed = speeds_of(v.mlmc);
            say(fmt::format("rep {} {}: LOLE {:.4f}, EENS {:.2f}, speeds {:.4g} / {:.4g}", r,
                            s.name, v.mlmc.estimate[0], v.mlmc.estimate[1], v.speed[0],
                            v.speed[1]));
            results.push_back(std::move(v));
        }

        json variants = json::array();
        for (const auto& v : results) {
            json item = {{"estimator", v.name},
                         {"train_size", v.train_size ? json(*v.train_size) : json(nullptr)},
                         {"t_train", v.t_train},
                         {"mlmc", mlmc_json(v.mlmc)},
                         {"speed", pair_json(v.speed)}};
            if (v.metrics) {
                item["surrogate_metrics"] = metrics_json(*v.metrics);
            }
            variants.push_back(std::move(item));
        }
        reps_json.push_back({{"repetition", r}, {"variants", std::move(variants)}});
        per_rep.push_back(std::move(results));
    }

    // Averages across repetitions; every repetition has the same rows in the same order.
    const std::size_t n_rows = per_rep.front().size();
    for (std::size_t i = 0; i < n_rows; ++i) {
        TableRow row;
        row.estimator = per_rep.front()[i].name;
        row.train_size = per_rep.front()[i].train_size;
        std::vector<double> t_train, t_sim;
        std::array<std::vector<double>, kMetricCount> est, half, spd;
        for (const auto& rep : per_rep) {
            const auto& v = rep[i];
            t_train.push_back(v.t_train);
            t_sim.push_back(v.mlmc.t_sim);
            for (std::size_t m = 0; m < kMetricCount; ++m) {
                est[m].push_back(v.mlmc.estimate[m]);
                half[m].push_back(1.96 * v.mlmc.std_error[m]);
                spd[m].push_back(v.speed[m]);
            }
        }
        std::tie(row.t_train, row.t_train_std) = mean_std(t_train);
        row.t_sim = mean_std(t_sim).first;
        for (std::size_t m = 0; m < kMetricCount; ++m) {
            std::tie(row.estimate[m], row.estimate_std[m]) = mean_std(est[m]);
            row.half_width[m] = mean_std(half[m]).first;
            std::tie(row.speed[m], row.speed_std[m]) = mean_std(spd[m]);
        }
        report.table.push_back(std::move(row));
    }

    // Break-even chains: each AL row against the previous one, each random row
    // against the previous one, the first of each chain against the exact model.
    auto chain = [&](const std::string& prefix) {
        std::size_t previous = 0;
        for (std::size_t i = 1; i < report.table.size(); ++i) {
            auto& row = report.table[i];
            if (row.estimator.rfind(prefix, 0) != 0) {
                continue;
            }
            const auto& base = report.table[previous];
            row.baseline = base.estimator;
            for (std::size_t m = 0; m < kMetricCount; ++m) {
                if (std::isfinite(row.speed[m]) && std::isfinite(base.speed[m])) {
                    row.break_even[m] = break_even({row.speed[m], row.t_train},
                                                   {base.speed[m], base.t_train});
                } else {
                    row.break_even[m].kind = BreakEvenKind::Degenerate;
                }
            }
            previous = i;
        }
    };
    chain("AL ");
    chain("Random ");

    json table = json::array();
    for (const auto& row : report.table) {
        json be = json::object();
        if (row.baseline) {
            for (std::size_t m = 0; m < kMetricCount; ++m) {
                be[m == 0 ? "lole" : "eens"] = {{"kind", kind_name(row.break_even[m].kind)},
                                                {"t_star", row.break_even[m].t_star},
                                                {"performance", row.break_even[m].performance},
                                                {"text", format_break_even(row.break_even[m])}};
            }
        }
        table.push_back({{"estimator", row.estimator},
                         {"train_size", row.train_size ? json(*row.train_size) : json(nullptr)},
                         {"t_train", row.t_train},
                         {"t_train_std", row.t_train_std},
                         {"t_sim", row.t_sim},
                         {"estimate", pair_json(row.estimate)},
                         {"estimate_std", pair_json(row.estimate_std)},
                         {"ci95_half_width", pair_json(row.half_width)},
                         {"speed", pair_json(row.speed)},
                         {"speed_std", pair_json(row.speed_std)},
                         {"baseline", row.baseline ? json(*row.baseline) : json(nullptr)},
                         {"break_even", be}});
    }
    json sweep = json::array();
    for (const auto& p : report.sweep.points) {
        sweep.push_back({{"method", p.method},
                         {"repetition", p.repetition},
                         {"rounds", p.rounds},
                         {"train_size", p.train_size},
                         {"t_train", p.t_train},
                         {"metrics", metrics_json(p.metrics)}});
    }
    // The thread count never changes results, so it stays out of the report.
    json echoed = to_json(config);
    echoed.erase("threads");
    report.json = {{"schema_version", kConfigSchemaVersion},
                   {"config", echoed},
                   {"table", table},
                   {"repetitions", reps_json},
                   {"sweep", sweep}};

    fs::create_directories(output_dir);
    write_file(output_dir / "table1.csv", table_csv(report.table));
    write_file(output_dir / "al_history.csv", history_csv(report.sweep));
    const auto rows = aggregate_sweep(report.sweep.points);
    write_file(output_dir / "sweep_by_size.csv", sweep_csv(rows, false));
    write_file(output_dir / "sweep_by_time.csv", sweep_csv(rows, true));
    write_file(output_dir / "report.json", report.json.dump(2) + "\n");
    say(fmt::format("wrote {}", output_dir.string()));
    return report;
}

} // namespace ramc
