#pragma once

#include "ramc/adequacy.hpp"
#include "ramc/clock.hpp"
#include "ramc/forest.hpp"
#include "ramc/parallel.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace ramc {

struct ALConfig {
    std::size_t n_init = 730;
    std::size_t pool_size = 3650;
    std::size_t batch_size = 91;
    std::size_t rounds = 0;

    void validate() const;
};

/// Everything a training run needs besides its seed.
struct TrainingContext {
    const StorageFleet& storage;
    std::function<DailyTrace(Stream&)> sample_day;
    ForestParams forest;
    const Executor& executor;
    const Clock& clock;
};

struct RoundRecord {
    std::size_t round = 0;
    std::size_t train_size = 0;
    double t_train = 0.0;
    double pool_std_min = 0.0;
    double pool_std_median = 0.0;
    double pool_std_q90 = 0.0;
    double pool_std_max = 0.0;
    double selected_std_min = 0.0;    ///< smallest committee std among selected items
    double unselected_std_max = 0.0;  ///< largest committee std among discarded items
    std::vector<std::size_t> selected; ///< pool indices, in selection order
};

struct TrainingRun {
    LabeledSet labeled;
    Forest lol;
    Forest ens;
    double t_train = 0.0; ///< generation + labeling + fitting (+ pool scoring), cumulative
    std::size_t rounds_done = 0;
    std::vector<RoundRecord> history;
    std::uint64_t seed = 0;
};

/// Labels config.n_init random days and fits both forests.
TrainingRun init_training(const ALConfig& config, const TrainingContext& context,
                          std::uint64_t seed);

/// One vote-by-committee round: score a fresh pool with the ENS forest's
/// committee std, label the top batch_size exactly, append, refit both forests.
TrainingRun al_round(TrainingRun run, const ALConfig& config, const TrainingContext& context);

/// Baseline: n_days uniformly sampled labeled days and a single fit. Shares
/// its code path with init_training.
TrainingRun train_random(std::size_t n_days, const TrainingContext& context, std::uint64_t seed);

/// init_training followed by config.rounds rounds; `after_round` (optional)
/// sees the run after initialization (round 0) and after every round.
TrainingRun run_active_learning(const ALConfig& config, const TrainingContext& context,
                                std::uint64_t seed,
                                const std::function<void(const TrainingRun&)>& after_round = {});

/// Indices of the k largest scores; ties resolved toward the lower index.
std::vector<std::size_t> top_k_indices(const std::vector<double>& scores, std::size_t k);

} // namespace ramc
