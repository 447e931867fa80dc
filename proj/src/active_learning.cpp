#include "ramc/active_learning.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace ramc {

void ALConfig::validate() const
{
    if (n_init < 1 || pool_size < 1 || batch_size < 1) {
        throw std::invalid_argument("n_init, pool_size and batch_size must be positive");
    }
    if (batch_size > pool_size) {
        throw std::invalid_argument("batch_size must not exceed pool_size");
    }
}

namespace {

struct DayBatch {
    std::vector<DailyTrace> days;
    double cost = 0.0;
};

/// Draws item i of a batch from stream (key, purpose, i).
DayBatch sample_days(std::size_t n, std::uint64_t key, Purpose purpose,
                     const TrainingContext& context)
{
    DayBatch batch;
    batch.days.resize(n);
    std::vector<double> cost(n);
    context.executor.for_each_index(n, [&](std::size_t i) {
        Stream stream(key, purpose, i);
        cost[i] = context.clock.time(CostKind::SampleDay, 1.0,
                                     [&] { batch.days[i] = context.sample_day(stream); });
    });
    batch.cost = std::accumulate(cost.begin(), cost.end(), 0.0);
    return batch;
}

double label_into(const std::vector<DailyTrace>& days, const TrainingContext& context,
                  LabeledSet& out)
{
    std::vector<AdequacyOutcome> labels(days.size());
    std::vector<double> cost(days.size());
    context.executor.for_each_index(days.size(), [&](std::size_t i) {
        cost[i] = context.clock.time(CostKind::LabelDay, 1.0,
                                     [&] { labels[i] = label_day(days[i], context.storage); });
    });
    for (std::size_t i = 0; i < days.size(); ++i) {
        out.add(days[i], labels[i]);
    }
    return std::accumulate(cost.begin(), cost.end(), 0.0);
}

double fit_both(TrainingRun& run, std::uint64_t key, const TrainingContext& context)
{
    const double units = static_cast<double>(context.forest.n_trees * run.labeled.size());
    double cost = context.clock.time(CostKind::FitTreeRow, units, [&] {
        run.lol = fit(run.labeled, Target::Lol, context.forest,
                      derive_key(key, Purpose::ForestTarget, 0), context.executor);
    });
    cost += context.clock.time(CostKind::FitTreeRow, units, [&] {
        run.ens = fit(run.labeled, Target::Ens, context.forest,
                      derive_key(key, Purpose::ForestTarget, 1), context.executor);
    });
    return cost;
}

TrainingRun random_run(std::size_t n_days, const TrainingContext& context, std::uint64_t seed)
{
    TrainingRun run;
    run.seed = seed;
    const auto batch = sample_days(n_days, seed, Purpose::InitialDays, context);
    run.t_train += batch.cost;
    run.t_train += label_into(batch.days, context, run.labeled);
    run.t_train += fit_both(run, derive_key(seed, Purpose::Round, 0), context);

    RoundRecord record;
    record.round = 0;
    record.train_size = run.labeled.size();
    record.t_train = run.t_train;
    run.history.push_back(record);
    return run;
}

double quantile_sorted(const std::vector<double>& sorted, double q)
{
    const auto pos = static_cast<std::size_t>(q * static_cast<double>(sorted.size() - 1));
    return sorted[pos];
}

} // namespace

std::vector<std::size_t> top_k_indices(const std::vector<double>& scores, std::size_t k)
{
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    k = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
                      });
    order.resize(k);
    return order;
}

TrainingRun init_training(const ALConfig& config, const TrainingContext& context,
                          std::uint64_t seed)
{
    config.validate();
    return random_run(config.n_init, context, seed);
}

TrainingRun train_random(std::size_t n_days, const TrainingContext& context, std::uint64_t seed)
{
    if (n_days < 1) {
        throw std::invalid_argument("train_random needs at least one day");
    }
    return random_run(n_days, context, seed);
}

TrainingRun al_round(TrainingRun run, const ALConfig& config, const TrainingContext& context)
{
    config.validate();
    if (run.ens.size() == 0 || run.lol.size() == 0) {
        throw std::invalid_argument("al_round needs fitted forests");
    }
    const std::size_t round = run.rounds_done + 1;
    const std::uint64_t round_key = derive_key(run.seed, Purpose::Round, round);

    // A temporary pool: drawn fresh, scored, and discarded unless selected.
    const auto pool = sample_days(config.pool_size, round_key, Purpose::Pool, context);
    run.t_train += pool.cost;

    std::vector<double> scores(pool.days.size());
    std::vector<double> cost(pool.days.size());
    const double units = static_cast<double>(run.ens.size());
    context.executor.for_each_index(pool.days.size(), [&](std::size_t i) {
        cost[i] = context.clock.time(CostKind::ScoreTreeDay, units,
                                     [&] { scores[i] = run.ens.committee_std(pool.days[i]); });
    });
    run.t_train += std::accumulate(cost.begin(), cost.end(), 0.0);

    const auto selected = top_k_indices(scores, config.batch_size);
    std::vector<DailyTrace> chosen;
    chosen.reserve(selected.size());
    for (std::size_t i : selected) {
        chosen.push_back(pool.days[i]);
    }
    run.t_train += label_into(chosen, context, run.labeled);
    run.t_train += fit_both(run, round_key, context);
    run.rounds_done = round;

    RoundRecord record;
    record.round = round;
    record.train_size = run.labeled.size();
    record.t_train = run.t_train;
    auto sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    record.pool_std_min = sorted.front();
    record.pool_std_median = quantile_sorted(sorted, 0.5);
    record.pool_std_q90 = quantile_sorted(sorted, 0.9);
    record.pool_std_max = sorted.back();
    std::vector<bool> is_selected(scores.size(), false);
    record.selected_std_min = scores[selected.front()];
    for (std::size_t i : selected) {
        is_selected[i] = true;
        record.selected_std_min = std::min(record.selected_std_min, scores[i]);
    }
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!is_selected[i]) {
            record.unselected_std_max = std::max(record.unselected_std_max, scores[i]);
        }
    }
    record.selected = selected;
    run.history.push_back(std::move(record));
    return run;
}

TrainingRun run_active_learning(const ALConfig& config, const TrainingContext& context,
                                std::uint64_t seed,
                                const std::function<void(const TrainingRun&)>& after_round)
{
    auto run = init_training(config, context, seed);
    if (after_round) {
        after_round(run);
    }
    for (std::size_t r = 0; r < config.rounds; ++r) {
        run = al_round(std::move(run), config, context);
        if (after_round) {
            after_round(run);
        }
    }
    return run;
}

} // namespace ramc
