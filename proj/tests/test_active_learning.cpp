#include "ramc/active_learning.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace ramc;

namespace {

struct Fixture {
    ThermalFleet thermal;
    StorageFleet storage;
    ProfileLibrary profiles;
    Executor executor{1};
    Clock clock = Clock::synthetic(CostModel{});
    ForestParams forest;

    Fixture()
    {
        SynthParams p;
        p.demand_peak_mw = 1075.0;
        profiles = synth_profiles(4, 2, 3, p);
        storage.units = {{10.0, 20.0, 20.0}, {20.0, 80.0, 80.0}, {5.0, 5.0, 5.0}};
        forest.n_trees = 10;
    }

    TrainingContext context(const Executor& ex)
    {
        return TrainingContext{storage,
                               [this](Stream& s) { return sample_margin_day(thermal, profiles, s); },
                               forest, ex, clock};
    }
};

ALConfig small_config(std::size_t rounds)
{
    return ALConfig{60, 200, 15, rounds};
}

} // namespace

TEST(TopK, OrdersByScoreAndBreaksTiesTowardLowerIndex)
{
    const std::vector<double> s{1.0, 3.0, 2.0, 3.0, 0.5};
    EXPECT_EQ(top_k_indices(s, 3), (std::vector<std::size_t>{1, 3, 2}));
    EXPECT_EQ(top_k_indices(std::vector<double>(5, 0.0), 2), (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(top_k_indices(s, 10).size(), 5u);
}

TEST(ActiveLearning, TrainingSetGrowsByOneBatchPerRound)
{
    Fixture f;
    const auto cfg = small_config(3);
    std::vector<std::size_t> sizes;
    const auto run = run_active_learning(cfg, f.context(f.executor), 7,
                                         [&](const TrainingRun& r) { sizes.push_back(r.labeled.size()); });
    EXPECT_EQ(sizes, (std::vector<std::size_t>{60, 75, 90, 105}));
    EXPECT_EQ(run.rounds_done, 3u);
    ASSERT_EQ(run.history.size(), 4u);
    for (std::size_t r = 0; r < run.history.size(); ++r) {
        EXPECT_EQ(run.history[r].train_size, 60 + 15 * r);
    }
}

TEST(ActiveLearning, SelectionTakesTheLargestCommitteeStd)
{
    Fixture f;
    const auto run = run_active_learning(small_config(3), f.context(f.executor), 8);
    for (std::size_t r = 1; r < run.history.size(); ++r) {
        const auto& rec = run.history[r];
        EXPECT_EQ(rec.selected.size(), 15u);
        EXPECT_GE(rec.selected_std_min, rec.unselected_std_max);
        EXPECT_LE(rec.pool_std_min, rec.pool_std_median);
        EXPECT_LE(rec.pool_std_median, rec.pool_std_q90);
        EXPECT_LE(rec.pool_std_q90, rec.pool_std_max);
        EXPECT_EQ(rec.selected_std_min <= rec.pool_std_max, true);
    }
}

TEST(ActiveLearning, LabelsAreExactDailyDispatch)
{
    Fixture f;
    const auto run = run_active_learning(small_config(2), f.context(f.executor), 9);
    for (std::size_t i = 0; i < run.labeled.size(); ++i) {
        const auto y = label_day(run.labeled.features[i], f.storage);
        ASSERT_EQ(run.labeled.lol[i], y.lol);
        ASSERT_EQ(run.labeled.ens[i], y.ens);
    }
}

TEST(ActiveLearning, TrainingTimeChargesEveryStep)
{
    Fixture f;
    const CostModel m;
    const auto cfg = small_config(2);
    const auto run = run_active_learning(cfg, f.context(f.executor), 10);

    // Oracle from the cost model: sampling, labeling and both fits, plus
    // pool generation and scoring in every round.
    auto init_cost = [&](double n) {
        return n * (m.sample_day + m.label_day) + 2.0 * m.fit_tree_row * f.forest.n_trees * n;
    };
    auto round_cost = [&](double n_after) {
        return cfg.pool_size * (m.sample_day + m.score_tree_day * f.forest.n_trees)
               + cfg.batch_size * m.label_day + 2.0 * m.fit_tree_row * f.forest.n_trees * n_after;
    };
    EXPECT_NEAR(run.history[0].t_train, init_cost(60), 1e-12);
    EXPECT_NEAR(run.history[1].t_train, init_cost(60) + round_cost(75), 1e-12);
    EXPECT_NEAR(run.history[2].t_train, init_cost(60) + round_cost(75) + round_cost(90), 1e-12);
    EXPECT_DOUBLE_EQ(run.t_train, run.history.back().t_train);
}

TEST(ActiveLearning, DeterministicAcrossThreadCounts)
{
    Fixture f;
    Executor four(4);
    const auto a = run_active_learning(small_config(2), f.context(f.executor), 11);
    const auto b = run_active_learning(small_config(2), f.context(four), 11);
    EXPECT_EQ(a.labeled.features, b.labeled.features);
    EXPECT_EQ(a.labeled.ens, b.labeled.ens);
    EXPECT_TRUE(a.ens == b.ens);
    EXPECT_TRUE(a.lol == b.lol);
    EXPECT_EQ(a.t_train, b.t_train);
    const auto c = run_active_learning(small_config(2), f.context(f.executor), 12);
    EXPECT_NE(a.labeled.features, c.labeled.features);
}

TEST(ActiveLearning, InitialDaysMatchTheRandomBaseline)
{
    Fixture f;
    const auto al = init_training(small_config(0), f.context(f.executor), 13);
    const auto random = train_random(60, f.context(f.executor), 13);
    EXPECT_EQ(al.labeled.features, random.labeled.features);
    EXPECT_TRUE(al.ens == random.ens);
}

TEST(ActiveLearning, RandomBaselineSize)
{
    Fixture f;
    const auto run = train_random(123, f.context(f.executor), 14);
    EXPECT_EQ(run.labeled.size(), 123u);
    EXPECT_EQ(run.lol.size(), f.forest.n_trees);
    EXPECT_THROW(train_random(0, f.context(f.executor), 14), std::invalid_argument);
}

TEST(ActiveLearning, RejectsBadConfigs)
{
    Fixture f;
    EXPECT_THROW(init_training(ALConfig{0, 10, 1, 0}, f.context(f.executor), 1),
                 std::invalid_argument);
    EXPECT_THROW(init_training(ALConfig{10, 10, 11, 0}, f.context(f.executor), 1),
                 std::invalid_argument);
    EXPECT_THROW(al_round(TrainingRun{}, small_config(1), f.context(f.executor)),
                 std::invalid_argument);
}
