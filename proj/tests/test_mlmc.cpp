#include "ramc/mlmc.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace ramc;

namespace {

/// Scenario carrying one uniform number in its first hour.
HourlyTrace uniform_scenario(Stream& s)
{
    HourlyTrace t;
    t.values()[0] = s.uniform();
    return t;
}

Level level(std::string name, std::function<AdequacyOutcome(double)> f, CostKind cost)
{
    return Level{std::move(name), [f](const HourlyTrace& t) { return f(t[0]); }, cost};
}

/// f1 = (x, 2x), f2 = (x + 0.1 x^2, 2x) with x ~ U(0, 1).
Hierarchy quadratic_toy()
{
    Hierarchy h;
    h.sample = uniform_scenario;
    h.levels.push_back(level("coarse", [](double x) { return AdequacyOutcome{x, 2 * x}; },
                             CostKind::SurrogateYear));
    h.levels.push_back(level("fine", [](double x) { return AdequacyOutcome{x + 0.1 * x * x, 2 * x}; },
                             CostKind::ExactYear));
    return h;
}

CostModel unit_costs()
{
    CostModel m;
    m.sample_year = 0.0;
    m.surrogate_year = 1.0;
    m.exact_year = 3.0;
    return m;
}

} // namespace

TEST(Allocation, SingleLevelSpendsTheWholeBudget)
{
    const std::vector<double> sigma{2.0}, tau{0.01};
    EXPECT_EQ(allocate_samples(sigma, tau, 10.0), (std::vector<std::size_t>{1000}));
}

TEST(Allocation, RatioFollowsSigmaOverRootTau)
{
    // N1 / N2 = (3 / 1) / (1 / 2) = 6.
    const std::vector<double> sigma{3.0, 1.0}, tau{1.0, 4.0};
    const auto n = allocate_samples(sigma, tau, 1000.0);
    EXPECT_EQ(n, (std::vector<std::size_t>{600, 100}));
}

TEST(Allocation, ZeroVarianceLevelGetsTheFloor)
{
    const std::vector<double> sigma{1.0, 0.0}, tau{1.0, 1.0};
    const auto n = allocate_samples(sigma, tau, 100.0);
    EXPECT_EQ(n[1], 2u);
    EXPECT_EQ(n[0], 98u);
}

TEST(Allocation, InfeasibleBudgetThrows)
{
    const std::vector<double> sigma{1.0, 1.0}, tau{1.0, 1.0};
    EXPECT_THROW(allocate_samples(sigma, tau, 3.0), std::invalid_argument);
    EXPECT_THROW(allocate_samples(sigma, std::vector<double>{1.0}, 3.0), std::invalid_argument);
}

TEST(Allocation, NeverExceedsTheBudget)
{
    Stream s(1);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t levels = 1 + s.below(4);
        std::vector<double> sigma(levels), tau(levels);
        for (std::size_t l = 0; l < levels; ++l) {
            sigma[l] = s.uniform() * 5.0;
            tau[l] = 0.01 + s.uniform();
        }
        const double t = 10.0 + 100.0 * s.uniform();
        const auto n = allocate_samples(sigma, tau, t);
        double cost = 0.0;
        for (std::size_t l = 0; l < levels; ++l) {
            EXPECT_GE(n[l], 2u);
            cost += n[l] * tau[l];
        }
        EXPECT_LE(cost, t * (1 + 1e-12));
    }
}

TEST(Allocation, PerturbationsDoNotReduceVariance)
{
    Stream s(2);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t levels = 2 + s.below(3);
        std::vector<double> sigma(levels), tau(levels);
        for (std::size_t l = 0; l < levels; ++l) {
            sigma[l] = 0.1 + s.uniform() * 5.0;
            tau[l] = 0.01 + s.uniform();
        }
        const double t = 1e4;
        const auto n = allocate_samples(sigma, tau, t);
        const double v = predicted_variance(sigma, n);
        // Move 10% of level i's samples to level j at equal or lower cost.
        for (std::size_t i = 0; i < levels; ++i) {
            for (std::size_t j = 0; j < levels; ++j) {
                if (i == j) {
                    continue;
                }
                auto m = n;
                const std::size_t d = std::max<std::size_t>(1, n[i] / 10);
                if (m[i] < d + 2) {
                    continue;
                }
                m[i] -= d;
                m[j] += static_cast<std::size_t>(std::floor(d * tau[i] / tau[j]));
                EXPECT_LE(v, predicted_variance(sigma, m) * (1 + 1e-9));
            }
        }
    }
}

TEST(Speed, DefinitionAndEdgeCases)
{
    EXPECT_DOUBLE_EQ(speed(2.0, 0.5, 4.0), 2.0);
    EXPECT_TRUE(std::isinf(speed(1.0, 0.0, 1.0)));
    EXPECT_EQ(speed(0.0, 0.0, 1.0), 0.0);
    EXPECT_THROW(speed(1.0, 1.0, 0.0), std::invalid_argument);
}

TEST(Speed, PerformanceIsLinearInTime)
{
    EXPECT_DOUBLE_EQ(performance(0.5, 10.0, 4.0), 3.0);
    EXPECT_EQ(performance(0.5, 4.0, 4.0), 0.0);
    EXPECT_THROW(performance(0.5, 3.0, 4.0), std::invalid_argument);
}

TEST(BreakEven, KnownActiveLearningRows)
{
    // (speed, training seconds) pairs with their known break-even 1/c^2.
    const auto exact_vs_al5 = break_even({0.829, 13.53}, {0.118, 0.0});
    EXPECT_EQ(exact_vs_al5.kind, BreakEvenKind::Crossing);
    EXPECT_NEAR(exact_vs_al5.performance, 1.86, 0.01);
    EXPECT_NEAR(break_even({1.462, 30.65}, {0.829, 13.53}).performance, 32.77, 0.01);
    EXPECT_NEAR(break_even({2.009, 72.67}, {1.462, 30.65}).performance, 225.63, 0.01);
    EXPECT_NEAR(break_even({1.232, 72.24}, {1.158, 33.59}).performance, 745.14, 0.5);
    EXPECT_EQ(break_even({0.468, 72.24}, {0.473, 33.59}).kind, BreakEvenKind::Invalid);
}

TEST(BreakEven, CrossingSatisfiesEqualPerformance)
{
    const SpeedProfile a{3.0, 50.0}, b{1.0, 10.0};
    const auto r = break_even(a, b);
    ASSERT_EQ(r.kind, BreakEvenKind::Crossing);
    EXPECT_DOUBLE_EQ(r.t_star, 70.0);
    EXPECT_DOUBLE_EQ(performance(a.speed, r.t_star, a.t_train),
                     performance(b.speed, r.t_star, b.t_train));
    EXPECT_DOUBLE_EQ(r.performance, 60.0);
}

TEST(BreakEven, OtherCases)
{
    EXPECT_EQ(break_even({2.0, 1.0}, {1.0, 5.0}).kind, BreakEvenKind::AlwaysBetter);
    EXPECT_EQ(break_even({1.0, 1.0}, {1.0, 5.0}).kind, BreakEvenKind::AlwaysBetter);
    EXPECT_EQ(break_even({1.0, 5.0}, {1.0, 5.0}).kind, BreakEvenKind::Degenerate);
    EXPECT_EQ(break_even({1.0, 6.0}, {1.0, 5.0}).kind, BreakEvenKind::Invalid);
    EXPECT_EQ(break_even({0.5, 6.0}, {1.0, 5.0}).kind, BreakEvenKind::Invalid);
}

TEST(Telescoping, LevelMeansSumToTheFinestModel)
{
    // Three-point scenario space with three models.
    std::vector<HourlyTrace> scenarios(3);
    scenarios[0].values()[0] = 0.2;
    scenarios[1].values()[0] = 0.5;
    scenarios[2].values()[0] = 0.9;
    const std::vector<double> p{0.5, 0.3, 0.2};
    Hierarchy h = quadratic_toy();
    h.levels.push_back(level("finest", [](double x) { return AdequacyOutcome{std::exp(x), x * x}; },
                             CostKind::ExactYear));
    const auto means = exact_level_means(h, scenarios, p);
    MetricArray sum{};
    for (const auto& m : means) {
        sum[0] += m[0];
        sum[1] += m[1];
    }
    double lol = 0.0, ens = 0.0;
    for (std::size_t s = 0; s < 3; ++s) {
        lol += p[s] * std::exp(scenarios[s][0]);
        ens += p[s] * scenarios[s][0] * scenarios[s][0];
    }
    EXPECT_NEAR(sum[0], lol, 1e-12);
    EXPECT_NEAR(sum[1], ens, 1e-12);
}

TEST(Estimator, IdenticalModelsGiveZeroCorrectionVariance)
{
    Hierarchy h = quadratic_toy();
    h.levels[1] = level("same", [](double x) { return AdequacyOutcome{x, 2 * x}; }, CostKind::ExactYear);
    const auto stats = pilot(h, 100, 3, Executor(1), Clock::synthetic(unit_costs()));
    EXPECT_EQ(stats[1].sigma[0], 0.0);
    EXPECT_EQ(stats[1].mean[0], 0.0);
    EXPECT_GT(stats[0].sigma[0], 0.0);
}

TEST(Estimator, PlainMonteCarloOnABernoulli)
{
    const auto coin = level("coin", [](double x) { return AdequacyOutcome{x < 0.5 ? 1.0 : 0.0, 0.0}; },
                            CostKind::ExactYear);
    const auto r = run_plain_mc(coin, uniform_scenario, CostKind::SampleYear, 10000, 4, Executor(1),
                                Clock::synthetic(unit_costs()));
    EXPECT_NEAR(r.estimate[0], 0.5, 0.015);
    EXPECT_NEAR(r.std_error[0], 0.005, 0.0005);
    EXPECT_DOUBLE_EQ(r.t_sim, 3.0 * 10000);
}

TEST(Estimator, ConstantEvaluatorIsExact)
{
    const auto c = level("const", [](double) { return AdequacyOutcome{7.0, 3.0}; }, CostKind::ExactYear);
    const auto r = run_plain_mc(c, uniform_scenario, CostKind::SampleYear, 50, 5, Executor(1),
                                Clock::synthetic(unit_costs()));
    EXPECT_EQ(r.estimate[0], 7.0);
    EXPECT_EQ(r.estimate[1], 3.0);
    EXPECT_EQ(r.variance[0], 0.0);
}

TEST(Estimator, PilotRecoversAnalyticVariances)
{
    // Var(x) = 1/12, Var(0.1 x^2) = 0.01 (1/5 - 1/9).
    const auto stats = pilot(quadratic_toy(), 200000, 6, Executor(1), Clock::synthetic(unit_costs()));
    EXPECT_NEAR(stats[0].sigma[0] * stats[0].sigma[0], 1.0 / 12.0, 0.01 / 12.0);
    EXPECT_NEAR(stats[1].sigma[0] * stats[1].sigma[0], 0.01 * 4.0 / 45.0, 0.01 * 0.04 / 45.0);
    EXPECT_NEAR(stats[0].mean[0], 0.5, 0.005);
    EXPECT_NEAR(stats[1].mean[0], 0.1 / 3.0, 0.0005);
    EXPECT_DOUBLE_EQ(stats[0].tau, 1.0);
    EXPECT_DOUBLE_EQ(stats[1].tau, 4.0);
}

TEST(Estimator, BudgetRunIsUnbiasedAndWithinBudget)
{
    BudgetPlan plan;
    plan.t_sim = 5000.0;
    plan.n_pilot = 50;
    plan.primary = Metric::Lole;
    const Clock clock = Clock::synthetic(unit_costs());
    const auto r = estimate_with_budget(quadratic_toy(), plan, 7, Executor(1), clock);
    EXPECT_LE(r.t_sim, plan.t_sim * (1 + 1e-12));
    EXPECT_DOUBLE_EQ(r.t_pilot, 50.0 * (1.0 + 4.0));
    EXPECT_NEAR(r.estimate[0], 0.5 + 0.1 / 3.0, 4.0 * r.std_error[0]);
    EXPECT_GT(r.allocation[0], r.allocation[1]);
}

TEST(Estimator, ResultsDoNotDependOnThreadCount)
{
    BudgetPlan plan;
    plan.t_sim = 3000.0;
    plan.n_pilot = 40;
    const Clock clock = Clock::synthetic(unit_costs());
    const auto a = estimate_with_budget(quadratic_toy(), plan, 8, Executor(1), clock);
    const auto b = estimate_with_budget(quadratic_toy(), plan, 8, Executor(4), clock);
    EXPECT_EQ(a.estimate, b.estimate);
    EXPECT_EQ(a.variance, b.variance);
    EXPECT_EQ(a.allocation, b.allocation);
}

TEST(Estimator, NonFiniteOutputIsRejected)
{
    Hierarchy h = quadratic_toy();
    h.levels[1] = level("nan", [](double) {
        return AdequacyOutcome{std::numeric_limits<double>::quiet_NaN(), 0.0};
    }, CostKind::ExactYear);
    EXPECT_THROW(pilot(h, 10, 9, Executor(1), Clock::synthetic(unit_costs())), std::runtime_error);
    EXPECT_THROW(pilot(quadratic_toy(), 1, 9, Executor(1), Clock::synthetic(unit_costs())),
                 std::invalid_argument);
}

TEST(Estimator, OptimalSpeedMatchesAllocatedVarianceAsymptotically)
{
    const auto stats = pilot(quadratic_toy(), 2000, 10, Executor(1), Clock::synthetic(unit_costs()));
    const double t = 1e6;
    const auto n = allocate_samples(stats, t, Metric::Lole);
    std::vector<double> sigma{stats[0].sigma[0], stats[1].sigma[0]};
    const double v = predicted_variance(sigma, n);
    const double q = 0.5;
    EXPECT_NEAR(speed(q, v, t) / optimal_speed(q, stats, Metric::Lole), 1.0, 1e-3);
}
