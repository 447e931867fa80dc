#include "ramc/parallel.hpp"
#include "ramc/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

using namespace ramc;

TEST(Rng, SameKeySameSequence)
{
    Stream a(42, Purpose::MarginYear, 7);
    Stream b(42, Purpose::MarginYear, 7);
    for (int i = 0; i < 1000; ++i) {
        ASSERT_EQ(a(), b());
    }
}

TEST(Rng, DerivedKeysAreDistinct)
{
    std::set<std::uint64_t> keys;
    for (std::uint64_t parent : {0ULL, 1ULL, 2ULL}) {
        for (auto purpose : {Purpose::MarginYear, Purpose::MarginDay, Purpose::Pool}) {
            for (std::uint64_t i = 0; i < 1000; ++i) {
                keys.insert(derive_key(parent, purpose, i));
            }
        }
    }
    EXPECT_EQ(keys.size(), 9000u);
}

TEST(Rng, UniformStaysInUnitInterval)
{
    Stream s(3);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = s.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST(Rng, BelowIsBoundedAndRoughlyUniform)
{
    Stream s(9);
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) {
        const auto k = s.below(7);
        ASSERT_LT(k, 7u);
        ++counts[k];
    }
    // Binomial(n, 1/7) oracle, 5 sigma.
    const double sd = std::sqrt(n * (1.0 / 7.0) * (6.0 / 7.0));
    for (int c : counts) {
        EXPECT_NEAR(c, n / 7.0, 5.0 * sd);
    }
}

TEST(Rng, NormalMoments)
{
    Stream s(11);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = s.normal();
        sum += x;
        sq += x * x;
    }
    EXPECT_NEAR(sum / n, 0.0, 5.0 / std::sqrt(n));
    EXPECT_NEAR(sq / n, 1.0, 5.0 * std::sqrt(2.0 / n));
}

TEST(Rng, GeometricMean)
{
    // Trials up to and including the first success: mean 1 / p, variance (1 - p) / p^2.
    Stream s(5);
    const double p = 0.2;
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        sum += static_cast<double>(s.geometric(p));
    }
    const double sd = std::sqrt((1.0 - p) / (p * p) / n);
    EXPECT_NEAR(sum / n, 1.0 / p, 5.0 * sd);
}

TEST(Executor, ResultsIndependentOfThreadCount)
{
    auto fill = [](unsigned threads) {
        std::vector<double> out(1000);
        Executor(threads).for_each_index(out.size(), [&](std::size_t i) {
            Stream s(77, Purpose::Pool, i);
            out[i] = s.uniform();
        });
        return out;
    };
    EXPECT_EQ(fill(1), fill(4));
    EXPECT_EQ(fill(1), fill(13));
}

TEST(Executor, PropagatesExceptions)
{
    Executor ex(3);
    EXPECT_THROW(ex.for_each_index(10,
                                   [](std::size_t i) {
                                       if (i == 6) {
                                           throw std::runtime_error("boom");
                                       }
                                   }),
                 std::runtime_error);
}
