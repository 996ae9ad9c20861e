#include <algorithm>
#include <vector>

#include <gtest/gtest.h>

#include "corrdiff/random.hpp"
#include "corrdiff/test_stats.hpp"

using namespace corrdiff;

TEST(TSquares, Examples) {
    EXPECT_EQ(t_squares(std::vector<double>{1, 1, 1}).value, 1.0);
    EXPECT_EQ(t_squares(std::vector<double>{0, 0, 0, 0}).value, 0.0);
    EXPECT_DOUBLE_EQ(t_squares(std::vector<double>{1, -2, 3}).value, 14.0 / 3.0);
    EXPECT_THROW(t_squares(std::vector<double>{}), ValidationError);
}

TEST(TMax, Examples) {
    EXPECT_EQ(t_max(std::vector<double>{0.5, -2, 1}).value, 2.0);
    EXPECT_EQ(t_max(std::vector<double>{0}).value, 0.0);
    EXPECT_EQ(t_max(std::vector<double>{-3.5, 3.5}).value, 3.5);
    EXPECT_THROW(t_max(std::vector<double>{}), ValidationError);
}

TEST(TExceed, Examples) {
    const std::vector<double> d{0.5, -2, 1.5};
    auto w1 = t_exceed(d, {1.0, 1});
    EXPECT_DOUBLE_EQ(w1.value, 1.25);
    EXPECT_EQ(w1.n_exceed, 2u);
    EXPECT_DOUBLE_EQ(t_exceed(d, {1.0, 0}).value, 6.25);
    EXPECT_THROW(t_exceed(std::vector<double>{}, {1.0, 0}), ValidationError);
    EXPECT_THROW(t_exceed(d, {-1.0, 0}), ValidationError);
    EXPECT_THROW(t_exceed(d, {1.0, 2}), ValidationError);
}

TEST(TExceed, StrictInequality) {
    const std::vector<double> d{1.0, -1.0, 2.0};
    auto s = t_exceed(d, {1.0, 0});
    EXPECT_EQ(s.n_exceed, 1u);
    EXPECT_EQ(s.value, 4.0);
}

class StatisticProperties : public ::testing::TestWithParam<int> {
protected:
    std::vector<double> draw() {
        StreamRng rng(static_cast<std::uint64_t>(GetParam()), {});
        std::vector<double> d(1 + rng() % 500);
        for (auto& x : d) x = 2.0 * rng.normal();
        return d;
    }
};

TEST_P(StatisticProperties, ExceedAtZeroIsSumOfSquares) {
    auto d = draw();
    EXPECT_DOUBLE_EQ(t_exceed(d, {0.0, 0}).value, static_cast<double>(d.size()) * t_squares(d).value);
}

TEST_P(StatisticProperties, ExceedNonIncreasingInU) {
    auto d = draw();
    for (int w : {0, 1}) {
        double prev = t_exceed(d, {0.0, w}).value;
        for (double u = 0.05; u < 6.0; u += 0.05) {
            const double cur = t_exceed(d, {u, w}).value;
            EXPECT_LE(cur, prev);
            prev = cur;
        }
    }
}

TEST_P(StatisticProperties, PermutationAndSignInvariance) {
    auto d = draw();
    auto e = d;
    std::reverse(e.begin(), e.end());
    std::rotate(e.begin(), e.begin() + static_cast<long>(e.size() / 3), e.end());
    auto f = d;
    for (auto& x : f) x = -x;
    EXPECT_DOUBLE_EQ(t_squares(d).value, t_squares(e).value);
    EXPECT_EQ(t_squares(d).value, t_squares(f).value);
    EXPECT_EQ(t_max(d).value, t_max(e).value);
    EXPECT_EQ(t_max(d).value, t_max(f).value);
    for (int w : {0, 1}) {
        EXPECT_DOUBLE_EQ(t_exceed(d, {1.3, w}).value, t_exceed(e, {1.3, w}).value);
        EXPECT_EQ(t_exceed(d, {1.3, w}).value, t_exceed(f, {1.3, w}).value);
    }
}

TEST_P(StatisticProperties, MaxBelowThresholdMeansNoExceedance) {
    auto d = draw();
    const double mx = t_max(d).value;
    for (int w : {0, 1}) {
        EXPECT_EQ(t_exceed(d, {mx, w}).value, 0.0);
        EXPECT_EQ(t_exceed(d, {mx + 0.5, w}).value, 0.0);
    }
}

INSTANTIATE_TEST_SUITE_P(Random, StatisticProperties, ::testing::Range(1, 21));
