#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "corrdiff/corr_core.hpp"
#include "corrdiff/math.hpp"
#include "corrdiff/perm_engine.hpp"
#include "test_helpers.hpp"

using namespace corrdiff;

namespace {

PairedDataset coupled_dataset(std::uint64_t seed, Eigen::Index n, Eigen::Index p) {
    StreamRng rng(seed, {});
    Eigen::MatrixXd x = testutil::normal_matrix(n, p, rng);
    Eigen::MatrixXd y = 0.5 * x + testutil::normal_matrix(n, p, rng);
    return PairedDataset(x, y);
}

ReplicateMatrix from_rows(const Eigen::MatrixXd& rows) {
    ReplicateMatrix rep;
    rep.dtilde = rows;
    rep.b = static_cast<std::size_t>(rows.rows());
    return rep;
}

} // namespace

TEST(PairedPermute, ForcedMasks) {
    const auto data = coupled_dataset(31, 30, 8);
    const auto observed = standardized_differences(data);
    auto rep = paired_permute_masks(data, {SwapMask(30, 0), SwapMask(30, 1)});
    for (std::size_t t = 0; t < rep.m(); ++t) {
        EXPECT_EQ(rep.row(0)[t], observed.d[t]);
        EXPECT_EQ(rep.row(1)[t], -observed.d[t]);
    }
}

TEST(PairedPermute, DeterministicAcrossRunsAndWorkers) {
    const auto data = coupled_dataset(32, 40, 10);
    auto a = paired_permute(data, 50, 77, 1);
    auto b = paired_permute(data, 50, 77, 1);
    auto c = paired_permute(data, 50, 77, 4);
    EXPECT_TRUE(a.dtilde == b.dtilde);
    EXPECT_TRUE(a.dtilde == c.dtilde);
    EXPECT_EQ(a.swap_masks, c.swap_masks);
    auto s1 = permutation_summaries(data, 50, 77, {{1.0, 0}}, 1);
    auto s3 = permutation_summaries(data, 50, 77, {{1.0, 0}}, 3);
    EXPECT_EQ(s1.sum_d2, s3.sum_d2);
    EXPECT_EQ(s1.max_abs, s3.max_abs);
    EXPECT_EQ(s1.t_exceed, s3.t_exceed);
    auto direct = summarize_replicates(a, {{1.0, 0}});
    EXPECT_EQ(direct.sum_d2, s1.sum_d2);
    EXPECT_EQ(direct.t_exceed, s1.t_exceed);
}

TEST(PairedPermute, MasksAreFairCoins) {
    std::size_t ones = 0;
    for (std::size_t i = 0; i < 200; ++i)
        for (auto bit : swap_mask(100, 5, 0, i)) ones += bit;
    EXPECT_NEAR(static_cast<double>(ones) / 20000.0, 0.5, 0.015);
}

TEST(PairedPermute, ReplicatesSymmetricAboutZero) {
    const auto data = coupled_dataset(33, 40, 8);
    auto rep = paired_permute(data, 1000, 3);
    std::size_t ok = 0;
    for (std::size_t t = 0; t < rep.m(); ++t) {
        std::vector<double> col(rep.b);
        for (std::size_t i = 0; i < rep.b; ++i) col[i] = rep.dtilde(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
        const double sd = std::sqrt(math::sample_variance(col));
        ok += std::abs(math::mean(col)) < 3.0 * sd / std::sqrt(1000.0) ? 1 : 0;
    }
    EXPECT_GE(static_cast<double>(ok), 0.99 * static_cast<double>(rep.m()) - 1.0);
}

TEST(PairedPermute, ExchangeabilityUnderConditionSwap) {
    const auto data = coupled_dataset(34, 40, 8);
    const PairedDataset swapped(data.y, data.x);
    auto a = permutation_summaries(data, 1000, 11, {});
    auto b = permutation_summaries(swapped, 1000, 12, {});
    // two-sample KS via the empirical CDF difference
    auto ta = a.t_squares(), tb = b.t_squares();
    std::sort(ta.begin(), ta.end());
    std::sort(tb.begin(), tb.end());
    double dmax = 0;
    std::size_t i = 0, j = 0;
    while (i < ta.size() && j < tb.size()) {
        if (ta[i] <= tb[j]) ++i; else ++j;
        dmax = std::max(dmax, std::abs(static_cast<double>(i) / 1000.0 - static_cast<double>(j) / 1000.0));
    }
    EXPECT_GT(math::kolmogorov_sf(std::sqrt(500.0) * dmax), 0.01);
}

TEST(ReplicateStatistics, Identities) {
    const auto data = coupled_dataset(35, 30, 7);
    const auto observed = standardized_differences(data);
    auto single = paired_permute_masks(data, {SwapMask(30, 0)});
    EXPECT_EQ(replicate_statistics(single, StatisticKind::Squares)[0], t_squares(observed.d).value);
    EXPECT_EQ(replicate_statistics(single, StatisticKind::Max)[0], t_max(observed.d).value);
    EXPECT_EQ(replicate_statistics(single, StatisticKind::Exceedance, {1.2, 1})[0],
              t_exceed(observed.d, {1.2, 1}).value);
    auto rep = paired_permute(data, 40, 9);
    auto ts = replicate_statistics(rep, StatisticKind::Squares);
    auto te = replicate_statistics(rep, StatisticKind::Exceedance, {0.0, 0});
    for (std::size_t i = 0; i < rep.b; ++i) EXPECT_DOUBLE_EQ(te[i], static_cast<double>(rep.m()) * ts[i]);
}

TEST(SquaresParams, ConstantMatrix) {
    auto p = estimate_squares_params(from_rows(Eigen::MatrixXd::Ones(10, 50)));
    EXPECT_EQ(p.mu2_hat, 1.0);
    EXPECT_EQ(p.mu4_hat, 1.0);
    EXPECT_EQ(p.gamma2bar_hat, 0.0);
    EXPECT_THROW(estimate_squares_params(from_rows(Eigen::MatrixXd::Ones(1, 5))), InsufficientReplicatesError);
}

TEST(SquaresParams, IidOracle) {
    StreamRng rng(36, {});
    auto p = estimate_squares_params(from_rows(testutil::normal_matrix(500, 1000, rng)));
    EXPECT_GE(p.mu2_hat, 0.98);
    EXPECT_LE(p.mu2_hat, 1.02);
    EXPECT_GE(p.mu4_hat, 2.85);
    EXPECT_LE(p.mu4_hat, 3.15);
    EXPECT_LT(std::abs(p.gamma2bar_hat), 0.005);
}

TEST(SquaresParams, EquicorrelatedOracle) {
    StreamRng rng(37, {});
    Eigen::MatrixXd rows(500, 200);
    for (Eigen::Index i = 0; i < 500; ++i) rows.row(i).setConstant(rng.normal());
    auto p = estimate_squares_params(from_rows(rows));
    // Population value var(z^2) = 2; at B = 500 its sampling error is about
    // 0.33, so the 10% check is made against the realized var(z_i^2).
    std::vector<double> z2(500);
    for (Eigen::Index i = 0; i < 500; ++i) z2[static_cast<std::size_t>(i)] = rows(i, 0) * rows(i, 0);
    const double realized = math::sample_variance(z2);
    EXPECT_NEAR(p.gamma2bar_hat / realized, 1.0, 0.1);
    EXPECT_NEAR(p.gamma2bar_hat, 2.0, 4.0 * std::sqrt(56.0 / 500.0));
}

TEST(SquaresParams, InversionReproducesVariance) {
    const auto data = coupled_dataset(38, 30, 9);
    auto s = permutation_summaries(data, 100, 1, {});
    auto p = estimate_squares_params(s);
    EXPECT_NEAR(p.null(s.m).variance(), math::sample_variance(s.t_squares()), 1e-12);
}

TEST(GumbelFit, ConstantMaxima) {
    const std::vector<double> maxima(30, 3.7);
    auto fit = fit_gumbel_null(maxima, 1000);
    EXPECT_DOUBLE_EQ(fit.location, 3.7);
    EXPECT_NEAR(fit.null().cdf(3.7), std::exp(-1.0), 1e-15);
    EXPECT_THROW(fit_gumbel_null(std::vector<double>(19, 1.0), 1000), InsufficientReplicatesError);
}

TEST(GumbelFit, SyntheticGumbelSample) {
    StreamRng rng(39, {});
    // m chosen so sigma(m) = 0.22: 2 log 2m = 1/0.22^2.
    const auto m = static_cast<std::size_t>(std::llround(0.5 * std::exp(0.5 / (0.22 * 0.22))));
    const double scale = gumbel_scale(m);
    std::vector<double> x(2000);
    for (auto& v : x) v = 4.2 - scale * std::log(-std::log(rng.uniform(1e-300, 1.0)));
    auto fit = fit_gumbel_null(x, m);
    EXPECT_GE(fit.location, 4.15);
    EXPECT_LE(fit.location, 4.25);
}

TEST(GumbelFit, IidThetaNearOne) {
    StreamRng rng(40, {});
    auto fit = fit_gumbel_null(from_rows(testutil::normal_matrix(1000, 1000, rng)));
    EXPECT_GE(fit.theta, 0.85);
    EXPECT_LE(fit.theta, 1.0);
}

TEST(ExceedanceVariance, Oracles) {
    StreamRng rng(41, {});
    const ExceedanceConfig cfg{1.5, 0};
    const auto iid = from_rows(testutil::normal_matrix(1000, 1000, rng));
    const double analytic = exceedance_null_ai(1000, cfg).sigma2_mw;
    EXPECT_NEAR(fit_exceedance_variance(iid, cfg) / analytic, 1.0, 0.1);

    Eigen::MatrixXd eq(500, 1000);
    for (Eigen::Index i = 0; i < 500; ++i) {
        const double common = rng.normal();
        for (Eigen::Index t = 0; t < 1000; ++t) eq(i, t) = std::sqrt(0.5) * common + std::sqrt(0.5) * rng.normal();
    }
    EXPECT_GT(fit_exceedance_variance(from_rows(eq), cfg), analytic);

    const double mu = exceedance_null_ai(1000, cfg).mu_mw;
    EXPECT_THROW(fit_exceedance_variance(std::vector<double>(50, mu), mu), DegenerateError);
}
