#include <gtest/gtest.h>

#include <sstream>

#include "corrdiff/harness.hpp"

using namespace corrdiff;

namespace {

AnalysisOptions small_options() {
    AnalysisOptions opt;
    opt.ws = {0, 1};
    opt.b_ad = 40;
    opt.b_np = 99;
    return opt;
}

} // namespace

TEST(AnalyzeDataset, ProducesEveryTestUnderEveryRegime) {
    const auto data = gen_iid({15, 40, 3}, 0);
    const auto res = analyze_dataset(data, small_options());
    EXPECT_EQ(res.m, 105u);
    ASSERT_EQ(res.outcomes.size(), 12u);
    for (const auto& o : res.outcomes) {
        EXPECT_TRUE(o.ok()) << o.label() << ": " << o.error;
        EXPECT_GE(o.p_value, 0.0);
        EXPECT_LE(o.p_value, 1.0);
    }
    EXPECT_TRUE(std::isfinite(res.theta_hat));
    const auto* e1 = res.find(StatisticKind::Exceedance, NullRegime::NP, 1);
    ASSERT_NE(e1, nullptr);
    EXPECT_EQ(e1->w, 1);
    EXPECT_LE(e1->u, math::normal_upper_quantile(0.05));
}

TEST(AnalyzeDataset, AdAndNpShareTheSameObservedStatistic) {
    const auto data = gen_iid({10, 30, 1}, 4);
    const auto res = analyze_dataset(data, small_options());
    for (auto kind : {StatisticKind::Squares, StatisticKind::Max}) {
        EXPECT_EQ(res.find(kind, NullRegime::AI)->statistic, res.find(kind, NullRegime::NP)->statistic);
        EXPECT_EQ(res.find(kind, NullRegime::AD)->statistic, res.find(kind, NullRegime::NP)->statistic);
    }
}

TEST(AnalyzeDataset, FixedThresholdIsUsed) {
    auto opt = small_options();
    opt.u = 1.25;
    const auto res = analyze_dataset(gen_iid({10, 30, 1}, 0), opt);
    EXPECT_EQ(res.find(StatisticKind::Exceedance, NullRegime::AI, 0)->u, 1.25);
    EXPECT_EQ(res.find(StatisticKind::Exceedance, NullRegime::AI, 1)->u, 1.25);
}

TEST(AnalyzeDataset, IdenticalConditionsGiveMinimalStatisticsAndUnitNpPvalues) {
    const auto base = gen_iid({8, 25, 2}, 0);
    const PairedDataset data(base.x, base.x);
    const auto res = analyze_dataset(data, small_options());
    for (const auto& o : res.outcomes) {
        EXPECT_EQ(o.statistic, 0.0) << o.label();
        if (o.regime == NullRegime::NP) EXPECT_EQ(o.p_value, 1.0) << o.label();
    }
    // Every replicate is zero too, so the fitted squares null has zero
    // variance: recorded, not thrown.
    EXPECT_FALSE(res.find(StatisticKind::Squares, NullRegime::AD)->ok());
    // Zero replicates put the fitted sd at the analytic mean: observed 0 is z = -1.
    EXPECT_NEAR(res.find(StatisticKind::Exceedance, NullRegime::AD, 0)->p_value, math::normal_cdf(1.0), 1e-12);
}

TEST(AnalyzeDataset, RejectsBadOptions) {
    auto opt = small_options();
    opt.ws = {2};
    EXPECT_THROW(analyze_dataset(gen_iid({5, 20, 1}, 0), opt), ValidationError);
    opt = small_options();
    opt.b_ad = 10;
    EXPECT_THROW(analyze_dataset(gen_iid({5, 20, 1}, 0), opt), ValidationError);
}

TEST(Harness, NeedsAtLeastOneHundredReplicates) {
    EXPECT_THROW(run_harness(IidModelConfig{5, 20, 1}, small_options(), 99), ValidationError);
}

TEST(Harness, ReportIsDeterministicAcrossThreadCounts) {
    auto opt = small_options();
    const auto a = run_harness(IidModelConfig{8, 30, 6}, opt, 100, 1);
    const auto b = run_harness(IidModelConfig{8, 30, 6}, opt, 100, 3);
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t k = 0; k < a.rows.size(); ++k) {
        EXPECT_EQ(a.rows[k].rejection_rate, b.rows[k].rejection_rate);
        for (std::size_t r = 0; r < a.rows[k].pvalues.size(); ++r) {
            const double x = a.rows[k].pvalues[r], y = b.rows[k].pvalues[r];
            EXPECT_TRUE(x == y || (std::isnan(x) && std::isnan(y)));
        }
    }
    EXPECT_EQ(a.mean_theta_hat, b.mean_theta_hat);
    for (const auto& row : a.rows) {
        EXPECT_GE(row.rejection_rate, 0.0);
        EXPECT_LE(row.rejection_rate, 1.0);
        EXPECT_EQ(row.pvalues.size(), 100u);
    }
}

TEST(Harness, TsvLayout) {
    auto opt = small_options();
    opt.ws = {0};
    const auto rep = run_harness(IidModelConfig{6, 25, 2}, opt, 100, 0);
    std::ostringstream os;
    write_harness_tsv(os, {rep});
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "model\ttest\tregime\tsize\tpower\tks_p\ttheta_hat\treps\tseed");
    int rows = 0;
    while (std::getline(is, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 8);
        EXPECT_EQ(line.rfind("iid\t", 0), 0u);
        EXPECT_NE(line.find("\tNA\t"), std::string::npos); // power is NA under H0
    }
    EXPECT_EQ(rows, 9);
}

TEST(Harness, AlternativeReportsPowerColumn) {
    SparseModelConfig cfg;
    cfg.hypothesis = Hypothesis::H1;
    cfg.p = 40;
    cfg.n = 60;
    auto opt = small_options();
    opt.ai = opt.ad = false;
    opt.exceed = false;
    const auto rep = run_harness(cfg, opt, 100, 0);
    std::ostringstream os;
    write_harness_tsv(os, {rep}, false);
    EXPECT_EQ(os.str().rfind("sparse\tS\tNP\tNA\t", 0), 0u);
}

TEST(Harness, AdAndNpPvaluesAgreeOnDenseModel) {
    AnalysisOptions opt;
    opt.exceed = false;
    opt.ai = false;
    const auto rep = run_harness(DenseModelConfig{}, opt, 100, 0);
    for (auto kind : {StatisticKind::Squares, StatisticKind::Max}) {
        const auto& ad = rep.row(kind, NullRegime::AD).pvalues;
        const auto& np = rep.row(kind, NullRegime::NP).pvalues;
        EXPECT_GE(math::pearson(ad, np), 0.9) << to_string(kind);
    }
}
