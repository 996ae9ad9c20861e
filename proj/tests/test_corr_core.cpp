#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "corrdiff/corr_core.hpp"
#include "corrdiff/math.hpp"
#include "test_helpers.hpp"

using namespace corrdiff;

TEST(FisherTransform, KnownValues) {
    EXPECT_EQ(fisher_transform(0.0), 0.0);
    EXPECT_NEAR(fisher_transform(0.5), 0.549306144334054845697622618461, 1e-15);
    EXPECT_NEAR(fisher_transform(-0.5), -0.549306144334054845697622618461, 1e-15);
}

TEST(FisherTransform, RejectsBoundary) {
    EXPECT_THROW(fisher_transform(1.0), DomainError);
    EXPECT_THROW(fisher_transform(-1.0), DomainError);
    EXPECT_THROW(fisher_transform(1.5), DomainError);
    EXPECT_THROW(fisher_transform(std::nan("")), DomainError);
}

TEST(FisherTransform, InvertsTanh) {
    for (double z = -0.999; z < 0.999; z += 0.0137) {
        EXPECT_NEAR(fisher_transform(std::tanh(std::atanh(z))), std::atanh(z), 1e-12);
        EXPECT_NEAR(std::tanh(fisher_transform(z)), z, 1e-12);
    }
}

TEST(PairIndexSet, LexicographicLayout) {
    PairIndexSet idx(4);
    ASSERT_EQ(idx.size(), 6u);
    const std::vector<VariablePair> want{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    for (std::size_t k = 0; k < idx.size(); ++k) {
        EXPECT_EQ(idx[k], want[k]);
        EXPECT_EQ(idx.index_of(want[k].first, want[k].second), k);
    }
}

TEST(PearsonCorrelations, TextbookThreeRowInstance) {
    // n = 3 is below the Fisher minimum, so the correlation kernel is
    // exercised directly against the textbook formula.
    Eigen::MatrixXd z(3, 2);
    z << 1, 2, 2, 4, 4, 5;
    const std::vector<double> a{1, 2, 4}, b{2, 4, 5};
    Eigen::MatrixXd r;
    detail::CorrelationWorkspace ws;
    ASSERT_EQ(detail::joint_correlation(z, r, ws), -1);
    EXPECT_NEAR(r(0, 1), 13.0 / 14.0, 1e-14);
    EXPECT_NEAR(r(0, 1), math::pearson(a, b), 1e-14);
    EXPECT_EQ(r(0, 1), r(1, 0));
}

TEST(PearsonCorrelations, PerfectAndAntiCorrelation) {
    StreamRng rng(1, {});
    Eigen::MatrixXd x = testutil::normal_matrix(20, 3, rng);
    Eigen::MatrixXd y = testutil::normal_matrix(20, 3, rng);
    x.col(2) = x.col(0);
    y.col(1) = -y.col(0);
    auto est = pearson_correlations(PairedDataset(x, y));
    EXPECT_NEAR(est.r1(0, 2), 1.0, 1e-14);
    EXPECT_NEAR(est.r2(0, 1), -1.0, 1e-14);
    for (Eigen::Index i = 0; i < 3; ++i) {
        EXPECT_EQ(est.r1(i, i), 1.0);
        EXPECT_EQ(est.r2(i, i), 1.0);
    }
    EXPECT_TRUE((est.r1.array().abs() <= 1.0).all());
    EXPECT_TRUE(est.r1 == est.r1.transpose());
}

TEST(PearsonCorrelations, ZeroVarianceNamesGene) {
    StreamRng rng(2, {});
    Eigen::MatrixXd x = testutil::normal_matrix(10, 3, rng);
    Eigen::MatrixXd y = testutil::normal_matrix(10, 3, rng);
    y.col(1).setConstant(4.0);
    try {
        pearson_correlations(PairedDataset(x, y, {"A", "B", "C"}));
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("'B'"), std::string::npos);
    }
}

TEST(PearsonCorrelations, AffineInvariance) {
    StreamRng rng(3, {});
    Eigen::MatrixXd x = testutil::normal_matrix(30, 5, rng);
    Eigen::MatrixXd y = testutil::normal_matrix(30, 5, rng);
    auto base = pearson_correlations(PairedDataset(x, y));
    x.col(2) = x.col(2) * 7.5 + Eigen::VectorXd::Constant(30, -3.0);
    y.col(4) = y.col(4) * 0.01 + Eigen::VectorXd::Constant(30, 100.0);
    auto moved = pearson_correlations(PairedDataset(x, y));
    EXPECT_LT((base.r1 - moved.r1).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((base.r2 - moved.r2).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((base.r12 - moved.r12).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PairedDataset, Validation) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Random(5, 3);
    EXPECT_THROW(PairedDataset(a, Eigen::MatrixXd::Random(5, 4)), ValidationError);
    EXPECT_THROW(PairedDataset(Eigen::MatrixXd::Random(3, 3), Eigen::MatrixXd::Random(3, 3)), ValidationError);
    EXPECT_THROW(PairedDataset(a, a, {"only-one"}), ValidationError);
}

TEST(PsiCross, IdentityGivesZero) {
    const Eigen::MatrixXd r = Eigen::MatrixXd::Identity(6, 6);
    EXPECT_EQ(psi_cross(r, {0, 1}, {2, 3}), 0.0);
    EXPECT_EQ(psi_cross(r, {0, 1}, {1, 2}), 0.0);
}

TEST(PsiCross, SelfCorrelationIsOne) {
    StreamRng rng(4, {});
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd r = testutil::random_correlation(5, rng);
        for (std::size_t a = 0; a < 5; ++a)
            for (std::size_t b = a + 1; b < 5; ++b) EXPECT_NEAR(psi_cross(r, {a, b}, {a, b}), 1.0, 1e-12);
    }
}

TEST(PsiCross, SymmetricInArguments) {
    StreamRng rng(5, {});
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::MatrixXd r = testutil::random_correlation(6, rng);
        const VariablePair s{0, 3}, t{2, 5};
        EXPECT_EQ(psi_cross(r, s, t), psi_cross(r, t, s));
    }
}

TEST(PsiCross, DegenerateDenominator) {
    Eigen::MatrixXd r = Eigen::MatrixXd::Identity(4, 4);
    r(0, 1) = r(1, 0) = 1.0;
    EXPECT_THROW(psi_cross(r, {0, 1}, {2, 3}), DegenerateError);
}

namespace {
// The denominator exactly as printed, (1 - r_hl^2)(1 - r_jl^2).
double psi_printed(const Eigen::MatrixXd& r, int h, int i, int j, int l) {
    auto om = [&r](int a, int b, int c) { return r(a, b) - r(a, c) * r(c, b); };
    const double num = (om(h, j, i) * om(i, l, j) + om(h, j, l) * om(i, l, h) + om(h, l, i) * om(i, j, l) +
                        om(h, l, j) * om(i, j, h)) / 2.0;
    return num / ((1 - r(h, l) * r(h, l)) * (1 - r(j, l) * r(j, l)));
}
} // namespace

TEST(PsiCross, MonteCarloOracle) {
    StreamRng rng(6, {});
    const Eigen::MatrixXd r = testutil::random_correlation(4, rng);
    const int reps = 100000;
    const int n = 500;
    Eigen::LLT<Eigen::MatrixXd> llt(r);
    const Eigen::MatrixXd l = llt.matrixL();
    std::vector<double> g1(reps), g2(reps);
    Eigen::MatrixXd z(n, 4), c;
    for (int b = 0; b < reps; ++b) {
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < 4; ++k) z(i, k) = rng.normal();
        Eigen::MatrixXd y = z * l.transpose();
        y.rowwise() -= y.colwise().mean();
        c = y.transpose() * y;
        g1[b] = std::atanh(c(0, 1) / std::sqrt(c(0, 0) * c(1, 1)));
        g2[b] = std::atanh(c(2, 3) / std::sqrt(c(2, 2) * c(3, 3)));
    }
    const double mc = math::pearson(g1, g2);
    const double psi = psi_cross(r, {0, 1}, {2, 3});
    RecordProperty("printed_denominator", std::to_string(psi_printed(r, 0, 1, 2, 3)));
    EXPECT_NEAR(psi, mc, 0.02) << "printed-denominator value " << psi_printed(r, 0, 1, 2, 3);
}

TEST(StandardizedDifferences, IdenticalConditionsGiveZero) {
    StreamRng rng(7, {});
    Eigen::MatrixXd x = testutil::normal_matrix(25, 6, rng);
    auto sd = standardized_differences(PairedDataset(x, x));
    for (std::size_t t = 0; t < sd.size(); ++t) {
        EXPECT_EQ(sd.d[t], 0.0);
        EXPECT_LT(sd.psi12_diag[t], 1.0);
    }
}

TEST(StandardizedDifferences, IndependentConditionsReduceToRootTwo) {
    // Exact zero cross-correlation: y rows are an orthogonal rearrangement
    // chosen so that r12 = 0, hence psi12 = 0 and d = (u2 - u1)/sqrt(2).
    CorrelationEstimates est;
    est.n = 50;
    est.r1 = Eigen::MatrixXd::Identity(3, 3);
    est.r2 = Eigen::MatrixXd::Identity(3, 3);
    est.r1(0, 1) = est.r1(1, 0) = 0.3;
    est.r2(0, 2) = est.r2(2, 0) = -0.4;
    est.r2(1, 2) = est.r2(2, 1) = 0.1;
    est.r12 = Eigen::MatrixXd::Zero(3, 3);
    auto sd = standardized_differences(est, PairIndexSet(3));
    for (std::size_t t = 0; t < sd.size(); ++t) {
        EXPECT_EQ(sd.psi12_diag[t], 0.0);
        EXPECT_NEAR(sd.d[t], (sd.u2[t] - sd.u1[t]) / std::sqrt(2.0), 1e-15);
    }
    EXPECT_NEAR(sd.u1[0], std::atanh(0.3) * std::sqrt(47.0), 1e-14);
}

TEST(StandardizedDifferences, SwapNegatesExactly) {
    StreamRng rng(8, {});
    for (int trial = 0; trial < 5; ++trial) {
        const Eigen::Index p = 7 + 9 * trial;
        Eigen::MatrixXd x = testutil::normal_matrix(40 + trial * 13, p, rng);
        Eigen::MatrixXd y = 0.6 * x + testutil::normal_matrix(x.rows(), p, rng);
        auto a = standardized_differences(PairedDataset(x, y));
        auto b = standardized_differences(PairedDataset(y, x));
        for (std::size_t t = 0; t < a.size(); ++t) ASSERT_EQ(a.d[t], -b.d[t]) << "pair " << t;
    }
}

TEST(StandardizedDifferences, PerfectCorrelationNamesPair) {
    StreamRng rng(9, {});
    Eigen::MatrixXd x = testutil::normal_matrix(20, 3, rng);
    Eigen::MatrixXd y = testutil::normal_matrix(20, 3, rng);
    x.col(1) = 2.0 * x.col(0);
    try {
        standardized_differences(PairedDataset(x, y));
        FAIL() << "expected DomainError";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("(0, 1)"), std::string::npos);
    }
}

TEST(StandardizedDifferences, UnitVarianceUnderNull) {
    // Paired H0 model with a common R and cross-condition coupling.
    StreamRng rng(10, {});
    const int p = 10, n = 200, reps = 10000;
    const Eigen::MatrixXd r = testutil::random_correlation(p, rng);
    Eigen::MatrixXd joint(2 * p, 2 * p);
    joint << r, 0.5 * r, 0.5 * r, r;
    Eigen::LLT<Eigen::MatrixXd> llt(joint);
    ASSERT_EQ(llt.info(), Eigen::Success);
    const Eigen::MatrixXd l = llt.matrixL();
    const std::size_t m = p * (p - 1) / 2;
    std::vector<math::CompensatedSum> s1(m), s2(m);
    for (int b = 0; b < reps; ++b) {
        Eigen::MatrixXd z = testutil::normal_matrix(n, 2 * p, rng) * l.transpose();
        auto sd = standardized_differences(PairedDataset(z.leftCols(p), z.rightCols(p)));
        for (std::size_t t = 0; t < m; ++t) {
            s1[t].add(sd.d[t]);
            s2[t].add(sd.d[t] * sd.d[t]);
        }
    }
    for (std::size_t t = 0; t < m; ++t) {
        const double mean = s1[t].value() / reps;
        const double var = s2[t].value() / reps - mean * mean;
        EXPECT_GE(var, 0.9) << "pair " << t;
        EXPECT_LE(var, 1.1) << "pair " << t;
    }
}

TEST(StandardizedDifferences, DiagonalCovarianceUnderIdentity) {
    StreamRng rng(11, {});
    const int p = 4, n = 100, reps = 4000;
    const std::size_t m = 6;
    std::vector<std::vector<double>> draws(m, std::vector<double>(reps));
    for (int b = 0; b < reps; ++b) {
        auto sd = standardized_differences(
            PairedDataset(testutil::normal_matrix(n, p, rng), testutil::normal_matrix(n, p, rng)));
        for (std::size_t t = 0; t < m; ++t) draws[t][b] = sd.d[t];
    }
    // sd of a null sample correlation is about 1/sqrt(reps) = 0.016.
    for (std::size_t s = 0; s < m; ++s)
        for (std::size_t t = s + 1; t < m; ++t) EXPECT_LT(std::abs(math::pearson(draws[s], draws[t])), 0.06);
}
