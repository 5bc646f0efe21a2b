#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "tse/factors.hpp"

using namespace tse;

namespace {

// Moment oracle: direct enumeration over the n+1 outcomes, no shortcuts.
void expect_valid_moments(const FactorDistribution& f, double tol) {
    double psum = 0.0;
    for (double p : f.probs) {
        EXPECT_GT(p, 0.0);
        psum += p;
    }
    EXPECT_NEAR(psum, 1.0, tol);
    for (int i = 0; i < f.n; ++i) {
        double mean = 0.0;
        for (int s = 0; s <= f.n; ++s) mean += f.probs[s] * f.outcomes[s](i);
        EXPECT_NEAR(mean, 0.0, tol) << "component " << i;
        for (int j = 0; j < f.n; ++j) {
            double cov = 0.0;
            for (int s = 0; s <= f.n; ++s)
                cov += f.probs[s] * f.outcomes[s](i) * f.outcomes[s](j);
            EXPECT_NEAR(cov, i == j ? f.dt : 0.0, tol) << "cov(" << i << "," << j << ")";
        }
    }
}

OrthogonalSpec random_orthogonal(int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd a(n + 1, n + 1);
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j) a(i, j) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ();
    for (int j = 0; j <= n; ++j)
        if (q(0, j) <= 0.0) q.col(j) = -q.col(j);  // column flips keep orthogonality
    return OrthogonalSpec{q};
}

}  // namespace

TEST(BinaryHoLee, UnitStepOutcomes) {
    FactorDistribution f = binary_ho_lee(1.0);
    ASSERT_EQ(f.n, 1);
    EXPECT_DOUBLE_EQ(f.outcomes[0](0), 1.0);
    EXPECT_DOUBLE_EQ(f.outcomes[1](0), -1.0);
    EXPECT_DOUBLE_EQ(f.probs[0], 0.5);
    EXPECT_DOUBLE_EQ(f.probs[1], 0.5);
}

TEST(BinaryHoLee, QuarterStepOutcomes) {
    FactorDistribution f = binary_ho_lee(0.25);
    EXPECT_DOUBLE_EQ(f.outcomes[0](0), 0.5);
    EXPECT_DOUBLE_EQ(f.outcomes[1](0), -0.5);
}

TEST(BinaryHoLee, CovarianceEqualsDtByEnumeration) {
    for (double dt : {1.0, 0.25, 1.0 / 12.0, 0.01}) {
        FactorDistribution f = binary_ho_lee(dt);
        double cov = f.probs[0] * f.outcomes[0](0) * f.outcomes[0](0) +
                     f.probs[1] * f.outcomes[1](0) * f.outcomes[1](0);
        EXPECT_NEAR(cov, dt, 1e-15);
    }
}

TEST(BinaryHoLee, RejectsNonPositiveStep) {
    EXPECT_THROW(binary_ho_lee(0.0), ValidationError);
    EXPECT_THROW(binary_ho_lee(-1.0), ValidationError);
}

TEST(FromOrthogonalMatrix, ClassicalTwoByTwo) {
    const double r = 1.0 / std::sqrt(2.0);
    OrthogonalSpec spec;
    spec.m.resize(2, 2);
    spec.m << r, r, r, -r;
    FactorDistribution f = from_orthogonal_matrix(spec, 1.0);
    EXPECT_NEAR(f.probs[0], 0.5, 1e-15);
    EXPECT_NEAR(f.probs[1], 0.5, 1e-15);
    EXPECT_NEAR(f.outcomes[0](0), 1.0, 1e-15);
    EXPECT_NEAR(f.outcomes[1](0), -1.0, 1e-15);
}

TEST(FromOrthogonalMatrix, EqualProbabilityThreeState) {
    OrthogonalSpec spec = equal_probability_spec(2);
    for (int j = 0; j <= 2; ++j) EXPECT_NEAR(spec.m(0, j), 1.0 / std::sqrt(3.0), 1e-15);
    FactorDistribution f = from_orthogonal_matrix(spec, 0.25);
    for (double p : f.probs) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
    expect_valid_moments(f, 1e-12);
}

TEST(FromOrthogonalMatrix, RejectsNonPositiveFirstRow) {
    OrthogonalSpec spec;
    spec.m = Eigen::MatrixXd::Identity(3, 3);  // zero entries in the first row
    EXPECT_THROW(from_orthogonal_matrix(spec, 1.0), ValidationError);
}

TEST(FromOrthogonalMatrix, RejectsNonOrthogonal) {
    OrthogonalSpec spec;
    spec.m.resize(2, 2);
    spec.m << 0.9, 0.6, 0.5, -0.5;
    try {
        from_orthogonal_matrix(spec, 1.0);
        FAIL() << "expected rejection";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("max |M M^T - I|"), std::string::npos);
    }
}

TEST(FromOrthogonalMatrix, MomentInvariantsForRandomSpecs) {
    for (int n = 1; n <= 5; ++n)
        for (unsigned seed : {7u, 19u, 40u}) {
            FactorDistribution f = from_orthogonal_matrix(random_orthogonal(n, seed), 0.5);
            expect_valid_moments(f, 1e-12);
            MomentReport r = validate_moments(f);
            EXPECT_LE(r.worst(), 1e-12);
            EXPECT_GT(r.distinct_sep, 0.0);
            EXPECT_GT(r.span_sigma_min, 1e-8);
        }
}

TEST(FromOrthogonalMatrix, MatrixRoundTrip) {
    for (unsigned seed : {3u, 11u}) {
        FactorDistribution f = from_orthogonal_matrix(random_orthogonal(3, seed), 0.25);
        OrthogonalSpec back = to_orthogonal_matrix(f);
        EXPECT_LE(back.orthogonality_deviation(), 1e-10);
        for (int j = 0; j <= 3; ++j) EXPECT_GT(back.m(0, j), 0.0);
    }
}

TEST(FromOrthogonalMatrix, OrthonormalSystemUnderExpectationInnerProduct) {
    // {1, dw^1/sqrt(dt), ...} orthonormal under <x,y> = E[xy]
    FactorDistribution f = from_orthogonal_matrix(random_orthogonal(4, 23u), 2.0);
    const double root_dt = std::sqrt(f.dt);
    for (int i = 0; i <= f.n; ++i)
        for (int j = i; j <= f.n; ++j) {
            double ip = 0.0;
            for (int s = 0; s <= f.n; ++s) {
                double xi = i == 0 ? 1.0 : f.outcomes[s](i - 1) / root_dt;
                double xj = j == 0 ? 1.0 : f.outcomes[s](j - 1) / root_dt;
                ip += f.probs[s] * xi * xj;
            }
            EXPECT_NEAR(ip, i == j ? 1.0 : 0.0, 1e-12) << i << "," << j;
        }
}

TEST(ValidateMoments, FlagsBiasedMean) {
    FactorDistribution f;
    f.n = 1;
    f.dt = 1.0;
    f.probs = {0.6, 0.4};
    f.outcomes = {Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, -1.0)};
    MomentReport r = validate_moments(f);
    EXPECT_NEAR(r.mean_dev, 0.2, 1e-15);  // 0.6 - 0.4
}

TEST(ValidateMoments, ExactForBinary) {
    MomentReport r = validate_moments(binary_ho_lee(1.0));
    EXPECT_EQ(r.prob_sum_dev, 0.0);
    EXPECT_EQ(r.mean_dev, 0.0);
    EXPECT_EQ(r.cov_dev, 0.0);
}

TEST(MatrixFile, ReadsWhitespaceSeparatedRows) {
    std::string path = testing::TempDir() + "tse_matrix.txt";
    {
        std::ofstream out(path);
        out.precision(17);
        const double r = 1.0 / std::sqrt(2.0);
        out << r << " " << r << "\n" << r << " " << -r << "\n";
    }
    OrthogonalSpec spec = read_matrix_file(path);
    FactorDistribution f = from_orthogonal_matrix(spec, 1.0);
    EXPECT_NEAR(f.probs[0], 0.5, 1e-12);
}

TEST(MatrixFile, RejectsRaggedRows) {
    std::string path = testing::TempDir() + "tse_matrix_bad.txt";
    {
        std::ofstream out(path);
        out << "1 0\n0\n";
    }
    EXPECT_THROW(read_matrix_file(path), ValidationError);
}

TEST(FactorLimits, RejectsTooManyFactors) {
    EXPECT_THROW(equal_probability_spec(kMaxFactors + 1), ValidationError);
}
