/*
 * Copyright 2026 The satl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "satl/kernels.hpp"

using namespace satl;

namespace {

Eigen::RowVectorXd pt(double x) {
    Eigen::RowVectorXd p(1);
    p(0) = x;
    return p;
}

Points random_points(int n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Points x(n, 1);
    for (int i = 0; i < n; ++i) { x(i, 0) = u(eng); }
    return x;
}

}  // namespace

TEST(GaussianKernel, UnitAtZeroDistance) { EXPECT_DOUBLE_EQ(GaussianKernel(1.0)(pt(0), pt(0)), 1.0); }

TEST(GaussianKernel, UnitBandwidthAtDistanceOne) { EXPECT_NEAR(GaussianKernel(1.0)(pt(0), pt(1)), std::exp(-0.5), 1e-15); }

TEST(GaussianKernel, MatchesLongDoubleClosedForm) {
    // exp(-(0.4)^2 / (2 * 0.2^2)) evaluated in extended precision
    const long double r = 0.7L - 0.3L;
    const long double l = 0.2L;
    const long double want = std::exp(-(r * r) / (2.0L * l * l));
    EXPECT_NEAR(eval_gaussian(GaussianKernel(0.2), pt(0.3), pt(0.7)), static_cast<double>(want), 1e-14);
    EXPECT_NEAR(static_cast<double>(want), 0.1353352832366127, 1e-15);
}

TEST(GaussianKernel, StrictlyDecreasingInDistance) {
    const GaussianKernel k(0.2);
    double prev = k.from_squared_distance(0.0);
    for (int i = 1; i <= 200; ++i) {
        const double r = 0.005 * i;
        const double v = k.from_squared_distance(r * r);
        EXPECT_LT(v, prev);
        prev = v;
    }
}

TEST(GaussianKernel, RejectsBadBandwidth) {
    EXPECT_THROW(GaussianKernel(0.0), ContractError);
    EXPECT_THROW(GaussianKernel(-1.0), ContractError);
    EXPECT_THROW(GaussianKernel(std::nan("")), ContractError);
}

TEST(MaternKernel, HalfOrderIsExponential) {
    const MaternKernel k(0.5, 1.0);
    EXPECT_DOUBLE_EQ(k.at_distance(0.0), 1.0);
    EXPECT_NEAR(k.at_distance(1.0), std::exp(-1.0), 1e-15);
    EXPECT_NEAR(k.at_distance_bessel(1.0), std::exp(-1.0), 1e-12);
}

TEST(MaternKernel, ThreeHalvesAtUnitDistance) {
    const double s3 = std::sqrt(3.0);
    const double want = (1.0 + s3) * std::exp(-s3);
    EXPECT_NEAR(want, 0.483358, 5e-7);
    EXPECT_NEAR(MaternKernel(1.5, 1.0).at_distance(1.0), want, 1e-14);
    EXPECT_NEAR(MaternKernel(1.5, 1.0).at_distance_bessel(1.0), want, 1e-12);
}

TEST(MaternKernel, ClosedFormsAgreeWithBesselPath) {
    for (double nu : {0.5, 1.5, 2.5}) {
        for (double rho : {0.2, 0.5, 1.0, 3.0}) {
            const MaternKernel k(nu, rho);
            for (int i = 0; i <= 100; ++i) {
                const double r = 0.02 * i;
                EXPECT_NEAR(k.at_distance(r), k.at_distance_bessel(r), 1e-8) << "nu=" << nu << " rho=" << rho << " r=" << r;
            }
        }
    }
}

TEST(MaternKernel, ContinuousInNuNearClosedForms) {
    for (double nu : {1.5, 2.5}) {
        const MaternKernel a(nu, 0.5), b(nu + 1e-7, 0.5);
        for (double r : {0.05, 0.2, 0.7}) { EXPECT_NEAR(a.at_distance(r), b.at_distance(r), 1e-6); }
    }
}

TEST(MaternKernel, ValuesInUnitIntervalAndDecreasing) {
    for (double nu : {0.3, 1.01, 2.01, 3.01, 4.01}) {
        const MaternKernel k(nu, 0.2);
        double prev = 1.0;
        for (int i = 1; i <= 100; ++i) {
            const double v = k.at_distance(0.01 * i);
            EXPECT_GT(v, 0.0);
            EXPECT_LE(v, 1.0);
            EXPECT_LE(v, prev + 1e-15);
            prev = v;
        }
    }
}

TEST(MaternKernel, FarTailIsZeroNotNan) {
    const MaternKernel k(2.01, 0.01);
    EXPECT_EQ(k.at_distance(100.0), 0.0);
}

TEST(MaternKernel, RejectsBadParameters) {
    EXPECT_THROW(MaternKernel(0.0, 1.0), ContractError);
    EXPECT_THROW(MaternKernel(1.0, 0.0), ContractError);
    EXPECT_THROW(MaternKernel(-1.0, 1.0), ContractError);
    EXPECT_THROW((void)MaternKernel(1.5, 1.0).at_distance(-0.1), ContractError);
}

TEST(Gram, SinglePoint) {
    Points x(1, 1);
    x << 0.0;
    const Matrix g = gram_matrix(GaussianKernel(1.0), x);
    ASSERT_EQ(g.rows(), 1);
    EXPECT_DOUBLE_EQ(g(0, 0), 1.0);
}

TEST(Gram, TwoPoints) {
    Points x(2, 1);
    x << 0.0, 1.0;
    const Matrix g = gram_matrix(GaussianKernel(1.0), x);
    EXPECT_DOUBLE_EQ(g(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(g(1, 1), 1.0);
    EXPECT_NEAR(g(0, 1), std::exp(-0.5), 1e-15);
    EXPECT_EQ(g(0, 1), g(1, 0));
}

TEST(Gram, SymmetricUnitDiagonalAndPsd) {
    const std::vector<KernelSpec> kernels{GaussianKernel(0.2), GaussianKernel(0.05), MaternKernel(0.5, 0.3),
                                          MaternKernel(1.5, 0.2), MaternKernel(2.01, 0.2)};
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Points x = random_points(60, seed);
        for (const auto &k : kernels) {
            const Matrix g = gram_matrix(k, x);
            EXPECT_TRUE((g - g.transpose()).isZero(0.0)) << describe(k);
            for (Eigen::Index i = 0; i < g.rows(); ++i) { EXPECT_EQ(g(i, i), 1.0); }
            Eigen::SelfAdjointEigenSolver<Matrix> es(g);
            EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10) << describe(k);
        }
    }
}

TEST(Gram, CrossGramMatchesPointwise) {
    const Points a = random_points(7, 3), b = random_points(5, 4);
    const MaternKernel k(2.01, 0.2);
    const Matrix c = cross_gram(k, a, b);
    for (int i = 0; i < 7; ++i) {
        for (int j = 0; j < 5; ++j) { EXPECT_DOUBLE_EQ(c(i, j), k(a.row(i), b.row(j))); }
    }
}

TEST(Gram, WellConditionedNeedsNoJitter) {
    const Points x = random_points(20, 9);
    const GramMatrix g = gram(GaussianKernel(0.01), x);
    EXPECT_EQ(g.jitter, 0.0);
}

TEST(Gram, JitterEscalatesOnIllConditionedGram) {
    // A very wide bandwidth on many points is numerically singular.
    const Points x = random_points(200, 11);
    const GramMatrix g = gram(GaussianKernel(5.0), x);
    EXPECT_GT(g.jitter, 0.0);
    EXPECT_EQ(g.cholesky.info(), Eigen::Success);
}

TEST(Gram, ExhaustedLadderReportsPointsHash) {
    Points x(3, 1);
    x << 0.5, 0.5, 0.5;
    JitterPolicy none{{0.0}};
    Matrix bad = gram_matrix(GaussianKernel(0.2), x);
    bad(0, 0) = -1.0;
    try {
        cholesky_with_jitter(bad, none, &x);
        FAIL() << "expected NumericalError";
    } catch (const NumericalError &e) {
        EXPECT_EQ(e.points_hash(), points_hash(x));
        EXPECT_EQ(e.max_jitter(), 0.0);
    }
}

TEST(Gram, PointsHashIgnoresOrder) {
    Points a(3, 1), b(3, 1);
    a << 0.1, 0.2, 0.3;
    b << 0.3, 0.1, 0.2;
    EXPECT_EQ(points_hash(a), points_hash(b));
    b(0, 0) = 0.30000000000000004;
    EXPECT_NE(points_hash(a), points_hash(b));
}
