#include <gtest/gtest.h>

#include <lnared/linalg.hpp>
#include <lnared/matclass.hpp>
#include <lnared/types.hpp>

#include <cmath>
#include <random>

using lnared::Mat;
using lnared::Vec;
namespace matclass = lnared::matclass;

namespace {

// Strictly row-dominant matrix with positive diagonal and randomized
// off-diagonal signs; its negation is Hurwitz and diagonally stable.
Mat random_dominant(std::mt19937& gen, Eigen::Index n) {
    std::uniform_real_distribution<double> mag(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    Mat m = Mat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double row = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            m(i, j) = (coin(gen) ? 1.0 : -1.0) * mag(gen);
            row += std::abs(m(i, j));
        }
        m(i, i) = row + 0.1 + mag(gen);
    }
    return m;
}

} // namespace

TEST(Companion, FlipsOffDiagonalSigns) {
    Mat a(2, 2);
    a << -2.0, 1.0, 3.0, -4.0;
    Mat expected(2, 2);
    expected << 2.0, -1.0, -3.0, 4.0;
    EXPECT_LE((matclass::companion(a) - expected).norm(), 0.0);
}

TEST(Companion, NegatesDiagonal) {
    Mat a = Mat::Zero(2, 2);
    a(0, 0) = -1.0;
    a(1, 1) = -5.0;
    const Mat m = matclass::companion(a);
    EXPECT_DOUBLE_EQ(m(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(m(1, 1), 5.0);
    EXPECT_LE((matclass::companion(Mat::Zero(3, 3))).norm(), 0.0);
}

TEST(Classify, SymmetricDominantIsHPlus) {
    Mat m(2, 2);
    m << 2.0, -1.0, -1.0, 2.0;
    const auto rep = matclass::classify(m);
    EXPECT_TRUE(rep.is_h);
    EXPECT_TRUE(rep.is_h_plus);
    EXPECT_TRUE(rep.is_dd_row);
    ASSERT_EQ(rep.companion_spectrum.size(), 2);
    EXPECT_NEAR(rep.companion_spectrum(0).real(), 3.0, 1e-12);
    EXPECT_NEAR(rep.companion_spectrum(1).real(), 1.0, 1e-12);
}

TEST(Classify, UpperTriangularScaledDominantOnly) {
    // Row dominance fails in row 1 (|-3| > 1) yet a diagonal scaling
    // restores it: M(A) is a nonsingular M-matrix.
    Mat m(2, 2);
    m << 1.0, -3.0, 0.0, 1.0;
    const auto rep = matclass::classify(m);
    EXPECT_TRUE(rep.is_h);
    EXPECT_TRUE(rep.is_h_plus);
    EXPECT_FALSE(rep.is_dd_row);
    EXPECT_TRUE(rep.is_scaled_dd);
}

TEST(Classify, MetzlerStableNegationIsHPlus) {
    Mat a(2, 2);
    a << -2.0, 1.0, 1.0, -2.0;
    EXPECT_TRUE(matclass::classify(a).is_metzler);
    EXPECT_FALSE(matclass::classify(a).is_h_plus);
    EXPECT_TRUE(matclass::classify(Mat(-a)).is_h_plus);
}

TEST(Classify, HFlagInvariantUnderDiagonalScaling) {
    std::mt19937 gen(2024);
    std::uniform_real_distribution<double> scale(0.2, 5.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index n = 4;
        Mat m = random_dominant(gen, n);
        if (trial % 2 == 1) m(0, 0) = -m(0, 0); // clearly not H then
        Mat d = Mat::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) d(i, i) = scale(gen);
        const Mat scaled = d * m * d.inverse();
        EXPECT_EQ(matclass::classify(m).is_h, matclass::classify(scaled).is_h);
    }
}

TEST(DiagonalCertificate, SymmetricCaseIsIdentity) {
    Mat a(2, 2);
    a << -2.0, 1.0, 1.0, -2.0;
    const auto cert = matclass::diagonal_certificate(a);
    EXPECT_LE((cert.v - Vec::Ones(2)).norm(), 1e-12);
    EXPECT_LE((cert.w - Vec::Ones(2)).norm(), 1e-12);
    EXPECT_LE((cert.x - Vec::Ones(2)).norm(), 1e-12);
    const Mat lhs = a * cert.x.asDiagonal() + cert.x.asDiagonal() * a.transpose();
    EXPECT_LT(lnared::sym_eig_max(lhs), 0.0);
}

TEST(DiagonalCertificate, UpperTriangularHandValues) {
    Mat a(2, 2);
    a << -1.0, 5.0, 0.0, -1.0;
    const auto cert = matclass::diagonal_certificate(a);
    // M(A)^{-1} 1 = (6, 1); transposed problem gives (1, 6); x_i = v_i / w_i.
    EXPECT_NEAR(cert.v(0), 6.0, 1e-12);
    EXPECT_NEAR(cert.v(1), 1.0, 1e-12);
    EXPECT_NEAR(cert.w(0), 1.0, 1e-12);
    EXPECT_NEAR(cert.w(1), 6.0, 1e-12);
    EXPECT_NEAR(cert.x(0), 6.0, 1e-12);
    EXPECT_NEAR(cert.x(1), 1.0 / 6.0, 1e-12);
    const Mat lhs = a * cert.x.asDiagonal() + cert.x.asDiagonal() * a.transpose();
    EXPECT_LT(lnared::sym_eig_max(lhs), 0.0);
}

TEST(DiagonalCertificate, RejectsNonNegativeDiagonal) {
    Mat a(2, 2);
    a << 0.0, 1.0, 1.0, -2.0;
    EXPECT_THROW(matclass::diagonal_certificate(a), lnared::NotHPlus);
}

TEST(DiagonalCertificate, RejectsStableNonHMatrix) {
    // Hurwitz by rotation but the companion matrix has a negative eigenvalue.
    Mat a(2, 2);
    a << -1.0, 5.0, -5.0, -1.0;
    EXPECT_THROW(matclass::diagonal_certificate(a), lnared::NotHPlus);
}

TEST(BaseGramianSeed, ScalarClosedForm) {
    Mat a(1, 1), b(1, 1);
    a << -1.0;
    b << std::sqrt(2.0);
    const Mat p = matclass::base_gramian_seed(a, b);
    EXPECT_NEAR(p(0, 0), 1.0, 1e-9);
}

TEST(BaseGramianSeed, SymmetricPairClosedForm) {
    Mat a(2, 2);
    a << -2.0, 1.0, 1.0, -2.0;
    const Mat p = matclass::base_gramian_seed(a, Mat::Identity(2, 2));
    EXPECT_LE((p - 0.5 * Mat::Identity(2, 2)).norm(), 1e-9);
    const Mat q = matclass::base_gramian_seed(a.transpose(), Mat::Identity(2, 2));
    EXPECT_LE((q - p).norm(), 1e-12);
    const Mat resid = a * p + p * a.transpose() + Mat::Identity(2, 2);
    EXPECT_LE(lnared::sym_eig_max(resid), 1e-10);
}

TEST(BaseGramianSeed, WrapsMissingCertificate) {
    Mat a(2, 2);
    a << -1.0, 5.0, -5.0, -1.0;
    EXPECT_THROW(matclass::base_gramian_seed(a, Mat::Identity(2, 2)),
                 lnared::CertificateUnavailable);
}

TEST(Theorem, RandomDominantEnsembleCertificates) {
    std::mt19937 gen(7);
    std::uniform_int_distribution<int> size(2, 8);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = size(gen);
        const Mat a = -random_dominant(gen, n);
        const auto cert = matclass::diagonal_certificate(a);
        EXPECT_GT(cert.v.minCoeff(), 0.0);
        EXPECT_GT(cert.w.minCoeff(), 0.0);
        EXPECT_GT(cert.x.minCoeff(), 0.0);
        const Mat lhs = a * cert.x.asDiagonal() + cert.x.asDiagonal() * a.transpose();
        EXPECT_LT(lnared::sym_eig_max(lhs), 0.0);
        EXPECT_TRUE(matclass::classify(Mat(-lhs)).is_h_plus);
    }
}
