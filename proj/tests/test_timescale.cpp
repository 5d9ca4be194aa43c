#include <gtest/gtest.h>

#include <lnared/io.hpp>
#include <lnared/linalg.hpp>
#include <lnared/network.hpp>
#include <lnared/timescale.hpp>

#include <cmath>
#include <string>
#include <vector>

using lnared::Mat;
using lnared::Vec;
namespace net = lnared::net;
namespace timescale = lnared::timescale;

namespace {

net::LnaModel hand_coupled_model() {
    Mat a(2, 2);
    a << -1.0, 1.0, 1.0, -2.0;
    Mat b(2, 1);
    b << 1.0, 2.0;
    Mat c(1, 2);
    c << 1.0, 0.0;
    Vec x0(2);
    x0 << 1.0, 0.5;
    return net::linear_lna_model(a, b, c, x0);
}

net::LnaModel toy_model() {
    const auto network = net::parse_network(
        lnared::io::read_file(std::string(LNARED_MODEL_DIR) + "/toy.json"));
    return net::lna_model(network);
}

} // namespace

TEST(Average, BlockDiagonalExtractsSlowBlock) {
    Mat a = Mat::Zero(2, 2);
    a(0, 0) = -1.0;
    a(1, 1) = -2.0;
    Mat b = Mat::Zero(2, 2);
    b(0, 0) = 1.0;
    b(1, 1) = 3.0;
    const auto model = net::linear_lna_model(a, b, Mat::Identity(2, 2), Vec::Ones(2));
    const auto avg = timescale::average(timescale::partition(model, {1}, 0.1));
    Vec z(1);
    z << 0.7;
    const auto ev = avg.eval(z);
    EXPECT_NEAR(ev.a_r(0, 0), -1.0, 1e-12);
    EXPECT_NEAR(ev.b_r(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(ev.b_r(0, 1), 0.0, 1e-12);
    EXPECT_NEAR(ev.zhat(0), 0.0, 1e-10);
}

TEST(Average, HandArithmeticSchurAndNoise) {
    const auto avg =
        timescale::average(timescale::partition(hand_coupled_model(), {1}, 0.1));
    Vec z(1);
    z << 1.0;
    const auto ev = avg.eval(z);
    // a_r = A11 - A12 A22^{-1} A21 = -1 + 1/2; b_r = B1 - A12 A22^{-1} B2.
    EXPECT_NEAR(ev.a_r(0, 0), -0.5, 1e-10);
    EXPECT_NEAR(ev.b_r(0, 0), 2.0, 1e-10);
    // phi = [I; -A22^{-1} A21] in model row order.
    EXPECT_NEAR(ev.phi(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(ev.phi(1, 0), 0.5, 1e-10);
}

TEST(Average, EmptyFastSetViaConstructorIsIdentity) {
    const auto model = hand_coupled_model();
    const timescale::AveragedModel avg(model, {0, 1}, {});
    Vec z(2);
    z << 1.0, 0.5;
    const auto ev = avg.eval(z);
    EXPECT_EQ(ev.zhat.size(), 0);
    EXPECT_LE((ev.a_r - model.A(z)).norm(), 1e-12);
    EXPECT_LE((ev.b_r - model.B(z)).norm(), 1e-12);
}

TEST(Partition, RejectsBadIndexSets) {
    const auto model = hand_coupled_model();
    EXPECT_THROW(timescale::partition(model, {}, 0.1), lnared::ConfigError);
    EXPECT_THROW(timescale::partition(model, {0, 1}, 0.1), lnared::ConfigError);
    EXPECT_THROW(timescale::partition(model, {1, 1}, 0.1), lnared::ConfigError);
    EXPECT_THROW(timescale::partition(model, {5}, 0.1), lnared::DimensionMismatch);
    EXPECT_THROW(timescale::partition(model, {1}, 0.0), lnared::ConfigError);
}

TEST(Average, SingularFastJacobianThrows) {
    Mat a(2, 2);
    a << -1.0, 0.0, 1.0, 0.0; // fast equation does not depend on the fast state
    const auto model =
        net::linear_lna_model(a, Mat::Identity(2, 2), Mat::Identity(2, 2), Vec::Ones(2));
    EXPECT_THROW(timescale::average(timescale::partition(model, {1}, 0.1)),
                 lnared::SingularFastJacobian);
}

TEST(Average, ToyFastSpeciesSlaveToAnalyticRoot) {
    // With S2 and S4 fast: S4 = c1 / (c2 (1 + S1^2)) and S2 = (c3/c4) S4.
    const auto avg = timescale::average(timescale::partition(toy_model(), {1, 3}, 0.1));
    Vec z(2);
    z << 0.3, 0.06;
    const auto ev = avg.eval(z);
    const double s4 = 3.0 / (4.0 * (1.0 + 0.3 * 0.3));
    EXPECT_NEAR(ev.zhat(0), 5.0 * s4, 1e-8);
    EXPECT_NEAR(ev.zhat(1), s4, 1e-8);
}

TEST(EpsilonSweep, DecoupledSystemHasZeroError) {
    Mat a = Mat::Zero(2, 2);
    a(0, 0) = -1.0;
    a(1, 1) = -2.0;
    Mat b = Mat::Zero(2, 2);
    b(0, 0) = 1.0;
    b(1, 1) = 0.5;
    const auto model = net::linear_lna_model(a, b, Mat::Identity(2, 2), Vec::Ones(2));
    const auto p = timescale::partition(model, {1}, 0.1);
    const auto sw = timescale::epsilon_sweep(p, {1e-1, 1e-2}, 5.0);
    ASSERT_EQ(sw.rows.size(), 2u);
    for (const auto& row : sw.rows) {
        EXPECT_LE(row.mean_err, 1e-9);
        EXPECT_LE(row.ms_err, 1e-8);
    }
}

TEST(EpsilonSweep, LinearTwoStateSlopesNearOne) {
    Mat a(2, 2);
    a << -1.0, 1.0, 1.0, -3.0;
    Mat b(2, 2);
    b << 0.5, 0.0, 0.3, 1.0;
    Mat c(1, 2);
    c << 1.0, 0.0;
    Vec x0(2);
    x0 << 1.0, 0.5;
    const auto model = net::linear_lna_model(a, b, c, x0);
    const auto p = timescale::partition(model, {1}, 0.01);
    const std::vector<double> eps{1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
    const auto sw = timescale::epsilon_sweep(p, eps, 10.0);
    ASSERT_EQ(sw.rows.size(), 5u);
    for (const auto& row : sw.rows) {
        EXPECT_TRUE(std::isfinite(row.mean_err));
        EXPECT_TRUE(std::isfinite(row.ms_err));
    }
    EXPECT_GE(sw.ms_slope, 0.7);
    EXPECT_LE(sw.ms_slope, 1.3);
    EXPECT_GE(sw.mean_slope, 0.7);
}

TEST(EpsilonSweep, SlowEigenvaluesConvergeToAveragedDrift) {
    Mat a(2, 2);
    a << -1.0, 1.0, 1.0, -3.0;
    const double a_r = -1.0 - 1.0 * (1.0 / -3.0) * 1.0; // Schur complement
    for (const double eps : {1e-2, 1e-3}) {
        Mat a_eps = a;
        a_eps.row(1) /= eps;
        const auto ev = lnared::linalg::eigvals(a_eps);
        // The slow eigenvalue is the one of smaller magnitude.
        double slow = ev(0).real();
        if (std::abs(ev(1)) < std::abs(ev(0))) slow = ev(1).real();
        EXPECT_LE(std::abs(slow - a_r) / std::abs(a_r), 10.0 * eps);
    }
}

TEST(EpsilonSweep, ToyFastProteinsErrorDecreasesWithEpsilon) {
    const auto p = timescale::partition(toy_model(), {1, 3}, 0.1);
    const auto sw = timescale::epsilon_sweep(p, {1e-1, 3e-2, 1e-2}, 5.0);
    ASSERT_EQ(sw.rows.size(), 3u);
    for (size_t i = 0; i < sw.rows.size(); ++i) {
        EXPECT_TRUE(std::isfinite(sw.rows[i].ms_err));
        EXPECT_GT(sw.rows[i].ms_err, 0.0);
        if (i > 0) EXPECT_LT(sw.rows[i].ms_err, sw.rows[i - 1].ms_err);
    }
}

TEST(FitLoglogSlope, RecoversExactPowerLaw) {
    const std::vector<double> eps{1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
    std::vector<double> err;
    for (const double e : eps) err.push_back(2.7 * std::pow(e, 1.5));
    EXPECT_NEAR(timescale::fit_loglog_slope(eps, err), 1.5, 1e-12);
}
