#include <gtest/gtest.h>

#include <lnared/io.hpp>
#include <lnared/linalg.hpp>
#include <lnared/network.hpp>

#include <cmath>
#include <cstring>
#include <random>
#include <string>

using lnared::Mat;
using lnared::Vec;
namespace net = lnared::net;

namespace {

const char* kBirthDeath = R"({
  "species": ["S1"],
  "parameters": {"k": 1.0, "gamma": 1.0},
  "volume": 100.0,
  "reactions": [
    {"stoich": [1], "rate": "k"},
    {"stoich": [-1], "rate": "gamma*S1"}
  ],
  "output_species": ["S1"]
})";

std::string toy_path() {
    return std::string(LNARED_MODEL_DIR) + "/toy.json";
}

// Finite-difference Jacobian with central differences, used as an oracle.
Mat fd_jacobian(const net::ReactionNetwork& network, const Vec& x) {
    const Eigen::Index n = network.n_species();
    Mat a(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double h = 1e-6 * (1.0 + std::abs(x(i)));
        Vec xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        a.col(i) = (network.drift(xp) - network.drift(xm)) / (2.0 * h);
    }
    return a;
}

} // namespace

TEST(ParseNetwork, BirthDeathShape) {
    const auto network = net::parse_network(std::string(kBirthDeath));
    EXPECT_EQ(network.n_species(), 1);
    EXPECT_EQ(network.n_reactions(), 2);
    EXPECT_EQ(network.species[0], "S1");
    EXPECT_DOUBLE_EQ(network.volume, 100.0);
    EXPECT_DOUBLE_EQ(network.parameters.at("k"), 1.0);
    const Mat s = network.stoichiometry();
    EXPECT_DOUBLE_EQ(s(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(s(0, 1), -1.0);
}

TEST(ParseNetwork, ToyModelShape) {
    const auto network = net::parse_network(lnared::io::read_file(toy_path()));
    EXPECT_EQ(network.n_species(), 4);
    EXPECT_EQ(network.n_reactions(), 8);
    EXPECT_EQ(network.outputs.size(), 2u);
}

TEST(ParseNetwork, RejectsWrongStoichiometryLength) {
    const char* bad = R"({
      "species": ["S1"],
      "reactions": [{"stoich": [1, -1], "rate": "1"}]
    })";
    EXPECT_THROW(net::parse_network(std::string(bad)), lnared::BadStoichiometry);
}

TEST(ParseNetwork, RejectsFractionalStoichiometry) {
    const char* bad = R"({
      "species": ["S1"],
      "reactions": [{"stoich": [0.5], "rate": "1"}]
    })";
    EXPECT_THROW(net::parse_network(std::string(bad)), lnared::BadStoichiometry);
}

TEST(ParseNetwork, RejectsUnboundSymbol) {
    const char* bad = R"({
      "species": ["S1"],
      "reactions": [{"stoich": [1], "rate": "alpha*S1"}]
    })";
    EXPECT_THROW(net::parse_network(std::string(bad)), lnared::UnboundParameter);
}

TEST(ParseNetwork, RejectsMalformedJson) {
    EXPECT_THROW(net::parse_network(std::string("{not json")), lnared::ParseError);
}

TEST(Jacobian, BirthDeathLinearDecay) {
    const auto network = net::parse_network(std::string(kBirthDeath));
    Vec x(1);
    x << 2.0;
    const Mat a = net::jacobian(network, x);
    EXPECT_NEAR(a(0, 0), -1.0, 1e-9);
}

TEST(Jacobian, HillRepressionDerivative) {
    const char* hill = R"json({
      "species": ["P1"],
      "reactions": [
        {"stoich": [1], "rate": "3/(1+P1^2)"},
        {"stoich": [-1], "rate": "0"}
      ]
    })json";
    const auto network = net::parse_network(std::string(hill));
    Vec x(1);
    x << 1.0;
    // d/dp 3/(1+p^2) = -6p/(1+p^2)^2 = -1.5 at p = 1.
    EXPECT_NEAR(net::jacobian(network, x)(0, 0), -1.5, 1e-9);
}

TEST(Jacobian, MatchesFiniteDifferencesOnToyModel) {
    const auto network = net::parse_network(lnared::io::read_file(toy_path()));
    std::mt19937 gen(42);
    std::uniform_real_distribution<double> dist(0.1, 5.0);
    for (int trial = 0; trial < 5; ++trial) {
        Vec x(4);
        for (Eigen::Index i = 0; i < 4; ++i) x(i) = dist(gen);
        const Mat a = net::jacobian(network, x);
        EXPECT_LE((a - fd_jacobian(network, x)).norm(), 1e-6 * (1.0 + a.norm()));
    }
}

TEST(SteadyState, BirthDeathConverges) {
    const auto network = net::parse_network(std::string(kBirthDeath));
    Vec x0(1);
    x0 << 5.0;
    const Vec x_ss = net::steady_state(network, x0);
    EXPECT_NEAR(x_ss(0), 1.0, 1e-9);
}

TEST(SteadyState, ToyModelConverges) {
    const auto network = net::parse_network(lnared::io::read_file(toy_path()));
    Vec x0(4);
    x0 << 1.0, 10.0, 1.0, 1.0;
    const Vec x_ss = net::steady_state(network, x0);
    EXPECT_NEAR(x_ss(0), 0.2889, 1e-3);
    EXPECT_NEAR(x_ss(1), 3.4611, 1e-3);
    EXPECT_NEAR(x_ss(2), 0.0578, 1e-3);
    EXPECT_NEAR(x_ss(3), 0.6922, 1e-3);
    EXPECT_LE(network.drift(x_ss).norm(), 1e-9);
}

TEST(SteadyState, BitwiseReproducible) {
    const auto network = net::parse_network(lnared::io::read_file(toy_path()));
    Vec x0(4);
    x0 << 1.0, 10.0, 1.0, 1.0;
    const Vec a = net::steady_state(network, x0);
    const Vec b = net::steady_state(network, x0);
    EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * 4), 0);
}

TEST(SteadyState, SingularJacobianThrows) {
    const char* constant = R"({
      "species": ["S1"],
      "reactions": [{"stoich": [1], "rate": "1"}]
    })";
    const auto network = net::parse_network(std::string(constant));
    Vec x0(1);
    x0 << 1.0;
    EXPECT_THROW(net::steady_state(network, x0), lnared::SingularJacobian);
}

TEST(Linearize, BirthDeathNoiseAndStationaryVariance) {
    const auto network = net::parse_network(std::string(kBirthDeath));
    Vec x0(1);
    x0 << 5.0;
    const Vec x_ss = net::steady_state(network, x0);
    const auto lin = net::linearize(network, x_ss);
    EXPECT_NEAR(lin.A(0, 0), -1.0, 1e-9);
    // B B^T = (k + gamma x_ss) / Omega = 2 / 100.
    const Mat bbt = lin.B * lin.B.transpose();
    EXPECT_NEAR(bbt(0, 0), 0.02, 1e-9);
    const Mat p = lnared::linalg::solve_lyapunov(lin.A, bbt);
    EXPECT_NEAR(p(0, 0), x_ss(0) / network.volume, 1e-9);
}

TEST(Linearize, OutputMatrixSelectsNamedSpecies) {
    const char* three = R"({
      "species": ["A", "B", "Z"],
      "reactions": [
        {"stoich": [-1, 0, 0], "rate": "A"},
        {"stoich": [0, -1, 0], "rate": "B"},
        {"stoich": [0, 0, -1], "rate": "Z"}
      ],
      "output_species": ["A", "B"]
    })";
    const auto network = net::parse_network(std::string(three));
    const auto lin = net::linearize(network, Vec::Ones(3));
    ASSERT_EQ(lin.C.rows(), 2);
    Mat expected(2, 3);
    expected << 1, 0, 0, 0, 1, 0;
    EXPECT_LE((lin.C - expected).norm(), 0.0);
}

TEST(Linearize, ZeroRateColumnIsClampedNotRejected) {
    // Reduced-model reconstructions may probe slightly negative rates; the
    // noise factor clamps at zero instead of failing.
    const char* decay = R"({
      "species": ["S1"],
      "reactions": [
        {"stoich": [1], "rate": "1 - S1"},
        {"stoich": [-1], "rate": "0"}
      ]
    })";
    const auto network = net::parse_network(std::string(decay));
    Vec x(1);
    x << 2.0; // rate 1 - x = -1 clamps to zero
    const Mat b = net::noise_matrix(network, x);
    EXPECT_DOUBLE_EQ(b(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(b(0, 1), 0.0);
}

TEST(LnaModel, TransformPreservesInputOutputMaps) {
    const auto network = net::parse_network(lnared::io::read_file(toy_path()));
    const auto model = net::lna_model(network);
    Mat t(4, 4);
    t << 1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 2, 0, 0, 0, 1, 1;
    const Mat t_inv = t.inverse();
    const auto z_model = net::transform_model(model, t, t_inv);
    Vec x(4);
    x << 0.3, 2.0, 0.1, 0.7;
    const Vec z = t * x;
    EXPECT_LE((z_model.g(z) - t * model.g(x)).norm(), 1e-12);
    EXPECT_LE((z_model.A(z) - t * model.A(x) * t_inv).norm(), 1e-12);
    EXPECT_LE((z_model.B(z) - t * model.B(x)).norm(), 1e-12);
    EXPECT_LE((z_model.C - model.C * t_inv).norm(), 1e-12);
}
