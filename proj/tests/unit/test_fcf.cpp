#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "dopcc/dataset.hpp"
#include "dopcc/doppler_loss.hpp"
#include "dopcc/errors.hpp"
#include "dopcc/fcf.hpp"
#include "dopcc/sim.hpp"
#include "../support.hpp"

using namespace dopcc;

namespace {

CsiMatrix random_csi(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<float> g(0.0f, 1.0f);
    CsiMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = {g(rng), g(rng)};
    return m;
}

Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::VectorXd v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

// Random biases too, so that the finite-difference check also covers them.
FcfModel toy_model(std::vector<std::size_t> widths, std::uint64_t seed) {
    const std::size_t in = widths.front();
    auto m = FcfModel::initialized(widths, FeatureSpec{in / 3, 1e-6}, 1, seed);
    std::mt19937_64 rng(seed + 100);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (auto& layer : m.layers()) {
        for (auto& b : layer.bias) b = u(rng);
    }
    return m;
}

double& parameter(FcfModel& m, std::size_t layer, Eigen::Index flat, bool bias) {
    auto& l = m.layers()[layer];
    return bias ? l.bias[flat] : l.weight.data()[flat];
}

}  // namespace

TEST_SUITE("fcf") {

TEST_CASE("features of a tap-0 spike") {
    CsiMatrix ones = CsiMatrix::Constant(1, 16, {1.0f, 0.0f});
    const FeatureSpec spec{4, 1e-6};
    const auto f = extract_features(ones, spec);
    REQUIRE(f.size() == 12);
    for (Eigen::Index t = 0; t < 4; ++t) {
        if (t == 2) {
            CHECK(f[3 * t] == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(std::abs(f[3 * t + 1]) < 1e-12);
            CHECK(std::abs(f[3 * t + 2]) < 1e-12);
        } else {
            CHECK(std::abs(f[3 * t]) < 1e-12);
            CHECK(std::abs(f[3 * t + 1]) < 1e-12);
            CHECK(f[3 * t + 2] == doctest::Approx(-6.0));
        }
    }
}

TEST_CASE("feature shapes and zero rows") {
    std::mt19937_64 rng(1);
    auto csi = random_csi(4, 64, rng);
    CHECK(extract_features(csi, FeatureSpec{}).size() == 384);
    csi.row(2).setZero();
    const auto f = extract_features(csi, FeatureSpec{});
    for (Eigen::Index t = 0; t < 32; ++t) {
        const Eigen::Index base = 3 * (2 * 32 + t);
        CHECK(f[base] == 0.0);
        CHECK(f[base + 1] == 0.0);
        CHECK(f[base + 2] == doctest::Approx(-6.0));
    }
    CHECK_THROWS_AS(extract_features(csi, FeatureSpec{65, 1e-6}), PreconditionError);
}

TEST_CASE("log-amplitude features survive desynchronization") {
    auto s = dopcc::testing::noiseless_scenario(5.0);
    s.snr_db = 25.0;
    const auto ds = simulate(s);
    const FeatureSpec spec{};
    for (std::size_t l = 0; l < ds.size(); l += 5) {
        const auto a = extract_features(ds.points[l].csi, spec);
        const auto b = extract_features(desynchronize_features(ds.points[l], l, DesyncOptions{}).csi, spec);
        for (Eigen::Index i = 2; i < a.size(); i += 3) CHECK(std::abs(a[i] - b[i]) < 1e-5);
    }
}

TEST_CASE("zero parameters give the origin") {
    FcfModel m({384, 64, 32, 2}, FeatureSpec{}, 4);
    std::mt19937_64 rng(2);
    CHECK(m.forward(random_vector(384, rng)) == Eigen::Vector2d::Zero());
}

TEST_CASE("hand-computed toy network") {
    FcfModel m({2, 2, 2}, FeatureSpec{}, 1);
    m.layers()[0].weight << 1.0, -1.0, 2.0, 0.5;
    m.layers()[0].bias << 0.5, -3.0;
    m.layers()[1].weight << 1.0, 2.0, -1.0, 0.5;
    m.layers()[1].bias << 0.1, 0.2;
    // Hidden pre-activations (2.5, 3.5).
    const Eigen::Vector2d y = m.forward(Eigen::Vector2d(3.0, 1.0));
    CHECK(y[0] == 2.5 + 7.0 + 0.1);
    CHECK(y[1] == -2.5 + 1.75 + 0.2);

    // Second hidden unit below zero: its outgoing weights are irrelevant.
    m.layers()[0].bias[1] = -10.0;
    const Eigen::Vector2d z = m.forward(Eigen::Vector2d(3.0, 1.0));
    CHECK(z[0] == 2.5 + 0.1);
    CHECK(z[1] == -2.5 + 0.2);
    m.layers()[1].weight.col(1) << 100.0, -100.0;
    CHECK(m.forward(Eigen::Vector2d(3.0, 1.0)) == z);

    // Standardization is applied before the first layer.
    m.set_standardization(Eigen::Vector2d(1.0, -1.0), Eigen::Vector2d(2.0, 2.0));
    CHECK(m.forward(Eigen::Vector2d(7.0, 1.0)) == z);
    CHECK_THROWS_AS(m.forward(Eigen::Vector3d(1.0, 2.0, 3.0)), PreconditionError);
}

TEST_CASE("batch forward matches single forward") {
    auto m = toy_model({12, 16, 8, 2}, 4);
    std::mt19937_64 rng(4);
    Eigen::MatrixXd x(12, 9);
    for (Eigen::Index c = 0; c < 9; ++c) x.col(c) = random_vector(12, rng);
    const auto batch = m.forward_batch(x);
    for (Eigen::Index c = 0; c < 9; ++c) CHECK((batch.col(c) - m.forward(x.col(c))).norm() < 1e-12);
}

TEST_CASE("zero upstream gives zero gradients") {
    auto m = toy_model({12, 16, 8, 2}, 5);
    std::mt19937_64 rng(5);
    auto g = Gradients::zeros_like(m);
    backward_pair(m, random_vector(12, rng), random_vector(12, rng), Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), g);
    for (const auto& l : g.layers) {
        CHECK(l.weight.isZero(0.0));
        CHECK(l.bias.isZero(0.0));
    }
}

TEST_CASE("single-branch gradient matches finite differences") {
    auto m = toy_model({12, 10, 7, 2}, 6);
    std::mt19937_64 rng(6);
    const auto x = random_vector(12, rng);
    const Eigen::Vector2d c(0.7, -1.3);
    auto g = Gradients::zeros_like(m);
    backward_pair(m, x, x, c, Eigen::Vector2d::Zero(), g);
    const double h = 1e-6;
    for (std::size_t layer = 0; layer < m.layers().size(); ++layer) {
        for (bool bias : {false, true}) {
            const Eigen::Index count = bias ? m.layers()[layer].bias.size() : m.layers()[layer].weight.size();
            for (Eigen::Index i = 0; i < count; ++i) {
                double& p = parameter(m, layer, i, bias);
                const double keep = p;
                p = keep + h;
                const double up = c.dot(m.forward(x));
                p = keep - h;
                const double down = c.dot(m.forward(x));
                p = keep;
                const double fd = (up - down) / (2.0 * h);
                const double an = bias ? g.layers[layer].bias[i] : g.layers[layer].weight.data()[i];
                CHECK(std::abs(an - fd) <= 1e-4 * std::max(std::abs(fd), 1e-3));
            }
        }
    }
}

TEST_CASE("branch swap symmetry") {
    auto m = toy_model({12, 10, 7, 2}, 7);
    std::mt19937_64 rng(7);
    const auto x1 = random_vector(12, rng), x2 = random_vector(12, rng);
    const Eigen::Vector2d u1(0.3, 2.0), u2(-1.0, 0.4);
    auto a = Gradients::zeros_like(m), b = Gradients::zeros_like(m);
    backward_pair(m, x1, x2, u1, u2, a);
    backward_pair(m, x2, x1, u2, u1, b);
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        CHECK((a.layers[l].weight - b.layers[l].weight).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((a.layers[l].bias - b.layers[l].bias).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("pipeline gradient through the Doppler loss") {
    const auto config = default_scenario().config;
    auto m = toy_model({24, 16, 8, 2}, 8);
    std::mt19937_64 rng(8);
    const auto x1 = random_vector(24, rng), x2 = random_vector(24, rng);
    PairSample pair;
    pair.delta_phi = Eigen::MatrixXd::Zero(4, 4);
    pair.sigma = Eigen::MatrixXd::Constant(4, 4, 0.8);
    std::uniform_real_distribution<double> phi(-15.0, 15.0);
    for (Eigen::Index i = 0; i < 4; ++i) {
        for (Eigen::Index j = i + 1; j < 4; ++j) {
            pair.delta_phi(i, j) = phi(rng);
            pair.delta_phi(j, i) = -pair.delta_phi(i, j);
        }
    }
    auto total = [&](const FcfModel& model) { return pair_loss(model.forward(x1), model.forward(x2), pair, config).loss; };
    const auto res = pair_loss(m.forward(x1), m.forward(x2), pair, config);
    auto g = Gradients::zeros_like(m);
    backward_pair(m, x1, x2, res.grad1, res.grad2, g);

    std::uniform_int_distribution<std::size_t> pick_layer(0, m.layers().size() - 1);
    const double h = 1e-6;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t layer = pick_layer(rng);
        const bool bias = trial % 4 == 0;
        const Eigen::Index count = bias ? m.layers()[layer].bias.size() : m.layers()[layer].weight.size();
        const Eigen::Index i = std::uniform_int_distribution<Eigen::Index>(0, count - 1)(rng);
        double& p = parameter(m, layer, i, bias);
        const double keep = p;
        p = keep + h;
        const double up = total(m);
        p = keep - h;
        const double down = total(m);
        p = keep;
        const double fd = (up - down) / (2.0 * h);
        const double an = bias ? g.layers[layer].bias[i] : g.layers[layer].weight.data()[i];
        CHECK(std::abs(an - fd) <= 1e-4 * std::max(std::abs(fd), 1e-2));
    }
}

TEST_CASE("bounded response to small input perturbations") {
    auto m = FcfModel::initialized({48, 32, 16, 2}, FeatureSpec{8, 1e-6}, 2, 9);
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const auto x = random_vector(48, rng);
        const Eigen::VectorXd dx = 1e-6 * random_vector(48, rng).normalized();
        CHECK((m.forward(x + dx) - m.forward(x)).norm() < 1e-2);
    }
}

TEST_CASE("initialization is seeded") {
    const auto a = FcfModel::initialized({24, 8, 2}, FeatureSpec{4, 1e-6}, 2, 3);
    const auto b = FcfModel::initialized({24, 8, 2}, FeatureSpec{4, 1e-6}, 2, 3);
    const auto c = FcfModel::initialized({24, 8, 2}, FeatureSpec{4, 1e-6}, 2, 4);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    const double bound = std::sqrt(6.0 / 24.0);
    CHECK(a.layers()[0].weight.cwiseAbs().maxCoeff() <= bound);
    CHECK(a.parameter_count() == 24 * 8 + 8 + 8 * 2 + 2);
    CHECK(FcfModel::default_widths(4, FeatureSpec{}) == std::vector<std::size_t>{384, 1024, 512, 256, 128, 64, 2});
}

TEST_CASE("model file round trip") {
    auto m = toy_model({24, 10, 2}, 10);
    std::mt19937_64 rng(10);
    Eigen::MatrixXd feats(24, 20);
    for (Eigen::Index c = 0; c < 20; ++c) feats.col(c) = random_vector(24, rng);
    m.fit_standardization(feats);
    // toy_model stores T = 8 with one BS; the width must match B * T * 3.
    std::ostringstream out(std::ios::binary);
    save_model(m, out);
    const auto bytes = out.str();
    std::istringstream in(bytes, std::ios::binary);
    const auto back = load_model(in);
    CHECK(back == m);
    for (Eigen::Index c = 0; c < 20; ++c) CHECK(back.forward(feats.col(c)) == m.forward(feats.col(c)));

    std::istringstream cut(bytes.substr(0, bytes.size() - 5), std::ios::binary);
    CHECK_THROWS_AS(load_model(cut), FormatError);

    auto wrong = bytes;
    wrong[8] = static_cast<char>(wrong[8] + 3);  // first layer width
    std::istringstream bad(wrong, std::ios::binary);
    CHECK_THROWS_AS(load_model(bad), FormatError);

    auto magic = bytes;
    magic[0] = 'X';
    std::istringstream bad_magic(magic, std::ios::binary);
    CHECK_THROWS_AS(load_model(bad_magic), FormatError);
}

TEST_CASE("model rejects CSI of the wrong shape") {
    const auto m = FcfModel::initialized(FcfModel::default_widths(4, FeatureSpec{}), FeatureSpec{}, 4, 1);
    std::mt19937_64 rng(11);
    CHECK_THROWS_AS(m.features_for(random_csi(4, 16, rng)), PreconditionError);
    CHECK_THROWS_AS(m.features_for(random_csi(3, 64, rng)), PreconditionError);
    CHECK(m.features_for(random_csi(4, 64, rng)).size() == 384);
}

}  // TEST_SUITE
