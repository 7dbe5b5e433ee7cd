#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "dopcc/doppler_loss.hpp"
#include "dopcc/errors.hpp"
#include "dopcc/phase.hpp"
#include "dopcc/sim.hpp"
#include "../support.hpp"

using namespace dopcc;
using dopcc::testing::noiseless_scenario;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

SystemConfig four_bs() { return default_scenario().config; }

PairSample random_pair(std::size_t num_bs, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> phi(-20.0, 20.0);
    std::uniform_real_distribution<double> sig(0.5, 3.0);
    PairSample p;
    p.delta_phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(num_bs), static_cast<Eigen::Index>(num_bs));
    p.sigma = Eigen::MatrixXd::Constant(p.delta_phi.rows(), p.delta_phi.cols(), 0.5);
    for (Eigen::Index i = 0; i < p.delta_phi.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < p.delta_phi.cols(); ++j) {
            p.delta_phi(i, j) = phi(rng);
            p.delta_phi(j, i) = -p.delta_phi(i, j);
            p.sigma(i, j) = p.sigma(j, i) = sig(rng);
        }
    }
    return p;
}

struct Simulated {
    CsiDataset dataset;
    PhaseTrack track;
    UncertaintyModel uncertainty;
};

Simulated noiseless_run(double duration) {
    const auto ds = simulate(noiseless_scenario(duration));
    auto track = track_phases(ds).track;
    auto unc = build_uncertainty(ds);
    return {ds, track, unc};
}

}  // namespace

TEST_SUITE("doppler_loss") {

TEST_CASE("instantaneous uncertainty") {
    UncertaintyParams p;
    p.gain = 1.0;
    p.u_min = 0.01;
    p.u_max = 10.0;
    const double tap = 2e-8;
    CHECK(instantaneous_uncertainty(std::vector<double>{0, 0, 5, 0}, tap, p) == p.u_min);
    // Equal taps two spacings apart: tau_rms equals one tap spacing.
    CHECK(instantaneous_uncertainty(std::vector<double>{1, 0, 1, 0}, tap, p) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(instantaneous_uncertainty(std::vector<double>{0, 0, 0, 0}, tap, p) == p.u_max);
    CHECK(instantaneous_uncertainty(std::vector<double>{1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1}, tap, p) == p.u_max);
}

TEST_CASE("multipath raises the uncertainty") {
    auto los = noiseless_scenario(20.0);
    auto nlos = los;
    nlos.multipath = {{{-9.0, 0.0, 1.5}, 0.6}, {{9.0, -3.0, 1.5}, 0.5}, {{0.0, 9.0, 2.0}, 0.6}, {{3.0, 3.0, 1.0}, 0.5}};
    const auto u_los = build_uncertainty(simulate(los)).u;
    const auto u_nlos = build_uncertainty(simulate(nlos)).u;
    CHECK(u_nlos.mean() > u_los.mean());
    for (Eigen::Index b = 0; b < 4; ++b) CHECK(u_nlos.col(b).mean() > u_los.col(b).mean());
}

TEST_CASE("uncertainty parameters are validated") {
    UncertaintyParams p;
    p.beta = 0.0;
    CHECK_THROWS_AS(p.validate(), PreconditionError);
    p = {};
    p.u_min = 0.5;
    p.u_max = 0.1;
    CHECK_THROWS_AS(p.validate(), PreconditionError);
}

TEST_CASE("sigma") {
    const std::size_t n = 50;
    std::vector<double> ts(n);
    for (std::size_t l = 0; l < n; ++l) ts[l] = 0.1 * static_cast<double>(l);
    UncertaintyParams p;
    const auto constant = integrate_uncertainty(Eigen::MatrixXd::Constant(n, 3, 0.04), ts, p);
    for (std::size_t l = 0; l < n; ++l) CHECK(constant.sigma(0, 2, l, l) == p.beta);
    CHECK(constant.sigma(0, 1, 3, 43) == doctest::Approx(p.beta + 2.0 * 0.04 * 4.0).epsilon(1e-12));
    CHECK(constant.sigma(0, 1, 3, 43, 2.0) == doctest::Approx(2.0 + 2.0 * 0.04 * 4.0).epsilon(1e-12));
    for (Eigen::Index b = 0; b < 3; ++b) {
        for (Eigen::Index l = 1; l < static_cast<Eigen::Index>(n); ++l) CHECK(constant.U(l, b) >= constant.U(l - 1, b));
    }
}

TEST_CASE("sigma equals direct quadrature") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> uu(0.002, 0.1);
    std::uniform_real_distribution<double> gap(0.05, 0.2);
    const std::size_t n = 300;
    std::vector<double> ts(n, 0.0);
    for (std::size_t l = 1; l < n; ++l) ts[l] = ts[l - 1] + gap(rng);
    Eigen::MatrixXd u(n, 4);
    for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = uu(rng);
    const auto model = integrate_uncertainty(u, ts, UncertaintyParams{});
    std::uniform_int_distribution<std::size_t> li(0, n - 1), bi(0, 3);
    for (int q = 0; q < 500; ++q) {
        std::size_t l1 = li(rng), l2 = li(rng);
        if (l1 > l2) std::swap(l1, l2);
        const std::size_t b1 = bi(rng), b2 = bi(rng);
        double direct = 0.5;
        for (std::size_t b : {b1, b2}) {
            for (std::size_t l = l1; l < l2; ++l) {
                direct += 0.5 * (u(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(b)) +
                                 u(static_cast<Eigen::Index>(l + 1), static_cast<Eigen::Index>(b))) *
                          (ts[l + 1] - ts[l]);
            }
        }
        CHECK(std::abs(model.sigma(b1, b2, l1, l2) - direct) < 1e-12);
    }
}

TEST_CASE("delta distance") {
    SystemConfig c;
    c.ue_height = 1.0;
    c.bs_positions = {{-5.0, 0.0, 1.0}, {5.0, 0.0, 1.0}, {0.0, 4.0, 3.0}};
    const Eigen::Vector2d x(0.3, -0.7);
    for (std::size_t b1 = 0; b1 < 3; ++b1) {
        for (std::size_t b2 = 0; b2 < 3; ++b2) CHECK(delta_distance(x, x, c, b1, b2) == 0.0);
        CHECK(delta_distance(x, {2.0, 2.0}, c, b1, b1) == 0.0);
    }
    CHECK(delta_distance({0.0, 0.0}, {1.0, 0.0}, c, 0, 1) == doctest::Approx(-2.0).epsilon(1e-14));
    CHECK(bs_distance({0.0, 4.0}, c, 2) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("loss vanishes at the true positions of noiseless pairs") {
    const auto run = noiseless_run(60.0);
    const auto truth = run.dataset.positions_2d();
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> li(0, run.dataset.size() - 1);
    for (int i = 0; i < 200; ++i) {
        std::size_t l1 = li(rng), l2 = li(rng);
        if (l1 > l2) std::swap(l1, l2);
        const auto pair = make_pair_sample(run.track, run.uncertainty, l1, l2);
        CHECK(pair.delta_phi.isApprox(-pair.delta_phi.transpose()));
        CHECK(pair.delta_phi.diagonal().isZero(0.0));
        CHECK((pair.sigma.array() >= run.uncertainty.params.beta).all());
        const auto res = pair_loss(truth.row(static_cast<Eigen::Index>(l1)).transpose(),
                                   truth.row(static_cast<Eigen::Index>(l2)).transpose(), pair, run.dataset.config);
        CHECK(res.loss < 1e-6);
    }
}

TEST_CASE("a common translation raises the loss") {
    const auto run = noiseless_run(60.0);
    const auto truth = run.dataset.positions_2d();
    const auto pair = make_pair_sample(run.track, run.uncertainty, 10, 400);
    const Eigen::Vector2d x1 = truth.row(10).transpose();
    const Eigen::Vector2d x2 = truth.row(400).transpose();
    const double at_truth = pair_loss(x1, x2, pair, run.dataset.config).loss;
    const Eigen::Vector2d shift(1.5, -1.0);
    CHECK(pair_loss(x1 + shift, x2 + shift, pair, run.dataset.config).loss > at_truth + 1e-3);
}

TEST_CASE("single antenna carries no information") {
    SystemConfig c;
    c.bs_positions = {{1.0, 2.0, 3.0}};
    PairSample p;
    p.delta_phi = Eigen::MatrixXd::Zero(1, 1);
    p.sigma = Eigen::MatrixXd::Constant(1, 1, 0.5);
    std::mt19937_64 rng(5);
    const auto pts = dopcc::testing::random_points(20, rng);
    for (Eigen::Index i = 0; i + 1 < pts.rows(); ++i) {
        const auto res = pair_loss(pts.row(i).transpose(), pts.row(i + 1).transpose(), p, c);
        CHECK(res.loss == 0.0);
        CHECK(res.grad1 == Eigen::Vector2d::Zero());
    }
}

TEST_CASE("analytic gradient matches central differences") {
    const auto config = four_bs();
    std::mt19937_64 rng(11);
    const double h = 1e-5;
    for (int trial = 0; trial < 200; ++trial) {
        const auto pair = random_pair(4, rng);
        const auto pts = dopcc::testing::random_points(2, rng, 6.0);
        const Eigen::Vector2d x1 = pts.row(0).transpose(), x2 = pts.row(1).transpose();
        const auto res = pair_loss(x1, x2, pair, config);
        Eigen::Vector4d fd, an;
        an << res.grad1, res.grad2;
        for (int c = 0; c < 4; ++c) {
            Eigen::Vector2d a1 = x1, a2 = x2, b1 = x1, b2 = x2;
            (c < 2 ? a1 : a2)[c % 2] += h;
            (c < 2 ? b1 : b2)[c % 2] -= h;
            fd[c] = (pair_loss(a1, a2, pair, config).loss - pair_loss(b1, b2, pair, config).loss) / (2.0 * h);
        }
        CHECK((an - fd).norm() <= 1e-5 * fd.norm());
    }
}

TEST_CASE("loss properties") {
    const auto config = four_bs();
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        const auto pair = random_pair(4, rng);
        const auto pts = dopcc::testing::random_points(2, rng, 6.0);
        const Eigen::Vector2d x1 = pts.row(0).transpose(), x2 = pts.row(1).transpose();
        const double base = pair_loss(x1, x2, pair, config).loss;
        CHECK(base >= 0.0);

        auto scaled = pair;
        scaled.sigma *= 3.0;
        CHECK(pair_loss(x1, x2, scaled, config).loss == doctest::Approx(base / 9.0).epsilon(1e-12));

        auto wider = pair;
        wider.sigma.array() += 0.5;  // beta doubled from 0.5 to 1
        CHECK(pair_loss(x1, x2, wider, config).loss <= base);

        // Consistent antenna relabeling.
        const std::vector<Eigen::Index> perm = {2, 0, 3, 1};
        auto relabeled_cfg = config;
        auto relabeled = pair;
        for (Eigen::Index i = 0; i < 4; ++i) {
            relabeled_cfg.bs_positions[static_cast<std::size_t>(i)] = config.bs_positions[static_cast<std::size_t>(perm[i])];
            for (Eigen::Index j = 0; j < 4; ++j) {
                relabeled.delta_phi(i, j) = pair.delta_phi(perm[i], perm[j]);
                relabeled.sigma(i, j) = pair.sigma(perm[i], perm[j]);
            }
        }
        CHECK(pair_loss(x1, x2, relabeled, relabeled_cfg).loss == doctest::Approx(base).epsilon(1e-12));

        // Label swap (b1, b2) -> (b2, b1) maps every summand onto its mirror, so the ordered
        // sum is twice the sum over b1 < b2.
        const double k = kTwoPi / config.wavelength();
        double half = 0.0;
        for (std::size_t b1 = 0; b1 < 4; ++b1) {
            for (std::size_t b2 = b1 + 1; b2 < 4; ++b2) {
                const auto i = static_cast<Eigen::Index>(b1), j = static_cast<Eigen::Index>(b2);
                const double r = (pair.delta_phi(i, j) - k * delta_distance(x1, x2, config, b1, b2)) / pair.sigma(i, j);
                half += r * r;
            }
        }
        CHECK(base == doctest::Approx(2.0 * half).epsilon(1e-12));
    }
}

TEST_CASE("estimate on a BS ground position") {
    SystemConfig c;
    c.ue_height = 2.5;
    c.bs_positions = {{-7.0, -7.0, 2.5}, {7.0, -7.0, 2.5}, {7.0, 7.0, 2.5}};
    std::mt19937_64 rng(2);
    const auto pair = random_pair(3, rng);
    const auto res = pair_loss({-7.0, -7.0}, {1.0, 2.0}, pair, c);
    CHECK(res.singular);
    CHECK(res.grad1.allFinite());
    CHECK(std::isfinite(res.loss));
    CHECK_FALSE(pair_loss({-6.0, -7.0}, {1.0, 2.0}, pair, c).singular);
}

TEST_CASE("uncertainty export and subsets") {
    const auto run = noiseless_run(5.0);
    auto track = run.track;
    attach_uncertainty(track, run.uncertainty);
    CHECK(track.uncertainty_cumsum == run.uncertainty.U);
    const auto sub = run.uncertainty.subset({3, 9});
    CHECK(sub.U.row(1) == run.uncertainty.U.row(9));
    CHECK(sub.timestamps[0] == run.dataset.points[3].timestamp);
}

}  // TEST_SUITE
