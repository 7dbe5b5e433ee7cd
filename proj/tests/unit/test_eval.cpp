#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "dopcc/errors.hpp"
#include "dopcc/eval.hpp"
#include "dopcc/textio.hpp"
#include "../oracles.hpp"
#include "../support.hpp"

using namespace dopcc;
using dopcc::testing::random_points;

namespace {

Eigen::MatrixX2d rows(std::initializer_list<std::pair<double, double>> pts) {
    Eigen::MatrixX2d m(static_cast<Eigen::Index>(pts.size()), 2);
    Eigen::Index i = 0;
    for (const auto& [x, y] : pts) {
        m(i, 0) = x;
        m(i, 1) = y;
        ++i;
    }
    return m;
}

double drms_of(const Eigen::MatrixX2d& a, const Eigen::MatrixX2d& b) {
    return std::sqrt((a - b).rowwise().squaredNorm().mean());
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("affine fit of identical sets") {
    std::mt19937_64 rng(1);
    const auto p = random_points(20, rng);
    const auto t = fit_affine(p, p);
    CHECK((t.matrix - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(t.offset.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("affine fit recovers a rotation and translation") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double angle = u(rng);
        Eigen::Matrix2d r;
        r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
        const Eigen::Vector2d t(u(rng) * 10.0, u(rng) * 10.0);
        const auto est = random_points(40, rng, 7.0);
        const Eigen::MatrixX2d truth = (est * r.transpose()).rowwise() + t.transpose();
        const auto fit = fit_affine(est, truth);
        CHECK((fit.matrix - r).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((fit.offset - t).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((fit.apply(est) - truth).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("affine fit never loses to the identity") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const auto est = random_points(50, rng);
        const auto truth = random_points(50, rng);
        const auto fit = fit_affine(est, truth);
        CHECK(drms_of(fit.apply(est), truth) <= drms_of(est, truth) + 1e-12);
    }
}

TEST_CASE("degenerate affine fits are rejected") {
    const auto collinear = rows({{0, 0}, {1, 1}, {2, 2}, {3, 3}});
    CHECK_THROWS_AS(fit_affine(collinear, collinear), PreconditionError);
    const auto two = rows({{0, 0}, {1, 0}});
    CHECK_THROWS_AS(fit_affine(two, two), PreconditionError);
}

TEST_CASE("two-point error metrics") {
    const auto truth = rows({{0, 0}, {0, 0}});
    const auto est = rows({{3, 0}, {0, 4}});
    const auto m = error_metrics(est, truth);
    CHECK(m.mae == 3.5);
    CHECK(m.drms == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
    CHECK(m.cep == 3.5);
    CHECK(m.ecdf == std::vector<double>{3.0, 4.0});

    const auto perfect = error_metrics(truth, truth);
    CHECK(perfect.mae == 0.0);
    CHECK(perfect.drms == 0.0);
    CHECK(perfect.cep == 0.0);
    CHECK(perfect.r95 == 0.0);
}

TEST_CASE("percentiles match the sort-and-interpolate oracle") {
    std::mt19937_64 rng(4);
    std::exponential_distribution<double> e(0.7);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixX2d truth = Eigen::MatrixX2d::Zero(100, 2);
        Eigen::MatrixX2d est(100, 2);
        std::vector<double> errors;
        for (Eigen::Index i = 0; i < 100; ++i) {
            est(i, 0) = e(rng);
            est(i, 1) = 0.0;
            errors.push_back(est(i, 0));
        }
        const auto m = error_metrics(est, truth);
        CHECK(m.cep == dopcc::oracle::percentile(errors, 0.5));
        CHECK(m.r95 == dopcc::oracle::percentile(errors, 0.95));
        CHECK(m.cep <= m.r95);
        CHECK(m.mae <= m.drms);
    }
    CHECK(percentile_sorted({1.0, 2.0, 4.0}, 0.75) == 3.0);
    CHECK(percentile_sorted({5.0}, 0.3) == 5.0);
}

TEST_CASE("chart quality of exact and scaled charts") {
    std::mt19937_64 rng(5);
    const auto truth = random_points(60, rng);
    const auto same = chart_quality(truth, truth, 5);
    CHECK(same.ct == 1.0);
    CHECK(same.tw == 1.0);
    CHECK(same.ks == doctest::Approx(0.0));
    const Eigen::MatrixX2d scaled = 5.0 * truth;
    const auto s = chart_quality(scaled, truth, 5);
    CHECK(s.ct == 1.0);
    CHECK(s.tw == 1.0);
    CHECK(s.ks < 1e-7);
    CHECK_THROWS_AS(chart_quality(truth, truth, 60), PreconditionError);
    CHECK_THROWS_AS(chart_quality(truth, truth, 0), PreconditionError);
}

TEST_CASE("chart quality matches the brute-force rank oracle") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 30; ++trial) {
        const auto truth = random_points(30, rng);
        const Eigen::MatrixX2d chart = truth + 0.4 * random_points(30, rng);
        for (std::size_t k : {1u, 3u, 7u}) {
            const auto q = chart_quality(chart, truth, k);
            CHECK(q.tw == doctest::Approx(dopcc::oracle::trustworthiness(chart, truth, k)).epsilon(1e-14));
            CHECK(q.ct == doctest::Approx(dopcc::oracle::trustworthiness(truth, chart, k)).epsilon(1e-14));
            CHECK(q.ks == doctest::Approx(dopcc::oracle::kruskal_stress(chart, truth)).epsilon(1e-9));
            CHECK(q.tw >= 0.0);
            CHECK(q.tw <= 1.0);
            CHECK(q.ct >= 0.0);
            CHECK(q.ct <= 1.0);
        }
        const Eigen::MatrixX2d stretched = 3.7 * chart;
        CHECK(chart_quality(stretched, truth, 3).ks == doctest::Approx(chart_quality(chart, truth, 3).ks).epsilon(1e-12));
    }
}

TEST_CASE("report assembly") {
    std::mt19937_64 rng(7);
    const auto truth = random_points(200, rng);
    const Eigen::MatrixX2d est = 0.8 * truth + 0.3 * random_points(200, rng);
    CHECK(default_neighborhood(200) == 10);
    CHECK(default_neighborhood(10) == 1);
    const auto raw = evaluate_chart(est, truth, false);
    const auto aff = evaluate_chart(est, truth, true);
    CHECK_FALSE(raw.transform.has_value());
    REQUIRE(aff.transform.has_value());
    CHECK(aff.drms <= raw.drms);
    CHECK(raw.neighborhood == 10);
    CHECK(raw.num_points == 200);

    std::ostringstream out;
    write_report(aff, out);
    std::istringstream in(out.str());
    const auto cfg = KeyValueConfig::parse(in);
    CHECK(parse_double(cfg.at("mae")) == aff.mae);
    CHECK(cfg.at("transform") == "affine");
    CHECK(cfg.contains("transform_matrix"));
    std::ostringstream none;
    write_report(raw, none);
    CHECK(none.str().find("transform = none") != std::string::npos);

    std::ostringstream ecdf;
    write_ecdf({1.0, 2.0}, ecdf);
    const auto ecdf_text = ecdf.str();
    CHECK(ecdf_text.rfind("error,cumulative_probability\n", 0) == 0);
    CHECK(std::count(ecdf_text.begin(), ecdf_text.end(), '\n') == 3);
}

TEST_CASE("chart export") {
    const ColorFrame frame;
    const auto one_est = rows({{0.123456789, -2.5}});
    const auto one_truth = rows({{1.0, 2.0}});
    std::ostringstream out;
    export_chart(one_est, one_truth, frame, out);
    std::istringstream lines(out.str());
    std::string header, row, extra;
    std::getline(lines, header);
    std::getline(lines, row);
    CHECK(header == "est_x1,est_x2,true_x1,true_x2,color");
    CHECK_FALSE(std::getline(lines, extra));
    const auto fields = split_list(row, ',');
    REQUIRE(fields.size() == 5);
    CHECK(parse_double(fields[0]) == doctest::Approx(0.123456789).epsilon(1e-6));
    CHECK(parse_double(fields[1]) == -2.5);
    CHECK(fields[4].size() == 7);
    CHECK(fields[4][0] == '#');

    CHECK(position_color({1.0, 2.0}, frame) == position_color({1.0, 2.0}, frame));
    CHECK(position_color({-7.0, -7.0}, frame) != position_color({7.0, 7.0}, frame));
    CHECK(position_color({-100.0, 0.0}, frame) == position_color({-7.0, 0.0}, frame));

    std::ostringstream svg;
    export_chart_svg(one_est, one_truth, frame, svg);
    CHECK(svg.str().find("<svg") != std::string::npos);
    CHECK(svg.str().find("<circle") != std::string::npos);
}

}  // TEST_SUITE
