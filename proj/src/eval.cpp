#include "dopcc/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>

#include "dopcc/errors.hpp"
#include "dopcc/parallel.hpp"
#include "dopcc/textio.hpp"

namespace dopcc {

Eigen::MatrixX2d AffineTransform::apply(const Eigen::MatrixX2d& points) const {
    Eigen::MatrixX2d out = points * matrix.transpose();
    out.rowwise() += offset.transpose();
    return out;
}

AffineTransform fit_affine(const Eigen::MatrixX2d& estimates, const Eigen::MatrixX2d& truths) {
    const auto n = estimates.rows();
    if (n != truths.rows()) throw PreconditionError("estimates and truths differ in length");
    if (n < 3) throw PreconditionError("affine fit needs at least 3 points");

    const Eigen::RowVector2d mean = estimates.colwise().mean();
    const Eigen::MatrixX2d centered = estimates.rowwise() - mean;
    const Eigen::Matrix2d scatter = centered.transpose() * centered;
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(scatter);
    const double largest = eig.eigenvalues().maxCoeff();
    if (!(largest > 0.0) || !(eig.eigenvalues().minCoeff() > 1e-12 * largest)) {
        throw PreconditionError("affine fit is rank deficient: estimates are collinear or coincident");
    }

    Eigen::MatrixXd homogeneous(n, 3);
    homogeneous.leftCols<2>() = estimates;
    homogeneous.col(2).setOnes();
    const Eigen::Matrix3d normal = homogeneous.transpose() * homogeneous;
    const Eigen::Matrix<double, 3, 2> rhs = homogeneous.transpose() * truths;
    const Eigen::Matrix<double, 3, 2> solution = normal.ldlt().solve(rhs);

    AffineTransform t;
    t.matrix = solution.topRows<2>().transpose();
    t.offset = solution.row(2).transpose();
    return t;
}

double percentile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw PreconditionError("percentile of an empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

ErrorMetrics error_metrics(const Eigen::MatrixX2d& estimates, const Eigen::MatrixX2d& truths) {
    if (estimates.rows() != truths.rows() || estimates.rows() < 1) {
        throw PreconditionError("error metrics need equal, nonzero lengths");
    }
    ErrorMetrics m;
    m.ecdf.resize(static_cast<std::size_t>(estimates.rows()));
    double sum = 0.0;
    double sum_sq = 0.0;
    for (Eigen::Index l = 0; l < estimates.rows(); ++l) {
        const double e = (estimates.row(l) - truths.row(l)).norm();
        m.ecdf[static_cast<std::size_t>(l)] = e;
        sum += e;
        sum_sq += e * e;
    }
    const double n = static_cast<double>(estimates.rows());
    m.mae = sum / n;
    m.drms = std::sqrt(sum_sq / n);
    std::sort(m.ecdf.begin(), m.ecdf.end());
    m.cep = percentile_sorted(m.ecdf, 0.5);
    m.r95 = percentile_sorted(m.ecdf, 0.95);
    return m;
}

namespace {

// ranks[j] = 1-based rank of j among the other points ordered by distance from i.
void rank_from(const Eigen::MatrixX2d& points, std::size_t i, std::vector<std::size_t>& order,
               std::vector<double>& dist, std::vector<std::size_t>& ranks) {
    const std::size_t n = static_cast<std::size_t>(points.rows());
    for (std::size_t j = 0; j < n; ++j) {
        dist[j] = (points.row(static_cast<Eigen::Index>(j)) - points.row(static_cast<Eigen::Index>(i))).squaredNorm();
    }
    order.clear();
    for (std::size_t j = 0; j < n; ++j) {
        if (j != i) order.push_back(j);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
    });
    ranks[i] = 0;
    for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = r + 1;
}

}  // namespace

ChartQuality chart_quality(const Eigen::MatrixX2d& estimates, const Eigen::MatrixX2d& truths, std::size_t k) {
    const std::size_t n = static_cast<std::size_t>(estimates.rows());
    if (static_cast<std::size_t>(truths.rows()) != n) throw PreconditionError("estimates and truths differ in length");
    if (k == 0 || k >= n) throw PreconditionError("neighborhood size must satisfy 0 < k < L");
    const double ln = static_cast<double>(n);
    const double lk = static_cast<double>(k);
    const double denom = ln * lk * (2.0 * ln - 3.0 * lk - 1.0);
    if (!(denom > 0.0)) throw PreconditionError("neighborhood size too large for the trustworthiness normalization");

    std::vector<std::uint64_t> tw_terms(n, 0), ct_terms(n, 0);
    parallel_for(n, [&](std::size_t i) {
        std::vector<std::size_t> order_truth, order_chart, rank_truth(n), rank_chart(n);
        std::vector<double> dist(n);
        rank_from(truths, i, order_truth, dist, rank_truth);
        rank_from(estimates, i, order_chart, dist, rank_chart);
        std::uint64_t tw = 0;
        std::uint64_t ct = 0;
        for (std::size_t r = 0; r < k; ++r) {
            const std::size_t j_chart = order_chart[r];
            if (rank_truth[j_chart] > k) tw += rank_truth[j_chart] - k;
            const std::size_t j_truth = order_truth[r];
            if (rank_chart[j_truth] > k) ct += rank_chart[j_truth] - k;
        }
        tw_terms[i] = tw;
        ct_terms[i] = ct;
    });
    const auto tw_sum = std::accumulate(tw_terms.begin(), tw_terms.end(), std::uint64_t{0});
    const auto ct_sum = std::accumulate(ct_terms.begin(), ct_terms.end(), std::uint64_t{0});

    ChartQuality q;
    q.tw = 1.0 - 2.0 / denom * static_cast<double>(tw_sum);
    q.ct = 1.0 - 2.0 / denom * static_cast<double>(ct_sum);

    // Kruskal's stress with the scale s minimizing sum (s dhat - d)^2.
    std::vector<std::array<double, 3>> row_sums(n, {0.0, 0.0, 0.0});
    parallel_for(n, [&](std::size_t i) {
        auto& acc = row_sums[i];
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dh = (estimates.row(static_cast<Eigen::Index>(i)) - estimates.row(static_cast<Eigen::Index>(j))).norm();
            const double d = (truths.row(static_cast<Eigen::Index>(i)) - truths.row(static_cast<Eigen::Index>(j))).norm();
            acc[0] += dh * d;
            acc[1] += dh * dh;
            acc[2] += d * d;
        }
    });
    double cross = 0.0, chart_sq = 0.0, truth_sq = 0.0;
    for (const auto& acc : row_sums) {
        cross += acc[0];
        chart_sq += acc[1];
        truth_sq += acc[2];
    }
    if (!(truth_sq > 0.0)) throw PreconditionError("ground truth points are all coincident");
    const double s = chart_sq > 0.0 ? cross / chart_sq : 0.0;
    double residual = 0.0;
    std::vector<double> row_residual(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        double acc = 0.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dh = (estimates.row(static_cast<Eigen::Index>(i)) - estimates.row(static_cast<Eigen::Index>(j))).norm();
            const double d = (truths.row(static_cast<Eigen::Index>(i)) - truths.row(static_cast<Eigen::Index>(j))).norm();
            acc += (s * dh - d) * (s * dh - d);
        }
        row_residual[i] = acc;
    });
    for (double r : row_residual) residual += r;
    q.ks = std::sqrt(residual / truth_sq);
    return q;
}

std::size_t default_neighborhood(std::size_t num_points) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.05 * static_cast<double>(num_points))));
}

EvalReport evaluate_chart(const Eigen::MatrixX2d& estimates, const Eigen::MatrixX2d& truths, bool affine,
                          std::optional<std::size_t> k) {
    EvalReport report;
    Eigen::MatrixX2d chart = estimates;
    if (affine) {
        report.transform = fit_affine(estimates, truths);
        chart = report.transform->apply(estimates);
    }
    const auto errors = error_metrics(chart, truths);
    report.mae = errors.mae;
    report.drms = errors.drms;
    report.cep = errors.cep;
    report.r95 = errors.r95;
    report.ecdf = errors.ecdf;
    report.num_points = static_cast<std::size_t>(estimates.rows());
    report.neighborhood = k.value_or(default_neighborhood(report.num_points));
    const auto quality = chart_quality(chart, truths, report.neighborhood);
    report.ct = quality.ct;
    report.tw = quality.tw;
    report.ks = quality.ks;
    if (!(report.cep <= report.r95) || !(report.mae <= report.drms * (1.0 + 1e-12))) {
        throw NumericError("metric ordering violated (cep <= r95, mae <= drms)");
    }
    return report;
}

void write_report(const EvalReport& r, std::ostream& out) {
    out << "points = " << r.num_points << '\n'
        << "neighborhood = " << r.neighborhood << '\n'
        << "mae = " << format_double(r.mae) << '\n'
        << "drms = " << format_double(r.drms) << '\n'
        << "cep = " << format_double(r.cep) << '\n'
        << "r95 = " << format_double(r.r95) << '\n'
        << "ct = " << format_double(r.ct) << '\n'
        << "tw = " << format_double(r.tw) << '\n'
        << "ks = " << format_double(r.ks) << '\n';
    out << "transform = " << (r.transform ? "affine" : "none") << '\n';
    if (r.transform) {
        const auto& a = r.transform->matrix;
        const auto& b = r.transform->offset;
        out << "transform_matrix = " << format_double(a(0, 0)) << ", " << format_double(a(0, 1)) << ", "
            << format_double(a(1, 0)) << ", " << format_double(a(1, 1)) << '\n'
            << "transform_offset = " << format_double(b[0]) << ", " << format_double(b[1]) << '\n';
    }
}

void write_ecdf(const std::vector<double>& sorted_errors, std::ostream& out) {
    out << "error,cumulative_probability\n";
    const double n = static_cast<double>(sorted_errors.size());
    for (std::size_t i = 0; i < sorted_errors.size(); ++i) {
        out << format_double(sorted_errors[i]) << ',' << format_double(static_cast<double>(i + 1) / n) << '\n';
    }
}

std::array<unsigned char, 3> position_color(const Eigen::Vector2d& truth, const ColorFrame& frame) {
    const double u = std::clamp((truth.x() - frame.x_min) / (frame.x_max - frame.x_min), 0.0, 1.0);
    const double v = std::clamp((truth.y() - frame.y_min) / (frame.y_max - frame.y_min), 0.0, 1.0);
    auto channel = [](double x) { return static_cast<unsigned char>(std::lround(255.0 * x)); };
    return {channel(u), channel(v), channel(1.0 - 0.5 * (u + v))};
}

namespace {

std::string hex_color(const std::array<unsigned char, 3>& c) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", c[0], c[1], c[2]);
    return buf;
}

std::string g9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

void export_chart(const Eigen::MatrixX2d& estimates, const Eigen::MatrixX2d& truths, const ColorFrame& frame,
                  std::ostream& out) {
    if (estimates.rows() != truths.rows()) throw PreconditionError("estimates and truths differ in length");
    out << "est_x1,est_x2,true_x1,true_x2,color\n";
    for (Eigen::Index l = 0; l < estimates.rows(); ++l) {
        out << g9(estimates(l, 0)) << ',' << g9(estimates(l, 1)) << ',' << g9(truths(l, 0)) << ','
            << g9(truths(l, 1)) << ',' << hex_color(position_color(truths.row(l).transpose(), frame)) << '\n';
    }
    if (!out) throw IoError("chart export failed", 0);
}

void export_chart_svg(const Eigen::MatrixX2d& estimates, const Eigen::MatrixX2d& truths, const ColorFrame& frame,
                      std::ostream& out) {
    constexpr double kSize = 600.0;
    constexpr double kMargin = 20.0;
    const double span = std::max(frame.x_max - frame.x_min, frame.y_max - frame.y_min) * 1.2;
    const double cx = 0.5 * (frame.x_min + frame.x_max);
    const double cy = 0.5 * (frame.y_min + frame.y_max);
    auto px = [&](double x) { return kMargin + (x - cx + span / 2) / span * (kSize - 2 * kMargin); };
    auto py = [&](double y) { return kSize - kMargin - (y - cy + span / 2) / span * (kSize - 2 * kMargin); };
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (Eigen::Index l = 0; l < estimates.rows(); ++l) {
        out << "<circle cx=\"" << g9(px(estimates(l, 0))) << "\" cy=\"" << g9(py(estimates(l, 1)))
            << "\" r=\"1.5\" fill=\"" << hex_color(position_color(truths.row(l).transpose(), frame)) << "\"/>\n";
    }
    out << "</svg>\n";
}

}  // namespace dopcc
