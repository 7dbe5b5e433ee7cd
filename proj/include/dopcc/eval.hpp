#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace dopcc {

/// x -> A x + b.
struct AffineTransform {
    Eigen::Matrix2d matrix = Eigen::Matrix2d::Identity();
    Eigen::Vector2d offset = Eigen::Vector2d::Zero();

    Eigen::MatrixX2d apply(const Eigen::MatrixX2d& points) const;
};

/// Least-squares optimal affine map from estimates to truths (normal equations in
/// homogeneous coordinates). Throws PreconditionError for collinear estimates.
AffineTransform fit_affine(const Eigen::MatrixX2d& estimates, const Eigen::MatrixX2d& truths);

struct ErrorMetrics {
    double mae = 0.0;
    double drms = 0.0;
    double cep = 0.0;
    double r95 = 0.0;
    std::vector<double> ecdf;  // sorted absolute errors
};

/// Percentile with linear interpolation between order statistics, q in [0, 1].
double percentile_sorted(const std::vector<double>& sorted, double q);

ErrorMetrics error_metrics(const Eigen::MatrixX2d& estimates, const Eigen::MatrixX2d& truths);

struct ChartQuality {
    double ct = 0.0;
    double tw = 0.0;
    double ks = 0.0;
};

/// Continuity, trustworthiness (rank-based, neighborhood size k) and Kruskal's stress
/// with the optimal scale factor.
ChartQuality chart_quality(const Eigen::MatrixX2d& estimates, const Eigen::MatrixX2d& truths, std::size_t k);

std::size_t default_neighborhood(std::size_t num_points);

struct EvalReport {
    double mae = 0.0, drms = 0.0, cep = 0.0, r95 = 0.0;
    double ct = 0.0, tw = 0.0, ks = 0.0;
    std::size_t num_points = 0;
    std::size_t neighborhood = 0;
    std::optional<AffineTransform> transform;
    std::vector<double> ecdf;
};

/// Optionally fits and applies the optimal affine transform first, then computes all metrics.
EvalReport evaluate_chart(const Eigen::MatrixX2d& estimates, const Eigen::MatrixX2d& truths, bool affine,
                          std::optional<std::size_t> k = std::nullopt);

/// Flat `key = value` text.
void write_report(const EvalReport& report, std::ostream& out);

/// Two columns: error, cumulative probability.
void write_ecdf(const std::vector<double>& sorted_errors, std::ostream& out);

/// Color of a ground-truth position: a fixed gradient over the given frame.
struct ColorFrame {
    double x_min = -7.0, y_min = -7.0, x_max = 7.0, y_max = 7.0;
};
std::array<unsigned char, 3> position_color(const Eigen::Vector2d& truth, const ColorFrame& frame);

/// CSV with columns est_x1, est_x2, true_x1, true_x2, color.
void export_chart(const Eigen::MatrixX2d& estimates, const Eigen::MatrixX2d& truths, const ColorFrame& frame,
                  std::ostream& out);

/// Scatter plot of the estimates, colored by ground truth.
void export_chart_svg(const Eigen::MatrixX2d& estimates, const Eigen::MatrixX2d& truths, const ColorFrame& frame,
                      std::ostream& out);

}  // namespace dopcc
