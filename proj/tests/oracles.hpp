#pragma once

// Brute-force reference implementations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace dopcc::oracle {

/// Symmetrized k-nearest-neighbor graph (ties by index) followed by Floyd-Warshall.
inline Eigen::MatrixXd knn_floyd_warshall(const Eigen::MatrixXd& d, std::size_t k) {
    const auto n = d.rows();
    const double inf = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd w = Eigen::MatrixXd::Constant(n, n, inf);
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<Eigen::Index> order;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i && std::isfinite(d(i, j))) order.push_back(j);
        }
        std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            return d(i, a) != d(i, b) ? d(i, a) < d(i, b) : a < b;
        });
        for (std::size_t m = 0; m < std::min(k, order.size()); ++m) {
            w(i, order[m]) = d(i, order[m]);
            w(order[m], i) = d(order[m], i);
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) w(i, i) = 0.0;
    for (Eigen::Index via = 0; via < n; ++via) {
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                if (w(i, via) + w(via, j) < w(i, j)) w(i, j) = w(i, via) + w(via, j);
            }
        }
    }
    return w;
}

/// Rank of j among the neighbors of i (1 = nearest), counted directly; ties by index.
inline std::size_t rank_of(const Eigen::MatrixX2d& p, Eigen::Index i, Eigen::Index j) {
    const double dij = (p.row(i) - p.row(j)).norm();
    std::size_t r = 1;
    for (Eigen::Index m = 0; m < p.rows(); ++m) {
        if (m == i || m == j) continue;
        const double dim = (p.row(i) - p.row(m)).norm();
        if (dim < dij || (dim == dij && m < j)) ++r;
    }
    return r;
}

/// 1 - 2 / (L k (2L - 3k - 1)) * sum over chart neighbors that are not original neighbors of
/// (original rank - k). Continuity is the same with the two spaces swapped.
inline double trustworthiness(const Eigen::MatrixX2d& chart, const Eigen::MatrixX2d& original, std::size_t k) {
    const auto n = chart.rows();
    double penalty = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            const auto r_chart = rank_of(chart, i, j);
            const auto r_orig = rank_of(original, i, j);
            if (r_chart <= k && r_orig > k) penalty += static_cast<double>(r_orig - k);
        }
    }
    const double L = static_cast<double>(n), K = static_cast<double>(k);
    return 1.0 - 2.0 / (L * K * (2.0 * L - 3.0 * K - 1.0)) * penalty;
}

/// Stress with the optimal scale, via the identity min_s |s a - b|^2 = |b|^2 - (a.b)^2 / |a|^2.
inline double kruskal_stress(const Eigen::MatrixX2d& chart, const Eigen::MatrixX2d& original) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (Eigen::Index i = 0; i < chart.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < chart.rows(); ++j) {
            const double a = (chart.row(i) - chart.row(j)).norm();
            const double b = (original.row(i) - original.row(j)).norm();
            ab += a * b;
            aa += a * a;
            bb += b * b;
        }
    }
    return std::sqrt(std::max(0.0, 1.0 - ab * ab / (aa * bb)));
}

/// Sort, then interpolate linearly between the order statistics around q (n - 1).
inline double percentile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    const double h = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

}  // namespace dopcc::oracle
