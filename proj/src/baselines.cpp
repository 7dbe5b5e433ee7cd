#include "dopcc/baselines.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <ostream>
#include <queue>

#include "dopcc/dsp.hpp"
#include "dopcc/errors.hpp"
#include "dopcc/parallel.hpp"

namespace dopcc {

const char* to_string(DissimilarityKind kind) {
    switch (kind) {
        case DissimilarityKind::cira: return "cira";
        case DissimilarityKind::fused: return "fused";
        case DissimilarityKind::geodesic: return "geodesic";
    }
    return "unknown";
}

std::vector<std::complex<double>> align_mean_delay(std::span<const std::complex<double>> cir) {
    const long n = static_cast<long>(cir.size());
    double total = 0.0;
    for (const auto& v : cir) total += std::norm(v);
    if (!(total > 0.0)) throw PreconditionError("cannot align an all-zero CIR");

    const long peak = static_cast<long>(strongest_tap(cir));
    double first = 0.0;
    for (long m = -n / 2; m < n - n / 2; ++m) {
        const long idx = ((peak + m) % n + n) % n;
        first += std::norm(cir[static_cast<std::size_t>(idx)]) * static_cast<double>(m);
    }
    const long shift = peak + std::lround(first / total);
    return rotate_cyclic(cir, shift);
}

namespace {

Eigen::VectorXd stacked_amplitudes(const CsiMatrix& csi) {
    const auto num_bs = csi.rows();
    const auto n = csi.cols();
    Eigen::VectorXd a(num_bs * n);
    for (Eigen::Index b = 0; b < num_bs; ++b) {
        const auto row = csi.row(b);
        const auto cir = inverse_dft(std::span<const std::complex<float>>(row.data(), static_cast<std::size_t>(n)));
        const auto aligned = align_mean_delay(cir);
        for (Eigen::Index k = 0; k < n; ++k) a[b * n + k] = std::abs(aligned[static_cast<std::size_t>(k)]);
    }
    const double norm = a.norm();
    if (!(norm > 0.0)) throw PreconditionError("zero CIR amplitude vector");
    return a / norm;
}

double cosine_to_dissimilarity(double cos_sim) { return std::sqrt(std::max(0.0, 1.0 - cos_sim)); }

}  // namespace

Eigen::MatrixXd cira_amplitudes(const CsiDataset& dataset) {
    const auto dim = static_cast<Eigen::Index>(dataset.config.num_bs() * dataset.config.num_subcarriers);
    Eigen::MatrixXd out(dim, static_cast<Eigen::Index>(dataset.size()));
    parallel_for(dataset.size(), [&](std::size_t l) {
        out.col(static_cast<Eigen::Index>(l)) = stacked_amplitudes(dataset.points[l].csi);
    });
    return out;
}

double cira_dissimilarity(const Datapoint& p1, const Datapoint& p2) {
    return cosine_to_dissimilarity(stacked_amplitudes(p1.csi).dot(stacked_amplitudes(p2.csi)));
}

DissimilarityMatrix cira_matrix(const CsiDataset& dataset) {
    const Eigen::MatrixXd amplitudes = cira_amplitudes(dataset);
    DissimilarityMatrix d;
    d.kind = DissimilarityKind::cira;
    const auto n = amplitudes.cols();
    d.values.resize(n, n);
    // Row blocks of the Gram matrix, each written by exactly one task.
    const Eigen::Index block = 256;
    const auto blocks = static_cast<std::size_t>((n + block - 1) / block);
    parallel_for(blocks, [&](std::size_t bi) {
        const Eigen::Index r0 = static_cast<Eigen::Index>(bi) * block;
        const Eigen::Index rows = std::min(block, n - r0);
        const Eigen::MatrixXd gram = amplitudes.middleCols(r0, rows).transpose() * amplitudes;
        d.values.middleRows(r0, rows) = gram.unaryExpr(&cosine_to_dissimilarity);
    });
    // Enforce exact symmetry and a zero diagonal.
    for (Eigen::Index i = 0; i < n; ++i) {
        d.values(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) d.values(j, i) = d.values(i, j);
    }
    return d;
}

DissimilarityMatrix fuse_with_timestamps(const DissimilarityMatrix& dmatrix, std::span<const double> timestamps,
                                         double v_max) {
    if (!(v_max > 0.0)) throw PreconditionError("v_max must be positive");
    const std::size_t n = dmatrix.size();
    if (timestamps.size() != n) throw PreconditionError("timestamp count does not match the matrix");

    std::vector<double> ratios;
    for (std::size_t l = 0; l + 1 < n; ++l) {
        const double d = dmatrix(l, l + 1);
        if (d > 0.0 && std::isfinite(d)) ratios.push_back(v_max * std::abs(timestamps[l + 1] - timestamps[l]) / d);
    }
    if (ratios.empty()) throw PreconditionError("no short-gap pairs available to calibrate the fusion scale");
    const auto mid = ratios.begin() + static_cast<std::ptrdiff_t>(ratios.size() / 2);
    std::nth_element(ratios.begin(), mid, ratios.end());
    double scale = *mid;
    if (ratios.size() % 2 == 0) {
        scale = 0.5 * (scale + *std::max_element(ratios.begin(), mid));
    }

    DissimilarityMatrix out;
    out.kind = DissimilarityKind::fused;
    out.values.resize(dmatrix.values.rows(), dmatrix.values.cols());
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double by_time = v_max * std::abs(timestamps[i] - timestamps[j]);
            out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                i == j ? 0.0 : std::min(scale * dmatrix(i, j), by_time);
        }
    });
    return out;
}

GeodesicDissimilarity::GeodesicDissimilarity(const DissimilarityMatrix& dmatrix, std::size_t k) {
    if (k == 0) throw PreconditionError("neighbor count must be positive");
    const std::size_t n = dmatrix.size();
    std::vector<std::vector<std::size_t>> neighbors(n);
    parallel_for(n, [&](std::size_t i) {
        std::vector<std::size_t> candidates;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i && std::isfinite(dmatrix(i, j))) candidates.push_back(j);
        }
        const std::size_t take = std::min(k, candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                          [&](std::size_t a, std::size_t b) {
                              const double da = dmatrix(i, a);
                              const double db = dmatrix(i, b);
                              return da < db || (da == db && a < b);
                          });
        candidates.resize(take);
        neighbors[i] = std::move(candidates);
    });

    std::vector<std::vector<std::size_t>> linked(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto j : neighbors[i]) {
            linked[i].push_back(j);
            linked[j].push_back(i);
        }
    }
    adjacency_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& list = linked[i];
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
        for (auto j : list) adjacency_[i].push_back({j, dmatrix(i, j)});
    }
    cache_.resize(n);
}

std::vector<double> GeodesicDissimilarity::dijkstra(std::size_t source) const {
    const std::size_t n = adjacency_.size();
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    dist[source] = 0.0;
    queue.push({0.0, source});
    while (!queue.empty()) {
        const auto [d, u] = queue.top();
        queue.pop();
        if (d > dist[u]) continue;
        for (const auto& e : adjacency_[u]) {
            const double candidate = d + e.weight;
            if (candidate < dist[e.to]) {
                dist[e.to] = candidate;
                queue.push({candidate, e.to});
            }
        }
    }
    return dist;
}

const std::vector<double>& GeodesicDissimilarity::row(std::size_t source) const {
    {
        std::lock_guard lock(mutex_);
        if (cache_.at(source)) return *cache_[source];
    }
    auto computed = std::make_unique<std::vector<double>>(dijkstra(source));
    std::lock_guard lock(mutex_);
    if (!cache_[source]) cache_[source] = std::move(computed);
    return *cache_[source];
}

double GeodesicDissimilarity::operator()(std::size_t i, std::size_t j) const { return row(i)[j]; }

void GeodesicDissimilarity::prefetch(const std::vector<std::size_t>& sources) const {
    std::vector<std::size_t> missing;
    {
        std::lock_guard lock(mutex_);
        for (auto s : sources) {
            if (!cache_.at(s)) missing.push_back(s);
        }
    }
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    parallel_for(missing.size(), [&](std::size_t i) { row(missing[i]); });
}

DissimilarityMatrix GeodesicDissimilarity::full_matrix() const {
    const std::size_t n = size();
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    prefetch(all);
    DissimilarityMatrix out;
    out.kind = DissimilarityKind::geodesic;
    out.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = row(i);
        for (std::size_t j = 0; j < n; ++j) out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[j];
    }
    return out;
}

DissimilarityMatrix geodesic(const DissimilarityMatrix& dmatrix, std::size_t k) {
    return GeodesicDissimilarity(dmatrix, k).full_matrix();
}

void write_dissimilarity(const DissimilarityMatrix& dmatrix, std::ostream& out) {
    auto put = [&out](auto bits) {
        std::array<char, sizeof(bits)> bytes{};
        for (std::size_t i = 0; i < sizeof(bits); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
        out.write(bytes.data(), bytes.size());
    };
    out.write("DMAT", 4);
    put(std::uint16_t{1});
    put(static_cast<std::uint16_t>(dmatrix.kind));
    put(static_cast<std::uint64_t>(dmatrix.size()));
    for (Eigen::Index i = 0; i < dmatrix.values.rows(); ++i) {
        for (Eigen::Index j = 0; j < dmatrix.values.cols(); ++j) {
            put(std::bit_cast<std::uint32_t>(static_cast<float>(dmatrix.values(i, j))));
        }
    }
    if (!out) throw IoError("dissimilarity dump failed", 0);
}

}  // namespace dopcc
