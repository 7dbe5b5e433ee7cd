#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dopcc/dataset.hpp"

namespace dopcc {

enum class DissimilarityKind { cira, fused, geodesic };

const char* to_string(DissimilarityKind kind);

/// Symmetric L x L dissimilarities with zero diagonal. Non-neighbors may be +inf.
struct DissimilarityMatrix {
    Eigen::MatrixXd values;
    DissimilarityKind kind = DissimilarityKind::cira;

    std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
    double operator()(std::size_t i, std::size_t j) const {
        return values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
};

/// Cyclic shift placing the power-weighted mean delay (taken on the profile centered at the
/// strongest tap) at tap 0.
std::vector<std::complex<double>> align_mean_delay(std::span<const std::complex<double>> cir);

/// Stacked per-BS aligned CIR amplitudes, one column per datapoint.
Eigen::MatrixXd cira_amplitudes(const CsiDataset& dataset);

/// sqrt(1 - cos_sim(a1, a2)) of the stacked aligned amplitude vectors.
double cira_dissimilarity(const Datapoint& p1, const Datapoint& p2);

/// All pairwise CIRA dissimilarities of a dataset.
DissimilarityMatrix cira_matrix(const CsiDataset& dataset);

/// min(scale * d, v_max * |t_i - t_j|); scale is the median of v_max |dt| / d over
/// temporally adjacent pairs.
DissimilarityMatrix fuse_with_timestamps(const DissimilarityMatrix& dmatrix, std::span<const double> timestamps,
                                         double v_max);

/// Shortest paths through the symmetrized k-nearest-neighbor graph of a dissimilarity
/// matrix. Rows are computed with Dijkstra on demand and cached.
class GeodesicDissimilarity {
  public:
    GeodesicDissimilarity(const DissimilarityMatrix& dmatrix, std::size_t k);

    std::size_t size() const { return adjacency_.size(); }

    /// Distance from i to j; +inf when disconnected.
    double operator()(std::size_t i, std::size_t j) const;

    /// Computes (in parallel) and caches the rows of the given sources.
    void prefetch(const std::vector<std::size_t>& sources) const;

    DissimilarityMatrix full_matrix() const;

    struct Edge {
        std::size_t to;
        double weight;
    };
    const std::vector<std::vector<Edge>>& adjacency() const { return adjacency_; }

  private:
    std::vector<double> dijkstra(std::size_t source) const;
    const std::vector<double>& row(std::size_t source) const;

    std::vector<std::vector<Edge>> adjacency_;
    mutable std::vector<std::unique_ptr<std::vector<double>>> cache_;
    mutable std::mutex mutex_;
};

DissimilarityMatrix geodesic(const DissimilarityMatrix& dmatrix, std::size_t k);

/// Binary dump: "DMAT", u16 version, u16 kind, u64 L (16 bytes), then L x L f32 row-major.
void write_dissimilarity(const DissimilarityMatrix& dmatrix, std::ostream& out);

}  // namespace dopcc
