#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace dopcc {

inline constexpr double kSpeedOfLight = 299792458.0;

/// B x N_sub channel coefficients, row-major by base station then subcarrier.
using CsiMatrix =
    Eigen::Matrix<std::complex<float>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Global system constants shared by every datapoint of a dataset.
struct SystemConfig {
    double carrier_frequency = 1.272e9;  // Hz
    double bandwidth = 50e6;             // Hz
    std::size_t num_subcarriers = 64;
    std::vector<Eigen::Vector3d> bs_positions;
    double ue_height = 1.0;  // m, known and constant

    std::size_t num_bs() const { return bs_positions.size(); }
    double wavelength() const { return kSpeedOfLight / carrier_frequency; }
    double tap_spacing() const { return 1.0 / bandwidth; }

    /// Baseband frequency of subcarrier k on the centered grid (k - N/2) * bandwidth / N.
    double subcarrier_frequency(std::size_t k) const;

    /// Throws PreconditionError when an invariant does not hold.
    void validate() const;

    bool operator==(const SystemConfig&) const = default;
};

/// One measurement: CSI, ground-truth position (evaluation only), timestamp
/// and per-antenna instantaneous frequency offsets.
struct Datapoint {
    CsiMatrix csi;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    double timestamp = 0.0;
    Eigen::VectorXd freq_offsets;

    bool operator==(const Datapoint& other) const;
};

struct CsiDataset {
    SystemConfig config;
    std::vector<Datapoint> points;

    std::size_t size() const { return points.size(); }

    void validate() const;

    std::vector<double> timestamps() const;

    /// Ground-truth positions projected to the horizontal plane (L x 2).
    Eigen::MatrixX2d positions_2d() const;

    CsiDataset subset(const std::vector<std::size_t>& indices) const;

    /// Copy with every ground-truth position zeroed.
    CsiDataset without_positions() const;

    bool operator==(const CsiDataset&) const = default;
};

/// Serializes in the DPCC binary layout (little-endian).
void write_dataset(const CsiDataset& dataset, std::ostream& sink);
CsiDataset read_dataset(std::istream& source);

void save_dataset(const CsiDataset& dataset, const std::filesystem::path& path);
CsiDataset load_dataset(const std::filesystem::path& path);

/// Size in bytes of the fixed DPCC header (before BS positions).
inline constexpr std::size_t kDpccHeaderBytes = 44;

std::size_t dpcc_record_bytes(std::size_t num_bs, std::size_t num_subcarriers);

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Alternating contiguous blocks; the train part receives round-half-up(fraction * L)
/// points. The seed selects which part owns the first block.
SplitIndices split_indices(std::size_t num_points, double fraction, std::uint64_t seed);

std::pair<CsiDataset, CsiDataset> split_train_test(const CsiDataset& dataset, double fraction,
                                                   std::uint64_t seed);

struct DesyncOptions {
    int max_shift = 3;  // taps
    bool randomize_phase = true;
};

/// Per-BS random phase rotation and random cyclic delay shift of the CSI.
/// Only ever applied to neural-network features, never to phase tracking.
Datapoint desynchronize_features(const Datapoint& point, std::uint64_t seed,
                                 const DesyncOptions& options = {});

}  // namespace dopcc
