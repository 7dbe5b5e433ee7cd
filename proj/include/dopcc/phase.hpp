#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dopcc/dataset.hpp"

namespace dopcc {

/// Per-antenna unwrapped cumulative phases (L x B) and cumulative uncertainties.
struct PhaseTrack {
    Eigen::MatrixXd phases;              // rad
    Eigen::MatrixXd uncertainty_cumsum;  // rad; zero until an uncertainty model is attached
    std::vector<double> timestamps;      // s

    std::size_t num_points() const { return static_cast<std::size_t>(phases.rows()); }
    std::size_t num_bs() const { return static_cast<std::size_t>(phases.cols()); }

    PhaseTrack subset(const std::vector<std::size_t>& indices) const;
};

/// Maps an angle to (-pi, pi].
double wrap_to_pi(double angle);

/// Trapezoidal integration of the measured frequency offsets; phi_b(0) = 0.
PhaseTrack integrate_offsets(const CsiDataset& dataset);

/// Phase of the dominant propagation path: the strongest time-domain tap, refined to its
/// sub-tap peak on the centered subcarrier grid.
double extract_csi_phase(std::span<const std::complex<float>> csi_row);

struct RefineOptions {
    double trust_threshold = 1.5707963267948966;  // rad, |correction| below this is trusted
    double warn_fraction = 0.05;                 // flagged-step share that raises the warning
};

struct RefineResult {
    PhaseTrack track;
    std::size_t flagged_steps = 0;
    std::size_t total_steps = 0;
    bool warning = false;

    double flagged_fraction() const {
        return total_steps == 0 ? 0.0 : static_cast<double>(flagged_steps) / static_cast<double>(total_steps);
    }
};

/// Locks the integrated phases onto the phases measured in the CSI. At every step the
/// frequency-based prediction is corrected by wrap_to_pi(measured - predicted), and the
/// correction is carried into all later phases of that antenna. Corrections at or above the
/// trust threshold are applied but flagged.
RefineResult refine_with_csi(const PhaseTrack& coarse, const CsiDataset& dataset,
                             const RefineOptions& options = {});

/// (phi_b2(l2) - phi_b1(l2)) - (phi_b2(l1) - phi_b1(l1)).
double differential_phase(const PhaseTrack& track, std::size_t b1, std::size_t b2, std::size_t l1,
                          std::size_t l2);

/// Full pipeline used for training: integrate, then refine.
RefineResult track_phases(const CsiDataset& dataset, const RefineOptions& options = {});

/// CSV with columns t, phi_1..phi_B, U_1..U_B.
void write_phase_csv(const PhaseTrack& track, std::ostream& out);

}  // namespace dopcc
