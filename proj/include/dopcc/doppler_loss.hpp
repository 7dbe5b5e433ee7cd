#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dopcc/dataset.hpp"
#include "dopcc/phase.hpp"

namespace dopcc {

struct UncertaintyParams {
    double beta = 0.5;      // rad, minimum uncertainty of any phase difference
    double gain = 0.01;     // rad/s per tap of RMS delay spread
    double u_min = 0.002;   // rad/s
    double u_max = 0.1;     // rad/s
    double floor_db = 15.0; // taps weaker than peak - floor_db are ignored for the delay spread

    void validate() const;
};

/// Power delay profile of one CSI row, cyclically rotated so the strongest tap sits at N/4,
/// with taps below the dynamic-range floor set to zero.
std::vector<double> cir_power_profile(std::span<const std::complex<float>> csi_row, double floor_db);

/// u = clip(gain * tau_rms / tap_spacing, u_min, u_max); an all-zero profile yields u_max.
double instantaneous_uncertainty(std::span<const double> cir_power, double tap_spacing,
                                 const UncertaintyParams& params);

/// Instantaneous uncertainties u_b(l) and their trapezoidal antiderivatives U_b(l).
struct UncertaintyModel {
    UncertaintyParams params;
    Eigen::MatrixXd u;  // L x B, rad/s
    Eigen::MatrixXd U;  // L x B, rad
    std::vector<double> timestamps;

    /// beta + (U_b1(l2) + U_b2(l2)) - (U_b1(l1) + U_b2(l1)); O(1) per query.
    double sigma(std::size_t b1, std::size_t b2, std::size_t l1, std::size_t l2) const {
        return sigma(b1, b2, l1, l2, params.beta);
    }
    double sigma(std::size_t b1, std::size_t b2, std::size_t l1, std::size_t l2, double beta) const;

    UncertaintyModel subset(const std::vector<std::size_t>& indices) const;
};

/// Integrates arbitrary per-sample uncertainties (rows = datapoints).
UncertaintyModel integrate_uncertainty(const Eigen::MatrixXd& u, std::span<const double> timestamps,
                                       const UncertaintyParams& params);

UncertaintyModel build_uncertainty(const CsiDataset& dataset, const UncertaintyParams& params = {});

/// Copies the cumulative uncertainties into the track (for export).
void attach_uncertainty(PhaseTrack& track, const UncertaintyModel& model);

/// Horizontal estimate lifted to 3-D at the known UE height.
double bs_distance(const Eigen::Vector2d& estimate, const SystemConfig& config, std::size_t b);

/// (d_b2(x2) - d_b1(x2)) - (d_b2(x1) - d_b1(x1)).
double delta_distance(const Eigen::Vector2d& x1, const Eigen::Vector2d& x2, const SystemConfig& config,
                      std::size_t b1, std::size_t b2);

/// Precomputed observables for one pair of datapoints. delta_phi carries the path-length
/// sign convention, delta_phi = (2 pi / lambda) * delta_distance at the true positions.
struct PairSample {
    std::size_t l1 = 0;
    std::size_t l2 = 0;
    Eigen::MatrixXd delta_phi;  // B x B
    Eigen::MatrixXd sigma;      // B x B
};

PairSample make_pair_sample(const PhaseTrack& track, const UncertaintyModel& uncertainty, std::size_t l1,
                            std::size_t l2, double beta);

inline PairSample make_pair_sample(const PhaseTrack& track, const UncertaintyModel& uncertainty,
                                   std::size_t l1, std::size_t l2) {
    return make_pair_sample(track, uncertainty, l1, l2, uncertainty.params.beta);
}

struct PairLoss {
    double loss = 0.0;
    Eigen::Vector2d grad1 = Eigen::Vector2d::Zero();
    Eigen::Vector2d grad2 = Eigen::Vector2d::Zero();
    bool singular = false;  // an estimate sat exactly on a BS; that distance gradient was zeroed
};

/// sum_{b1, b2} ((delta_phi - (2 pi / lambda) delta_d) / sigma)^2 with analytic gradients.
PairLoss pair_loss(const Eigen::Vector2d& x1, const Eigen::Vector2d& x2, const PairSample& pair,
                   const SystemConfig& config);

}  // namespace dopcc
