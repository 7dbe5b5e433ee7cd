#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dopcc/dataset.hpp"

namespace dopcc {

struct Rect {
    double x_min, y_min, x_max, y_max;

    bool contains(const Eigen::Vector2d& p) const {
        return p.x() >= x_min && p.x() <= x_max && p.y() >= y_min && p.y() <= y_max;
    }
    double area() const { return (x_max - x_min) * (y_max - y_min); }
};

/// Union of axis-aligned rectangles (two of them form the L-shaped area).
struct Area {
    std::vector<Rect> pieces;

    bool contains(const Eigen::Vector2d& p) const;

    /// True when every point of the segment a -> b lies inside the union.
    bool contains_segment(const Eigen::Vector2d& a, const Eigen::Vector2d& b) const;

    Rect bounding_box() const;
};

struct Scatterer {
    Eigen::Vector3d position;
    double gain = 0.5;  // reflection gain in [0, 1]
};

struct SimScenario {
    SystemConfig config;
    Area area;
    double speed = 0.25;        // m/s, median target
    double sample_rate = 10.0;  // Hz
    double duration = 400.0;    // s
    double cfo_initial = 20e3;  // Hz
    double cfo_drift_std = 0.1; // Hz / sqrt(s)
    double snr_db = 20.0;       // +inf disables CSI noise
    double freq_noise_std = 0.0;  // Hz, jitter on the frequency offset measurements
    std::vector<Scatterer> multipath;
    std::uint64_t seed = 1;

    std::size_t num_samples() const;

    void validate() const;
};

/// Desk-scale default: four BS at the corners of a 14 m x 14 m box, L-shaped area.
SimScenario default_scenario();

struct TrajectorySample {
    double timestamp;
    Eigen::Vector3d position;
    Eigen::Vector3d velocity;
};

using Trajectory = std::vector<TrajectorySample>;

/// Random-waypoint path at constant height, speed per segment uniform in [0.8, 1.2] * speed.
Trajectory generate_trajectory(const SimScenario& scenario);

/// Exact per-sample carrier frequency offset f_CFO(t_l) and its integrated phase.
struct CfoPath {
    std::vector<double> frequency;  // Hz
    std::vector<double> phase;      // rad, trapezoidal integral from t_0
};

CfoPath generate_cfo(const SimScenario& scenario, std::span<const double> timestamps);

/// Doppler shift seen by a BS: -(1/lambda) d/dt ||x - z||.
double doppler_shift(const Eigen::Vector3d& position, const Eigen::Vector3d& velocity,
                     const Eigen::Vector3d& bs, double wavelength);

CsiDataset synthesize_csi(const SimScenario& scenario, const Trajectory& trajectory);

/// Convenience: trajectory followed by CSI synthesis.
CsiDataset simulate(const SimScenario& scenario);

/// sqrt(sum p_i (tau_i - mean)^2 / sum p_i) with tau_i = i * tap_spacing.
double rms_delay_spread(std::span<const double> cir_power, double tap_spacing);

}  // namespace dopcc
