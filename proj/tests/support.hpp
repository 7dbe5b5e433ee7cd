#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dopcc/dataset.hpp"
#include "dopcc/sim.hpp"

namespace dopcc::testing {

/// Free-space scenario without CSI noise, frequency jitter or scatterers.
inline SimScenario noiseless_scenario(double duration = 20.0) {
    SimScenario s = default_scenario();
    s.snr_db = std::numeric_limits<double>::infinity();
    s.freq_noise_std = 0.0;
    s.multipath.clear();
    s.duration = duration;
    return s;
}

/// Small hand-built dataset: CSI rows are e^{j phase} on every subcarrier (a tap-0 spike).
inline CsiDataset flat_dataset(std::size_t num_points, std::size_t num_bs, std::size_t num_sub, double dt = 0.1) {
    CsiDataset ds;
    ds.config.num_subcarriers = num_sub;
    for (std::size_t b = 0; b < num_bs; ++b) {
        ds.config.bs_positions.push_back(Eigen::Vector3d(static_cast<double>(b) * 3.0 - 2.0, 1.0 + static_cast<double>(b), 2.5));
    }
    for (std::size_t l = 0; l < num_points; ++l) {
        Datapoint p;
        p.csi = CsiMatrix::Constant(static_cast<Eigen::Index>(num_bs), static_cast<Eigen::Index>(num_sub), {1.0f, 0.0f});
        p.position = Eigen::Vector3d(0.1 * static_cast<double>(l), -0.05 * static_cast<double>(l), 1.0);
        p.timestamp = dt * static_cast<double>(l);
        p.freq_offsets = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_bs));
        ds.points.push_back(std::move(p));
    }
    return ds;
}

inline std::string to_bytes(const CsiDataset& ds) {
    std::ostringstream out(std::ios::binary);
    write_dataset(ds, out);
    return out.str();
}

inline Eigen::MatrixX2d random_points(std::size_t n, std::mt19937_64& rng, double scale = 10.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Eigen::MatrixX2d p(static_cast<Eigen::Index>(n), 2);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        p(i, 0) = u(rng);
        p(i, 1) = u(rng);
    }
    return p;
}

}  // namespace dopcc::testing
