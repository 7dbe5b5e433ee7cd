#include "dopcc/doppler_loss.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dopcc/dsp.hpp"
#include "dopcc/errors.hpp"
#include "dopcc/parallel.hpp"
#include "dopcc/sim.hpp"

namespace dopcc {

void UncertaintyParams::validate() const {
    if (!(beta > 0.0)) throw PreconditionError("beta must be positive");
    if (!(gain >= 0.0)) throw PreconditionError("uncertainty gain must be nonnegative");
    if (!(u_min > 0.0 && u_min <= u_max)) throw PreconditionError("need 0 < u_min <= u_max");
    if (!(floor_db > 0.0)) throw PreconditionError("floor_db must be positive");
}

std::vector<double> cir_power_profile(std::span<const std::complex<float>> csi_row, double floor_db) {
    const auto cir = inverse_dft(csi_row);
    const std::size_t n = cir.size();
    const std::size_t peak = strongest_tap(cir);
    const auto rotated = rotate_cyclic(cir, static_cast<long>(peak) - static_cast<long>(n / 4));
    std::vector<double> power(n);
    double peak_power = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        power[i] = std::norm(rotated[i]);
        peak_power = std::max(peak_power, power[i]);
    }
    const double floor = peak_power * std::pow(10.0, -floor_db / 10.0);
    for (auto& p : power) {
        if (p < floor) p = 0.0;
    }
    return power;
}

double instantaneous_uncertainty(std::span<const double> cir_power, double tap_spacing,
                                 const UncertaintyParams& params) {
    double total = 0.0;
    for (double p : cir_power) total += p;
    if (!(total > 0.0)) return params.u_max;
    const double tau = rms_delay_spread(cir_power, tap_spacing);
    return std::clamp(params.gain * tau / tap_spacing, params.u_min, params.u_max);
}

double UncertaintyModel::sigma(std::size_t b1, std::size_t b2, std::size_t l1, std::size_t l2,
                               double beta) const {
    const auto i1 = static_cast<Eigen::Index>(l1);
    const auto i2 = static_cast<Eigen::Index>(l2);
    const auto c1 = static_cast<Eigen::Index>(b1);
    const auto c2 = static_cast<Eigen::Index>(b2);
    return beta + ((U(i2, c1) + U(i2, c2)) - (U(i1, c1) + U(i1, c2)));
}

UncertaintyModel UncertaintyModel::subset(const std::vector<std::size_t>& indices) const {
    UncertaintyModel out;
    out.params = params;
    out.u.resize(static_cast<Eigen::Index>(indices.size()), u.cols());
    out.U.resize(static_cast<Eigen::Index>(indices.size()), U.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        out.u.row(static_cast<Eigen::Index>(i)) = u.row(static_cast<Eigen::Index>(indices[i]));
        out.U.row(static_cast<Eigen::Index>(i)) = U.row(static_cast<Eigen::Index>(indices[i]));
        out.timestamps.push_back(timestamps.at(indices[i]));
    }
    return out;
}

UncertaintyModel integrate_uncertainty(const Eigen::MatrixXd& u, std::span<const double> timestamps,
                                       const UncertaintyParams& params) {
    params.validate();
    if (static_cast<std::size_t>(u.rows()) != timestamps.size()) {
        throw PreconditionError("uncertainty rows must match the timestamp count");
    }
    UncertaintyModel model;
    model.params = params;
    model.u = u;
    model.U = Eigen::MatrixXd::Zero(u.rows(), u.cols());
    model.timestamps.assign(timestamps.begin(), timestamps.end());
    for (Eigen::Index b = 0; b < u.cols(); ++b) {
        double sum = 0.0;
        double carry = 0.0;
        for (Eigen::Index l = 1; l < u.rows(); ++l) {
            const double dt = timestamps[static_cast<std::size_t>(l)] - timestamps[static_cast<std::size_t>(l - 1)];
            const double inc = 0.5 * (u(l - 1, b) + u(l, b)) * dt;
            // Kahan summation keeps U exact enough for differences of large cumulative values.
            const double y = inc - carry;
            const double t = sum + y;
            carry = (t - sum) - y;
            sum = t;
            model.U(l, b) = sum;
        }
    }
    return model;
}

UncertaintyModel build_uncertainty(const CsiDataset& dataset, const UncertaintyParams& params) {
    params.validate();
    const std::size_t n = dataset.size();
    const std::size_t num_bs = dataset.config.num_bs();
    const double tap = dataset.config.tap_spacing();
    Eigen::MatrixXd u(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(num_bs));
    parallel_for(n, [&](std::size_t l) {
        const auto& csi = dataset.points[l].csi;
        for (std::size_t b = 0; b < num_bs; ++b) {
            const auto row = csi.row(static_cast<Eigen::Index>(b));
            const auto profile = cir_power_profile(
                std::span<const std::complex<float>>(row.data(), static_cast<std::size_t>(row.size())),
                params.floor_db);
            u(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(b)) =
                instantaneous_uncertainty(profile, tap, params);
        }
    });
    const auto ts = dataset.timestamps();
    return integrate_uncertainty(u, ts, params);
}

void attach_uncertainty(PhaseTrack& track, const UncertaintyModel& model) {
    if (model.U.rows() != track.phases.rows() || model.U.cols() != track.phases.cols()) {
        throw PreconditionError("uncertainty model does not match the phase track");
    }
    track.uncertainty_cumsum = model.U;
}

double bs_distance(const Eigen::Vector2d& estimate, const SystemConfig& config, std::size_t b) {
    const Eigen::Vector3d x(estimate.x(), estimate.y(), config.ue_height);
    return (x - config.bs_positions[b]).norm();
}

double delta_distance(const Eigen::Vector2d& x1, const Eigen::Vector2d& x2, const SystemConfig& config,
                      std::size_t b1, std::size_t b2) {
    return (bs_distance(x2, config, b2) - bs_distance(x2, config, b1)) -
           (bs_distance(x1, config, b2) - bs_distance(x1, config, b1));
}

PairSample make_pair_sample(const PhaseTrack& track, const UncertaintyModel& uncertainty, std::size_t l1,
                            std::size_t l2, double beta) {
    const std::size_t num_bs = track.num_bs();
    PairSample s;
    s.l1 = l1;
    s.l2 = l2;
    s.delta_phi.resize(static_cast<Eigen::Index>(num_bs), static_cast<Eigen::Index>(num_bs));
    s.sigma.resize(s.delta_phi.rows(), s.delta_phi.cols());
    for (std::size_t b1 = 0; b1 < num_bs; ++b1) {
        for (std::size_t b2 = 0; b2 < num_bs; ++b2) {
            const auto i = static_cast<Eigen::Index>(b1);
            const auto j = static_cast<Eigen::Index>(b2);
            // The received phase rotates as -(2 pi / lambda) * distance; flip to path-length phase.
            s.delta_phi(i, j) = -differential_phase(track, b1, b2, l1, l2);
            s.sigma(i, j) = uncertainty.sigma(b1, b2, l1, l2, beta);
        }
    }
    return s;
}

PairLoss pair_loss(const Eigen::Vector2d& x1, const Eigen::Vector2d& x2, const PairSample& pair,
                   const SystemConfig& config) {
    const std::size_t num_bs = config.num_bs();
    const double k = 2.0 * std::numbers::pi / config.wavelength();

    PairLoss out;
    std::vector<double> d1(num_bs), d2(num_bs);
    std::vector<Eigen::Vector2d> g1(num_bs), g2(num_bs);
    auto distance_and_gradient = [&](const Eigen::Vector2d& x, std::size_t b, double& d, Eigen::Vector2d& g) {
        const Eigen::Vector3d r = Eigen::Vector3d(x.x(), x.y(), config.ue_height) - config.bs_positions[b];
        d = r.norm();
        if (d > 0.0) {
            g = r.head<2>() / d;
        } else {
            g.setZero();
            out.singular = true;
        }
    };
    for (std::size_t b = 0; b < num_bs; ++b) {
        distance_and_gradient(x1, b, d1[b], g1[b]);
        distance_and_gradient(x2, b, d2[b], g2[b]);
    }

    for (std::size_t b1 = 0; b1 < num_bs; ++b1) {
        for (std::size_t b2 = 0; b2 < num_bs; ++b2) {
            if (b1 == b2) continue;  // identically zero residual
            const auto i = static_cast<Eigen::Index>(b1);
            const auto j = static_cast<Eigen::Index>(b2);
            const double dd = (d2[b2] - d2[b1]) - (d1[b2] - d1[b1]);
            const double sigma = pair.sigma(i, j);
            const double r = (pair.delta_phi(i, j) - k * dd) / sigma;
            out.loss += r * r;
            // d r / d dd = -k / sigma
            const double w = -2.0 * r * k / sigma;
            out.grad2 += w * (g2[b2] - g2[b1]);
            out.grad1 -= w * (g1[b2] - g1[b1]);
        }
    }
    return out;
}

}  // namespace dopcc
