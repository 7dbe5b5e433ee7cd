#include "dopcc/phase.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <string>

#include "dopcc/dsp.hpp"
#include "dopcc/errors.hpp"
#include "dopcc/parallel.hpp"
#include "dopcc/textio.hpp"

namespace dopcc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Golden-section maximization of |g(nu)| on the bracket around the strongest tap.
double peak_delay(std::span<const std::complex<float>> row, double center) {
    constexpr double kInvPhi = 0.6180339887498949;
    double lo = center - 1.0;
    double hi = center + 1.0;
    double a = hi - kInvPhi * (hi - lo);
    double b = lo + kInvPhi * (hi - lo);
    double fa = std::norm(centered_cir_at(row, a));
    double fb = std::norm(centered_cir_at(row, b));
    for (int iter = 0; iter < 60; ++iter) {
        if (fa < fb) {
            lo = a;
            a = b;
            fa = fb;
            b = lo + kInvPhi * (hi - lo);
            fb = std::norm(centered_cir_at(row, b));
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - kInvPhi * (hi - lo);
            fa = std::norm(centered_cir_at(row, a));
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

PhaseTrack PhaseTrack::subset(const std::vector<std::size_t>& indices) const {
    PhaseTrack out;
    out.phases.resize(static_cast<Eigen::Index>(indices.size()), phases.cols());
    out.uncertainty_cumsum.resize(static_cast<Eigen::Index>(indices.size()), uncertainty_cumsum.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = static_cast<Eigen::Index>(indices[i]);
        out.phases.row(static_cast<Eigen::Index>(i)) = phases.row(src);
        out.uncertainty_cumsum.row(static_cast<Eigen::Index>(i)) = uncertainty_cumsum.row(src);
        out.timestamps.push_back(timestamps.at(indices[i]));
    }
    return out;
}

double wrap_to_pi(double angle) {
    double r = std::remainder(angle, kTwoPi);  // in [-pi, pi]
    if (r <= -std::numbers::pi) r += kTwoPi;
    return r;
}

PhaseTrack integrate_offsets(const CsiDataset& dataset) {
    const std::size_t n = dataset.size();
    const std::size_t num_bs = dataset.config.num_bs();
    PhaseTrack track;
    track.phases = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(num_bs));
    track.uncertainty_cumsum = Eigen::MatrixXd::Zero(track.phases.rows(), track.phases.cols());
    track.timestamps = dataset.timestamps();
    for (std::size_t l = 1; l < n; ++l) {
        if (!(track.timestamps[l] > track.timestamps[l - 1])) {
            throw PreconditionError("timestamps must strictly increase (datapoint " +
                                    std::to_string(l) + ")");
        }
    }

    parallel_for(num_bs, [&](std::size_t b) {
        const auto bi = static_cast<Eigen::Index>(b);
        // Neumaier-compensated running sum: the CFO term may reach 1e8 rad.
        double sum = 0.0;
        double carry = 0.0;
        for (std::size_t l = 1; l < n; ++l) {
            const double dt = track.timestamps[l] - track.timestamps[l - 1];
            const double inc = std::numbers::pi *
                               (dataset.points[l - 1].freq_offsets[bi] + dataset.points[l].freq_offsets[bi]) * dt;
            const double t = sum + inc;
            if (std::abs(sum) >= std::abs(inc)) {
                carry += (sum - t) + inc;
            } else {
                carry += (inc - t) + sum;
            }
            sum = t;
            track.phases(static_cast<Eigen::Index>(l), bi) = sum + carry;
        }
    });
    return track;
}

double extract_csi_phase(std::span<const std::complex<float>> csi_row) {
    bool nonzero = false;
    for (const auto& v : csi_row) nonzero = nonzero || v != std::complex<float>{};
    if (!nonzero) throw PreconditionError("cannot extract the phase of an all-zero CSI row");

    const auto cir = inverse_dft(csi_row);
    const std::size_t n = cir.size();
    const long peak = static_cast<long>(strongest_tap(cir));
    // Tap index as signed delay so that pre-cursor taps stay adjacent to tap 0.
    const double center = static_cast<double>(peak >= static_cast<long>(n / 2) ? peak - static_cast<long>(n) : peak);
    const double nu = peak_delay(csi_row, center);
    return std::arg(centered_cir_at(csi_row, nu));
}

RefineResult refine_with_csi(const PhaseTrack& coarse, const CsiDataset& dataset,
                             const RefineOptions& options) {
    const std::size_t n = coarse.num_points();
    const std::size_t num_bs = coarse.num_bs();
    if (n != dataset.size() || num_bs != dataset.config.num_bs()) {
        throw PreconditionError("phase track and dataset do not match");
    }

    Eigen::MatrixXd measured(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(num_bs));
    parallel_for(n, [&](std::size_t l) {
        const auto& csi = dataset.points[l].csi;
        for (std::size_t b = 0; b < num_bs; ++b) {
            const auto row = csi.row(static_cast<Eigen::Index>(b));
            measured(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(b)) =
                extract_csi_phase(std::span<const std::complex<float>>(row.data(), static_cast<std::size_t>(row.size())));
        }
    });

    RefineResult result;
    result.track = coarse;
    std::vector<std::size_t> flagged(num_bs, 0);
    parallel_for(num_bs, [&](std::size_t b) {
        const auto bi = static_cast<Eigen::Index>(b);
        // The first datapoint anchors the unknown initial phase of this antenna.
        const double anchor = coarse.phases(0, bi) - measured(0, bi);
        double refined_prev = coarse.phases(0, bi);
        for (std::size_t l = 1; l < n; ++l) {
            const auto li = static_cast<Eigen::Index>(l);
            const double predicted = refined_prev + (coarse.phases(li, bi) - coarse.phases(li - 1, bi));
            const double correction = wrap_to_pi(measured(li, bi) + anchor - predicted);
            if (std::abs(correction) >= options.trust_threshold) ++flagged[b];
            refined_prev = predicted + correction;
            result.track.phases(li, bi) = refined_prev;
        }
    });
    for (auto f : flagged) result.flagged_steps += f;
    result.total_steps = (n - 1) * num_bs;
    result.warning = result.flagged_fraction() > options.warn_fraction;
    return result;
}

double differential_phase(const PhaseTrack& track, std::size_t b1, std::size_t b2, std::size_t l1,
                          std::size_t l2) {
    const auto& p = track.phases;
    const auto i1 = static_cast<Eigen::Index>(l1);
    const auto i2 = static_cast<Eigen::Index>(l2);
    const auto c1 = static_cast<Eigen::Index>(b1);
    const auto c2 = static_cast<Eigen::Index>(b2);
    return (p(i2, c2) - p(i2, c1)) - (p(i1, c2) - p(i1, c1));
}

RefineResult track_phases(const CsiDataset& dataset, const RefineOptions& options) {
    return refine_with_csi(integrate_offsets(dataset), dataset, options);
}

void write_phase_csv(const PhaseTrack& track, std::ostream& out) {
    const std::size_t num_bs = track.num_bs();
    out << "t";
    for (std::size_t b = 0; b < num_bs; ++b) out << ",phi_" << (b + 1);
    for (std::size_t b = 0; b < num_bs; ++b) out << ",U_" << (b + 1);
    out << '\n';
    for (std::size_t l = 0; l < track.num_points(); ++l) {
        const auto li = static_cast<Eigen::Index>(l);
        out << format_double(track.timestamps[l]);
        for (std::size_t b = 0; b < num_bs; ++b) out << ',' << format_double(track.phases(li, static_cast<Eigen::Index>(b)));
        for (std::size_t b = 0; b < num_bs; ++b) {
            out << ',' << format_double(track.uncertainty_cumsum(li, static_cast<Eigen::Index>(b)));
        }
        out << '\n';
    }
}

}  // namespace dopcc
