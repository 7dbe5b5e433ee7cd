#include "dopcc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "dopcc/errors.hpp"
#include "dopcc/parallel.hpp"
#include "dopcc/rng.hpp"

namespace dopcc {

namespace {

constexpr std::size_t kMaxWaypointRejections = 1000;
constexpr double kMinSegmentLength = 0.1;  // m

// Parameter interval of the segment a + t (b - a), t in [0, 1], inside the rectangle.
std::optional<std::pair<double, double>> clip_segment(const Rect& r, const Eigen::Vector2d& a,
                                                      const Eigen::Vector2d& b) {
    double t0 = 0.0;
    double t1 = 1.0;
    const Eigen::Vector2d d = b - a;
    const double p[4] = {-d.x(), d.x(), -d.y(), d.y()};
    const double q[4] = {a.x() - r.x_min, r.x_max - a.x(), a.y() - r.y_min, r.y_max - a.y()};
    for (int i = 0; i < 4; ++i) {
        if (p[i] == 0.0) {
            if (q[i] < 0.0) return std::nullopt;
            continue;
        }
        const double t = q[i] / p[i];
        if (p[i] < 0.0) {
            t0 = std::max(t0, t);
        } else {
            t1 = std::min(t1, t);
        }
        if (t0 > t1) return std::nullopt;
    }
    return std::make_pair(t0, t1);
}

Eigen::Vector2d sample_in_area(const Area& area, std::mt19937_64& engine) {
    const Rect box = area.bounding_box();
    std::uniform_real_distribution<double> ux(box.x_min, box.x_max);
    std::uniform_real_distribution<double> uy(box.y_min, box.y_max);
    for (std::size_t attempt = 0; attempt < kMaxWaypointRejections; ++attempt) {
        const Eigen::Vector2d p(ux(engine), uy(engine));
        if (area.contains(p)) return p;
    }
    throw PreconditionError("could not sample a point inside the area");
}

}  // namespace

bool Area::contains(const Eigen::Vector2d& p) const {
    return std::any_of(pieces.begin(), pieces.end(), [&](const Rect& r) { return r.contains(p); });
}

bool Area::contains_segment(const Eigen::Vector2d& a, const Eigen::Vector2d& b) const {
    std::vector<std::pair<double, double>> spans;
    for (const auto& r : pieces) {
        if (auto s = clip_segment(r, a, b)) spans.push_back(*s);
    }
    std::sort(spans.begin(), spans.end());
    double covered = 0.0;
    for (const auto& [t0, t1] : spans) {
        if (t0 > covered) return false;
        covered = std::max(covered, t1);
    }
    return covered >= 1.0;
}

Rect Area::bounding_box() const {
    if (pieces.empty()) throw PreconditionError("area is empty");
    Rect box = pieces.front();
    for (const auto& r : pieces) {
        box.x_min = std::min(box.x_min, r.x_min);
        box.y_min = std::min(box.y_min, r.y_min);
        box.x_max = std::max(box.x_max, r.x_max);
        box.y_max = std::max(box.y_max, r.y_max);
    }
    return box;
}

std::size_t SimScenario::num_samples() const {
    return static_cast<std::size_t>(std::llround(duration * sample_rate));
}

void SimScenario::validate() const {
    config.validate();
    if (area.pieces.empty()) throw PreconditionError("area must not be empty");
    for (const auto& r : area.pieces) {
        if (!(r.x_max > r.x_min && r.y_max > r.y_min)) {
            throw PreconditionError("area rectangles must have positive extent");
        }
    }
    if (!(speed > 0.0)) throw PreconditionError("speed must be positive");
    if (!(sample_rate > 0.0)) throw PreconditionError("sample_rate must be positive");
    if (!(duration > 0.0)) throw PreconditionError("duration must be positive");
    if (!(speed / sample_rate < config.wavelength() / 8.0)) {
        throw PreconditionError(
            "sampling invariant violated: speed / sample_rate must be below wavelength / 8");
    }
    if (num_samples() < 2) throw PreconditionError("scenario yields fewer than 2 samples");
    if (!(cfo_drift_std >= 0.0) || !(freq_noise_std >= 0.0)) {
        throw PreconditionError("noise intensities must be nonnegative");
    }
    if (!std::isfinite(cfo_initial)) throw PreconditionError("cfo_initial must be finite");
    for (const auto& s : multipath) {
        if (!(s.gain >= 0.0 && s.gain <= 1.0)) throw PreconditionError("scatterer gain outside [0, 1]");
    }
}

SimScenario default_scenario() {
    SimScenario s;
    s.config.carrier_frequency = 1.272e9;
    s.config.bandwidth = 50e6;
    s.config.num_subcarriers = 64;
    s.config.ue_height = 1.0;
    s.config.bs_positions = {{-7.0, -7.0, 2.5}, {7.0, -7.0, 2.5}, {7.0, 7.0, 2.5}, {-7.0, 7.0, 2.5}};
    s.area.pieces = {{-6.0, -6.0, 6.0, -1.0}, {-6.0, -6.0, -1.0, 6.0}};
    s.freq_noise_std = 0.1;
    s.multipath = {
        {{-9.0, 0.0, 1.5}, 0.15}, {{9.0, -3.0, 1.5}, 0.12},  {{0.0, 9.0, 2.0}, 0.12},
        {{3.0, 3.0, 1.0}, 0.15},  {{-3.0, -9.0, 1.5}, 0.13}, {{5.0, -9.0, 2.5}, 0.10},
    };
    return s;
}

Trajectory generate_trajectory(const SimScenario& scenario) {
    scenario.validate();
    auto engine = make_engine(scenario.seed, streams::kTrajectory);
    std::uniform_real_distribution<double> speed_dist(0.8 * scenario.speed, 1.2 * scenario.speed);

    struct Segment {
        Eigen::Vector2d from, to;
        double t_begin, t_end;
    };

    const std::size_t n = scenario.num_samples();
    const double t_last = static_cast<double>(n - 1) / scenario.sample_rate;
    std::vector<Segment> segments;
    Eigen::Vector2d current = sample_in_area(scenario.area, engine);
    double t = 0.0;
    while (t <= t_last) {
        std::size_t rejections = 0;
        Eigen::Vector2d next;
        for (;;) {
            next = sample_in_area(scenario.area, engine);
            if ((next - current).norm() >= kMinSegmentLength &&
                scenario.area.contains_segment(current, next)) {
                break;
            }
            if (++rejections >= kMaxWaypointRejections) {
                throw PreconditionError("no reachable waypoint after 1000 rejections");
            }
        }
        const double v = speed_dist(engine);
        const double dt = (next - current).norm() / v;
        segments.push_back({current, next, t, t + dt});
        t += dt;
        current = next;
    }

    Trajectory out;
    out.reserve(n);
    std::size_t seg = 0;
    for (std::size_t l = 0; l < n; ++l) {
        const double tl = static_cast<double>(l) / scenario.sample_rate;
        while (seg + 1 < segments.size() && tl >= segments[seg].t_end) ++seg;
        const auto& s = segments[seg];
        const double alpha = (tl - s.t_begin) / (s.t_end - s.t_begin);
        const Eigen::Vector2d p = s.from + alpha * (s.to - s.from);
        const Eigen::Vector2d v = (s.to - s.from) / (s.t_end - s.t_begin);
        out.push_back({tl, {p.x(), p.y(), scenario.config.ue_height}, {v.x(), v.y(), 0.0}});
    }
    return out;
}

CfoPath generate_cfo(const SimScenario& scenario, std::span<const double> timestamps) {
    CfoPath path;
    path.frequency.resize(timestamps.size());
    path.phase.resize(timestamps.size());
    if (timestamps.empty()) return path;
    auto engine = make_engine(scenario.seed, streams::kCfo);
    std::normal_distribution<double> gauss(0.0, 1.0);
    path.frequency[0] = scenario.cfo_initial;
    path.phase[0] = 0.0;
    for (std::size_t l = 1; l < timestamps.size(); ++l) {
        const double dt = timestamps[l] - timestamps[l - 1];
        path.frequency[l] = path.frequency[l - 1] + scenario.cfo_drift_std * std::sqrt(dt) * gauss(engine);
        // f_CFO is piecewise linear between samples, so the trapezoid is its exact integral.
        path.phase[l] = path.phase[l - 1] +
                        std::numbers::pi * (path.frequency[l - 1] + path.frequency[l]) * dt;
    }
    return path;
}

double doppler_shift(const Eigen::Vector3d& position, const Eigen::Vector3d& velocity,
                     const Eigen::Vector3d& bs, double wavelength) {
    const Eigen::Vector3d r = position - bs;
    const double d = r.norm();
    if (d == 0.0) throw PreconditionError("UE coincides with a BS position");
    return -(velocity.dot(r) / d) / wavelength;
}

CsiDataset synthesize_csi(const SimScenario& scenario, const Trajectory& trajectory) {
    scenario.validate();
    const auto& cfg = scenario.config;
    const std::size_t num_bs = cfg.num_bs();
    const std::size_t num_sub = cfg.num_subcarriers;
    const double lambda = cfg.wavelength();

    std::vector<double> timestamps;
    timestamps.reserve(trajectory.size());
    for (const auto& s : trajectory) timestamps.push_back(s.timestamp);
    const CfoPath cfo = generate_cfo(scenario, timestamps);

    std::vector<double> subcarrier_freq(num_sub);
    for (std::size_t k = 0; k < num_sub; ++k) subcarrier_freq[k] = cfg.subcarrier_frequency(k);

    const bool noisy = std::isfinite(scenario.snr_db);
    const double noise_ratio = noisy ? std::pow(10.0, -scenario.snr_db / 10.0) : 0.0;

    CsiDataset ds;
    ds.config = cfg;
    ds.points.resize(trajectory.size());
    parallel_for(trajectory.size(), [&](std::size_t l) {
        const auto& sample = trajectory[l];
        auto csi_noise = make_engine(scenario.seed, streams::kCsiNoise, l);
        auto freq_noise = make_engine(scenario.seed, streams::kFreqNoise, l);
        std::normal_distribution<double> gauss(0.0, 1.0);

        Datapoint& p = ds.points[l];
        p.timestamp = sample.timestamp;
        p.position = sample.position;
        p.freq_offsets.resize(static_cast<Eigen::Index>(num_bs));
        p.csi.resize(static_cast<Eigen::Index>(num_bs), static_cast<Eigen::Index>(num_sub));

        const std::complex<double> cfo_rot = std::polar(1.0, cfo.phase[l]);
        std::vector<std::complex<double>> row(num_sub);
        for (std::size_t b = 0; b < num_bs; ++b) {
            const Eigen::Vector3d& z = cfg.bs_positions[b];
            const double d = (sample.position - z).norm();
            if (d == 0.0) {
                throw PreconditionError("UE coincides with BS " + std::to_string(b) +
                                        " at sample " + std::to_string(l));
            }
            struct Ray {
                double length, amplitude;
            };
            std::vector<Ray> rays{{d, 1.0 / d}};
            for (const auto& s : scenario.multipath) {
                const double len = (sample.position - s.position).norm() + (s.position - z).norm();
                rays.push_back({len, s.gain / len});
            }

            double power = 0.0;
            for (std::size_t k = 0; k < num_sub; ++k) {
                std::complex<double> h{0.0, 0.0};
                for (const auto& ray : rays) {
                    // exp(-j 2 pi (f_c + f_k) d / c), split to keep the argument well conditioned.
                    const double cycles_carrier = ray.length / lambda;
                    const double turns = (cycles_carrier - std::floor(cycles_carrier)) +
                                         subcarrier_freq[k] * ray.length / kSpeedOfLight;
                    h += std::polar(ray.amplitude, -2.0 * std::numbers::pi * turns);
                }
                row[k] = h * cfo_rot;
                power += std::norm(row[k]);
            }
            if (noisy) {
                const double sigma = std::sqrt(0.5 * noise_ratio * power / static_cast<double>(num_sub));
                for (auto& h : row) {
                    const double re = gauss(csi_noise);
                    const double im = gauss(csi_noise);
                    h += std::complex<double>(sigma * re, sigma * im);
                }
            }
            for (std::size_t k = 0; k < num_sub; ++k) {
                p.csi(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) =
                    std::complex<float>(row[k]);
            }
            double f = cfo.frequency[l] + doppler_shift(sample.position, sample.velocity, z, lambda);
            if (scenario.freq_noise_std > 0.0) f += scenario.freq_noise_std * gauss(freq_noise);
            p.freq_offsets[static_cast<Eigen::Index>(b)] = f;
        }
    });
    return ds;
}

CsiDataset simulate(const SimScenario& scenario) {
    return synthesize_csi(scenario, generate_trajectory(scenario));
}

double rms_delay_spread(std::span<const double> cir_power, double tap_spacing) {
    double total = 0.0;
    double first = 0.0;
    for (std::size_t i = 0; i < cir_power.size(); ++i) {
        if (!(cir_power[i] >= 0.0)) throw PreconditionError("power profile must be nonnegative");
        total += cir_power[i];
        first += cir_power[i] * static_cast<double>(i);
    }
    if (!(total > 0.0)) throw PreconditionError("power profile has zero total power");
    const double mean = first / total;
    double second = 0.0;
    for (std::size_t i = 0; i < cir_power.size(); ++i) {
        const double dev = static_cast<double>(i) - mean;
        second += cir_power[i] * dev * dev;
    }
    return std::sqrt(second / total) * tap_spacing;
}

}  // namespace dopcc
