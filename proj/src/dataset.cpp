#include "dopcc/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <string>

#include "dopcc/errors.hpp"
#include "dopcc/rng.hpp"

namespace dopcc {

namespace {

constexpr std::array<char, 4> kMagic = {'D', 'P', 'C', 'C'};
constexpr std::uint16_t kVersion = 1;

// Little-endian encoder that tracks the byte offset for error reporting.
class Writer {
  public:
    explicit Writer(std::ostream& out) : out_(out) {}

    template <typename T>
    void put(T value) {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
        const U bits = std::bit_cast<U>(value);
        std::array<char, sizeof(T)> bytes{};
        for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
        raw(bytes.data(), bytes.size());
    }

    void raw(const char* data, std::size_t n) {
        out_.write(data, static_cast<std::streamsize>(n));
        if (!out_) throw IoError("DPCC write failed", offset_);
        offset_ += n;
    }

  private:
    std::ostream& out_;
    std::uint64_t offset_ = 0;
};

class Reader {
  public:
    explicit Reader(std::istream& in) : in_(in) {}

    template <typename T>
    T get(std::optional<std::uint64_t> record = std::nullopt) {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
        std::array<unsigned char, sizeof(T)> bytes{};
        raw(reinterpret_cast<char*>(bytes.data()), bytes.size(), record);
        U bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
        return std::bit_cast<T>(bits);
    }

    void raw(char* data, std::size_t n, std::optional<std::uint64_t> record) {
        in_.read(data, static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) {
            throw FormatError("truncated DPCC input at byte offset " + std::to_string(offset_),
                              record);
        }
        offset_ += n;
    }

  private:
    std::istream& in_;
    std::uint64_t offset_ = 0;
};

bool all_finite(const CsiMatrix& csi) {
    for (Eigen::Index i = 0; i < csi.size(); ++i) {
        const auto v = csi.data()[i];
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    }
    return true;
}

}  // namespace

double SystemConfig::subcarrier_frequency(std::size_t k) const {
    const double n = static_cast<double>(num_subcarriers);
    return (static_cast<double>(k) - static_cast<double>(num_subcarriers / 2)) * bandwidth / n;
}

void SystemConfig::validate() const {
    if (num_bs() < 2) throw PreconditionError("num_bs must be at least 2");
    if (!(carrier_frequency > 0.0) || !std::isfinite(carrier_frequency)) {
        throw PreconditionError("carrier_frequency must be positive (wavelength > 0)");
    }
    if (!(bandwidth > 0.0)) throw PreconditionError("bandwidth must be positive");
    if (num_subcarriers < 8 || !std::has_single_bit(num_subcarriers)) {
        throw PreconditionError("num_subcarriers must be a power of two >= 8");
    }
    for (std::size_t i = 0; i < num_bs(); ++i) {
        if (!bs_positions[i].allFinite()) throw PreconditionError("BS position not finite");
        for (std::size_t j = i + 1; j < num_bs(); ++j) {
            if (bs_positions[i] == bs_positions[j]) {
                throw PreconditionError("BS positions must be pairwise distinct");
            }
        }
    }
}

bool Datapoint::operator==(const Datapoint& other) const {
    return csi.rows() == other.csi.rows() && csi.cols() == other.csi.cols() &&
           csi == other.csi && position == other.position && timestamp == other.timestamp &&
           freq_offsets.size() == other.freq_offsets.size() && freq_offsets == other.freq_offsets;
}

void CsiDataset::validate() const {
    config.validate();
    if (points.size() < 2) throw PreconditionError("dataset needs at least 2 datapoints");
    const auto rows = static_cast<Eigen::Index>(config.num_bs());
    const auto cols = static_cast<Eigen::Index>(config.num_subcarriers);
    for (std::size_t l = 0; l < points.size(); ++l) {
        const auto& p = points[l];
        if (p.csi.rows() != rows || p.csi.cols() != cols) {
            throw PreconditionError("datapoint " + std::to_string(l) + ": CSI shape mismatch");
        }
        if (p.freq_offsets.size() != rows) {
            throw PreconditionError("datapoint " + std::to_string(l) + ": frequency offset count");
        }
        if (!all_finite(p.csi)) {
            throw PreconditionError("datapoint " + std::to_string(l) + ": non-finite CSI");
        }
        if (!std::isfinite(p.timestamp) || !p.position.allFinite() || !p.freq_offsets.allFinite()) {
            throw PreconditionError("datapoint " + std::to_string(l) + ": non-finite metadata");
        }
        if (l > 0 && !(p.timestamp > points[l - 1].timestamp)) {
            throw PreconditionError("datapoint " + std::to_string(l) +
                                    ": timestamps must strictly increase");
        }
    }
}

std::vector<double> CsiDataset::timestamps() const {
    std::vector<double> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(p.timestamp);
    return out;
}

Eigen::MatrixX2d CsiDataset::positions_2d() const {
    Eigen::MatrixX2d out(static_cast<Eigen::Index>(points.size()), 2);
    for (std::size_t l = 0; l < points.size(); ++l) {
        out(static_cast<Eigen::Index>(l), 0) = points[l].position.x();
        out(static_cast<Eigen::Index>(l), 1) = points[l].position.y();
    }
    return out;
}

CsiDataset CsiDataset::subset(const std::vector<std::size_t>& indices) const {
    CsiDataset out{config, {}};
    out.points.reserve(indices.size());
    for (auto i : indices) out.points.push_back(points.at(i));
    return out;
}

CsiDataset CsiDataset::without_positions() const {
    CsiDataset out = *this;
    for (auto& p : out.points) p.position.setZero();
    return out;
}

std::size_t dpcc_record_bytes(std::size_t num_bs, std::size_t num_subcarriers) {
    return 8 + 3 * 8 + num_bs * 8 + num_bs * num_subcarriers * 2 * 4;
}

void write_dataset(const CsiDataset& dataset, std::ostream& sink) {
    dataset.validate();
    const auto& cfg = dataset.config;
    Writer w(sink);
    w.raw(kMagic.data(), kMagic.size());
    w.put<std::uint16_t>(kVersion);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(cfg.num_bs()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.num_subcarriers));
    w.put<std::uint64_t>(dataset.points.size());
    w.put<double>(cfg.carrier_frequency);
    w.put<double>(cfg.bandwidth);
    w.put<double>(cfg.ue_height);
    for (const auto& z : cfg.bs_positions) {
        for (int c = 0; c < 3; ++c) w.put<double>(z[c]);
    }
    for (const auto& p : dataset.points) {
        w.put<double>(p.timestamp);
        for (int c = 0; c < 3; ++c) w.put<double>(p.position[c]);
        for (Eigen::Index b = 0; b < p.freq_offsets.size(); ++b) w.put<double>(p.freq_offsets[b]);
        for (Eigen::Index i = 0; i < p.csi.size(); ++i) {
            w.put<float>(p.csi.data()[i].real());
            w.put<float>(p.csi.data()[i].imag());
        }
    }
}

CsiDataset read_dataset(std::istream& source) {
    Reader r(source);
    std::array<char, 4> magic{};
    r.raw(magic.data(), magic.size(), std::nullopt);
    if (magic != kMagic) throw FormatError("bad magic: not a DPCC file");
    const auto version = r.get<std::uint16_t>();
    if (version != kVersion) throw FormatError("unsupported DPCC version " + std::to_string(version));

    CsiDataset ds;
    const auto num_bs = r.get<std::uint16_t>();
    const auto num_sub = r.get<std::uint32_t>();
    const auto num_points = r.get<std::uint64_t>();
    ds.config.num_subcarriers = num_sub;
    ds.config.carrier_frequency = r.get<double>();
    ds.config.bandwidth = r.get<double>();
    ds.config.ue_height = r.get<double>();
    ds.config.bs_positions.resize(num_bs);
    for (auto& z : ds.config.bs_positions) {
        for (int c = 0; c < 3; ++c) z[c] = r.get<double>();
    }
    try {
        ds.config.validate();
    } catch (const PreconditionError& e) {
        throw FormatError(std::string("invalid DPCC header: ") + e.what());
    }

    // Guard against absurd lengths before allocating.
    const std::size_t reserve = static_cast<std::size_t>(std::min<std::uint64_t>(num_points, 1u << 20));
    ds.points.reserve(reserve);
    std::vector<float> buffer(static_cast<std::size_t>(num_bs) * num_sub * 2);
    for (std::uint64_t l = 0; l < num_points; ++l) {
        Datapoint p;
        p.timestamp = r.get<double>(l);
        for (int c = 0; c < 3; ++c) p.position[c] = r.get<double>(l);
        p.freq_offsets.resize(num_bs);
        for (int b = 0; b < num_bs; ++b) p.freq_offsets[b] = r.get<double>(l);
        p.csi.resize(num_bs, num_sub);
        for (auto& v : buffer) v = r.get<float>(l);
        for (Eigen::Index i = 0; i < p.csi.size(); ++i) {
            p.csi.data()[i] = {buffer[2 * static_cast<std::size_t>(i)],
                               buffer[2 * static_cast<std::size_t>(i) + 1]};
        }
        if (!all_finite(p.csi)) throw FormatError("non-finite CSI", l);
        if (!ds.points.empty() && !(p.timestamp > ds.points.back().timestamp)) {
            throw FormatError("non-monotone timestamp", l);
        }
        ds.points.push_back(std::move(p));
    }
    if (ds.points.size() < 2) throw FormatError("DPCC file holds fewer than 2 records");
    return ds;
}

void save_dataset(const CsiDataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing", 0);
    write_dataset(dataset, out);
    out.flush();
    if (!out) throw IoError("flush failed for " + path.string(), 0);
}

CsiDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string(), 0);
    return read_dataset(in);
}

SplitIndices split_indices(std::size_t num_points, double fraction, std::uint64_t seed) {
    if (num_points < 2) throw PreconditionError("split needs at least 2 datapoints");
    if (!(fraction > 0.0 && fraction < 1.0)) throw PreconditionError("fraction must be in (0, 1)");

    // Ties round toward the train part.
    auto n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(num_points) + 0.5));
    n_train = std::clamp<std::size_t>(n_train, 1, num_points - 1);
    const std::size_t n_test = num_points - n_train;
    const std::size_t blocks = std::clamp<std::size_t>(std::min(n_train, n_test), 1, 10);

    auto part_length = [blocks](std::size_t total, std::size_t j) {
        return total * (j + 1) / blocks - total * j / blocks;
    };

    const bool train_first = (stream_seed(seed, streams::kSplit) & 1u) == 0;
    SplitIndices out;
    std::size_t cursor = 0;
    for (std::size_t j = 0; j < blocks; ++j) {
        for (int half = 0; half < 2; ++half) {
            const bool is_train = (half == 0) == train_first;
            const std::size_t len = part_length(is_train ? n_train : n_test, j);
            auto& dst = is_train ? out.train : out.test;
            for (std::size_t i = 0; i < len; ++i) dst.push_back(cursor++);
        }
    }
    return out;
}

std::pair<CsiDataset, CsiDataset> split_train_test(const CsiDataset& dataset, double fraction,
                                                   std::uint64_t seed) {
    const auto idx = split_indices(dataset.size(), fraction, seed);
    return {dataset.subset(idx.train), dataset.subset(idx.test)};
}

Datapoint desynchronize_features(const Datapoint& point, std::uint64_t seed,
                                 const DesyncOptions& options) {
    const auto n = point.csi.cols();
    if (options.max_shift < 0 || 4 * options.max_shift >= n) {
        throw PreconditionError("max_shift must be below N_sub / 4");
    }
    auto engine = make_engine(seed, streams::kDesync);
    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
    std::uniform_int_distribution<int> shift_dist(-options.max_shift, options.max_shift);

    Datapoint out = point;
    for (Eigen::Index b = 0; b < point.csi.rows(); ++b) {
        const double theta = options.randomize_phase ? phase_dist(engine) : 0.0;
        const int shift = shift_dist(engine);
        if (theta == 0.0 && shift == 0) continue;
        for (Eigen::Index k = 0; k < n; ++k) {
            // Delaying the CIR by `shift` taps is a linear phase ramp across subcarriers.
            const double angle = theta - 2.0 * std::numbers::pi * static_cast<double>(k) *
                                             static_cast<double>(shift) / static_cast<double>(n);
            const std::complex<double> rot(std::cos(angle), std::sin(angle));
            out.csi(b, k) = std::complex<float>(std::complex<double>(point.csi(b, k)) * rot);
        }
    }
    return out;
}

}  // namespace dopcc
