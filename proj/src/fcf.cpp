#include "dopcc/fcf.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <string>

#include "dopcc/dsp.hpp"
#include "dopcc/errors.hpp"
#include "dopcc/rng.hpp"

namespace dopcc {

namespace {

constexpr std::array<char, 4> kModelMagic = {'F', 'C', 'F', '1'};

template <typename U>
void put_bits(std::ostream& out, U bits) {
    std::array<char, sizeof(U)> bytes{};
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_bits(std::istream& in) {
    std::array<unsigned char, sizeof(U)> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw FormatError("truncated FCF1 model file");
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
    return bits;
}

void put_f64(std::ostream& out, double v) { put_bits<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_bits<std::uint64_t>(in)); }

}  // namespace

Eigen::VectorXd extract_features(const CsiMatrix& csi, const FeatureSpec& spec) {
    const auto num_bs = static_cast<std::size_t>(csi.rows());
    const auto n = static_cast<std::size_t>(csi.cols());
    const std::size_t taps = spec.taps_per_bs;
    if (taps == 0 || taps > n) {
        throw PreconditionError("feature window of " + std::to_string(taps) + " taps exceeds N_sub = " +
                                std::to_string(n));
    }
    const double log_floor = std::log10(spec.log_floor);
    Eigen::VectorXd out(static_cast<Eigen::Index>(spec.feature_length(num_bs)));
    for (std::size_t b = 0; b < num_bs; ++b) {
        const auto row = csi.row(static_cast<Eigen::Index>(b));
        const std::span<const std::complex<float>> spectrum(row.data(), n);
        const auto cir = inverse_dft(spectrum);
        bool nonzero = false;
        for (const auto& v : spectrum) nonzero = nonzero || v != std::complex<float>{};

        const long peak = static_cast<long>(strongest_tap(cir));
        const long start = peak - static_cast<long>(taps / 2);
        for (std::size_t t = 0; t < taps; ++t) {
            const auto base = static_cast<Eigen::Index>(3 * (b * taps + t));
            if (!nonzero) {
                out[base] = 0.0;
                out[base + 1] = 0.0;
                out[base + 2] = log_floor;
                continue;
            }
            const long idx = ((start + static_cast<long>(t)) % static_cast<long>(n) + static_cast<long>(n)) %
                             static_cast<long>(n);
            const cplx v = cir[static_cast<std::size_t>(idx)];
            out[base] = v.real();
            out[base + 1] = v.imag();
            out[base + 2] = std::log10(std::max(std::abs(v), spec.log_floor));
        }
    }
    return out;
}

FcfModel::FcfModel(std::vector<std::size_t> widths, FeatureSpec spec, std::size_t num_bs)
    : spec_(spec), num_bs_(num_bs) {
    if (widths.size() < 2) throw PreconditionError("a network needs at least input and output widths");
    for (auto w : widths) {
        if (w == 0) throw PreconditionError("layer widths must be positive");
    }
    if (widths.back() != 2) throw PreconditionError("the output layer must have two neurons");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        DenseLayer layer;
        layer.weight = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(widths[i + 1]),
                                             static_cast<Eigen::Index>(widths[i]));
        layer.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(widths[i + 1]));
        layers_.push_back(std::move(layer));
    }
    mean_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(widths.front()));
    scale_ = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(widths.front()));
}

FcfModel FcfModel::initialized(std::vector<std::size_t> widths, FeatureSpec spec, std::size_t num_bs,
                               std::uint64_t seed) {
    FcfModel model(std::move(widths), spec, num_bs);
    auto engine = make_engine(seed, streams::kInit);
    for (auto& layer : model.layers_) {
        const double bound = std::sqrt(6.0 / static_cast<double>(layer.weight.cols()));
        std::uniform_real_distribution<double> dist(-bound, bound);
        // Row-major fill order keeps the initialization independent of Eigen's storage order.
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = dist(engine);
        }
    }
    return model;
}

std::vector<std::size_t> FcfModel::default_widths(std::size_t num_bs, const FeatureSpec& spec) {
    std::vector<std::size_t> widths{spec.feature_length(num_bs)};
    widths.insert(widths.end(), kDefaultHiddenWidths.begin(), kDefaultHiddenWidths.end());
    widths.push_back(2);
    return widths;
}

std::vector<std::size_t> FcfModel::widths() const {
    std::vector<std::size_t> out;
    if (layers_.empty()) return out;
    out.push_back(static_cast<std::size_t>(layers_.front().weight.cols()));
    for (const auto& l : layers_) out.push_back(static_cast<std::size_t>(l.weight.rows()));
    return out;
}

std::size_t FcfModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

void FcfModel::set_standardization(Eigen::VectorXd mean, Eigen::VectorXd scale) {
    if (mean.size() != static_cast<Eigen::Index>(input_width()) || scale.size() != mean.size()) {
        throw PreconditionError("standardization size does not match the input width");
    }
    if (!((scale.array() > 0.0).all())) throw PreconditionError("standardization scale must be positive");
    mean_ = std::move(mean);
    scale_ = std::move(scale);
}

void FcfModel::fit_standardization(const Eigen::MatrixXd& features) {
    if (features.rows() != static_cast<Eigen::Index>(input_width()) || features.cols() == 0) {
        throw PreconditionError("feature matrix does not match the input width");
    }
    const Eigen::VectorXd mean = features.rowwise().mean();
    const Eigen::VectorXd var = (features.colwise() - mean).array().square().rowwise().mean();
    // Constant features (e.g. clamped log floors) keep unit scale.
    const Eigen::VectorXd scale = var.unaryExpr([](double v) { return v > 1e-24 ? std::sqrt(v) : 1.0; });
    set_standardization(mean, scale);
}

Eigen::VectorXd FcfModel::features_for(const CsiMatrix& csi) const {
    if (static_cast<std::size_t>(csi.rows()) != num_bs_) {
        throw PreconditionError("model expects " + std::to_string(num_bs_) + " BS rows, CSI has " +
                                std::to_string(csi.rows()));
    }
    auto f = extract_features(csi, spec_);
    if (static_cast<std::size_t>(f.size()) != input_width()) {
        throw PreconditionError("feature length does not match the model input width");
    }
    return f;
}

Eigen::Vector2d FcfModel::forward(const Eigen::VectorXd& features) const {
    const Eigen::MatrixXd out = forward_batch(features);
    return out.col(0);
}

Eigen::MatrixXd FcfModel::forward_batch(const Eigen::MatrixXd& features) const {
    ForwardCache cache;
    return dopcc::forward_batch(*this, features, cache);
}

bool FcfModel::operator==(const FcfModel& other) const {
    if (widths() != other.widths() || !(spec_ == other.spec_) || num_bs_ != other.num_bs_) return false;
    if (mean_ != other.mean_ || scale_ != other.scale_) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].weight != other.layers_[i].weight || layers_[i].bias != other.layers_[i].bias) return false;
    }
    return true;
}

Eigen::MatrixXd forward_batch(const FcfModel& model, const Eigen::MatrixXd& features, ForwardCache& cache) {
    if (features.rows() != static_cast<Eigen::Index>(model.input_width())) {
        throw PreconditionError("feature length " + std::to_string(features.rows()) +
                                " does not match the model input width " + std::to_string(model.input_width()));
    }
    const auto& layers = model.layers();
    cache.inputs.resize(layers.size());
    cache.inputs[0] = (features.colwise() - model.input_mean()).array().colwise() / model.input_scale().array();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Eigen::MatrixXd z = layers[i].weight * cache.inputs[i];
        z.colwise() += layers[i].bias;
        if (i + 1 < layers.size()) {
            cache.inputs[i + 1] = z.cwiseMax(0.0);
        } else {
            cache.output = std::move(z);
        }
    }
    return cache.output;
}

Gradients Gradients::zeros_like(const FcfModel& model) {
    Gradients g;
    for (const auto& l : model.layers()) {
        g.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                            Eigen::VectorXd::Zero(l.bias.size())});
    }
    return g;
}

void Gradients::set_zero() {
    for (auto& l : layers) {
        l.weight.setZero();
        l.bias.setZero();
    }
}

Gradients& Gradients::operator+=(const Gradients& other) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].weight += other.layers[i].weight;
        layers[i].bias += other.layers[i].bias;
    }
    return *this;
}

Gradients& Gradients::operator*=(double s) {
    for (auto& l : layers) {
        l.weight *= s;
        l.bias *= s;
    }
    return *this;
}

bool Gradients::all_finite() const {
    for (const auto& l : layers) {
        if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
}

void backward_batch(const FcfModel& model, const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                    Gradients& accum) {
    const auto& layers = model.layers();
    Eigen::MatrixXd delta = upstream;
    for (std::size_t i = layers.size(); i-- > 0;) {
        accum.layers[i].weight.noalias() += delta * cache.inputs[i].transpose();
        accum.layers[i].bias += delta.rowwise().sum();
        if (i == 0) break;
        Eigen::MatrixXd back = layers[i].weight.transpose() * delta;
        delta = (cache.inputs[i].array() > 0.0).select(back, 0.0);
    }
}

void backward_pair(const FcfModel& model, const Eigen::VectorXd& features1, const Eigen::VectorXd& features2,
                   const Eigen::Vector2d& upstream1, const Eigen::Vector2d& upstream2, Gradients& accum) {
    for (int branch = 0; branch < 2; ++branch) {
        ForwardCache cache;
        forward_batch(model, branch == 0 ? features1 : features2, cache);
        backward_batch(model, cache, branch == 0 ? upstream1 : upstream2, accum);
    }
}

void save_model(const FcfModel& model, std::ostream& sink) {
    const auto widths = model.widths();
    sink.write(kModelMagic.data(), kModelMagic.size());
    put_bits<std::uint32_t>(sink, static_cast<std::uint32_t>(widths.size()));
    for (auto w : widths) put_bits<std::uint64_t>(sink, w);
    put_bits<std::uint32_t>(sink, static_cast<std::uint32_t>(model.feature_spec().taps_per_bs));
    put_f64(sink, model.feature_spec().log_floor);
    put_bits<std::uint32_t>(sink, static_cast<std::uint32_t>(model.num_bs()));
    for (Eigen::Index i = 0; i < model.input_mean().size(); ++i) put_f64(sink, model.input_mean()[i]);
    for (Eigen::Index i = 0; i < model.input_scale().size(); ++i) put_f64(sink, model.input_scale()[i]);
    for (const auto& layer : model.layers()) {
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) put_f64(sink, layer.weight(r, c));
        }
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) put_f64(sink, layer.bias[r]);
    }
    if (!sink) throw IoError("model write failed", 0);
}

FcfModel load_model(std::istream& source) {
    std::array<char, 4> magic{};
    source.read(magic.data(), magic.size());
    if (source.gcount() != 4 || magic != kModelMagic) throw FormatError("bad magic: not an FCF1 model file");
    const auto count = get_bits<std::uint32_t>(source);
    if (count < 2 || count > 64) throw FormatError("implausible layer count in model file");
    std::vector<std::size_t> widths(count);
    for (auto& w : widths) {
        w = static_cast<std::size_t>(get_bits<std::uint64_t>(source));
        if (w == 0 || w > (1u << 24)) throw FormatError("implausible layer width in model file");
    }
    FeatureSpec spec;
    spec.taps_per_bs = get_bits<std::uint32_t>(source);
    spec.log_floor = get_f64(source);
    const auto num_bs = get_bits<std::uint32_t>(source);
    if (spec.feature_length(num_bs) != widths.front()) {
        throw FormatError("input width " + std::to_string(widths.front()) +
                          " does not match the stored feature spec");
    }
    if (widths.back() != 2) throw FormatError("model output width must be 2");

    FcfModel model(widths, spec, num_bs);
    Eigen::VectorXd mean(static_cast<Eigen::Index>(widths.front()));
    Eigen::VectorXd scale(mean.size());
    for (Eigen::Index i = 0; i < mean.size(); ++i) mean[i] = get_f64(source);
    for (Eigen::Index i = 0; i < scale.size(); ++i) scale[i] = get_f64(source);
    try {
        model.set_standardization(mean, scale);
    } catch (const PreconditionError& e) {
        throw FormatError(std::string("invalid standardization: ") + e.what());
    }
    for (auto& layer : model.layers()) {
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = get_f64(source);
        }
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = get_f64(source);
    }
    return model;
}

void save_model(const FcfModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing", 0);
    save_model(model, out);
}

FcfModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string(), 0);
    return load_model(in);
}

}  // namespace dopcc
