#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "dopcc/dataset.hpp"

namespace dopcc {

/// Input layer of the forward charting function: a window of time-domain taps per BS,
/// each contributing (re, im, log10 |tap|).
struct FeatureSpec {
    std::size_t taps_per_bs = 32;
    double log_floor = 1e-6;

    std::size_t feature_length(std::size_t num_bs) const { return num_bs * taps_per_bs * 3; }

    bool operator==(const FeatureSpec&) const = default;
};

/// Window of T taps cyclically centered on the strongest tap (the peak lands at index T/2).
Eigen::VectorXd extract_features(const CsiMatrix& csi, const FeatureSpec& spec);

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
};

/// Hidden widths of the default network; input and output widths are added around them.
inline const std::vector<std::size_t> kDefaultHiddenWidths = {1024, 512, 256, 128, 64};

/// Dense network C_theta: features -> 2-D position. Rectifier on hidden layers, identity
/// on the output; inputs are standardized with stored per-feature statistics.
class FcfModel {
  public:
    FcfModel() = default;

    /// All parameters zero, identity standardization.
    FcfModel(std::vector<std::size_t> widths, FeatureSpec spec, std::size_t num_bs);

    /// Uniform He initialization with bound sqrt(6 / fan_in); biases zero.
    static FcfModel initialized(std::vector<std::size_t> widths, FeatureSpec spec, std::size_t num_bs,
                                std::uint64_t seed);

    /// Default architecture for B base stations.
    static std::vector<std::size_t> default_widths(std::size_t num_bs, const FeatureSpec& spec);

    std::vector<std::size_t> widths() const;
    std::size_t input_width() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols()); }
    std::size_t parameter_count() const;

    const FeatureSpec& feature_spec() const { return spec_; }
    std::size_t num_bs() const { return num_bs_; }

    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

    const Eigen::VectorXd& input_mean() const { return mean_; }
    const Eigen::VectorXd& input_scale() const { return scale_; }
    void set_standardization(Eigen::VectorXd mean, Eigen::VectorXd scale);

    /// Per-feature mean and standard deviation of the columns of `features`.
    void fit_standardization(const Eigen::MatrixXd& features);

    Eigen::Vector2d forward(const Eigen::VectorXd& features) const;

    /// Columns are samples; returns 2 x n.
    Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& features) const;

    /// Features for a CSI matrix, checking that its shape suits this model.
    Eigen::VectorXd features_for(const CsiMatrix& csi) const;

    bool operator==(const FcfModel& other) const;

  private:
    std::vector<DenseLayer> layers_;
    Eigen::VectorXd mean_;
    Eigen::VectorXd scale_;
    FeatureSpec spec_;
    std::size_t num_bs_ = 0;
};

/// Layer inputs recorded during a forward pass (index 0 is the standardized input).
struct ForwardCache {
    std::vector<Eigen::MatrixXd> inputs;
    Eigen::MatrixXd output;
};

Eigen::MatrixXd forward_batch(const FcfModel& model, const Eigen::MatrixXd& features, ForwardCache& cache);

/// Parameter-shaped gradient accumulator.
struct Gradients {
    std::vector<DenseLayer> layers;

    static Gradients zeros_like(const FcfModel& model);
    void set_zero();
    Gradients& operator+=(const Gradients& other);
    Gradients& operator*=(double s);
    bool all_finite() const;
};

/// Reverse pass for a cached batch; accumulates d loss / d parameters given d loss / d output.
void backward_batch(const FcfModel& model, const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                    Gradients& accum);

/// Siamese backward: both branches share the parameters and add into one accumulator.
void backward_pair(const FcfModel& model, const Eigen::VectorXd& features1, const Eigen::VectorXd& features2,
                   const Eigen::Vector2d& upstream1, const Eigen::Vector2d& upstream2, Gradients& accum);

/// "FCF1" binary format: widths, feature spec, standardization, parameters (little-endian).
void save_model(const FcfModel& model, std::ostream& sink);
FcfModel load_model(std::istream& source);
void save_model(const FcfModel& model, const std::filesystem::path& path);
FcfModel load_model(const std::filesystem::path& path);

}  // namespace dopcc
