#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dopcc/baselines.hpp"
#include "dopcc/dataset.hpp"
#include "dopcc/doppler_loss.hpp"
#include "dopcc/fcf.hpp"
#include "dopcc/phase.hpp"

namespace dopcc {

struct TrainSchedule {
    std::size_t epochs = 6;
    std::size_t pairs_per_epoch = 30000;
    std::vector<std::size_t> batch_sizes = {16, 16, 32, 32, 64, 64};
    std::vector<double> learning_rates = {1e-3, 1e-3, 5e-4, 5e-4, 2e-4, 1e-4};
    std::vector<double> beta_per_epoch = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::size_t max_halvings = 5;
    std::vector<std::size_t> hidden_widths = kDefaultHiddenWidths;
    std::size_t frame_iterations = 30;  // output-frame refinement after the Doppler epochs; 0 skips it
    std::uint64_t seed = 1;

    /// Replaces every per-epoch list by `epochs` copies of its first entry if it has one element.
    void broadcast_lists();
    void validate() const;
};

using IndexPair = std::pair<std::size_t, std::size_t>;

/// i.i.d. uniform pairs with l1 < l2.
std::vector<IndexPair> sample_pairs(std::size_t num_points, std::size_t count, std::uint64_t seed);

/// Network inputs for every datapoint. Holds no positions, so nothing downstream of it can
/// read the ground truth.
struct FeatureTable {
    Eigen::MatrixXd features;  // feature_length x L, one column per datapoint
    FeatureSpec spec;
    SystemConfig config;
    std::vector<double> timestamps;

    std::size_t size() const { return static_cast<std::size_t>(features.cols()); }
};

/// Features of every datapoint after optional per-datapoint desynchronization (seeded by
/// `seed` and the datapoint index).
FeatureTable build_feature_table(const CsiDataset& dataset, const FeatureSpec& spec,
                                 const std::optional<DesyncOptions>& desync, std::uint64_t seed);

/// Applies the model to every column of the table; rows of the result are estimates.
Eigen::MatrixX2d predict(const FcfModel& model, const FeatureTable& table);

struct EpochRecord {
    std::size_t epoch = 0;
    std::size_t pairs = 0;
    std::size_t batch_size = 0;
    double learning_rate = 0.0;  // after any halvings
    double beta = 0.0;
    double mean_loss = 0.0;      // mean over the epoch's pairs, taken before each update
    std::size_t retries = 0;
    std::size_t resampled = 0;   // pairs redrawn because their dissimilarity was infinite
    double wall_seconds = 0.0;   // not written to the report file
};

struct FrameRefinement {
    std::size_t pairs = 0;
    std::size_t iterations = 0;
    double loss_before = 0.0;  // mean pair loss
    double loss_after = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::optional<FrameRefinement> frame;

    /// Whitespace-separated table. Wall time is left out so the file is reproducible.
    void write(std::ostream& out) const;
};

struct TrainResult {
    FcfModel model;
    TrainReport report;
};

/// Optional per-epoch progress callback (CLI prints wall time through it).
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Damped Gauss-Newton fit of an affine map x -> A x + b applied after the network, on the
/// Doppler loss of the given pairs; the map is folded into the output layer. Plain gradient
/// steps move the chart's global offset only slowly because the loss constrains it weakly.
FrameRefinement refine_output_frame(FcfModel& model, const FeatureTable& table, const PhaseTrack& track,
                                    const UncertaintyModel& uncertainty, const std::vector<IndexPair>& pairs,
                                    double beta, std::size_t max_iterations);

/// Self-supervised training with the Doppler phase loss. Throws PreconditionError for a
/// single base station and NumericError when the loss stays non-finite.
TrainResult train_doppler(const FeatureTable& table, const PhaseTrack& track, const UncertaintyModel& uncertainty,
                          const TrainSchedule& schedule, const EpochCallback& on_epoch = {});

/// Convenience overload: features from the dataset with its positions stripped.
TrainResult train_doppler(const CsiDataset& dataset, const PhaseTrack& track, const UncertaintyModel& uncertainty,
                          const TrainSchedule& schedule, const FeatureSpec& spec = {},
                          const std::optional<DesyncOptions>& desync = DesyncOptions{});

/// Pairwise dissimilarity source for the Siamese distance loss.
struct PairDissimilarity {
    std::function<double(std::size_t, std::size_t)> value;
    std::function<void(const std::vector<std::size_t>&)> prefetch;  // optional, row sources

    static PairDissimilarity from_matrix(const DissimilarityMatrix& matrix);
    static PairDissimilarity from_geodesic(const GeodesicDissimilarity& geodesic);
};

inline constexpr double kDissimilarityEpsilon = 1e-2;

/// Loss per pair (|x1 - x2| - d)^2 / (d + eps). Pairs with infinite d are redrawn.
TrainResult train_dissimilarity(const FeatureTable& table, const PairDissimilarity& dissimilarity,
                                const TrainSchedule& schedule, const EpochCallback& on_epoch = {});

TrainResult train_dissimilarity(const FeatureTable& table, const DissimilarityMatrix& dmatrix,
                                const TrainSchedule& schedule, const EpochCallback& on_epoch = {});

/// Loss and gradients of one dissimilarity pair.
struct DistancePairLoss {
    double loss = 0.0;
    Eigen::Vector2d grad1 = Eigen::Vector2d::Zero();
    Eigen::Vector2d grad2 = Eigen::Vector2d::Zero();
};
DistancePairLoss distance_pair_loss(const Eigen::Vector2d& x1, const Eigen::Vector2d& x2, double d,
                                    double epsilon = kDissimilarityEpsilon);

}  // namespace dopcc
