#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dopcc/baselines.hpp"
#include "dopcc/dataset.hpp"
#include "dopcc/doppler_loss.hpp"
#include "dopcc/fcf.hpp"
#include "dopcc/sim.hpp"
#include "dopcc/textio.hpp"
#include "dopcc/trainer.hpp"

namespace dopcc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

/// Recognized scenario keys, e.g. `bs_positions = -7,-7,2.5; 7,-7,2.5` or `multipath = none`.
const std::vector<std::string>& scenario_keys();

/// Default scenario with the given keys applied; the result is validated.
SimScenario scenario_from_config(const KeyValueConfig& config);

/// Settings of the train/evaluate/chart path beyond the raw schedule.
struct PipelineSettings {
    TrainSchedule schedule;
    UncertaintyParams uncertainty;
    FeatureSpec features;
    std::optional<DesyncOptions> desync = DesyncOptions{};
    std::size_t neighbors = 20;      // geodesic graph degree for the baselines
    double v_max = 0.5;              // m/s, timestamp bound of the fused baseline
    double split_fraction = 0.8;
    std::uint64_t split_seed = 1;
    std::uint64_t desync_seed = 1;  // feature-path randomization; must match between train and evaluate
};

const std::vector<std::string>& pipeline_keys();

PipelineSettings pipeline_from_config(const KeyValueConfig& config);

/// Datapoints of `subset` ("all", "train" or "test") under the settings' split.
std::vector<std::size_t> select_indices(std::size_t num_points, const std::string& subset,
                                        const PipelineSettings& settings);

struct TrainOutcome {
    TrainResult result;
    double flagged_fraction = 0.0;  // phase refinement, Doppler loss only
    bool phase_warning = false;
};

/// Trains on the datapoints `indices` of `full` with loss "doppler", "cira" or "fused".
TrainOutcome train_model(const CsiDataset& full, const std::vector<std::size_t>& indices, const std::string& loss,
                         const PipelineSettings& settings, const EpochCallback& on_epoch = {});

/// Chart positions of every datapoint; checks that the model fits the dataset.
Eigen::MatrixX2d estimate_positions(const FcfModel& model, const CsiDataset& data, const PipelineSettings& settings);

/// Entry point of the `dopcc` tool; returns the process exit code.
int run(int argc, char** argv);

}  // namespace dopcc::cli
