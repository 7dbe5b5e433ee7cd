#include "dopcc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <string>

#include "dopcc/errors.hpp"
#include "dopcc/parallel.hpp"
#include "dopcc/rng.hpp"
#include "dopcc/textio.hpp"

namespace dopcc {

void TrainSchedule::broadcast_lists() {
    auto widen = [this](auto& list) {
        if (list.size() == 1) list.assign(epochs, list.front());
    };
    widen(batch_sizes);
    widen(learning_rates);
    widen(beta_per_epoch);
}

void TrainSchedule::validate() const {
    if (epochs == 0) throw PreconditionError("schedule needs at least one epoch");
    if (pairs_per_epoch == 0) throw PreconditionError("pairs_per_epoch must be positive");
    if (batch_sizes.size() != epochs || learning_rates.size() != epochs || beta_per_epoch.size() != epochs) {
        throw PreconditionError("batch_sizes, learning_rates and beta_per_epoch must each list one value per epoch");
    }
    for (std::size_t e = 0; e < epochs; ++e) {
        if (batch_sizes[e] == 0) throw PreconditionError("batch sizes must be positive");
        if (!(learning_rates[e] > 0.0) || !std::isfinite(learning_rates[e])) {
            throw PreconditionError("learning rates must be positive and finite");
        }
        if (!(beta_per_epoch[e] > 0.0) || !std::isfinite(beta_per_epoch[e])) {
            throw PreconditionError("beta must be positive and finite");
        }
        if (e > 0 && batch_sizes[e] < batch_sizes[e - 1]) throw PreconditionError("batch sizes must be nondecreasing");
        if (e > 0 && learning_rates[e] > learning_rates[e - 1]) {
            throw PreconditionError("learning rates must be nonincreasing");
        }
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
        !(adam_epsilon > 0.0)) {
        throw PreconditionError("invalid optimizer constants");
    }
    for (auto w : hidden_widths) {
        if (w == 0) throw PreconditionError("hidden widths must be positive");
    }
}

std::vector<IndexPair> sample_pairs(std::size_t num_points, std::size_t count, std::uint64_t seed) {
    if (num_points < 2) throw PreconditionError("pair sampling needs at least two datapoints");
    auto engine = make_engine(seed, streams::kPairs);
    std::uniform_int_distribution<std::size_t> first(0, num_points - 1);
    std::uniform_int_distribution<std::size_t> second(0, num_points - 2);
    std::vector<IndexPair> pairs(count);
    for (auto& p : pairs) {
        const std::size_t a = first(engine);
        std::size_t b = second(engine);
        if (b >= a) ++b;
        p = {std::min(a, b), std::max(a, b)};
    }
    return pairs;
}

FeatureTable build_feature_table(const CsiDataset& dataset, const FeatureSpec& spec,
                                 const std::optional<DesyncOptions>& desync, std::uint64_t seed) {
    if (dataset.points.empty()) throw PreconditionError("dataset is empty");
    FeatureTable table;
    table.spec = spec;
    table.config = dataset.config;
    table.timestamps = dataset.timestamps();
    const auto length = static_cast<Eigen::Index>(spec.feature_length(dataset.config.num_bs()));
    table.features.resize(length, static_cast<Eigen::Index>(dataset.size()));
    parallel_for(dataset.size(), [&](std::size_t l) {
        const Datapoint& raw = dataset.points[l];
        if (desync) {
            const Datapoint shifted =
                desynchronize_features(raw, stream_seed(seed, streams::kDesync, l), *desync);
            table.features.col(static_cast<Eigen::Index>(l)) = extract_features(shifted.csi, spec);
        } else {
            table.features.col(static_cast<Eigen::Index>(l)) = extract_features(raw.csi, spec);
        }
    });
    return table;
}

Eigen::MatrixX2d predict(const FcfModel& model, const FeatureTable& table) {
    if (!(model.feature_spec() == table.spec) || model.num_bs() != table.config.num_bs()) {
        throw PreconditionError("model was built for a different feature layout");
    }
    const Eigen::Index n = table.features.cols();
    const Eigen::Index block = 256;
    Eigen::MatrixX2d out(n, 2);
    parallel_for(static_cast<std::size_t>((n + block - 1) / block), [&](std::size_t bi) {
        const Eigen::Index c0 = static_cast<Eigen::Index>(bi) * block;
        const Eigen::Index cols = std::min(block, n - c0);
        out.middleRows(c0, cols) = model.forward_batch(table.features.middleCols(c0, cols)).transpose();
    });
    return out;
}

void TrainReport::write(std::ostream& out) const {
    out << "epoch pairs batch_size learning_rate beta mean_loss retries resampled\n";
    for (const auto& e : epochs) {
        out << e.epoch << ' ' << e.pairs << ' ' << e.batch_size << ' ' << format_double(e.learning_rate) << ' '
            << format_double(e.beta) << ' ' << format_double(e.mean_loss) << ' ' << e.retries << ' ' << e.resampled
            << '\n';
    }
    if (frame) {
        out << "frame_refinement pairs " << frame->pairs << " iterations " << frame->iterations << " loss_before "
            << format_double(frame->loss_before) << " loss_after " << format_double(frame->loss_after) << '\n';
    }
}

DistancePairLoss distance_pair_loss(const Eigen::Vector2d& x1, const Eigen::Vector2d& x2, double d, double epsilon) {
    DistancePairLoss out;
    const Eigen::Vector2d diff = x1 - x2;
    const double dist = diff.norm();
    const double weight = 1.0 / (d + epsilon);
    const double residual = dist - d;
    out.loss = residual * residual * weight;
    if (dist > 0.0) {
        out.grad1 = (2.0 * residual * weight / dist) * diff;
        out.grad2 = -out.grad1;
    }
    return out;
}

namespace {

/// Per-pair loss used by the shared training loop.
class PairObjective {
  public:
    virtual ~PairObjective() = default;
    /// May redraw pairs; returns how many were replaced.
    virtual std::size_t begin_epoch(std::size_t epoch, std::vector<IndexPair>& pairs) = 0;
    virtual double evaluate(const IndexPair& pair, const Eigen::Vector2d& x1, const Eigen::Vector2d& x2,
                            Eigen::Vector2d& g1, Eigen::Vector2d& g2) const = 0;
};

class DopplerObjective final : public PairObjective {
  public:
    DopplerObjective(const PhaseTrack& track, const UncertaintyModel& uncertainty, const SystemConfig& config,
                     const TrainSchedule& schedule)
        : track_(track), uncertainty_(uncertainty), config_(config), schedule_(schedule) {}

    std::size_t begin_epoch(std::size_t epoch, std::vector<IndexPair>&) override {
        beta_ = schedule_.beta_per_epoch[epoch];
        return 0;
    }

    double evaluate(const IndexPair& pair, const Eigen::Vector2d& x1, const Eigen::Vector2d& x2, Eigen::Vector2d& g1,
                    Eigen::Vector2d& g2) const override {
        const PairSample sample = make_pair_sample(track_, uncertainty_, pair.first, pair.second, beta_);
        const PairLoss loss = pair_loss(x1, x2, sample, config_);
        g1 = loss.grad1;
        g2 = loss.grad2;
        return loss.loss;
    }

  private:
    const PhaseTrack& track_;
    const UncertaintyModel& uncertainty_;
    const SystemConfig& config_;
    const TrainSchedule& schedule_;
    double beta_ = 0.0;
};

class DistanceObjective final : public PairObjective {
  public:
    DistanceObjective(const PairDissimilarity& source, std::size_t num_points, std::uint64_t seed)
        : source_(source), num_points_(num_points), seed_(seed) {}

    std::size_t begin_epoch(std::size_t epoch, std::vector<IndexPair>& pairs) override {
        auto usable = [this](const IndexPair& p) { return std::isfinite(source_.value(p.first, p.second)); };
        if (source_.prefetch) {
            std::vector<std::size_t> sources;
            sources.reserve(pairs.size());
            for (const auto& p : pairs) sources.push_back(p.first);
            source_.prefetch(sources);
        }
        // Redraws come from their own stream so the epoch's first draw stays reproducible.
        auto engine = make_engine(seed_, streams::kPairs, 2 * epoch + 1);
        std::uniform_int_distribution<std::size_t> first(0, num_points_ - 1);
        std::uniform_int_distribution<std::size_t> second(0, num_points_ - 2);
        std::size_t replaced = 0;
        constexpr std::size_t kMaxDraws = 1000;
        for (auto& p : pairs) {
            std::size_t draws = 0;
            while (!usable(p)) {
                if (++draws > kMaxDraws) {
                    throw PreconditionError("dissimilarity is infinite on every redrawn pair");
                }
                const std::size_t a = first(engine);
                std::size_t b = second(engine);
                if (b >= a) ++b;
                p = {std::min(a, b), std::max(a, b)};
                ++replaced;
            }
        }
        return replaced;
    }

    double evaluate(const IndexPair& pair, const Eigen::Vector2d& x1, const Eigen::Vector2d& x2, Eigen::Vector2d& g1,
                    Eigen::Vector2d& g2) const override {
        const auto loss = distance_pair_loss(x1, x2, source_.value(pair.first, pair.second));
        g1 = loss.grad1;
        g2 = loss.grad2;
        return loss.loss;
    }

  private:
    const PairDissimilarity& source_;
    std::size_t num_points_;
    std::uint64_t seed_;
};

struct AdamState {
    Gradients m;
    Gradients v;
    std::uint64_t step = 0;
};

void adam_update(FcfModel& model, AdamState& state, const Gradients& grad, double lr, const TrainSchedule& s) {
    ++state.step;
    const double c1 = 1.0 - std::pow(s.adam_beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(s.adam_beta2, static_cast<double>(state.step));
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
        m.array() = s.adam_beta1 * m.array() + (1.0 - s.adam_beta1) * g.array();
        v.array() = s.adam_beta2 * v.array() + (1.0 - s.adam_beta2) * g.array().square();
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.adam_epsilon);
    };
    auto& layers = model.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        update(layers[i].weight, state.m.layers[i].weight, state.v.layers[i].weight, grad.layers[i].weight);
        update(layers[i].bias, state.m.layers[i].bias, state.v.layers[i].bias, grad.layers[i].bias);
    }
}

/// Chunk count depends only on the batch, never on the worker count.
std::size_t chunk_count(std::size_t columns) { return std::clamp<std::size_t>(columns / 64, 1, 8); }

class BatchEngine {
  public:
    BatchEngine(const FeatureTable& table, const PairObjective& objective)
        : table_(table), objective_(objective), slot_(table.size(), kNone) {}

    /// Mean loss over the batch; fills `grad` with its gradient.
    double run(const FcfModel& model, const std::vector<IndexPair>& pairs, std::size_t begin, std::size_t end,
               Gradients& grad) {
        std::vector<std::size_t> unique;
        unique.reserve(2 * (end - begin));
        for (std::size_t p = begin; p < end; ++p) {
            unique.push_back(pairs[p].first);
            unique.push_back(pairs[p].second);
        }
        std::sort(unique.begin(), unique.end());
        unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
        for (std::size_t i = 0; i < unique.size(); ++i) slot_[unique[i]] = i;

        const std::size_t chunks = chunk_count(unique.size());
        const auto bounds = [&](std::size_t c) {
            return std::pair{c * unique.size() / chunks, (c + 1) * unique.size() / chunks};
        };
        caches_.resize(chunks);
        Eigen::MatrixXd estimates(2, static_cast<Eigen::Index>(unique.size()));
        parallel_for(chunks, [&](std::size_t c) {
            const auto [c0, c1] = bounds(c);
            Eigen::MatrixXd x(table_.features.rows(), static_cast<Eigen::Index>(c1 - c0));
            for (std::size_t i = c0; i < c1; ++i) {
                x.col(static_cast<Eigen::Index>(i - c0)) = table_.features.col(static_cast<Eigen::Index>(unique[i]));
            }
            estimates.middleCols(static_cast<Eigen::Index>(c0), static_cast<Eigen::Index>(c1 - c0)) =
                forward_batch(model, x, caches_[c]);
        });

        // Pair terms are cheap; a serial pass in batch order fixes the summation order.
        const double scale = 1.0 / static_cast<double>(end - begin);
        Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(2, estimates.cols());
        double loss_sum = 0.0;
        for (std::size_t p = begin; p < end; ++p) {
            const auto i1 = static_cast<Eigen::Index>(slot_[pairs[p].first]);
            const auto i2 = static_cast<Eigen::Index>(slot_[pairs[p].second]);
            Eigen::Vector2d g1, g2;
            loss_sum += objective_.evaluate(pairs[p], estimates.col(i1), estimates.col(i2), g1, g2);
            upstream.col(i1) += scale * g1;
            upstream.col(i2) += scale * g2;
        }
        for (auto idx : unique) slot_[idx] = kNone;

        while (partial_.size() < chunks) partial_.push_back(Gradients::zeros_like(model));
        parallel_for(chunks, [&](std::size_t c) {
            const auto [c0, c1] = bounds(c);
            partial_[c].set_zero();
            backward_batch(model, caches_[c],
                           upstream.middleCols(static_cast<Eigen::Index>(c0), static_cast<Eigen::Index>(c1 - c0)),
                           partial_[c]);
        });
        grad.set_zero();
        for (std::size_t c = 0; c < chunks; ++c) grad += partial_[c];
        return loss_sum * scale;
    }

  private:
    static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
    const FeatureTable& table_;
    const PairObjective& objective_;
    std::vector<std::size_t> slot_;
    std::vector<ForwardCache> caches_;
    std::vector<Gradients> partial_;
};

TrainResult run_training(const FeatureTable& table, PairObjective& objective, const TrainSchedule& input_schedule,
                         std::optional<Eigen::Vector2d> output_bias, const EpochCallback& on_epoch) {
    TrainSchedule schedule = input_schedule;
    schedule.broadcast_lists();
    schedule.validate();
    if (table.size() < 2) throw PreconditionError("training needs at least two datapoints");

    std::vector<std::size_t> widths{table.spec.feature_length(table.config.num_bs())};
    widths.insert(widths.end(), schedule.hidden_widths.begin(), schedule.hidden_widths.end());
    widths.push_back(2);
    TrainResult result;
    result.model = FcfModel::initialized(widths, table.spec, table.config.num_bs(), schedule.seed);
    result.model.fit_standardization(table.features);
    if (output_bias) result.model.layers().back().bias = *output_bias;

    FcfModel& model = result.model;
    AdamState adam{Gradients::zeros_like(model), Gradients::zeros_like(model), 0};
    Gradients grad = Gradients::zeros_like(model);
    BatchEngine engine(table, objective);

    // State before the most recent update, restored when the next loss comes out non-finite.
    std::optional<std::pair<FcfModel, AdamState>> snapshot;

    for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        EpochRecord record;
        record.epoch = epoch + 1;
        record.batch_size = schedule.batch_sizes[epoch];
        record.beta = schedule.beta_per_epoch[epoch];
        double lr = schedule.learning_rates[epoch];

        auto pairs = sample_pairs(table.size(), schedule.pairs_per_epoch,
                                  stream_seed(schedule.seed, streams::kPairs, 2 * epoch));
        record.resampled = objective.begin_epoch(epoch, pairs);
        record.pairs = pairs.size();

        double loss_total = 0.0;
        for (std::size_t begin = 0; begin < pairs.size(); begin += record.batch_size) {
            const std::size_t end = std::min(pairs.size(), begin + record.batch_size);
            std::size_t halvings = 0;
            while (true) {
                const double loss = engine.run(model, pairs, begin, end, grad);
                if (std::isfinite(loss) && grad.all_finite()) {
                    snapshot.emplace(model, adam);
                    adam_update(model, adam, grad, lr, schedule);
                    loss_total += loss * static_cast<double>(end - begin);
                    break;
                }
                if (halvings == schedule.max_halvings) {
                    throw NumericError("loss is not finite after " + std::to_string(halvings) +
                                       " learning-rate halvings (epoch " + std::to_string(epoch + 1) + ")");
                }
                if (snapshot) {
                    model = snapshot->first;
                    adam = snapshot->second;
                }
                lr *= 0.5;
                ++halvings;
                ++record.retries;
            }
        }
        record.learning_rate = lr;
        record.mean_loss = loss_total / static_cast<double>(pairs.size());
        record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.report.epochs.push_back(record);
        if (on_epoch) on_epoch(record);
    }
    return result;
}

/// Residuals r = (dphi - k dd) / sigma over b1 < b2 for every pair, with their Jacobian with
/// respect to the six frame parameters (A row-major, then b). The loss equals 2 sum r^2.
struct FrameSystem {
    Eigen::Matrix<double, 6, 6> normal = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> gradient = Eigen::Matrix<double, 6, 1>::Zero();
    double sum_sq = 0.0;
};

FrameSystem frame_system(const Eigen::MatrixX2d& outputs, const Eigen::Matrix2d& a, const Eigen::Vector2d& b,
                         const std::vector<PairSample>& samples, const SystemConfig& config, bool with_jacobian) {
    const std::size_t num_bs = config.num_bs();
    const double k = 2.0 * std::numbers::pi / config.wavelength();
    FrameSystem sys;
    std::vector<double> d1(num_bs), d2(num_bs);
    std::vector<Eigen::Vector2d> g1(num_bs), g2(num_bs);
    for (const auto& s : samples) {
        const Eigen::Vector2d y1 = outputs.row(static_cast<Eigen::Index>(s.l1)).transpose();
        const Eigen::Vector2d y2 = outputs.row(static_cast<Eigen::Index>(s.l2)).transpose();
        const Eigen::Vector2d x1 = a * y1 + b;
        const Eigen::Vector2d x2 = a * y2 + b;
        for (std::size_t bs = 0; bs < num_bs; ++bs) {
            const Eigen::Vector3d r1 = Eigen::Vector3d(x1.x(), x1.y(), config.ue_height) - config.bs_positions[bs];
            const Eigen::Vector3d r2 = Eigen::Vector3d(x2.x(), x2.y(), config.ue_height) - config.bs_positions[bs];
            d1[bs] = r1.norm();
            d2[bs] = r2.norm();
            g1[bs] = d1[bs] > 0.0 ? Eigen::Vector2d(r1.head<2>() / d1[bs]) : Eigen::Vector2d::Zero();
            g2[bs] = d2[bs] > 0.0 ? Eigen::Vector2d(r2.head<2>() / d2[bs]) : Eigen::Vector2d::Zero();
        }
        for (std::size_t p = 0; p < num_bs; ++p) {
            for (std::size_t q = p + 1; q < num_bs; ++q) {
                const auto i = static_cast<Eigen::Index>(p);
                const auto j = static_cast<Eigen::Index>(q);
                const double dd = (d2[q] - d2[p]) - (d1[q] - d1[p]);
                const double res = (s.delta_phi(i, j) - k * dd) / s.sigma(i, j);
                sys.sum_sq += res * res;
                if (!with_jacobian) continue;
                const Eigen::Vector2d dx2 = -k / s.sigma(i, j) * (g2[q] - g2[p]);
                const Eigen::Vector2d dx1 = k / s.sigma(i, j) * (g1[q] - g1[p]);
                Eigen::Matrix<double, 6, 1> row;
                row << dx1.x() * y1.x() + dx2.x() * y2.x(), dx1.x() * y1.y() + dx2.x() * y2.y(),
                    dx1.y() * y1.x() + dx2.y() * y2.x(), dx1.y() * y1.y() + dx2.y() * y2.y(), dx1.x() + dx2.x(),
                    dx1.y() + dx2.y();
                sys.normal.noalias() += row * row.transpose();
                sys.gradient += res * row;
            }
        }
    }
    return sys;
}

}  // namespace

FrameRefinement refine_output_frame(FcfModel& model, const FeatureTable& table, const PhaseTrack& track,
                                    const UncertaintyModel& uncertainty, const std::vector<IndexPair>& pairs,
                                    double beta, std::size_t max_iterations) {
    if (pairs.empty()) throw PreconditionError("frame refinement needs pairs");
    std::vector<PairSample> samples;
    samples.reserve(pairs.size());
    for (const auto& [l1, l2] : pairs) samples.push_back(make_pair_sample(track, uncertainty, l1, l2, beta));
    const Eigen::MatrixX2d outputs = predict(model, table);
    const double per_pair = 2.0 / static_cast<double>(pairs.size());

    Eigen::Matrix2d a = Eigen::Matrix2d::Identity();
    Eigen::Vector2d b = Eigen::Vector2d::Zero();
    FrameRefinement info;
    info.pairs = pairs.size();
    FrameSystem sys = frame_system(outputs, a, b, samples, table.config, true);
    info.loss_before = sys.sum_sq * per_pair;
    double damping = 1e-3;
    for (std::size_t it = 0; it < max_iterations; ++it) {
        const Eigen::Matrix<double, 6, 1> diag = sys.normal.diagonal().cwiseMax(1e-12);
        Eigen::Matrix<double, 6, 6> lhs = sys.normal;
        lhs.diagonal() += damping * diag;
        const Eigen::Matrix<double, 6, 1> step = -lhs.ldlt().solve(sys.gradient);
        if (!step.allFinite()) break;
        Eigen::Matrix2d a_new;
        a_new << a(0, 0) + step[0], a(0, 1) + step[1], a(1, 0) + step[2], a(1, 1) + step[3];
        const Eigen::Vector2d b_new = b + step.tail<2>();
        const FrameSystem trial = frame_system(outputs, a_new, b_new, samples, table.config, false);
        ++info.iterations;
        if (std::isfinite(trial.sum_sq) && trial.sum_sq < sys.sum_sq) {
            const double gain = (sys.sum_sq - trial.sum_sq) / sys.sum_sq;
            a = a_new;
            b = b_new;
            sys = frame_system(outputs, a, b, samples, table.config, true);
            damping = std::max(damping / 3.0, 1e-9);
            if (gain < 1e-12) break;
        } else {
            damping *= 4.0;
            if (damping > 1e9) break;
        }
    }
    info.loss_after = sys.sum_sq * per_pair;

    auto& last = model.layers().back();
    last.weight = a * last.weight;
    last.bias = a * last.bias + b;
    return info;
}

TrainResult train_doppler(const FeatureTable& table, const PhaseTrack& track, const UncertaintyModel& uncertainty,
                          const TrainSchedule& schedule, const EpochCallback& on_epoch) {
    const std::size_t num_bs = table.config.num_bs();
    if (num_bs < 2) throw PreconditionError("Doppler training needs at least two base stations");
    if (track.num_points() != table.size() || track.num_bs() != num_bs) {
        throw PreconditionError("phase track does not match the feature table");
    }
    if (static_cast<std::size_t>(uncertainty.U.rows()) != table.size() ||
        static_cast<std::size_t>(uncertainty.U.cols()) != num_bs) {
        throw PreconditionError("uncertainty model does not match the feature table");
    }
    DopplerObjective objective(track, uncertainty, table.config, schedule);
    Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
    for (const auto& bs : table.config.bs_positions) centroid += bs.head<2>();
    centroid /= static_cast<double>(num_bs);
    TrainResult result = run_training(table, objective, schedule, centroid, on_epoch);
    if (schedule.frame_iterations > 0) {
        const auto pairs = sample_pairs(table.size(), schedule.pairs_per_epoch,
                                        stream_seed(schedule.seed, streams::kPairs, 2 * schedule.epochs));
        const double beta = schedule.beta_per_epoch.empty() ? uncertainty.params.beta : schedule.beta_per_epoch.back();
        result.report.frame =
            refine_output_frame(result.model, table, track, uncertainty, pairs, beta, schedule.frame_iterations);
    }
    return result;
}

TrainResult train_doppler(const CsiDataset& dataset, const PhaseTrack& track, const UncertaintyModel& uncertainty,
                          const TrainSchedule& schedule, const FeatureSpec& spec,
                          const std::optional<DesyncOptions>& desync) {
    const auto table = build_feature_table(dataset.without_positions(), spec, desync, schedule.seed);
    return train_doppler(table, track, uncertainty, schedule);
}

PairDissimilarity PairDissimilarity::from_matrix(const DissimilarityMatrix& matrix) {
    PairDissimilarity d;
    d.value = [&matrix](std::size_t i, std::size_t j) { return matrix(i, j); };
    return d;
}

PairDissimilarity PairDissimilarity::from_geodesic(const GeodesicDissimilarity& geodesic) {
    PairDissimilarity d;
    d.value = [&geodesic](std::size_t i, std::size_t j) { return geodesic(i, j); };
    d.prefetch = [&geodesic](const std::vector<std::size_t>& sources) { geodesic.prefetch(sources); };
    return d;
}

TrainResult train_dissimilarity(const FeatureTable& table, const PairDissimilarity& dissimilarity,
                                const TrainSchedule& schedule, const EpochCallback& on_epoch) {
    if (!dissimilarity.value) throw PreconditionError("dissimilarity source is empty");
    DistanceObjective objective(dissimilarity, table.size(), schedule.seed);
    return run_training(table, objective, schedule, std::nullopt, on_epoch);
}

TrainResult train_dissimilarity(const FeatureTable& table, const DissimilarityMatrix& dmatrix,
                                const TrainSchedule& schedule, const EpochCallback& on_epoch) {
    if (dmatrix.size() != table.size()) throw PreconditionError("dissimilarity matrix does not match the dataset");
    return train_dissimilarity(table, PairDissimilarity::from_matrix(dmatrix), schedule, on_epoch);
}

}  // namespace dopcc
