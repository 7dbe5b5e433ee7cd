#include "dopcc/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dopcc/errors.hpp"
#include "dopcc/eval.hpp"
#include "dopcc/parallel.hpp"
#include "dopcc/phase.hpp"

namespace dopcc::cli {

namespace fs = std::filesystem;

namespace {

std::uint64_t parse_unsigned(std::string_view text, const std::string& key) {
    std::uint64_t value = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end || text.empty()) {
        throw PreconditionError("key '" + key + "': expected a nonnegative integer, got '" + std::string(text) + "'");
    }
    return value;
}

bool parse_bool(std::string_view text, const std::string& key) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw PreconditionError("key '" + key + "': expected true or false, got '" + std::string(text) + "'");
}

std::vector<std::size_t> parse_sizes(std::string_view text, const std::string& key) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(text, ',')) out.push_back(parse_unsigned(item, key));
    return out;
}

/// "a,b,c; d,e,f" with a fixed number of values per group.
std::vector<std::vector<double>> parse_groups(std::string_view text, std::size_t width, const std::string& key) {
    std::vector<std::vector<double>> out;
    for (const auto& group : split_list(text, ';')) {
        auto values = parse_numbers(group, key);
        if (values.size() != width) {
            throw PreconditionError("key '" + key + "': each group needs " + std::to_string(width) + " numbers");
        }
        out.push_back(std::move(values));
    }
    return out;
}

double number(const KeyValueConfig& c, const std::string& key) { return parse_double(c.at(key), key); }

void require_input(const fs::path& path, const std::string& what) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) throw PreconditionError(what + " not found: " + path.string());
}

void require_output(const fs::path& path) {
    const fs::path parent = path.parent_path();
    std::error_code ec;
    if (!parent.empty() && !fs::is_directory(parent, ec)) {
        throw PreconditionError("output directory does not exist: " + parent.string());
    }
}

template <class Writer>
void write_file(const fs::path& path, Writer&& writer) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing", 0);
    writer(out);
    out.flush();
    if (!out) throw IoError("write to " + path.string() + " failed", static_cast<std::uint64_t>(out.tellp()));
}

KeyValueConfig gather_config(const std::string& file, const std::vector<std::string>& assignments) {
    KeyValueConfig config;
    if (!file.empty()) {
        require_input(file, "configuration file");
        config = KeyValueConfig::load(file);
    }
    for (const auto& a : assignments) config.set_assignment(a);
    return config;
}

}  // namespace

const std::vector<std::string>& scenario_keys() {
    static const std::vector<std::string> keys = {
        "carrier_frequency", "bandwidth",    "num_subcarriers", "ue_height", "bs_positions",
        "area",              "speed",        "sample_rate",     "duration",  "cfo_initial",
        "cfo_drift_std",     "snr_db",       "freq_noise_std",  "multipath", "seed",
    };
    return keys;
}

SimScenario scenario_from_config(const KeyValueConfig& c) {
    c.require_known(scenario_keys());
    SimScenario s = default_scenario();
    if (c.contains("carrier_frequency")) s.config.carrier_frequency = number(c, "carrier_frequency");
    if (c.contains("bandwidth")) s.config.bandwidth = number(c, "bandwidth");
    if (c.contains("num_subcarriers")) s.config.num_subcarriers = parse_unsigned(c.at("num_subcarriers"), "num_subcarriers");
    if (c.contains("ue_height")) s.config.ue_height = number(c, "ue_height");
    if (c.contains("bs_positions")) {
        s.config.bs_positions.clear();
        for (const auto& g : parse_groups(c.at("bs_positions"), 3, "bs_positions")) {
            s.config.bs_positions.emplace_back(g[0], g[1], g[2]);
        }
    }
    if (c.contains("area")) {
        s.area.pieces.clear();
        for (const auto& g : parse_groups(c.at("area"), 4, "area")) s.area.pieces.push_back({g[0], g[1], g[2], g[3]});
    }
    if (c.contains("speed")) s.speed = number(c, "speed");
    if (c.contains("sample_rate")) s.sample_rate = number(c, "sample_rate");
    if (c.contains("duration")) s.duration = number(c, "duration");
    if (c.contains("cfo_initial")) s.cfo_initial = number(c, "cfo_initial");
    if (c.contains("cfo_drift_std")) s.cfo_drift_std = number(c, "cfo_drift_std");
    if (c.contains("snr_db")) s.snr_db = number(c, "snr_db");
    if (c.contains("freq_noise_std")) s.freq_noise_std = number(c, "freq_noise_std");
    if (c.contains("multipath")) {
        s.multipath.clear();
        if (c.at("multipath") != "none") {
            for (const auto& g : parse_groups(c.at("multipath"), 4, "multipath")) {
                s.multipath.push_back({Eigen::Vector3d(g[0], g[1], g[2]), g[3]});
            }
        }
    }
    if (c.contains("seed")) s.seed = parse_unsigned(c.at("seed"), "seed");
    s.validate();
    return s;
}

const std::vector<std::string>& pipeline_keys() {
    static const std::vector<std::string> keys = {
        "epochs",        "pairs_per_epoch", "batch_sizes",   "learning_rates", "beta_per_epoch",
        "adam_beta1",    "adam_beta2",      "adam_epsilon",  "max_halvings",   "hidden_widths",
        "frame_iterations", "seed",         "beta",          "gain",           "u_min",
        "u_max",         "floor_db",        "taps_per_bs",   "log_floor",      "desync",
        "max_shift",     "randomize_phase", "desync_seed",   "neighbors",      "v_max",
        "split_fraction", "split_seed",
    };
    return keys;
}

PipelineSettings pipeline_from_config(const KeyValueConfig& c) {
    c.require_known(pipeline_keys());
    PipelineSettings p;
    auto& s = p.schedule;
    if (c.contains("epochs")) s.epochs = parse_unsigned(c.at("epochs"), "epochs");
    if (c.contains("pairs_per_epoch")) s.pairs_per_epoch = parse_unsigned(c.at("pairs_per_epoch"), "pairs_per_epoch");
    if (c.contains("batch_sizes")) s.batch_sizes = parse_sizes(c.at("batch_sizes"), "batch_sizes");
    if (c.contains("learning_rates")) s.learning_rates = parse_numbers(c.at("learning_rates"), "learning_rates");
    if (c.contains("beta_per_epoch")) s.beta_per_epoch = parse_numbers(c.at("beta_per_epoch"), "beta_per_epoch");
    if (c.contains("adam_beta1")) s.adam_beta1 = number(c, "adam_beta1");
    if (c.contains("adam_beta2")) s.adam_beta2 = number(c, "adam_beta2");
    if (c.contains("adam_epsilon")) s.adam_epsilon = number(c, "adam_epsilon");
    if (c.contains("max_halvings")) s.max_halvings = parse_unsigned(c.at("max_halvings"), "max_halvings");
    if (c.contains("hidden_widths")) s.hidden_widths = parse_sizes(c.at("hidden_widths"), "hidden_widths");
    if (c.contains("frame_iterations")) {
        s.frame_iterations = parse_unsigned(c.at("frame_iterations"), "frame_iterations");
    }
    if (c.contains("seed")) s.seed = parse_unsigned(c.at("seed"), "seed");
    // A schedule that only changes the epoch count keeps one value per epoch.
    auto fit_epochs = [&s](auto& list) {
        if (list.size() != s.epochs && !list.empty()) {
            const auto last = list.back();
            list.resize(s.epochs, last);
        }
    };
    if (!c.contains("batch_sizes")) fit_epochs(s.batch_sizes);
    if (!c.contains("learning_rates")) fit_epochs(s.learning_rates);
    if (!c.contains("beta_per_epoch")) {
        if (c.contains("beta")) {
            s.beta_per_epoch.assign(s.epochs, number(c, "beta"));
        } else {
            fit_epochs(s.beta_per_epoch);
        }
    }
    s.broadcast_lists();
    s.validate();

    auto& u = p.uncertainty;
    if (c.contains("beta")) u.beta = number(c, "beta");
    if (c.contains("gain")) u.gain = number(c, "gain");
    if (c.contains("u_min")) u.u_min = number(c, "u_min");
    if (c.contains("u_max")) u.u_max = number(c, "u_max");
    if (c.contains("floor_db")) u.floor_db = number(c, "floor_db");
    u.validate();

    if (c.contains("taps_per_bs")) p.features.taps_per_bs = parse_unsigned(c.at("taps_per_bs"), "taps_per_bs");
    if (c.contains("log_floor")) p.features.log_floor = number(c, "log_floor");
    if (p.features.taps_per_bs == 0 || !(p.features.log_floor > 0.0)) {
        throw PreconditionError("taps_per_bs and log_floor must be positive");
    }

    DesyncOptions desync;
    if (c.contains("max_shift")) desync.max_shift = static_cast<int>(parse_unsigned(c.at("max_shift"), "max_shift"));
    if (c.contains("randomize_phase")) desync.randomize_phase = parse_bool(c.at("randomize_phase"), "randomize_phase");
    const bool use_desync = c.contains("desync") ? parse_bool(c.at("desync"), "desync") : true;
    p.desync = use_desync ? std::optional<DesyncOptions>(desync) : std::nullopt;
    if (c.contains("desync_seed")) p.desync_seed = parse_unsigned(c.at("desync_seed"), "desync_seed");

    if (c.contains("neighbors")) p.neighbors = parse_unsigned(c.at("neighbors"), "neighbors");
    if (c.contains("v_max")) p.v_max = number(c, "v_max");
    if (c.contains("split_fraction")) p.split_fraction = number(c, "split_fraction");
    if (c.contains("split_seed")) p.split_seed = parse_unsigned(c.at("split_seed"), "split_seed");
    if (p.neighbors == 0) throw PreconditionError("neighbors must be positive");
    if (!(p.v_max > 0.0)) throw PreconditionError("v_max must be positive");
    if (!(p.split_fraction > 0.0 && p.split_fraction < 1.0)) throw PreconditionError("split_fraction must lie in (0, 1)");
    return p;
}

std::vector<std::size_t> select_indices(std::size_t n, const std::string& subset, const PipelineSettings& p) {
    if (subset == "all") {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        return all;
    }
    if (subset != "train" && subset != "test") throw PreconditionError("unknown subset: " + subset);
    const auto split = split_indices(n, p.split_fraction, p.split_seed);
    return subset == "train" ? split.train : split.test;
}

namespace {

FeatureTable features_of(const CsiDataset& data, const PipelineSettings& p) {
    return build_feature_table(data.without_positions(), p.features, p.desync, p.desync_seed);
}

}  // namespace

TrainOutcome train_model(const CsiDataset& full, const std::vector<std::size_t>& indices, const std::string& loss,
                         const PipelineSettings& p, const EpochCallback& on_epoch) {
    if (loss != "doppler" && loss != "cira" && loss != "fused") throw PreconditionError("unknown loss: " + loss);
    if (loss == "doppler" && full.config.num_bs() < 2) {
        throw PreconditionError("the Doppler loss needs at least two base stations");
    }
    const CsiDataset data = full.subset(indices);
    const FeatureTable table = features_of(data, p);

    TrainOutcome out;
    if (loss == "doppler") {
        // Phases are tracked over the full recording; a subset only picks datapoints from it.
        const RefineResult refined = track_phases(full);
        out.flagged_fraction = refined.flagged_fraction();
        out.phase_warning = refined.warning;
        const UncertaintyModel uncertainty = build_uncertainty(full, p.uncertainty).subset(indices);
        out.result = train_doppler(table, refined.track.subset(indices), uncertainty, p.schedule, on_epoch);
    } else {
        DissimilarityMatrix base = cira_matrix(data.without_positions());
        if (loss == "fused") base = fuse_with_timestamps(base, table.timestamps, p.v_max);
        const GeodesicDissimilarity geodesic_paths(base, p.neighbors);
        out.result = train_dissimilarity(table, PairDissimilarity::from_geodesic(geodesic_paths), p.schedule, on_epoch);
    }
    return out;
}

Eigen::MatrixX2d estimate_positions(const FcfModel& model, const CsiDataset& data, const PipelineSettings& p) {
    if (model.num_bs() != data.config.num_bs()) {
        throw PreconditionError("model expects " + std::to_string(model.num_bs()) + " base stations, dataset has " +
                                std::to_string(data.config.num_bs()));
    }
    if (model.feature_spec().taps_per_bs > data.config.num_subcarriers) {
        throw PreconditionError("model window of " + std::to_string(model.feature_spec().taps_per_bs) +
                                " taps exceeds the dataset's " + std::to_string(data.config.num_subcarriers) +
                                " subcarriers");
    }
    PipelineSettings settings = p;
    settings.features = model.feature_spec();
    return predict(model, features_of(data, settings));
}

namespace {

void print_epoch(const EpochRecord& e) {
    std::printf("epoch %zu: pairs %zu, batch %zu, lr %s, mean loss %s, %.2f s\n", e.epoch, e.pairs, e.batch_size,
                format_double(e.learning_rate).c_str(), format_double(e.mean_loss).c_str(), e.wall_seconds);
    std::fflush(stdout);
}

struct CommonArgs {
    std::string config_file;
    std::vector<std::string> assignments;
    std::string dataset;
    std::string subset = "all";
};

void add_common(CLI::App* cmd, CommonArgs& a, bool with_dataset = true) {
    cmd->add_option("--config", a.config_file, "key-value configuration file");
    cmd->add_option("--set", a.assignments, "override, key=value (repeatable)");
    if (with_dataset) {
        cmd->add_option("--dataset", a.dataset, "DPCC dataset")->required();
        cmd->add_option("--subset", a.subset, "datapoints to use")->check(CLI::IsMember({"all", "train", "test"}));
    }
}

int cmd_simulate(const std::string& scenario_file, const std::vector<std::string>& assignments,
                 std::optional<std::uint64_t> seed, const std::string& output) {
    KeyValueConfig config = gather_config(scenario_file, assignments);
    if (seed) config.set("seed", std::to_string(*seed));
    require_output(output);
    const SimScenario scenario = scenario_from_config(config);
    const CsiDataset dataset = simulate(scenario);
    save_dataset(dataset, output);
    std::printf("simulated L=%zu B=%zu N_sub=%zu duration=%s s -> %s\n", dataset.size(), dataset.config.num_bs(),
                dataset.config.num_subcarriers, format_double(scenario.duration).c_str(), output.c_str());
    return kExitOk;
}

int cmd_train(const CommonArgs& a, const std::string& loss, std::optional<std::uint64_t> seed,
              const std::string& model_path, const std::string& report_path) {
    KeyValueConfig config = gather_config(a.config_file, a.assignments);
    if (seed) config.set("seed", std::to_string(*seed));
    require_input(a.dataset, "dataset");
    require_output(model_path);
    if (!report_path.empty()) require_output(report_path);
    const PipelineSettings p = pipeline_from_config(config);

    const CsiDataset full = load_dataset(a.dataset);
    const auto indices = select_indices(full.size(), a.subset, p);
    const TrainOutcome outcome = train_model(full, indices, loss, p, print_epoch);
    if (outcome.phase_warning) {
        std::fprintf(stderr, "warning: %.1f%% of phase refinement steps exceeded the trust threshold\n",
                     100.0 * outcome.flagged_fraction);
    }
    const TrainResult& result = outcome.result;
    if (result.report.frame) {
        std::printf("frame refinement: mean loss %s -> %s\n", format_double(result.report.frame->loss_before).c_str(),
                    format_double(result.report.frame->loss_after).c_str());
    }
    save_model(result.model, fs::path(model_path));
    if (!report_path.empty()) write_file(report_path, [&](std::ostream& out) { result.report.write(out); });
    std::printf("trained %s model on %zu datapoints -> %s\n", loss.c_str(), indices.size(), model_path.c_str());
    return kExitOk;
}

/// Estimates and ground truth of the selected datapoints.
std::pair<Eigen::MatrixX2d, Eigen::MatrixX2d> chart_points(const CommonArgs& a, const std::string& model_path,
                                                           bool oracle, const PipelineSettings& p) {
    const CsiDataset full = load_dataset(a.dataset);
    const CsiDataset data = full.subset(select_indices(full.size(), a.subset, p));
    const Eigen::MatrixX2d truth = data.positions_2d();
    if (oracle) return {truth, truth};
    return {estimate_positions(load_model(fs::path(model_path)), data, p), truth};
}

int cmd_evaluate(const CommonArgs& a, const std::string& model_path, const std::string& transform,
                 std::optional<std::size_t> neighborhood, const std::string& report_path, const std::string& ecdf_path,
                 bool oracle) {
    const PipelineSettings p = pipeline_from_config(gather_config(a.config_file, a.assignments));
    require_input(a.dataset, "dataset");
    if (!oracle) require_input(model_path, "model");
    require_output(report_path);
    if (!ecdf_path.empty()) require_output(ecdf_path);

    const auto [estimates, truth] = chart_points(a, model_path, oracle, p);
    const EvalReport report = evaluate_chart(estimates, truth, transform == "affine", neighborhood);
    write_file(report_path, [&](std::ostream& out) { write_report(report, out); });
    if (!ecdf_path.empty()) write_file(ecdf_path, [&](std::ostream& out) { write_ecdf(report.ecdf, out); });
    std::printf("mae %s m, drms %s m, cep %s m, r95 %s m, ct %s, tw %s, ks %s\n", format_double(report.mae).c_str(),
                format_double(report.drms).c_str(), format_double(report.cep).c_str(),
                format_double(report.r95).c_str(), format_double(report.ct).c_str(),
                format_double(report.tw).c_str(), format_double(report.ks).c_str());
    return kExitOk;
}

int cmd_chart(const CommonArgs& a, const std::string& model_path, const std::string& transform,
              const std::string& csv_path, const std::string& svg_path) {
    const PipelineSettings p = pipeline_from_config(gather_config(a.config_file, a.assignments));
    require_input(a.dataset, "dataset");
    require_input(model_path, "model");
    require_output(csv_path);
    if (!svg_path.empty()) require_output(svg_path);

    auto [estimates, truth] = chart_points(a, model_path, false, p);
    if (transform == "affine") estimates = fit_affine(estimates, truth).apply(estimates);
    const ColorFrame frame;
    write_file(csv_path, [&](std::ostream& out) { export_chart(estimates, truth, frame, out); });
    if (!svg_path.empty()) {
        write_file(svg_path, [&](std::ostream& out) { export_chart_svg(estimates, truth, frame, out); });
    }
    std::printf("chart with %td points -> %s\n", estimates.rows(), csv_path.c_str());
    return kExitOk;
}

int cmd_phase_dump(const CommonArgs& a, const std::string& output) {
    const PipelineSettings p = pipeline_from_config(gather_config(a.config_file, a.assignments));
    require_input(a.dataset, "dataset");
    require_output(output);
    const CsiDataset full = load_dataset(a.dataset);
    RefineResult refined = track_phases(full);
    attach_uncertainty(refined.track, build_uncertainty(full, p.uncertainty));
    const auto indices = select_indices(full.size(), a.subset, p);
    const PhaseTrack track = a.subset == "all" ? refined.track : refined.track.subset(indices);
    write_file(output, [&](std::ostream& out) { write_phase_csv(track, out); });
    std::printf("flagged %zu of %zu refinement steps (%.2f%%)%s -> %s\n", refined.flagged_steps, refined.total_steps,
                100.0 * refined.flagged_fraction(), refined.warning ? ", above the warning fraction" : "",
                output.c_str());
    return kExitOk;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Doppler-based channel charting toolkit"};
    app.require_subcommand(1);
    std::optional<std::size_t> threads;
    app.add_option("--threads", threads, "worker threads (default: CHART_THREADS, else all cores)");

    std::string scenario_file, output;
    std::vector<std::string> sim_assignments;
    std::optional<std::uint64_t> seed;
    auto* sim = app.add_subcommand("simulate", "simulate a synthetic dataset");
    sim->add_option("--scenario", scenario_file, "scenario key-value file (default scenario otherwise)");
    sim->add_option("--set", sim_assignments, "override, key=value (repeatable)");
    sim->add_option("--seed", seed, "random seed");
    sim->add_option("-o,--output", output, "DPCC output file")->required();

    CommonArgs train_args;
    std::string loss = "doppler", model_path, report_path;
    auto* train = app.add_subcommand("train", "train a forward charting function");
    add_common(train, train_args);
    train->add_option("--loss", loss, "training objective")->check(CLI::IsMember({"doppler", "cira", "fused"}));
    train->add_option("--seed", seed, "training seed");
    train->add_option("--model", model_path, "model output file")->required();
    train->add_option("--report", report_path, "training report output file");

    CommonArgs eval_args;
    std::string transform = "none", ecdf_path, eval_model, eval_report;
    std::optional<std::size_t> neighborhood;
    bool oracle = false;
    auto* evaluate = app.add_subcommand("evaluate", "evaluate a model against ground truth");
    add_common(evaluate, eval_args);
    evaluate->add_option("--model", eval_model, "model file");
    evaluate->add_option("--transform", transform, "alignment before scoring")
        ->check(CLI::IsMember({"none", "affine"}));
    evaluate->add_option("--neighbors", neighborhood, "neighborhood size for CT/TW (default 5% of L)");
    evaluate->add_option("--report", eval_report, "report output file")->required();
    evaluate->add_option("--ecdf", ecdf_path, "error eCDF output file");
    // Test hook: score the ground truth itself.
    evaluate->add_flag("--oracle-estimates", oracle)->group("");

    CommonArgs chart_args;
    std::string chart_model, chart_csv, chart_svg, chart_transform = "none";
    auto* chart = app.add_subcommand("chart", "export chart coordinates colored by ground truth");
    add_common(chart, chart_args);
    chart->add_option("--model", chart_model, "model file")->required();
    chart->add_option("--transform", chart_transform, "alignment before export")
        ->check(CLI::IsMember({"none", "affine"}));
    chart->add_option("-o,--output", chart_csv, "CSV output file")->required();
    chart->add_option("--svg", chart_svg, "SVG scatter output file");

    CommonArgs phase_args;
    std::string phase_output;
    auto* phase = app.add_subcommand("phase-dump", "export tracked phases and cumulative uncertainties");
    add_common(phase, phase_args);
    phase->add_option("-o,--output", phase_output, "CSV output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (threads) {
            if (*threads == 0) throw PreconditionError("--threads must be positive");
            set_thread_count(*threads);
        }
        if (*sim) return cmd_simulate(scenario_file, sim_assignments, seed, output);
        if (*train) return cmd_train(train_args, loss, seed, model_path, report_path);
        if (*evaluate) {
            if (!oracle && eval_model.empty()) throw PreconditionError("--model is required");
            return cmd_evaluate(eval_args, eval_model, transform, neighborhood, eval_report, ecdf_path, oracle);
        }
        if (*chart) return cmd_chart(chart_args, chart_model, chart_transform, chart_csv, chart_svg);
        if (*phase) return cmd_phase_dump(phase_args, phase_output);
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kExitNumeric;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::bad_alloc&) {
        std::fprintf(stderr, "error: out of memory\n");
        return 1;
    }
    return kExitUsage;
}

}  // namespace dopcc::cli
