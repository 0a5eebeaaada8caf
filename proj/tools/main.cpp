#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kmsig/attack.hpp"
#include "kmsig/csv.hpp"
#include "kmsig/detector.hpp"
#include "kmsig/errors.hpp"
#include "kmsig/gridsim.hpp"
#include "kmsig/scenario.hpp"
#include "kmsig/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Overrides {
    std::optional<std::string> backend, divergence, channel, out;
    std::optional<double> tau;
    std::optional<int> learning_len, prediction_len, stride;
    std::optional<std::uint64_t> seed;
};

void add_window_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--backend", o.backend, "Koopman backend")
        ->check(CLI::IsMember({"dmd", "arnoldi", "hankel"}));
    cmd->add_option("--divergence", o.divergence, "Distribution distance")
        ->check(CLI::IsMember({"kl", "js"}));
    cmd->add_option("--tau", o.tau, "Score decay rate");
    cmd->add_option("--learning-len", o.learning_len, "Fit window length, samples");
    cmd->add_option("--prediction-len", o.prediction_len, "Forecast window length, samples");
    cmd->add_option("--stride", o.stride, "Window step, samples");
}

void apply(const Overrides& o, kmsig::scenario::ScenarioConfig& config) {
    if (o.backend) config.window.backend = *kmsig::koopman::backend_from_name(*o.backend);
    if (o.divergence) config.window.divergence = *kmsig::detect::divergence_from_name(*o.divergence);
    if (o.tau) config.window.tau = *o.tau;
    if (o.learning_len) config.window.learning_len = *o.learning_len;
    if (o.prediction_len) config.window.prediction_len = *o.prediction_len;
    if (o.stride) config.window.stride = *o.stride;
    if (o.seed) config.seed = *o.seed;
    if (o.out) config.output_dir = *o.out;
    if (o.channel) {
        const auto channel = kmsig::channel_from_name(*o.channel);
        if (!channel) throw kmsig::ConfigError("unknown channel " + *o.channel);
        config.channel = *channel;
    }
    config.validate();
}

int cmd_simulate(const std::string& config_path, const Overrides& o) {
    auto config = kmsig::scenario::load_scenario(config_path);
    apply(o, config);
    const auto frames = kmsig::gridsim::simulate(config.network, config.events,
                                                 kmsig::scenario::simulation_options(config));
    fs::create_directories(config.output_dir);
    std::vector<std::string> written;
    for (kmsig::Channel channel : kmsig::all_channels) {
        const auto path =
            (fs::path(config.output_dir) / ("clean_" + kmsig::channel_name(channel) + ".csv"))
                .string();
        kmsig::io::write_frame_csv(frames.at(channel), path);
        written.push_back(path);
    }
    kmsig::scenario::write_manifest(config.output_dir, config.seed, config.source_digest,
                                    written);
    std::cout << "wrote " << written.size() << " clean frames to " << config.output_dir
              << "\n";
    return 0;
}

int cmd_inject(const std::string& config_path, const std::string& frame_path,
               const Overrides& o) {
    auto config = kmsig::scenario::load_scenario(config_path);
    apply(o, config);
    if (!config.attack) throw kmsig::ConfigError("scenario has no attack to inject");
    const auto frame = kmsig::io::read_frame_csv(frame_path, config.attack->channel,
                                                 config.sample_period);
    const auto spec = kmsig::scenario::resolve_attack(config, frame);
    const auto attacked = kmsig::attack::inject(frame, spec);
    fs::create_directories(config.output_dir);
    std::vector<std::string> written;
    const auto csv_path =
        (fs::path(config.output_dir) /
         ("attacked_" + kmsig::channel_name(spec.channel) + ".csv"))
            .string();
    kmsig::io::write_frame_csv(attacked.frame, csv_path);
    written.push_back(csv_path);
    json truth{{"channel", kmsig::channel_name(spec.channel)},
               {"sensor_ids", attacked.frame.sensor_ids},
               {"attacked", attacked.ground_truth},
               {"type", kmsig::attack::attack_type_name(spec.attack_type)},
               {"targets", spec.targets},
               {"t1", spec.t1},
               {"t2", spec.t2}};
    const auto truth_path = (fs::path(config.output_dir) / "ground_truth.json").string();
    std::ofstream(truth_path) << truth.dump(2) << "\n";
    written.push_back(truth_path);
    kmsig::scenario::write_manifest(config.output_dir, config.seed, config.source_digest,
                                    written);
    std::cout << "wrote attacked frame to " << csv_path << "\n";
    return 0;
}

int cmd_detect(const std::string& frame_path, double sample_period,
               const std::string& channel_flag, int delay, const std::string& out_dir,
               const Overrides& o) {
    const auto channel = kmsig::channel_from_name(channel_flag);
    if (!channel) throw kmsig::ConfigError("unknown channel " + channel_flag);
    kmsig::detect::WindowConfig window;
    if (o.backend) window.backend = *kmsig::koopman::backend_from_name(*o.backend);
    if (o.divergence) window.divergence = *kmsig::detect::divergence_from_name(*o.divergence);
    if (o.tau) window.tau = *o.tau;
    if (o.learning_len) window.learning_len = *o.learning_len;
    if (o.prediction_len) window.prediction_len = *o.prediction_len;
    if (o.stride) window.stride = *o.stride;
    if (delay > 0) window.fit.delay = delay;
    window.validate();
    const auto frame = kmsig::io::read_frame_csv(frame_path, *channel, sample_period);
    const auto scores = kmsig::detect::run_stream(frame, window);
    fs::create_directories(out_dir);
    std::vector<std::string> written;
    const auto scores_path = (fs::path(out_dir) / "scores.csv").string();
    kmsig::io::write_scores_csv(scores, scores_path);
    written.push_back(scores_path);
    const auto summary_path = (fs::path(out_dir) / "summary.json").string();
    std::ofstream(summary_path)
        << kmsig::scenario::summarize(window, *channel, scores).dump(2) << "\n";
    written.push_back(summary_path);
    kmsig::scenario::write_manifest(out_dir, 0, "", written);
    std::cout << scores.window_count() << " windows scored, outputs in " << out_dir << "\n";
    return 0;
}

int cmd_run(const std::string& config_path, const Overrides& o) {
    auto config = kmsig::scenario::load_scenario(config_path);
    apply(o, config);
    const auto result = kmsig::scenario::run_scenario(config, true);
    std::map<std::string, int> hits;
    int usable = 0;
    for (int w = 0; w < result.scores.window_count(); ++w) {
        const int at = result.scores.argmin(w);
        if (at < 0) continue;
        ++usable;
        ++hits[result.scores.sensor_ids[at]];
    }
    std::string leader;
    int leader_hits = 0;
    for (const auto& [id, count] : hits)
        if (count > leader_hits) {
            leader = id;
            leader_hits = count;
        }
    std::cout << result.scores.window_count() << " windows (" << usable
              << " scored), outputs in " << config.output_dir << "\n";
    if (!leader.empty())
        std::cout << "most frequent outlier: " << leader << " (" << leader_hits << "/"
                  << usable << " windows)\n";
    return 0;
}

int cmd_report(const std::string& scores_path, const std::string& json_out) {
    const auto scores = kmsig::io::read_scores_csv(scores_path);
    std::map<std::string, int> hits;
    std::printf("%12s  %-12s  %12s  %12s\n", "window_time", "argmin", "min_score", "margin");
    for (int w = 0; w < scores.window_count(); ++w) {
        const int at = scores.argmin(w);
        if (at < 0) {
            std::printf("%12.6g  %-12s  %12s  %12s\n", scores.window_times[w], "(failed)",
                        "-", "-");
            continue;
        }
        ++hits[scores.sensor_ids[at]];
        std::printf("%12.6g  %-12s  %12.6g  %12.6g\n", scores.window_times[w],
                    scores.sensor_ids[at].c_str(), scores.scores(w, at), scores.margin(w));
    }
    std::printf("\nargmin counts:\n");
    for (const auto& [id, count] : hits) std::printf("  %-12s %d\n", id.c_str(), count);
    if (!json_out.empty()) {
        json out{{"window_count", scores.window_count()}, {"argmin_counts", hits},
                 {"windows", json::array()}};
        for (int w = 0; w < scores.window_count(); ++w) {
            const int at = scores.argmin(w);
            out["windows"].push_back(
                {{"time", scores.window_times[w]},
                 {"argmin", at < 0 ? json(nullptr) : json(scores.sensor_ids[at])},
                 {"margin", scores.margin(w)}});
        }
        std::ofstream(json_out) << out.dump(2) << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Koopman-mode attack-signature pipeline for grid sensor streams"};
    app.set_version_flag("--version", kmsig::k_version);
    app.require_subcommand(1);

    std::string config_path, frame_path, scores_path, out_dir = "out";
    std::string channel_flag = "voltage_angle", json_out;
    double sample_period = 0.0;
    int delay = 0;
    Overrides o;

    auto* simulate = app.add_subcommand("simulate", "Write clean channel frames for a scenario");
    simulate->add_option("--config", config_path, "Scenario JSON")->required();
    simulate->add_option("--seed", o.seed, "Override the scenario seed");
    simulate->add_option("--out", o.out, "Override the output directory");

    auto* inject = app.add_subcommand("inject", "Apply the configured attack to a frame CSV");
    inject->add_option("--config", config_path, "Scenario JSON")->required();
    inject->add_option("--frame", frame_path, "Clean frame CSV")->required();
    inject->add_option("--out", o.out, "Override the output directory");

    auto* detect = app.add_subcommand("detect", "Score a frame CSV with the moving-window pipeline");
    detect->add_option("--frame", frame_path, "Frame CSV")->required();
    detect->add_option("--sample-period", sample_period, "Seconds per sample (0 = infer)");
    detect->add_option("--channel", channel_flag, "Channel label for the frame");
    detect->add_option("--delay", delay, "Hankel delay depth");
    detect->add_option("--out", out_dir, "Output directory");
    add_window_flags(detect, o);

    auto* run = app.add_subcommand("run", "Simulate, inject, detect, and write all artifacts");
    run->add_option("--config", config_path, "Scenario JSON")->required();
    run->add_option("--channel", o.channel, "Override the analyzed channel");
    run->add_option("--seed", o.seed, "Override the scenario seed");
    run->add_option("--out", o.out, "Override the output directory");
    add_window_flags(run, o);

    auto* report = app.add_subcommand("report", "Summarize per-window argmin and margins");
    report->add_option("--scores", scores_path, "scores.csv from detect/run")->required();
    report->add_option("--json", json_out, "Also write the summary as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (simulate->parsed()) return cmd_simulate(config_path, o);
        if (inject->parsed()) return cmd_inject(config_path, frame_path, o);
        if (detect->parsed())
            return cmd_detect(frame_path, sample_period, channel_flag, delay, out_dir, o);
        if (run->parsed()) return cmd_run(config_path, o);
        if (report->parsed()) return cmd_report(scores_path, json_out);
    } catch (const kmsig::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
