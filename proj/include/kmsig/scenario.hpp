#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kmsig/attack.hpp"
#include "kmsig/detector.hpp"
#include "kmsig/gridsim.hpp"
#include "kmsig/network.hpp"

namespace kmsig::scenario {

// Everything one end-to-end run needs: the grid, its load events, an optional
// measurement attack, and the analysis window settings.
struct ScenarioConfig {
    gridsim::NetworkModel network;
    std::vector<gridsim::GridEvent> events;
    std::optional<attack::AttackSpec> attack;
    bool sigma_auto = false; // resolve sigma_c as 5x the pre-attack spread
    detect::WindowConfig window;
    double duration = 45.0;
    double sample_period = 0.05;
    Channel channel = Channel::voltage_angle;
    std::map<Channel, double> noise_std;
    // Feed tampered generator frequency measurements back into the AGC when
    // the attack targets a frequency channel on generator buses.
    bool closed_loop = true;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    std::string source_digest; // hex hash of the originating config text

    void validate() const;
};

ScenarioConfig parse_scenario(const nlohmann::json& config, const std::string& base_dir);
ScenarioConfig load_scenario(const std::string& path);

struct ScenarioResult {
    std::map<Channel, TimeSeriesFrame> clean;
    TimeSeriesFrame attacked; // analyzed channel after injection (clean copy if none)
    std::vector<bool> ground_truth;
    std::optional<attack::AttackSpec> resolved_attack; // sigma_c filled in
    detect::DeltaScoreSeries scores;
    std::vector<std::string> written; // paths under output_dir, manifest last
};

// Simulate, inject, detect; with write_outputs also persist every artifact
// (frames, ground truth, scores, summary, manifest) under output_dir.
ScenarioResult run_scenario(const ScenarioConfig& config, bool write_outputs = true);

// The simulator options the scenario implies. A closed-loop frequency attack
// tampers with the controller's measurements here, so a plain simulation of
// the config reproduces the frames run_scenario archives.
gridsim::SimulationOptions simulation_options(const ScenarioConfig& config);

// The config's attack with "auto" sigma_c replaced by 5x the pooled pre-onset
// standard deviation of the target rows in `carrier`.
attack::AttackSpec resolve_attack(const ScenarioConfig& config,
                                  const TimeSeriesFrame& carrier);

nlohmann::json summarize(const detect::WindowConfig& window, Channel channel,
                         const detect::DeltaScoreSeries& scores);

// Writes `manifest.json` under dir covering `files` (content-hashed) and
// returns its path.
std::string write_manifest(const std::string& dir, std::uint64_t seed,
                           const std::string& config_digest,
                           const std::vector<std::string>& files);

} // namespace kmsig::scenario
