#include "kmsig/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kmsig/csv.hpp"
#include "kmsig/errors.hpp"
#include "kmsig/version.hpp"

namespace kmsig::scenario {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

[[noreturn]] void fail(const std::string& message) { throw ConfigError("scenario: " + message); }

double number_or(const json& obj, const char* name, double fallback) {
    if (!obj.contains(name)) return fallback;
    if (!obj[name].is_number()) fail(std::string("field '") + name + "' must be a number");
    return obj[name].get<double>();
}

int int_or(const json& obj, const char* name, int fallback) {
    if (!obj.contains(name)) return fallback;
    if (!obj[name].is_number_integer()) fail(std::string("field '") + name + "' must be an integer");
    return obj[name].get<int>();
}

bool bool_or(const json& obj, const char* name, bool fallback) {
    if (!obj.contains(name)) return fallback;
    if (!obj[name].is_boolean()) fail(std::string("field '") + name + "' must be a boolean");
    return obj[name].get<bool>();
}

std::string string_field(const json& obj, const char* name) {
    if (!obj.contains(name) || !obj[name].is_string())
        fail(std::string("field '") + name + "' must be a string");
    return obj[name].get<std::string>();
}

Channel channel_field(const json& obj, const char* name, Channel fallback) {
    if (!obj.contains(name)) return fallback;
    const auto channel = channel_from_name(string_field(obj, name));
    if (!channel) fail(std::string("field '") + name + "' names an unknown channel");
    return *channel;
}

detect::WindowConfig parse_window(const json& obj) {
    detect::WindowConfig window;
    if (!obj.is_object()) fail("field 'window' must be an object");
    window.learning_len = int_or(obj, "learning_len", window.learning_len);
    window.prediction_len = int_or(obj, "prediction_len", window.prediction_len);
    window.stride = int_or(obj, "stride", window.stride);
    window.tau = number_or(obj, "tau", window.tau);
    window.epsilon = number_or(obj, "epsilon", window.epsilon);
    window.stacked = bool_or(obj, "stacked", window.stacked);
    window.fit.rank_energy = number_or(obj, "rank_energy", window.fit.rank_energy);
    window.fit.max_rank = int_or(obj, "max_rank", window.fit.max_rank);
    window.fit.delay = int_or(obj, "delay", window.fit.delay);
    window.fit.max_magnitude = number_or(obj, "max_magnitude", window.fit.max_magnitude);
    if (obj.contains("backend")) {
        const auto backend = koopman::backend_from_name(string_field(obj, "backend"));
        if (!backend) fail("field 'backend' names an unknown backend");
        window.backend = *backend;
    }
    if (obj.contains("divergence")) {
        const auto kind = detect::divergence_from_name(string_field(obj, "divergence"));
        if (!kind) fail("field 'divergence' names an unknown divergence");
        window.divergence = *kind;
    }
    return window;
}

attack::AttackSpec parse_attack(const json& obj, const gridsim::NetworkModel& net,
                                Channel scenario_channel, bool& sigma_auto) {
    if (!obj.is_object()) fail("field 'attack' must be an object");
    attack::AttackSpec spec;
    const auto type = attack::attack_type_from_name(string_field(obj, "type"));
    if (!type) fail("field 'attack.type' names an unknown attack type");
    spec.attack_type = *type;
    if (!obj.contains("targets") || !obj["targets"].is_array() || obj["targets"].empty())
        fail("field 'attack.targets' must be a non-empty array of bus names");
    for (const json& target : obj["targets"]) {
        if (!target.is_string()) fail("attack targets must be bus names");
        const std::string name = target.get<std::string>();
        if (net.bus_index(name) < 0) fail("attack target '" + name + "' is not a bus");
        spec.targets.push_back(name);
    }
    spec.channel = channel_field(obj, "channel", scenario_channel);
    spec.t1 = number_or(obj, "t1", -1.0);
    spec.t2 = number_or(obj, "t2", -1.0);
    spec.c = number_or(obj, "c", spec.c);
    spec.mu_c = number_or(obj, "mu_c", spec.mu_c);
    spec.seed = static_cast<std::uint64_t>(number_or(obj, "seed", 0.0));
    sigma_auto = false;
    if (obj.contains("sigma_c")) {
        if (obj["sigma_c"] == json("auto"))
            sigma_auto = true;
        else if (obj["sigma_c"].is_number())
            spec.sigma_c = obj["sigma_c"].get<double>();
        else
            fail("field 'attack.sigma_c' must be a number or \"auto\"");
    }
    spec.validate();
    return spec;
}

std::string hex16(std::uint64_t value) {
    char buffer[20];
    std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(value));
    return buffer;
}

// Applies the attack's (alpha, beta) transform to the per-unit frequency
// deviations the AGC reads. The DoS freeze captures each target's value at the
// first controller evaluation inside the attack window.
gridsim::AgcFrequencyTamper make_agc_tamper(const attack::AttackSpec& spec,
                                            const gridsim::NetworkModel& net) {
    std::vector<int> rows;
    for (const std::string& target : spec.targets) {
        const int index = net.bus_index(target);
        if (index >= 0 && index < net.n_gen) rows.push_back(index);
    }
    if (rows.empty()) return {};
    struct State {
        attack::AttackSpec spec;
        double f0;
        std::vector<int> rows;
        GaussianSampler rng;
        Eigen::VectorXd frozen;
        bool captured = false;
        State(const attack::AttackSpec& s, double f, std::vector<int> r)
            : spec(s), f0(f), rows(std::move(r)), rng(s.seed) {}
    };
    auto state = std::make_shared<State>(spec, net.f0, rows);
    return [state](double t, const Eigen::VectorXd& omega) {
        Eigen::VectorXd measured = omega;
        const attack::AttackSpec& spec = state->spec;
        if (t < spec.t1 || t > spec.t2) return measured;
        if (spec.attack_type == attack::AttackType::dos) {
            if (!state->captured) {
                state->frozen = omega;
                state->captured = true;
            }
            for (int row : state->rows) measured(row) = state->frozen(row);
            return measured;
        }
        for (int row : state->rows) {
            // The sensor reports Hz on the frequency channel, per-unit on the
            // deviation channel; transform in the reported unit.
            const double scale = spec.channel == Channel::frequency ? state->f0 : 1.0;
            const double offset = spec.channel == Channel::frequency ? state->f0 : 0.0;
            const double reading = offset + scale * omega(row);
            const double onset = reading; // step/ramp/rtw use the onset value
            const auto [alpha, beta] =
                attack::attack_variables(spec, t, onset, reading, state->rng);
            const double tampered = (1.0 + alpha) * reading + beta;
            measured(row) = (tampered - offset) / scale;
        }
        return measured;
    };
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw RuntimeError("cannot write " + path);
    out << text;
    if (!out) throw RuntimeError("write failed for " + path);
}

} // namespace

json summarize(const detect::WindowConfig& window, Channel channel,
               const detect::DeltaScoreSeries& scores) {
    json windows = json::array();
    for (int w = 0; w < scores.window_count(); ++w) {
        const int at = scores.argmin(w);
        windows.push_back({{"time", scores.window_times[w]},
                           {"argmin", at < 0 ? json(nullptr) : json(scores.sensor_ids[at])},
                           {"min_score", at < 0 ? json(nullptr) : json(scores.scores(w, at))},
                           {"margin", scores.margin(w)},
                           {"failed", scores.failed(w)}});
    }
    return json{{"channel", channel_name(channel)},
                {"backend", koopman::backend_name(window.backend)},
                {"divergence", detect::divergence_name(window.divergence)},
                {"tau", window.tau},
                {"learning_len", window.learning_len},
                {"prediction_len", window.prediction_len},
                {"stride", window.stride},
                {"window_count", scores.window_count()},
                {"windows", windows}};
}

std::string write_manifest(const std::string& dir, std::uint64_t seed,
                           const std::string& config_digest,
                           const std::vector<std::string>& files) {
    json manifest{{"seed", seed},
                  {"config_hash",
                   config_digest.empty() ? "unspecified" : "fnv1a64:" + config_digest},
                  {"versions",
                   {{"kmsig", k_version},
                    {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                  std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION)}}},
                  {"files", json::array()}};
    for (const std::string& path : files)
        manifest["files"].push_back({{"name", fs::path(path).filename().string()},
                                     {"fnv1a64", hex16(io::fnv1a64_file(path))}});
    const std::string path = (fs::path(dir) / "manifest.json").string();
    write_text(path, manifest.dump(2) + "\n");
    return path;
}

attack::AttackSpec resolve_attack(const ScenarioConfig& config,
                                  const TimeSeriesFrame& carrier) {
    if (!config.attack) throw ConfigError("scenario: no attack is configured");
    attack::AttackSpec spec = *config.attack;
    if (!config.sigma_auto) return spec;
    // 5x the pooled pre-onset standard deviation of the target rows.
    double accum = 0.0;
    int rows = 0;
    for (const std::string& target : spec.targets) {
        const int row = carrier.row_of(target);
        if (row < 0) continue;
        double sum = 0.0, sq = 0.0;
        int count = 0;
        for (int k = 0; k < carrier.sample_count(); ++k) {
            if (carrier.times[k] >= spec.t1) break;
            sum += carrier.values(row, k);
            sq += carrier.values(row, k) * carrier.values(row, k);
            ++count;
        }
        if (count > 0) {
            accum += sq / count - (sum / count) * (sum / count);
            rows += 1;
        }
    }
    spec.sigma_c = rows > 0 ? 5.0 * std::sqrt(std::max(0.0, accum / rows)) : 0.0;
    return spec;
}

void ScenarioConfig::validate() const {
    network.validate();
    for (const gridsim::GridEvent& event : events) event.validate(network);
    window.validate();
    if (!(duration > 0.0) || !std::isfinite(duration)) fail("duration must be positive");
    if (!(sample_period > 0.0) || !std::isfinite(sample_period))
        fail("sample_period must be positive");
    const int samples =
        static_cast<int>(std::ceil(duration / sample_period - 1e-9));
    if (window.learning_len + window.prediction_len > samples) {
        std::ostringstream oss;
        oss << "learning_len + prediction_len ("
            << window.learning_len + window.prediction_len
            << ") exceed the available samples (" << samples << ")";
        fail(oss.str());
    }
    for (const auto& [channel, stddev] : noise_std)
        if (!(stddev >= 0.0) || !std::isfinite(stddev))
            fail("noise_std for " + channel_name(channel) + " must be nonnegative");
    if (attack) {
        attack->validate();
        if (!(attack->t1 < duration)) fail("attack t1 must precede the end of the run");
        if (!window.stacked && attack->channel != channel)
            fail("attack channel " + channel_name(attack->channel) +
                 " is not the analyzed channel " + channel_name(channel));
    }
}

ScenarioConfig parse_scenario(const json& config, const std::string& base_dir) {
    if (!config.is_object()) fail("config must be a JSON object");
    ScenarioConfig out;
    out.source_digest = hex16(io::fnv1a64(config.dump()));

    if (!config.contains("network")) fail("missing field 'network'");
    const json& network = config["network"];
    if (network.is_string()) {
        fs::path path = network.get<std::string>();
        if (path.is_relative()) path = fs::path(base_dir) / path;
        std::ifstream in(path);
        if (!in) fail("network file not found: " + path.string());
        json parsed;
        try {
            parsed = json::parse(in);
        } catch (const json::exception& e) {
            fail("network file " + path.string() + " is not valid JSON: " + e.what());
        }
        out.network = gridsim::build_network(parsed);
    } else if (network.is_object()) {
        out.network = gridsim::build_network(network);
    } else {
        fail("field 'network' must be a file path or an inline object");
    }

    out.duration = number_or(config, "duration", out.duration);
    out.sample_period = number_or(config, "sample_period", out.sample_period);
    out.seed = static_cast<std::uint64_t>(number_or(config, "seed", 0.0));
    out.channel = channel_field(config, "channel", out.channel);
    out.closed_loop = bool_or(config, "closed_loop", out.closed_loop);
    if (config.contains("output_dir")) out.output_dir = string_field(config, "output_dir");

    if (config.contains("noise_std")) {
        const json& noise = config["noise_std"];
        if (!noise.is_object()) fail("field 'noise_std' must map channel names to numbers");
        for (const auto& [name, value] : noise.items()) {
            const auto channel = channel_from_name(name);
            if (!channel) fail("noise_std names an unknown channel '" + name + "'");
            if (!value.is_number()) fail("noise_std values must be numbers");
            out.noise_std[*channel] = value.get<double>();
        }
    }

    if (config.contains("events")) {
        if (!config["events"].is_array()) fail("field 'events' must be an array");
        for (const json& event : config["events"])
            out.events.push_back(gridsim::parse_event(event, out.network));
    }
    if (config.contains("attack") && !config["attack"].is_null())
        out.attack = parse_attack(config["attack"], out.network, out.channel, out.sigma_auto);
    if (config.contains("window")) out.window = parse_window(config["window"]);

    // Semantic checks run in validate(), after any command-line overrides.
    return out;
}

ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("config file not found: " + path);
    json parsed;
    try {
        parsed = json::parse(in);
    } catch (const json::exception& e) {
        fail("config file " + path + " is not valid JSON: " + e.what());
    }
    ScenarioConfig config = parse_scenario(parsed, fs::path(path).parent_path().string());
    std::ifstream raw(path, std::ios::binary);
    std::ostringstream bytes;
    bytes << raw.rdbuf();
    config.source_digest = hex16(io::fnv1a64(bytes.str()));
    return config;
}

gridsim::SimulationOptions simulation_options(const ScenarioConfig& config) {
    gridsim::SimulationOptions sim;
    sim.duration = config.duration;
    sim.sample_period = config.sample_period;
    sim.noise_std = config.noise_std;
    sim.seed = config.seed;
    if (config.closed_loop && config.attack &&
        (config.attack->channel == Channel::frequency ||
         config.attack->channel == Channel::frequency_deviation))
        sim.agc_tamper = make_agc_tamper(*config.attack, config.network);
    return sim;
}

ScenarioResult run_scenario(const ScenarioConfig& config, bool write_outputs) {
    config.validate();

    ScenarioResult result;
    result.clean = gridsim::simulate(config.network, config.events, simulation_options(config));

    const TimeSeriesFrame& analyzed = result.clean.at(config.channel);
    TimeSeriesFrame carrier_out; // attack-channel frame after injection
    if (config.attack) {
        const TimeSeriesFrame& carrier = result.clean.at(config.attack->channel);
        const attack::AttackSpec spec = resolve_attack(config, carrier);
        attack::AttackedFrame attacked = attack::inject(carrier, spec);
        result.resolved_attack = attacked.spec;
        result.ground_truth = attacked.ground_truth;
        carrier_out = attacked.frame;
        std::map<Channel, TimeSeriesFrame> frames = result.clean;
        frames[spec.channel] = attacked.frame;
        result.attacked = frames.at(config.channel);
        result.scores = detect::run_stream(frames, config.window, config.channel);
    } else {
        result.attacked = analyzed;
        carrier_out = analyzed;
        result.ground_truth.assign(analyzed.sensor_ids.size(), false);
        result.scores = detect::run_stream(result.clean, config.window, config.channel);
    }

    if (write_outputs) {
        fs::create_directories(config.output_dir);
        const auto emit = [&](const std::string& name) {
            result.written.push_back((fs::path(config.output_dir) / name).string());
            return result.written.back();
        };
        for (Channel channel : all_channels)
            io::write_frame_csv(result.clean.at(channel),
                                emit("clean_" + channel_name(channel) + ".csv"));
        const Channel attacked_channel =
            config.attack ? config.attack->channel : config.channel;
        io::write_frame_csv(carrier_out,
                            emit("attacked_" + channel_name(attacked_channel) + ".csv"));

        json truth{{"channel", channel_name(attacked_channel)},
                   {"sensor_ids", carrier_out.sensor_ids},
                   {"attacked", result.ground_truth}};
        if (result.resolved_attack) {
            truth["type"] = attack::attack_type_name(result.resolved_attack->attack_type);
            truth["targets"] = result.resolved_attack->targets;
            truth["t1"] = result.resolved_attack->t1;
            truth["t2"] = result.resolved_attack->t2;
        }
        write_text(emit("ground_truth.json"), truth.dump(2) + "\n");

        io::write_scores_csv(result.scores, emit("scores.csv"));
        write_text(emit("summary.json"),
                   summarize(config.window, config.channel, result.scores).dump(2) + "\n");

        result.written.push_back(write_manifest(config.output_dir, config.seed,
                                                config.source_digest, result.written));
    }
    return result;
}

} // namespace kmsig::scenario
