#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "kmsig/errors.hpp"
#include "kmsig/gridsim.hpp"
#include "kmsig/network.hpp"
#include "support/ode_oracle.hpp"

using namespace kmsig::gridsim;
using kmsig::Channel;
using kmsig::ConfigError;
using kmsig::RuntimeError;
using nlohmann::json;

namespace {

// Two machines holding a single line, no loads.
json two_machine_config() {
    return json::parse(R"({
        "n_gen": 2, "n_load": 0, "f0": 60.0,
        "lines": [{"from": 1, "to": 2, "b": 5.0}],
        "generators": [{"inertia": 1.0, "damping": 0.5},
                       {"inertia": 1.0, "damping": 0.5}],
        "agc": {"gain": 0.0},
        "base_load": []
    })");
}

// Two machines plus one load bus; every reduced quantity below was derived by
// hand from the line set and is used to drive the reference integrator.
//   Laplacian rows: [13,-5,-8; -5,9,-4; -8,-4,12]
//   coupling between the generators: 23/3
//   load transfer onto generators:   [2/3, 1/3]
//   load-bus recovery:               theta_l = -d/12 + (2 theta_0 + theta_1)/3
json triangle_config() {
    return json::parse(R"({
        "n_gen": 2, "n_load": 1, "f0": 60.0,
        "lines": [{"from": 1, "to": 2, "b": 5.0},
                  {"from": 1, "to": 3, "b": 8.0},
                  {"from": 2, "to": 3, "b": 4.0}],
        "generators": [{"inertia": 1.0, "damping": 0.5},
                       {"inertia": 1.4, "damping": 0.6}],
        "agc": {"gain": 50.0, "participation": "by_inertia"},
        "base_load": [0.3],
        "voltage_droop": 0.04
    })");
}

constexpr double k_omega_base = 2.0 * std::numbers::pi * 60.0;

// Reference dynamics for the triangle model, written from the frozen literals
// above. State: [theta_0, theta_1, theta_dot_0, theta_dot_1, agc].
struct TriangleReference {
    double demand = 0.3;

    Eigen::VectorXd operator()(double, const Eigen::VectorXd& y) const {
        const double dispatch0 = 0.3 * (1.0 / 2.4);
        const double dispatch1 = 0.3 * (1.4 / 2.4);
        const double peff0 = dispatch0 - (2.0 / 3.0) * demand;
        const double peff1 = dispatch1 - (1.0 / 3.0) * demand;
        const double pe0 = (23.0 / 3.0) * std::sin(y(0) - y(1));
        Eigen::VectorXd deriv(5);
        deriv(0) = y(2);
        deriv(1) = y(3);
        deriv(2) = (peff0 + (1.0 / 2.4) * y(4) - pe0 - 0.5 * y(2)) / 1.0;
        deriv(3) = (peff1 + (1.4 / 2.4) * y(4) + pe0 - 0.6 * y(3)) / 1.4;
        deriv(4) = -50.0 * ((y(2) + y(3)) / 2.0) / k_omega_base;
        return deriv;
    }
};

// Integrates the reference across sample instants, honoring piecewise-constant
// demand switches, and reports the worst disagreement with the simulator.
struct ReferenceGap {
    double angle = 0.0;
    double deviation = 0.0;
};

ReferenceGap compare_to_reference(const std::map<Channel, kmsig::TimeSeriesFrame>& frames,
                                  const std::vector<GridEvent>& events) {
    const auto& angle = frames.at(Channel::voltage_angle);
    const auto& dev = frames.at(Channel::frequency_deviation);
    const auto demand_at = [&](double t) {
        double d = 0.3;
        for (const GridEvent& e : events)
            if (e.start_time <= t && t < e.end_time) d += e.delta_load;
        return d;
    };
    TriangleReference ref;
    ref.demand = demand_at(0.0);
    Eigen::VectorXd y(5);
    const double sd0 = ref.demand;
    y << 0.0, std::asin((0.3 * (1.0 / 2.4) - (2.0 / 3.0) * sd0) / (23.0 / 3.0)), 0.0, 0.0, 0.0;
    y(1) = -y(1); // theta_1 relative to reference bus 0
    ReferenceGap gap;
    const double T = angle.sample_period;
    for (int k = 0; k < angle.sample_count(); ++k) {
        if (k > 0) {
            double at = (k - 1) * T;
            const double b = k * T;
            std::set<double> cuts;
            for (const GridEvent& e : events) {
                if (e.start_time > at + 1e-9 && e.start_time < b - 1e-9)
                    cuts.insert(e.start_time);
                if (std::isfinite(e.end_time) && e.end_time > at + 1e-9 && e.end_time < b - 1e-9)
                    cuts.insert(e.end_time);
            }
            for (double cut : cuts) {
                ref.demand = demand_at((at + cut) / 2.0);
                y = oracle::integrate_to(ref, y, at, cut);
                at = cut;
            }
            ref.demand = demand_at((at + b) / 2.0);
            y = oracle::integrate_to(ref, y, at, b);
        }
        const double t = k * T;
        const double d_now = demand_at(t);
        const double theta_l = -d_now / 12.0 + (2.0 * y(0) + y(1)) / 3.0;
        const double dev_l = (2.0 * y(2) + y(3)) / (3.0 * k_omega_base);
        gap.angle = std::max(gap.angle, std::abs(angle.values(0, k) - y(0)));
        gap.angle = std::max(gap.angle, std::abs(angle.values(1, k) - y(1)));
        gap.angle = std::max(gap.angle, std::abs(angle.values(2, k) - theta_l));
        gap.deviation = std::max(gap.deviation, std::abs(dev.values(0, k) - y(2) / k_omega_base));
        gap.deviation = std::max(gap.deviation, std::abs(dev.values(1, k) - y(3) / k_omega_base));
        gap.deviation = std::max(gap.deviation, std::abs(dev.values(2, k) - dev_l));
    }
    return gap;
}

} // namespace

TEST_CASE("build_network parses the two-machine config") {
    const NetworkModel net = build_network(two_machine_config());
    CHECK(net.n_gen == 2);
    CHECK(net.n_load == 0);
    CHECK(net.susceptance(0, 1) == 5.0);
    CHECK(net.susceptance(1, 0) == 5.0);
    CHECK(net.inertia(0) == 1.0);
    CHECK(net.damping(1) == 0.5);
    CHECK(net.agc_participation.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(net.bus_name(0) == "bus_1");
    CHECK(net.bus_index("bus_2") == 1);
    CHECK(net.bus_index("bus_3") == -1);
}

TEST_CASE("build_network names the violated field") {
    auto expect_mentions = [](json config, const std::string& token) {
        try {
            build_network(config);
            FAIL_CHECK("expected rejection mentioning " << token);
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find(token) != std::string::npos);
        }
    };
    json bad = two_machine_config();
    bad.erase("lines");
    expect_mentions(bad, "lines");

    bad = two_machine_config();
    bad["n_gen"] = 0;
    expect_mentions(bad, "n_gen");

    bad = two_machine_config();
    bad["lines"][0]["to"] = 7;
    expect_mentions(bad, "lines[0]");

    bad = two_machine_config();
    bad["generators"][0]["inertia"] = -1.0;
    expect_mentions(bad, "inertia");

    bad = triangle_config();
    bad["agc"]["participation"] = {0.5, 0.4};
    expect_mentions(bad, "agc_participation");

    bad = triangle_config();
    bad["base_load"] = {0.3, 0.1};
    expect_mentions(bad, "base_load");

    // Second island: two extra buses tied only to each other.
    bad = triangle_config();
    bad["n_load"] = 3;
    bad["base_load"] = {0.3, 0.1, 0.1};
    bad["lines"].push_back({{"from", 4}, {"to", 5}, {"b", 2.0}});
    expect_mentions(bad, "disconnected");
}

TEST_CASE("events must hit load buses and be well ordered") {
    const NetworkModel net = build_network(triangle_config());
    GridEvent event;
    event.bus = 0;
    event.start_time = 1.0;
    event.delta_load = 0.05;
    CHECK_THROWS_AS(event.validate(net), ConfigError);
    event.bus = 2;
    CHECK_NOTHROW(event.validate(net));
    event.end_time = 0.5;
    CHECK_THROWS_AS(event.validate(net), ConfigError);

    const NetworkModel bare = build_network(two_machine_config());
    GridEvent no_load;
    no_load.bus = 1;
    no_load.start_time = 0.0;
    CHECK_THROWS_AS(no_load.validate(bare), ConfigError);

    const GridEvent parsed = parse_event(
        json{{"bus", "bus_3"}, {"start_time", 2.0}, {"delta_load", -0.1}}, net);
    CHECK(parsed.bus == 2);
    CHECK(std::isinf(parsed.end_time));
    CHECK_THROWS_AS(parse_event(json{{"bus", "bus_9"}, {"start_time", 0.0}, {"delta_load", 0.1}}, net),
                    ConfigError);
}

TEST_CASE("an unforced network holds its equilibrium") {
    const NetworkModel net = build_network(two_machine_config());
    SimulationOptions options;
    options.duration = 45.0;
    options.sample_period = 0.05;
    const auto frames = simulate(net, {}, options);
    const auto& dev = frames.at(Channel::frequency_deviation);
    REQUIRE(dev.sample_count() == 900);
    REQUIRE(dev.sensor_count() == 2);
    CHECK(dev.values.cwiseAbs().maxCoeff() <= 1e-9);
    const auto& angle = frames.at(Channel::voltage_angle);
    for (int k = 0; k < angle.sample_count(); ++k) {
        CHECK(angle.times[k] == k * 0.05);
        CHECK((angle.values.col(k) - angle.values.col(0)).cwiseAbs().maxCoeff() <= 1e-9);
    }
    CHECK((frames.at(Channel::voltage_magnitude).values.array() == 1.0).all());
    CHECK(frames.at(Channel::frequency).values.isApproxToConstant(60.0, 1e-9));
}

TEST_CASE("a load step matches the adaptive reference and AGC recovers") {
    const NetworkModel net = build_network(triangle_config());
    GridEvent step;
    step.bus = 2;
    step.start_time = 1.0;
    step.delta_load = 0.05;
    SimulationOptions options;
    options.duration = 60.0;
    options.sample_period = 0.05;
    const auto frames = simulate(net, {step}, options);
    const auto& dev = frames.at(Channel::frequency_deviation);
    REQUIRE(dev.sample_count() == 1200);

    const ReferenceGap gap = compare_to_reference(frames, {step});
    CHECK(gap.angle <= 1e-4);
    CHECK(gap.deviation <= 1e-4);

    double peak = 0.0;
    for (int k = 0; k < dev.sample_count(); ++k)
        peak = std::max(peak, dev.values.col(k).cwiseAbs().maxCoeff());
    const double final_dev = dev.values.col(dev.sample_count() - 1).cwiseAbs().maxCoeff();
    CHECK(peak > 1e-5);
    CHECK(final_dev < 1e-3);
    CHECK(final_dev < 0.05 * peak);

    // Demand-sensitive magnitude switches exactly at the event sample.
    const auto& mag = frames.at(Channel::voltage_magnitude);
    CHECK(mag.values(2, 19) == 1.0 - 0.04 * 0.3);
    CHECK(mag.values(2, 20) == 1.0 - 0.04 * 0.35);
    CHECK(mag.values(0, 40) == 1.0);
}

TEST_CASE("boundaries between samples split the integration correctly") {
    const NetworkModel net = build_network(triangle_config());
    GridEvent bump;
    bump.bus = 2;
    bump.start_time = 1.003;
    bump.end_time = 3.7017;
    bump.delta_load = 0.08;
    SimulationOptions options;
    options.duration = 6.0;
    options.sample_period = 0.05;
    const auto frames = simulate(net, {bump}, options);
    REQUIRE(frames.at(Channel::voltage_angle).sample_count() == 120);
    const ReferenceGap gap = compare_to_reference(frames, {bump});
    CHECK(gap.angle <= 1e-4);
    CHECK(gap.deviation <= 1e-4);
}

TEST_CASE("damping shrinks the oscillation envelope") {
    json config = triangle_config();
    config["agc"]["gain"] = 0.0;
    const NetworkModel net = build_network(config);
    SimulationOptions options;
    options.duration = 12.0;
    options.sample_period = 0.05;
    Eigen::VectorXd kick(2);
    kick << 2e-4, -2e-4;
    options.initial_omega = kick;
    const auto frames = simulate(net, {}, options);
    const auto& dev = frames.at(Channel::frequency_deviation);
    const int block = 40; // 2 s of samples, more than one swing period
    double previous = std::numeric_limits<double>::infinity();
    for (int start = 0; start + block <= dev.sample_count(); start += block) {
        const double envelope =
            dev.values.middleCols(start, block).cwiseAbs().maxCoeff();
        CHECK(envelope <= previous + 1e-15);
        previous = envelope;
    }
    CHECK(previous < 2e-4 * 0.2);
}

TEST_CASE("identical seeds reproduce noisy output bitwise") {
    const NetworkModel& net = default_network();
    SimulationOptions options;
    options.duration = 5.0;
    options.sample_period = 0.05;
    options.noise_std = {{Channel::voltage_angle, 2e-4},
                         {Channel::voltage_magnitude, 1e-4},
                         {Channel::frequency, 1e-4},
                         {Channel::frequency_deviation, 1e-6}};
    options.seed = 7;
    const auto first = simulate(net, {}, options);
    const auto second = simulate(net, {}, options);
    for (Channel channel : kmsig::all_channels) {
        CHECK((first.at(channel).values.array() == second.at(channel).values.array()).all());
    }
    options.seed = 8;
    const auto third = simulate(net, {}, options);
    CHECK((first.at(Channel::voltage_angle).values.array() !=
           third.at(Channel::voltage_angle).values.array())
              .any());

    // Channels without configured noise stay untouched by the noisy ones.
    SimulationOptions angle_only = options;
    angle_only.seed = 7;
    angle_only.noise_std = {{Channel::voltage_angle, 2e-4}};
    SimulationOptions quiet = options;
    quiet.seed = 7;
    quiet.noise_std.clear();
    const auto partial = simulate(net, {}, angle_only);
    const auto clean = simulate(net, {}, quiet);
    CHECK((partial.at(Channel::voltage_magnitude).values.array() ==
           clean.at(Channel::voltage_magnitude).values.array())
              .all());
    CHECK((partial.at(Channel::voltage_angle).values.array() !=
           clean.at(Channel::voltage_angle).values.array())
              .any());
}

TEST_CASE("the shipped default topology is self-consistent") {
    const NetworkModel& net = default_network();
    CHECK(net.n_gen == 16);
    CHECK(net.n_load == 52);
    CHECK(net.bus_count() == 68);
    CHECK_NOTHROW(net.validate());

    std::ifstream shipped(std::string(KMSIG_SOURCE_DIR) + "/configs/default_network.json");
    REQUIRE(shipped.good());
    const NetworkModel parsed = build_network(json::parse(shipped));
    CHECK(parsed.n_gen == net.n_gen);
    CHECK(parsed.n_load == net.n_load);
    CHECK(parsed.f0 == net.f0);
    CHECK((parsed.susceptance.array() == net.susceptance.array()).all());
    CHECK((parsed.inertia.array() == net.inertia.array()).all());
    CHECK((parsed.damping.array() == net.damping.array()).all());
    CHECK((parsed.agc_participation.array() == net.agc_participation.array()).all());
    CHECK((parsed.base_load.array() == net.base_load.array()).all());
    CHECK(parsed.agc_gain == net.agc_gain);
    CHECK(parsed.voltage_droop == net.voltage_droop);
    CHECK(parsed.freq_deviation_limit == net.freq_deviation_limit);
}

TEST_CASE("a tight deviation limit aborts with the offending time") {
    json config = triangle_config();
    config["freq_deviation_limit"] = 1e-9;
    const NetworkModel net = build_network(config);
    GridEvent step;
    step.bus = 2;
    step.start_time = 1.0;
    step.delta_load = 0.05;
    SimulationOptions options;
    options.duration = 10.0;
    options.sample_period = 0.05;
    try {
        simulate(net, {step}, options);
        FAIL_CHECK("expected divergence abort");
    } catch (const RuntimeError& e) {
        const std::string message = e.what();
        CHECK(message.find("diverged") != std::string::npos);
        CHECK(message.find("t = ") != std::string::npos);
    }
}

TEST_CASE("durations that are not sample multiples round up") {
    const NetworkModel net = build_network(two_machine_config());
    SimulationOptions options;
    options.duration = 45.02;
    options.sample_period = 0.05;
    CHECK(simulate(net, {}, options).at(Channel::frequency).sample_count() == 901);
    options.duration = 0.01;
    CHECK(simulate(net, {}, options).at(Channel::frequency).sample_count() == 1);
}

TEST_CASE("the AGC tamper hook feeds the controller") {
    const NetworkModel net = build_network(triangle_config());
    GridEvent step;
    step.bus = 2;
    step.start_time = 1.0;
    step.delta_load = 0.05;
    SimulationOptions options;
    options.duration = 20.0;
    options.sample_period = 0.05;
    const auto honest = simulate(net, {step}, options);

    // Freezing the measured deviations at zero blinds the integral action, so
    // the deviation settles at the droop value instead of returning to zero.
    options.agc_tamper = [](double, const Eigen::VectorXd& omega) {
        return Eigen::VectorXd::Zero(omega.size()).eval();
    };
    const auto blinded = simulate(net, {step}, options);
    const int last = honest.at(Channel::frequency_deviation).sample_count() - 1;
    const double honest_final =
        honest.at(Channel::frequency_deviation).values.col(last).cwiseAbs().maxCoeff();
    const double blinded_final =
        blinded.at(Channel::frequency_deviation).values.col(last).cwiseAbs().maxCoeff();
    CHECK(blinded_final > 5.0 * honest_final);
    CHECK(blinded_final > 1e-5);
}
