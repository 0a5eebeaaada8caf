#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace kmsig::gridsim {

// Multi-machine network: generator buses first (0..n_gen-1), then load buses.
// Susceptance entries are per-unit line susceptance magnitudes.
struct NetworkModel {
    int n_gen = 0;
    int n_load = 0;
    double f0 = 60.0;
    Eigen::MatrixXd susceptance;       // n x n, symmetric, zero diagonal
    Eigen::VectorXd inertia;           // n_gen, > 0
    Eigen::VectorXd damping;           // n_gen, >= 0
    double agc_gain = 0.0;             // integral gain on mean frequency deviation
    Eigen::VectorXd agc_participation; // n_gen, >= 0, sums to 1
    Eigen::VectorXd base_load;         // n_load, per-unit demand
    double voltage_droop = 0.0;        // magnitude sensitivity to local demand
    double freq_deviation_limit = 0.5; // per-unit divergence guard

    int bus_count() const { return n_gen + n_load; }
    // Buses are displayed 1-based: bus_1 .. bus_n, generators first.
    std::string bus_name(int index) const;
    int bus_index(const std::string& name) const; // -1 if not a bus of this model

    void validate() const; // throws ConfigError naming the violated field
};

// Piecewise-constant change of demand at one load bus over [start, end).
struct GridEvent {
    int bus = 0; // global bus index, must be a load bus
    double start_time = 0.0;
    double end_time = std::numeric_limits<double>::infinity();
    double delta_load = 0.0;

    void validate(const NetworkModel& net) const;
};

NetworkModel build_network(const nlohmann::json& config);
GridEvent parse_event(const nlohmann::json& config, const NetworkModel& net);

// The shipped 16-generator, 68-bus synthetic topology.
const NetworkModel& default_network();

} // namespace kmsig::gridsim
