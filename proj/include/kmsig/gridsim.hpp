#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "kmsig/frame.hpp"
#include "kmsig/network.hpp"

namespace kmsig::gridsim {

// Replaces the per-unit frequency deviations the AGC integrator reads.
// Receives the true generator deviations; returns what the controller sees.
using AgcFrequencyTamper =
    std::function<Eigen::VectorXd(double time, const Eigen::VectorXd& omega)>;

struct SimulationOptions {
    double duration = 45.0;
    double sample_period = 0.05;
    std::map<Channel, double> noise_std; // absent channel means noise-free
    std::uint64_t seed = 0;
    // Per-unit deviations added to the equilibrium generator frequencies at t = 0.
    std::optional<Eigen::VectorXd> initial_omega;
    AgcFrequencyTamper agc_tamper; // empty means controller reads true values
};

// Swing dynamics on the Kron-reduced generator network, fixed-step RK4 at
// sample_period / 5, load buses reconstructed algebraically. Returns one frame
// per channel, sensors ordered bus_1 .. bus_n. Throws RuntimeError with the
// offending time if any |frequency deviation| exceeds the model's limit.
std::map<Channel, TimeSeriesFrame> simulate(const NetworkModel& net,
                                            const std::vector<GridEvent>& events,
                                            const SimulationOptions& options);

} // namespace kmsig::gridsim
