#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>
#include <vector>

namespace kmsig {

enum class Channel {
    voltage_angle,
    voltage_magnitude,
    frequency,
    frequency_deviation,
};

inline constexpr std::array<Channel, 4> all_channels = {
    Channel::voltage_angle,
    Channel::voltage_magnitude,
    Channel::frequency,
    Channel::frequency_deviation,
};

std::string channel_name(Channel c);
std::optional<Channel> channel_from_name(const std::string& name);

// p sensors x m time steps of one measurement channel, uniformly sampled.
// The universal interchange type between simulator, injector, and detector.
struct TimeSeriesFrame {
    std::vector<std::string> sensor_ids;
    Channel channel = Channel::voltage_angle;
    std::vector<double> times;
    Eigen::MatrixXd values; // p x m
    double sample_period = 0.0;

    int sensor_count() const { return static_cast<int>(sensor_ids.size()); }
    int sample_count() const { return static_cast<int>(times.size()); }

    // Row index of a sensor id, or -1.
    int row_of(const std::string& id) const;

    // Throws ConfigError on shape mismatch or non-uniform timestamps.
    void validate() const;
};

} // namespace kmsig
