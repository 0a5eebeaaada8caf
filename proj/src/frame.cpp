#include "kmsig/frame.hpp"

#include <algorithm>
#include <cmath>

#include "kmsig/errors.hpp"

namespace kmsig {

std::string channel_name(Channel c) {
    switch (c) {
    case Channel::voltage_angle: return "voltage_angle";
    case Channel::voltage_magnitude: return "voltage_magnitude";
    case Channel::frequency: return "frequency";
    case Channel::frequency_deviation: return "frequency_deviation";
    }
    return "unknown";
}

std::optional<Channel> channel_from_name(const std::string& name) {
    for (Channel c : all_channels) {
        if (channel_name(c) == name) {
            return c;
        }
    }
    return std::nullopt;
}

int TimeSeriesFrame::row_of(const std::string& id) const {
    auto it = std::find(sensor_ids.begin(), sensor_ids.end(), id);
    if (it == sensor_ids.end()) {
        return -1;
    }
    return static_cast<int>(it - sensor_ids.begin());
}

void TimeSeriesFrame::validate() const {
    if (values.rows() != static_cast<Eigen::Index>(sensor_ids.size())) {
        throw ConfigError("frame: value rows (" + std::to_string(values.rows()) +
                          ") != sensor count (" + std::to_string(sensor_ids.size()) + ")");
    }
    if (values.cols() != static_cast<Eigen::Index>(times.size())) {
        throw ConfigError("frame: value columns (" + std::to_string(values.cols()) +
                          ") != timestamp count (" + std::to_string(times.size()) + ")");
    }
    if (times.size() >= 2) {
        const double dt = times[1] - times[0];
        if (dt <= 0.0) {
            throw ConfigError("frame: timestamps not strictly increasing");
        }
        for (std::size_t k = 1; k < times.size(); ++k) {
            const double step = times[k] - times[k - 1];
            if (std::abs(step - dt) > 1e-6 * std::max(std::abs(dt), 1.0)) {
                throw ConfigError("frame: non-uniform timestamp spacing at index " +
                                  std::to_string(k));
            }
        }
        if (sample_period > 0.0 &&
            std::abs(dt - sample_period) > 1e-6 * std::max(sample_period, 1.0)) {
            throw ConfigError("frame: timestamp spacing disagrees with sample_period");
        }
    }
}

} // namespace kmsig
