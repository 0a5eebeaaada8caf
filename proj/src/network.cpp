#include "kmsig/network.hpp"

#include <cmath>
#include <deque>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kmsig/errors.hpp"

namespace kmsig::gridsim {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& message) { throw ConfigError("network: " + message); }

const json& field(const json& obj, const char* name) {
    auto it = obj.find(name);
    if (it == obj.end()) fail(std::string("missing field '") + name + "'");
    return *it;
}

double number_field(const json& obj, const char* name) {
    const json& value = field(obj, name);
    if (!value.is_number()) fail(std::string("field '") + name + "' must be a number");
    return value.get<double>();
}

int int_field(const json& obj, const char* name) {
    const json& value = field(obj, name);
    if (!value.is_number_integer()) fail(std::string("field '") + name + "' must be an integer");
    return value.get<int>();
}

double number_or(const json& obj, const char* name, double fallback) {
    return obj.contains(name) ? number_field(obj, name) : fallback;
}

} // namespace

std::string NetworkModel::bus_name(int index) const {
    return "bus_" + std::to_string(index + 1);
}

int NetworkModel::bus_index(const std::string& name) const {
    if (name.rfind("bus_", 0) != 0) return -1;
    int value = 0;
    try {
        size_t used = 0;
        value = std::stoi(name.substr(4), &used);
        if (used != name.size() - 4) return -1;
    } catch (const std::exception&) {
        return -1;
    }
    if (value < 1 || value > bus_count()) return -1;
    return value - 1;
}

void NetworkModel::validate() const {
    if (n_gen < 1) fail("n_gen must be at least 1");
    if (n_load < 0) fail("n_load must be nonnegative");
    if (!(f0 > 0.0) || !std::isfinite(f0)) fail("f0 must be positive");
    const int n = bus_count();
    if (susceptance.rows() != n || susceptance.cols() != n)
        fail("susceptance must be " + std::to_string(n) + "x" + std::to_string(n));
    for (int i = 0; i < n; ++i) {
        if (std::abs(susceptance(i, i)) > 1e-12) fail("susceptance diagonal must be zero");
        for (int j = 0; j < n; ++j) {
            const double b = susceptance(i, j);
            if (!std::isfinite(b)) fail("susceptance must be finite");
            if (i != j && b < 0.0) fail("susceptance off-diagonal entries must be nonnegative");
            if (std::abs(b - susceptance(j, i)) > 1e-9) fail("susceptance must be symmetric");
        }
    }
    if (inertia.size() != n_gen) fail("inertia must have one entry per generator");
    for (int i = 0; i < n_gen; ++i)
        if (!(inertia(i) > 0.0) || !std::isfinite(inertia(i))) fail("inertia must be positive");
    if (damping.size() != n_gen) fail("damping must have one entry per generator");
    for (int i = 0; i < n_gen; ++i)
        if (!(damping(i) >= 0.0) || !std::isfinite(damping(i))) fail("damping must be nonnegative");
    if (!(agc_gain >= 0.0) || !std::isfinite(agc_gain)) fail("agc_gain must be nonnegative");
    if (agc_participation.size() != n_gen) fail("agc_participation must have one entry per generator");
    for (int i = 0; i < n_gen; ++i)
        if (!(agc_participation(i) >= 0.0)) fail("agc_participation entries must be nonnegative");
    const double share_sum = agc_participation.sum();
    if (std::abs(share_sum - 1.0) > 1e-9) {
        std::ostringstream oss;
        oss << "agc_participation must sum to 1 (got " << share_sum << ")";
        fail(oss.str());
    }
    if (base_load.size() != n_load) fail("base_load must have one entry per load bus");
    for (int i = 0; i < n_load; ++i)
        if (!std::isfinite(base_load(i))) fail("base_load must be finite");
    if (!(voltage_droop >= 0.0) || !std::isfinite(voltage_droop)) fail("voltage_droop must be nonnegative");
    if (!(freq_deviation_limit > 0.0)) fail("freq_deviation_limit must be positive");

    // Every bus must reach bus 0 through nonzero susceptance.
    std::vector<char> seen(n, 0);
    std::deque<int> queue{0};
    seen[0] = 1;
    while (!queue.empty()) {
        const int at = queue.front();
        queue.pop_front();
        for (int j = 0; j < n; ++j) {
            if (!seen[j] && susceptance(at, j) > 0.0) {
                seen[j] = 1;
                queue.push_back(j);
            }
        }
    }
    for (int i = 0; i < n; ++i)
        if (!seen[i]) fail("susceptance leaves " + bus_name(i) + " disconnected");
}

void GridEvent::validate(const NetworkModel& net) const {
    if (bus < net.n_gen || bus >= net.bus_count())
        throw ConfigError("event: bus must be a load bus (got " + net.bus_name(bus) + ")");
    if (!(start_time >= 0.0)) throw ConfigError("event: start_time must be nonnegative");
    if (!(end_time > start_time)) throw ConfigError("event: end_time must exceed start_time");
    if (!std::isfinite(delta_load)) throw ConfigError("event: delta_load must be finite");
}

NetworkModel build_network(const json& config) {
    if (!config.is_object()) fail("config must be a JSON object");
    NetworkModel net;
    net.n_gen = int_field(config, "n_gen");
    net.n_load = int_field(config, "n_load");
    if (net.n_gen < 1) fail("n_gen must be at least 1");
    if (net.n_load < 0) fail("n_load must be nonnegative");
    net.f0 = number_or(config, "f0", 60.0);
    const int n = net.bus_count();

    net.susceptance = Eigen::MatrixXd::Zero(n, n);
    const json& lines = field(config, "lines");
    if (!lines.is_array()) fail("field 'lines' must be an array");
    for (size_t k = 0; k < lines.size(); ++k) {
        const std::string where = "lines[" + std::to_string(k) + "]";
        if (!lines[k].is_object()) fail(where + " must be an object");
        const int from = int_field(lines[k], "from");
        const int to = int_field(lines[k], "to");
        const double b = number_field(lines[k], "b");
        if (from < 1 || from > n) fail(where + ".from is not a bus (got " + std::to_string(from) + ")");
        if (to < 1 || to > n) fail(where + ".to is not a bus (got " + std::to_string(to) + ")");
        if (from == to) fail(where + " connects a bus to itself");
        if (!(b > 0.0) || !std::isfinite(b)) fail(where + ".b must be positive");
        net.susceptance(from - 1, to - 1) += b;
        net.susceptance(to - 1, from - 1) += b;
    }

    const json& generators = field(config, "generators");
    if (!generators.is_array() || static_cast<int>(generators.size()) != net.n_gen)
        fail("field 'generators' must list every generator bus in order");
    net.inertia.resize(net.n_gen);
    net.damping.resize(net.n_gen);
    for (int i = 0; i < net.n_gen; ++i) {
        const std::string where = "generators[" + std::to_string(i) + "]";
        if (!generators[i].is_object()) fail(where + " must be an object");
        net.inertia(i) = number_field(generators[i], "inertia");
        net.damping(i) = number_field(generators[i], "damping");
    }

    const json& agc = field(config, "agc");
    if (!agc.is_object()) fail("field 'agc' must be an object");
    net.agc_gain = number_field(agc, "gain");
    net.agc_participation.resize(net.n_gen);
    if (!agc.contains("participation") || agc["participation"] == json("by_inertia")) {
        const double total = net.inertia.sum();
        for (int i = 0; i < net.n_gen; ++i) net.agc_participation(i) = net.inertia(i) / total;
    } else {
        const json& shares = agc["participation"];
        if (!shares.is_array() || static_cast<int>(shares.size()) != net.n_gen)
            fail("agc.participation must be \"by_inertia\" or one share per generator");
        for (int i = 0; i < net.n_gen; ++i) {
            if (!shares[i].is_number()) fail("agc.participation entries must be numbers");
            net.agc_participation(i) = shares[i].get<double>();
        }
    }

    const json& loads = field(config, "base_load");
    if (!loads.is_array() || static_cast<int>(loads.size()) != net.n_load)
        fail("field 'base_load' must have one entry per load bus");
    net.base_load.resize(net.n_load);
    for (int i = 0; i < net.n_load; ++i) {
        if (!loads[i].is_number()) fail("base_load entries must be numbers");
        net.base_load(i) = loads[i].get<double>();
    }

    net.voltage_droop = number_or(config, "voltage_droop", 0.0);
    net.freq_deviation_limit = number_or(config, "freq_deviation_limit", 0.5);
    net.validate();
    return net;
}

GridEvent parse_event(const json& config, const NetworkModel& net) {
    if (!config.is_object()) throw ConfigError("event: config must be a JSON object");
    GridEvent event;
    const json& bus = field(config, "bus");
    if (bus.is_string()) {
        event.bus = net.bus_index(bus.get<std::string>());
        if (event.bus < 0) throw ConfigError("event: unknown bus '" + bus.get<std::string>() + "'");
    } else if (bus.is_number_integer()) {
        event.bus = bus.get<int>() - 1;
        if (event.bus < 0 || event.bus >= net.bus_count())
            throw ConfigError("event: bus number out of range (got " + std::to_string(bus.get<int>()) + ")");
    } else {
        throw ConfigError("event: bus must be a bus name or 1-based number");
    }
    event.start_time = number_field(config, "start_time");
    if (config.contains("end_time")) event.end_time = number_field(config, "end_time");
    event.delta_load = number_field(config, "delta_load");
    event.validate(net);
    return event;
}

const NetworkModel& default_network() {
    static const NetworkModel model = [] {
        NetworkModel net;
        net.n_gen = 16;
        net.n_load = 52;
        net.f0 = 60.0;
        const int n = net.bus_count();
        net.susceptance = Eigen::MatrixXd::Zero(n, n);
        auto line = [&net](int a, int b, double s) {
            net.susceptance(a, b) += s;
            net.susceptance(b, a) += s;
        };
        for (int i = 0; i < 16; ++i) line(i, (i + 1) % 16, 18.0);
        for (int i = 0; i < 16; i += 4) line(i, (i + 4) % 16, 6.0);
        for (int j = 0; j < 52; ++j) {
            line(16 + j, j % 16, 10.0);
            line(16 + j, (j + 5) % 16, 4.0);
        }
        net.inertia.resize(16);
        net.damping.resize(16);
        for (int i = 0; i < 16; ++i) {
            net.inertia(i) = 2.5 + 0.35 * i;
            net.damping(i) = 1.0 + 0.05 * i;
        }
        net.agc_gain = 900.0;
        net.agc_participation = net.inertia / net.inertia.sum();
        net.base_load.resize(52);
        for (int j = 0; j < 52; ++j) net.base_load(j) = 1.0 + 0.025 * (j % 11);
        net.voltage_droop = 0.04;
        net.freq_deviation_limit = 0.5;
        net.validate();
        return net;
    }();
    return model;
}

} // namespace kmsig::gridsim
