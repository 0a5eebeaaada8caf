#include "kmsig/attack.hpp"

#include <algorithm>
#include <utility>

#include "kmsig/errors.hpp"

namespace kmsig::attack {

std::string attack_type_name(AttackType t) {
    switch (t) {
    case AttackType::poisoning: return "poisoning";
    case AttackType::dos: return "dos";
    case AttackType::step: return "step";
    case AttackType::ramp: return "ramp";
    case AttackType::rtw: return "rtw";
    }
    return "unknown";
}

std::optional<AttackType> attack_type_from_name(const std::string& name) {
    if (name == "poisoning") return AttackType::poisoning;
    if (name == "dos") return AttackType::dos;
    if (name == "step") return AttackType::step;
    if (name == "ramp") return AttackType::ramp;
    if (name == "rtw") return AttackType::rtw;
    return std::nullopt;
}

void AttackSpec::validate() const {
    if (!(t1 < t2)) {
        throw ConfigError("attack window requires t1 < t2");
    }
    if (targets.empty()) {
        throw ConfigError("attack targets must be non-empty");
    }
    if (sigma_c < 0.0) {
        throw ConfigError("sigma_c must be >= 0");
    }
}

std::pair<double, double> attack_variables(const AttackSpec& spec, double t,
                                           double phi_t1, double phi_t,
                                           GaussianSampler& rng) {
    if (t < spec.t1 || t > spec.t2) {
        throw ConfigError("time outside the attack window");
    }
    const double dt = t - spec.t1;
    switch (spec.attack_type) {
    case AttackType::poisoning:
        return {0.0, rng(spec.mu_c, spec.sigma_c)};
    case AttackType::dos:
        return {0.0, phi_t1 - phi_t};
    case AttackType::step:
        return {spec.c, 0.0};
    case AttackType::ramp:
        return {spec.c * dt, 0.0};
    case AttackType::rtw:
        return {spec.c * dt, spec.c * phi_t1 * dt};
    }
    throw ConfigError("unknown attack type");
}

AttackedFrame inject(const TimeSeriesFrame& frame, const AttackSpec& spec) {
    frame.validate();
    spec.validate();
    if (spec.channel != frame.channel) {
        throw ConfigError("attack channel " + channel_name(spec.channel) +
                          " does not match frame channel " + channel_name(frame.channel));
    }

    std::vector<int> rows;
    rows.reserve(spec.targets.size());
    for (const std::string& id : spec.targets) {
        const int row = frame.row_of(id);
        if (row < 0) {
            throw ConfigError("unknown attack target sensor: " + id);
        }
        rows.push_back(row);
    }
    std::sort(rows.begin(), rows.end());

    // A sample counts as inside [t1, t2] up to grid roundoff.
    const double tol = frame.sample_period * 1e-6;
    int first = -1, last = -1;
    for (int k = 0; k < frame.sample_count(); ++k) {
        if (frame.times[k] >= spec.t1 - tol && frame.times[k] <= spec.t2 + tol) {
            if (first < 0) {
                first = k;
            }
            last = k;
        }
    }
    if (first < 0) {
        throw ConfigError("attack window [t1, t2] contains no samples of the stream");
    }

    AttackedFrame out;
    out.frame = frame;
    out.spec = spec;
    out.ground_truth.assign(frame.sensor_count(), false);

    GaussianSampler rng(spec.seed);
    for (int row : rows) {
        out.ground_truth[row] = true;
        const double phi_t1 = frame.values(row, first);
        for (int k = first; k <= last; ++k) {
            if (spec.attack_type == AttackType::dos) {
                // Assign the onset value directly: the frozen row is then
                // bit-identical to phi(t1), not merely close after
                // phi + (phi_t1 - phi) roundoff.
                out.frame.values(row, k) = phi_t1;
                continue;
            }
            const double value = frame.values(row, k);
            // Clamp away grid roundoff so the window check stays strict.
            const double t = std::clamp(frame.times[k], spec.t1, spec.t2);
            const auto [alpha, beta] = attack_variables(spec, t, phi_t1, value, rng);
            out.frame.values(row, k) = (1.0 + alpha) * value + beta;
        }
    }
    return out;
}

} // namespace kmsig::attack
