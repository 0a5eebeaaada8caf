#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kmsig/frame.hpp"
#include "kmsig/rng.hpp"

namespace kmsig::attack {

enum class AttackType { poisoning, dos, step, ramp, rtw };

std::string attack_type_name(AttackType t);
std::optional<AttackType> attack_type_from_name(const std::string& name);

// False-data injection over [t1, t2]: each targeted measurement becomes
// (1 + alpha(t)) * value + beta(t), with alpha/beta set by the attack type.
struct AttackSpec {
    AttackType attack_type = AttackType::step;
    std::vector<std::string> targets;
    Channel channel = Channel::voltage_angle;
    double t1 = 0.0;
    double t2 = 0.0;
    double c = 0.1;       // step scaling, or ramp/rtw slope per second
    double mu_c = 0.0;    // poisoning noise mean
    double sigma_c = 0.0; // poisoning noise std
    std::uint64_t seed = 0;

    void validate() const; // throws ConfigError
};

struct AttackedFrame {
    TimeSeriesFrame frame;
    std::vector<bool> ground_truth; // per sensor row, true = attacked
    AttackSpec spec;
};

// Multiplicative/additive pair (alpha, beta) at time t for one sensor.
// phi_t1 and phi_t are the clean values at onset and at t. Poisoning draws
// beta from the supplied sampler; other types ignore it.
std::pair<double, double> attack_variables(const AttackSpec& spec, double t,
                                           double phi_t1, double phi_t,
                                           GaussianSampler& rng);

AttackedFrame inject(const TimeSeriesFrame& frame, const AttackSpec& spec);

} // namespace kmsig::attack
