#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kmsig/attack.hpp"
#include "kmsig/errors.hpp"

using namespace kmsig::attack;
using kmsig::Channel;
using kmsig::GaussianSampler;
using kmsig::TimeSeriesFrame;

namespace {

TimeSeriesFrame smooth_frame(int m = 100) {
    TimeSeriesFrame f;
    f.sensor_ids = {"bus_1", "bus_2", "bus_3"};
    f.channel = Channel::voltage_angle;
    f.sample_period = 0.05;
    f.times.resize(m);
    f.values.resize(3, m);
    for (int k = 0; k < m; ++k) {
        const double t = 0.05 * k;
        f.times[k] = t;
        f.values(0, k) = 0.4 + 0.1 * std::sin(1.3 * t);
        f.values(1, k) = -0.2 + 0.05 * std::cos(0.7 * t);
        f.values(2, k) = 0.6 + 0.2 * std::sin(2.1 * t + 0.4);
    }
    return f;
}

AttackSpec base_spec(AttackType type) {
    AttackSpec spec;
    spec.attack_type = type;
    spec.targets = {"bus_2"};
    spec.channel = Channel::voltage_angle;
    spec.t1 = 2.0;
    spec.t2 = 3.0;
    spec.c = 0.1;
    spec.seed = 77;
    return spec;
}

// Independent restatement of the attack-variable table, used as the oracle
// for per-sample verification.
std::pair<double, double> table_oracle(AttackType type, double c, double t,
                                       double t1, double phi_t1, double phi_t) {
    const double dt = t - t1;
    switch (type) {
    case AttackType::dos: return {0.0, phi_t1 - phi_t};
    case AttackType::step: return {c, 0.0};
    case AttackType::ramp: return {c * dt, 0.0};
    case AttackType::rtw: return {c * dt, c * phi_t1 * dt};
    default: return {0.0, 0.0};
    }
}

} // namespace

TEST_CASE("attack variable table rows") {
    GaussianSampler rng(1);
    AttackSpec spec = base_spec(AttackType::dos);

    auto [a_dos, b_dos] = attack_variables(spec, 2.5, 0.30, 0.42, rng);
    CHECK(a_dos == 0.0);
    CHECK(b_dos == doctest::Approx(-0.12).epsilon(1e-12));
    CHECK((1.0 + a_dos) * 0.42 + b_dos == doctest::Approx(0.30).epsilon(1e-12));

    spec = base_spec(AttackType::step);
    auto [a_step, b_step] = attack_variables(spec, 2.7, 0.5, 0.5, rng);
    CHECK(a_step == 0.1);
    CHECK(b_step == 0.0);
    CHECK((1.0 + a_step) * 0.50 + b_step == doctest::Approx(0.55).epsilon(1e-15));

    spec = base_spec(AttackType::ramp);
    spec.c = 0.02;
    auto [a_ramp0, b_ramp0] = attack_variables(spec, 2.0, 0.5, 0.5, rng);
    CHECK(a_ramp0 == 0.0);
    CHECK(b_ramp0 == 0.0);
    auto [a_ramp, b_ramp] = attack_variables(spec, 2.75, 0.5, 0.6, rng);
    CHECK(a_ramp == doctest::Approx(0.02 * 0.75).epsilon(1e-15));
    CHECK(b_ramp == 0.0);

    spec = base_spec(AttackType::rtw);
    spec.c = 0.005;
    auto [a_rtw, b_rtw] = attack_variables(spec, 2.4, 0.3, 0.35, rng);
    CHECK(a_rtw == doctest::Approx(0.005 * 0.4).epsilon(1e-12));
    CHECK(b_rtw == doctest::Approx(0.005 * 0.3 * 0.4).epsilon(1e-12));

    spec = base_spec(AttackType::poisoning);
    spec.mu_c = 0.0;
    spec.sigma_c = 1.0;
    auto [a_poison, b_poison] = attack_variables(spec, 2.1, 0.3, 0.3, rng);
    CHECK(a_poison == 0.0);
    CHECK(std::isfinite(b_poison));
}

TEST_CASE("time outside the window is rejected") {
    GaussianSampler rng(1);
    const AttackSpec spec = base_spec(AttackType::step);
    CHECK_THROWS_AS(attack_variables(spec, 1.99, 0.5, 0.5, rng), kmsig::ConfigError);
    CHECK_THROWS_AS(attack_variables(spec, 3.01, 0.5, 0.5, rng), kmsig::ConfigError);
}

TEST_CASE("per-sample injection matches the table oracle bit for bit") {
    const TimeSeriesFrame clean = smooth_frame();
    for (AttackType type : {AttackType::step, AttackType::ramp, AttackType::rtw}) {
        CAPTURE(attack_type_name(type));
        AttackSpec spec = base_spec(type);
        spec.c = type == AttackType::step ? 0.1 : 0.005;
        const AttackedFrame out = inject(clean, spec);

        const int row = 1;
        const int first = 40; // t = 2.0
        const double phi_t1 = clean.values(row, first);
        for (int k = 0; k < clean.sample_count(); ++k) {
            const double t = clean.times[k];
            if (t >= spec.t1 && t <= spec.t2) {
                const auto [alpha, beta] =
                    table_oracle(type, spec.c, t, spec.t1, phi_t1, clean.values(row, k));
                const double expected = (1.0 + alpha) * clean.values(row, k) + beta;
                CHECK(out.frame.values(row, k) == expected);
            } else {
                CHECK(out.frame.values(row, k) == clean.values(row, k));
            }
        }
    }
}

TEST_CASE("dos freezes the row at its onset value exactly") {
    const TimeSeriesFrame clean = smooth_frame();
    const AttackedFrame out = inject(clean, base_spec(AttackType::dos));
    const double phi_t1 = clean.values(1, 40);
    for (int k = 40; k <= 60; ++k) {
        CHECK(out.frame.values(1, k) == phi_t1);
    }
    // zero variance over the window
    const auto window = out.frame.values.row(1).segment(40, 21);
    CHECK((window.array() - window(0)).abs().maxCoeff() == 0.0);
}

TEST_CASE("non-target rows and outside-window samples are untouched") {
    const TimeSeriesFrame clean = smooth_frame();
    const AttackedFrame out = inject(clean, base_spec(AttackType::step));
    for (int row : {0, 2}) {
        for (int k = 0; k < clean.sample_count(); ++k) {
            CHECK(out.frame.values(row, k) == clean.values(row, k));
        }
    }
    for (int k = 0; k < clean.sample_count(); ++k) {
        if (clean.times[k] < 2.0 || clean.times[k] > 3.0) {
            CHECK(out.frame.values(1, k) == clean.values(1, k));
        }
    }
    CHECK(out.ground_truth == std::vector<bool>{false, true, false});
}

TEST_CASE("identity attack leaves the frame bit-identical") {
    const TimeSeriesFrame clean = smooth_frame();
    AttackSpec spec = base_spec(AttackType::step);
    spec.c = 0.0;
    const AttackedFrame out = inject(clean, spec);
    CHECK((out.frame.values.array() == clean.values.array()).all());
}

TEST_CASE("poisoning is deterministic under a fixed seed") {
    const TimeSeriesFrame clean = smooth_frame();
    AttackSpec spec = base_spec(AttackType::poisoning);
    spec.targets = {"bus_1", "bus_3"};
    spec.mu_c = 0.0;
    spec.sigma_c = 0.5;
    const AttackedFrame a = inject(clean, spec);
    const AttackedFrame b = inject(clean, spec);
    CHECK((a.frame.values.array() == b.frame.values.array()).all());

    // and actually perturbs the window
    CHECK((a.frame.values.row(0).segment(40, 21).array() !=
           clean.values.row(0).segment(40, 21).array())
              .any());

    spec.seed = 78;
    const AttackedFrame c = inject(clean, spec);
    CHECK((a.frame.values.array() != c.frame.values.array()).any());
}

TEST_CASE("multi-target injection flags every target") {
    const TimeSeriesFrame clean = smooth_frame();
    AttackSpec spec = base_spec(AttackType::step);
    spec.targets = {"bus_3", "bus_1"};
    const AttackedFrame out = inject(clean, spec);
    CHECK(out.ground_truth == std::vector<bool>{true, false, true});
    CHECK(out.frame.values(0, 50) != clean.values(0, 50));
    CHECK(out.frame.values(2, 50) != clean.values(2, 50));
    CHECK(out.frame.values(1, 50) == clean.values(1, 50));
}

TEST_CASE("spec violations are rejected") {
    const TimeSeriesFrame clean = smooth_frame();

    AttackSpec spec = base_spec(AttackType::step);
    spec.targets = {"bus_9"};
    CHECK_THROWS_AS(inject(clean, spec), kmsig::ConfigError);

    spec = base_spec(AttackType::step);
    spec.channel = Channel::frequency;
    CHECK_THROWS_AS(inject(clean, spec), kmsig::ConfigError);

    spec = base_spec(AttackType::step);
    spec.t1 = 3.0;
    spec.t2 = 2.0;
    CHECK_THROWS_AS(inject(clean, spec), kmsig::ConfigError);

    spec = base_spec(AttackType::step);
    spec.targets.clear();
    CHECK_THROWS_AS(inject(clean, spec), kmsig::ConfigError);

    spec = base_spec(AttackType::poisoning);
    spec.sigma_c = -1.0;
    CHECK_THROWS_AS(inject(clean, spec), kmsig::ConfigError);

    spec = base_spec(AttackType::step);
    spec.t1 = 50.0;
    spec.t2 = 60.0; // beyond the 5 s stream
    CHECK_THROWS_AS(inject(clean, spec), kmsig::ConfigError);
}

TEST_CASE("attack type names round-trip") {
    for (AttackType t : {AttackType::poisoning, AttackType::dos, AttackType::step,
                         AttackType::ramp, AttackType::rtw}) {
        auto back = attack_type_from_name(attack_type_name(t));
        REQUIRE(back.has_value());
        CHECK(*back == t);
    }
    CHECK(!attack_type_from_name("replay").has_value());
}
