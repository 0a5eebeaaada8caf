#include "kmsig/gridsim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "kmsig/errors.hpp"
#include "kmsig/rng.hpp"

namespace kmsig::gridsim {

namespace {

// Generator-only equivalent of the full network: sin-coupling coefficients from
// the Schur complement of the susceptance Laplacian, plus the linear maps that
// spread load injections onto generators and recover load-bus quantities.
struct ReducedNetwork {
    Eigen::MatrixXd coupling; // n_gen x n_gen, zero diagonal
    Eigen::MatrixXd transfer; // n_gen x n_load
    Eigen::MatrixXd recover;  // n_load x n_gen
    Eigen::LDLT<Eigen::MatrixXd> load_solver;
};

ReducedNetwork reduce(const NetworkModel& net) {
    const int n = net.bus_count(), ng = net.n_gen, nl = net.n_load;
    Eigen::MatrixXd lap = -net.susceptance;
    for (int i = 0; i < n; ++i) lap(i, i) = net.susceptance.row(i).sum();
    ReducedNetwork red;
    if (nl == 0) {
        red.coupling = net.susceptance;
        red.transfer.resize(ng, 0);
        red.recover.resize(0, ng);
        return red;
    }
    const Eigen::MatrixXd lgl = lap.topRightCorner(ng, nl);
    red.load_solver.compute(lap.bottomRightCorner(nl, nl));
    if (red.load_solver.info() != Eigen::Success)
        throw RuntimeError("network reduction failed: load subnetwork is singular");
    red.recover = red.load_solver.solve(lgl.transpose());
    red.transfer = -red.recover.transpose();
    red.coupling = -(lap.topLeftCorner(ng, ng) - lgl * red.recover);
    red.coupling.diagonal().setZero();
    return red;
}

Eigen::VectorXd coupled_power(const Eigen::MatrixXd& coupling, const Eigen::VectorXd& theta) {
    const int ng = static_cast<int>(theta.size());
    Eigen::VectorXd pe = Eigen::VectorXd::Zero(ng);
    for (int i = 0; i < ng; ++i)
        for (int j = 0; j < ng; ++j)
            if (coupling(i, j) != 0.0) pe(i) += coupling(i, j) * std::sin(theta(i) - theta(j));
    return pe;
}

// Steady angles with bus 0 as reference. p_eff must balance up to roundoff.
Eigen::VectorXd solve_equilibrium(const ReducedNetwork& red, const Eigen::VectorXd& p_eff) {
    const int ng = static_cast<int>(p_eff.size());
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(ng);
    if (ng == 1) return theta;
    Eigen::MatrixXd lred = -red.coupling;
    lred.diagonal() = red.coupling.rowwise().sum();
    theta.tail(ng - 1) =
        lred.bottomRightCorner(ng - 1, ng - 1).ldlt().solve(p_eff.tail(ng - 1));
    const double tolerance = 1e-13 * std::max(1.0, p_eff.cwiseAbs().maxCoeff());
    for (int iter = 0; iter < 60; ++iter) {
        const Eigen::VectorXd residual = p_eff - coupled_power(red.coupling, theta);
        if (!residual.allFinite()) break;
        if (residual.tail(ng - 1).cwiseAbs().maxCoeff() < tolerance) return theta;
        Eigen::MatrixXd jac(ng, ng);
        for (int i = 0; i < ng; ++i) {
            double diag = 0.0;
            for (int j = 0; j < ng; ++j) {
                if (i == j) continue;
                const double stiff = red.coupling(i, j) * std::cos(theta(i) - theta(j));
                jac(i, j) = -stiff;
                diag += stiff;
            }
            jac(i, i) = diag;
        }
        theta.tail(ng - 1) += jac.bottomRightCorner(ng - 1, ng - 1)
                                  .ldlt()
                                  .solve(residual.tail(ng - 1));
    }
    throw RuntimeError("equilibrium solve did not converge");
}

// State layout: [theta (rad), theta_dot (rad/s), agc integral (p.u. power)].
struct Dynamics {
    const NetworkModel& net;
    const ReducedNetwork& red;
    Eigen::VectorXd p_eff; // dispatch plus transferred load injections
    double omega_base;     // 2*pi*f0
    const AgcFrequencyTamper& tamper;

    Eigen::VectorXd operator()(double t, const Eigen::VectorXd& state) const {
        const int ng = net.n_gen;
        const auto theta = state.head(ng);
        const auto theta_dot = state.segment(ng, ng);
        const double agc = state(2 * ng);
        Eigen::VectorXd deriv(2 * ng + 1);
        deriv.head(ng) = theta_dot;
        const Eigen::VectorXd pe = coupled_power(red.coupling, theta);
        for (int i = 0; i < ng; ++i)
            deriv(ng + i) = (p_eff(i) + net.agc_participation(i) * agc - pe(i) -
                             net.damping(i) * theta_dot(i)) /
                            net.inertia(i);
        Eigen::VectorXd omega_pu = theta_dot / omega_base;
        if (tamper) {
            omega_pu = tamper(t, omega_pu);
            if (omega_pu.size() != ng)
                throw RuntimeError("AGC tamper hook returned a wrong-sized vector");
        }
        deriv(2 * ng) = -net.agc_gain * omega_pu.mean();
        return deriv;
    }
};

void rk4_span(const Dynamics& f, Eigen::VectorXd& state, double a, double b, double max_step) {
    const double span = b - a;
    if (!(span > 0.0)) return;
    const int steps = std::max(1, static_cast<int>(std::ceil(span / max_step - 1e-12)));
    const double h = span / steps;
    for (int s = 0; s < steps; ++s) {
        const double t = a + s * h;
        const Eigen::VectorXd k1 = f(t, state);
        const Eigen::VectorXd k2 = f(t + h / 2, state + (h / 2) * k1);
        const Eigen::VectorXd k3 = f(t + h / 2, state + (h / 2) * k2);
        const Eigen::VectorXd k4 = f(t + h, state + h * k3);
        state += (h / 6) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!state.allFinite()) {
            std::ostringstream oss;
            oss << "simulation diverged: state became non-finite near t = " << t + h << " s";
            throw RuntimeError(oss.str());
        }
    }
}

} // namespace

std::map<Channel, TimeSeriesFrame> simulate(const NetworkModel& net,
                                            const std::vector<GridEvent>& events,
                                            const SimulationOptions& options) {
    net.validate();
    for (const GridEvent& event : events) event.validate(net);
    if (!(options.duration > 0.0) || !std::isfinite(options.duration))
        throw ConfigError("simulate: duration must be positive");
    if (!(options.sample_period > 0.0) || !std::isfinite(options.sample_period))
        throw ConfigError("simulate: sample_period must be positive");
    for (const auto& [channel, stddev] : options.noise_std)
        if (!(stddev >= 0.0) || !std::isfinite(stddev))
            throw ConfigError("simulate: noise_std for " + channel_name(channel) +
                              " must be nonnegative");
    if (options.initial_omega && options.initial_omega->size() != net.n_gen)
        throw ConfigError("simulate: initial_omega must have one entry per generator");

    const int ng = net.n_gen, nl = net.n_load, n = net.bus_count();
    const double T = options.sample_period;
    const int m = static_cast<int>(std::ceil(options.duration / T - 1e-9));
    const double omega_base = 2.0 * std::numbers::pi * net.f0;
    const ReducedNetwork red = reduce(net);
    const Eigen::VectorXd dispatch = net.agc_participation * net.base_load.sum();

    const auto demand_at = [&](double t) {
        Eigen::VectorXd demand = net.base_load;
        for (const GridEvent& event : events)
            if (event.start_time <= t && t < event.end_time)
                demand(event.bus - ng) += event.delta_load;
        return demand;
    };

    Dynamics dynamics{net, red, Eigen::VectorXd(), omega_base, options.agc_tamper};
    Eigen::VectorXd demand, theta_load_offset;
    const auto retune = [&](double t) {
        demand = demand_at(t);
        const Eigen::VectorXd injection = -demand;
        dynamics.p_eff = dispatch + red.transfer * injection;
        theta_load_offset = nl > 0 ? red.load_solver.solve(injection).eval()
                                   : Eigen::VectorXd(0);
    };

    retune(0.0);
    Eigen::VectorXd state = Eigen::VectorXd::Zero(2 * ng + 1);
    state.head(ng) = solve_equilibrium(red, dynamics.p_eff);
    if (options.initial_omega) state.segment(ng, ng) = omega_base * (*options.initial_omega);

    // Event boundaries strictly inside a sampling interval split its integration.
    std::set<double> boundaries;
    for (const GridEvent& event : events) {
        boundaries.insert(event.start_time);
        if (std::isfinite(event.end_time)) boundaries.insert(event.end_time);
    }

    Eigen::MatrixXd angle(n, m), magnitude(n, m), frequency(n, m), deviation(n, m);
    std::vector<double> times(m);
    const auto record = [&](int k, double t) {
        const auto theta = state.head(ng);
        const Eigen::VectorXd omega_pu = state.segment(ng, ng) / omega_base;
        const double worst = omega_pu.cwiseAbs().maxCoeff();
        if (worst > net.freq_deviation_limit) {
            std::ostringstream oss;
            oss << "simulation diverged: |frequency deviation| reached " << worst
                << " p.u. at t = " << t << " s";
            throw RuntimeError(oss.str());
        }
        angle.col(k).head(ng) = theta;
        deviation.col(k).head(ng) = omega_pu;
        magnitude.col(k).head(ng).setOnes();
        if (nl > 0) {
            angle.col(k).tail(nl) = theta_load_offset - red.recover * theta;
            deviation.col(k).tail(nl) = -red.recover * omega_pu;
            magnitude.col(k).tail(nl) =
                Eigen::VectorXd::Ones(nl) - net.voltage_droop * demand;
        }
        frequency.col(k) = net.f0 * (1.0 + deviation.col(k).array());
        times[k] = t;
    };

    record(0, 0.0);
    const double h = T / 5.0;
    for (int k = 0; k + 1 < m; ++k) {
        const double a = k * T, b = (k + 1) * T;
        double at = a;
        for (double cut : boundaries) {
            if (cut > a + 1e-9 && cut < b - 1e-9) {
                retune((at + cut) / 2.0);
                rk4_span(dynamics, state, at, cut, h);
                at = cut;
            }
        }
        retune((at + b) / 2.0);
        rk4_span(dynamics, state, at, b, h);
        retune(b); // samples at a boundary see the post-boundary network
        record(k + 1, b);
    }

    std::map<Channel, TimeSeriesFrame> frames;
    const auto emit = [&](Channel channel, const Eigen::MatrixXd& values) {
        TimeSeriesFrame frame;
        frame.channel = channel;
        frame.sensor_ids.reserve(n);
        for (int i = 0; i < n; ++i) frame.sensor_ids.push_back(net.bus_name(i));
        frame.times = times;
        frame.values = values;
        frame.sample_period = T;
        frames.emplace(channel, std::move(frame));
    };
    emit(Channel::voltage_angle, angle);
    emit(Channel::voltage_magnitude, magnitude);
    emit(Channel::frequency, frequency);
    emit(Channel::frequency_deviation, deviation);

    for (size_t c = 0; c < all_channels.size(); ++c) {
        const auto it = options.noise_std.find(all_channels[c]);
        if (it == options.noise_std.end() || it->second == 0.0) continue;
        GaussianSampler rng(options.seed ^ (0x9E3779B97F4A7C15ull * (c + 1)));
        Eigen::MatrixXd& values = frames.at(all_channels[c]).values;
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < m; ++k) values(i, k) += rng(0.0, it->second);
    }
    return frames;
}

} // namespace kmsig::gridsim
