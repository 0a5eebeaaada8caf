#include "kmsig/detector.hpp"

#include <cmath>
#include <limits>

#include "kmsig/errors.hpp"

namespace kmsig::detect {

namespace {

constexpr double k_nan = std::numeric_limits<double>::quiet_NaN();

// Residuals at the roundoff floor of the data scale carry no anomaly
// evidence; windows below this relative level become zero-dynamics models.
constexpr double k_residual_floor_rel = 1e-12;

TimeSeriesFrame stack_frames(const std::map<Channel, TimeSeriesFrame>& frames) {
    TimeSeriesFrame out;
    bool first = true;
    for (const auto& [channel, frame] : frames) {
        frame.validate();
        if (first) {
            out.times = frame.times;
            out.sample_period = frame.sample_period;
            out.channel = channel;
            out.values.resize(0, frame.sample_count());
            first = false;
        } else if (frame.sample_count() != static_cast<int>(out.times.size())) {
            throw ConfigError("stacked channels disagree on sample count");
        }
        const Eigen::Index base = out.values.rows();
        out.values.conservativeResize(base + frame.values.rows(), Eigen::NoChange);
        out.values.bottomRows(frame.values.rows()) = frame.values;
        for (const std::string& id : frame.sensor_ids) {
            out.sensor_ids.push_back(id + ":" + channel_name(channel));
        }
    }
    if (first) {
        throw ConfigError("no channels supplied");
    }
    return out;
}

} // namespace

void WindowConfig::validate() const {
    if (learning_len < 2) {
        throw ConfigError("learning_len must be >= 2");
    }
    if (prediction_len < 2) {
        throw ConfigError("prediction_len must be >= 2");
    }
    if (stride < 1) {
        throw ConfigError("stride must be >= 1");
    }
    if (tau <= 0.0) {
        throw ConfigError("tau must be positive");
    }
    if (epsilon <= 0.0) {
        throw ConfigError("epsilon must be positive");
    }
    if (!(fit.max_magnitude > 0.0)) {
        throw ConfigError("max_magnitude must be positive");
    }
    if (backend == koopman::Backend::hankel_dmd) {
        if (learning_len < fit.delay + 2 || prediction_len < fit.delay + 2) {
            throw ConfigError("window lengths must exceed the delay embedding by 2");
        }
    }
}

bool DeltaScoreSeries::failed(int window) const {
    return !scores.row(window).allFinite();
}

int DeltaScoreSeries::argmin(int window) const {
    if (failed(window)) {
        return -1;
    }
    Eigen::Index idx = 0;
    scores.row(window).minCoeff(&idx);
    return static_cast<int>(idx);
}

double DeltaScoreSeries::margin(int window) const {
    if (failed(window) || scores.cols() < 2) {
        return 0.0;
    }
    const int lowest = argmin(window);
    double runner_up = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < scores.cols(); ++i) {
        if (i != lowest) {
            runner_up = std::min(runner_up, scores(window, i));
        }
    }
    return runner_up - scores(window, lowest);
}

Eigen::MatrixXd error_sequence(const Eigen::MatrixXd& observed,
                               const Eigen::MatrixXd& predicted) {
    if (observed.rows() != predicted.rows() || observed.cols() != predicted.cols()) {
        throw ConfigError("observed and predicted shapes differ");
    }
    return observed - predicted;
}

NormalizedKM normalize_two_step(const Eigen::MatrixXd& V) {
    if ((V.array() < 0.0).any()) {
        throw ConfigError("modal content matrix must be non-negative");
    }
    const Eigen::Index p = V.rows();
    const Eigen::Index w = V.cols();

    Eigen::MatrixXd by_col = V;
    for (Eigen::Index k = 0; k < w; ++k) {
        const double sum = by_col.col(k).sum();
        if (sum > 0.0) {
            by_col.col(k) /= sum;
        } else {
            by_col.col(k).setConstant(1.0 / static_cast<double>(p));
        }
    }

    NormalizedKM out;
    out.rows = by_col;
    for (Eigen::Index i = 0; i < p; ++i) {
        const double sum = out.rows.row(i).sum();
        if (sum > 0.0) {
            out.rows.row(i) /= sum;
        } else {
            out.rows.row(i).setConstant(1.0 / static_cast<double>(w));
        }
    }
    out.centroid = out.rows.colwise().mean();
    return out;
}

DeltaScores delta_scores(const NormalizedKM& nkm, DivergenceKind kind,
                         double tau, double epsilon) {
    const Eigen::Index p = nkm.rows.rows();
    DeltaScores out;
    out.distances.resize(p);
    out.scores.resize(p);
    for (Eigen::Index i = 0; i < p; ++i) {
        const double d = divergence(nkm.rows.row(i).transpose(), nkm.centroid,
                                    kind, epsilon);
        out.distances(i) = d;
        // Keep scores strictly positive even when tau*d underflows exp.
        out.scores(i) = std::max(std::exp(-tau * d),
                                 std::numeric_limits<double>::min());
    }
    return out;
}

int window_count(int samples, const WindowConfig& cfg) {
    const int usable = samples - cfg.learning_len - cfg.prediction_len;
    return usable < 0 ? 0 : usable / cfg.stride + 1;
}

DeltaScoreSeries run_stream(const TimeSeriesFrame& frame, const WindowConfig& cfg) {
    cfg.validate();
    frame.validate();

    const int m = frame.sample_count();
    const int total = window_count(m, cfg);
    if (total < 1) {
        throw ConfigError("stream too short: need at least learning_len + prediction_len samples");
    }

    const int p = frame.sensor_count();
    DeltaScoreSeries series;
    series.sensor_ids = frame.sensor_ids;
    series.scores.resize(total, p);
    series.distances.resize(total, p);
    series.window_times.resize(total);

    for (int widx = 0; widx < total; ++widx) {
        const int s = cfg.learning_len + widx * cfg.stride; // prediction start
        series.window_times[widx] = frame.times[s];

        try {
            koopman::SnapshotMatrix learning;
            learning.data = frame.values.middleCols(s - cfg.learning_len, cfg.learning_len);
            learning.sample_period = frame.sample_period;

            const Eigen::MatrixXd observed =
                frame.values.middleCols(s, cfg.prediction_len);
            const double scale = std::max(learning.data.cwiseAbs().maxCoeff(),
                                          observed.cwiseAbs().maxCoeff());

            const koopman::KoopmanModel predictor =
                koopman::fit(learning, cfg.backend, cfg.fit);
            const Eigen::MatrixXd predicted =
                koopman::predict_window(predictor, cfg.learning_len, cfg.prediction_len);

            koopman::SnapshotMatrix residual;
            residual.data = error_sequence(observed, predicted);
            residual.sample_period = frame.sample_period;

            koopman::FitOptions residual_opts = cfg.fit;
            residual_opts.zero_threshold =
                std::max(cfg.fit.zero_threshold, k_residual_floor_rel * scale);
            // The growth cap protects the extrapolating predictor. The error
            // fit never extrapolates, and noise-like residuals (poisoning)
            // legitimately produce fast eigenvalues that carry the signature.
            residual_opts.max_magnitude = std::numeric_limits<double>::infinity();
            const koopman::KoopmanModel error_model =
                koopman::fit(residual, cfg.backend, residual_opts);

            const Eigen::MatrixXd modal =
                koopman::mode_amplitude_matrix(error_model, cfg.prediction_len);
            const NormalizedKM nkm = normalize_two_step(modal);
            const DeltaScores row = delta_scores(nkm, cfg.divergence, cfg.tau, cfg.epsilon);

            series.distances.row(widx) = row.distances.transpose();
            series.scores.row(widx) = row.scores.transpose();
        } catch (const RuntimeError&) {
            // A window whose fit degenerates is flagged, not fatal.
            series.distances.row(widx).setConstant(k_nan);
            series.scores.row(widx).setConstant(k_nan);
        }
    }
    return series;
}

DeltaScoreSeries run_stream(const std::map<Channel, TimeSeriesFrame>& frames,
                            const WindowConfig& cfg, Channel channel) {
    if (cfg.stacked) {
        return run_stream(stack_frames(frames), cfg);
    }
    const auto it = frames.find(channel);
    if (it == frames.end()) {
        throw ConfigError("channel " + channel_name(channel) + " not present in input");
    }
    return run_stream(it->second, cfg);
}

} // namespace kmsig::detect
