#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "kmsig/divergence.hpp"
#include "kmsig/frame.hpp"
#include "kmsig/koopman.hpp"

namespace kmsig::detect {

struct WindowConfig {
    int learning_len = 240;
    int prediction_len = 40;
    int stride = 5;
    koopman::Backend backend = koopman::Backend::dmd;
    DivergenceKind divergence = DivergenceKind::kl;
    double tau = 5.0;
    double epsilon = 1e-12;
    koopman::FitOptions fit;
    // Stack every supplied channel row-wise instead of scoring one channel;
    // sensor ids gain a channel suffix.
    bool stacked = false;

    void validate() const; // throws ConfigError
};

// Row-normalized modal content: each row is a pmf over the prediction window.
struct NormalizedKM {
    Eigen::MatrixXd rows;     // p x w, rows sum to 1
    Eigen::VectorXd centroid; // w, arithmetic mean of rows
};

struct DeltaScores {
    Eigen::VectorXd distances; // p, >= 0
    Eigen::VectorXd scores;    // p, in (0, 1]
};

// Per-window score rows over a moving window. A window whose model fit failed
// carries NaN entries; argmin() reports -1 for such rows.
struct DeltaScoreSeries {
    std::vector<std::string> sensor_ids;
    std::vector<double> window_times; // start of each prediction interval, seconds
    Eigen::MatrixXd scores;           // windows x p
    Eigen::MatrixXd distances;        // windows x p

    int window_count() const { return static_cast<int>(window_times.size()); }
    bool failed(int window) const;
    // Index of the minimum score in a window, -1 if the window failed.
    int argmin(int window) const;
    // Gap between the runner-up and the minimum score (0 if p < 2 or failed).
    double margin(int window) const;
};

Eigen::MatrixXd error_sequence(const Eigen::MatrixXd& observed,
                               const Eigen::MatrixXd& predicted);

// Column-normalize (zero columns become uniform 1/p), then row-normalize
// (zero rows become uniform 1/w). Input must be non-negative.
NormalizedKM normalize_two_step(const Eigen::MatrixXd& V);

DeltaScores delta_scores(const NormalizedKM& nkm, DivergenceKind kind,
                         double tau, double epsilon);

// Number of moving windows a stream of m samples yields.
int window_count(int samples, const WindowConfig& cfg);

// Steps 1-3 over a moving window: fit a predictor on each learning window,
// form the prediction-error sequence, fit the error's modal content, and
// score every sensor by divergence from the centroid.
DeltaScoreSeries run_stream(const std::map<Channel, TimeSeriesFrame>& frames,
                            const WindowConfig& cfg, Channel channel);

// Single-frame convenience wrapper.
DeltaScoreSeries run_stream(const TimeSeriesFrame& frame, const WindowConfig& cfg);

} // namespace kmsig::detect
