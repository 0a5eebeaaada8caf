#pragma once

#include <Eigen/Dense>
#include <limits>
#include <optional>
#include <string>

namespace kmsig::koopman {

enum class Backend { dmd, arnoldi, hankel_dmd };

std::string backend_name(Backend b);
std::optional<Backend> backend_from_name(const std::string& name);

// Learning-window input: p sensors x m time steps.
struct SnapshotMatrix {
    Eigen::MatrixXd data;
    double sample_period = 0.0;

    void validate(int min_cols = 2) const;
};

struct FitOptions {
    double rank_energy = 0.999; // cumulative singular-value energy kept
    int max_rank = 30;
    int delay = 10; // hankel_dmd embedding depth
    // Absolute floor for the leading singular value; at or below it the window
    // is treated as having no dynamics (zero_dynamics flag). 0 keeps only the
    // exact-zero check. Callers fitting residual sequences set this to a small
    // multiple of the scale of the data the residuals came from.
    double zero_threshold = 0.0;
    // Modes with |lambda| above this are discarded after the fit and the
    // amplitudes are re-solved on the survivors. Short windows that contain a
    // discontinuity otherwise sprout spurious growing modes whose powers
    // swamp every stable mode over the prediction horizon. If the cap would
    // discard every mode, the slowest one is kept so the model still
    // predicts. Infinity disables the cap.
    double max_magnitude = std::numeric_limits<double>::infinity();
};

// Fitted linear predictor in modal form: x_k ~ Re(sum_j phi_j lambda_j^k b_j),
// anchored so that k = 0 is the first learning-window snapshot.
struct KoopmanModel {
    Eigen::VectorXcd eigenvalues; // r
    Eigen::MatrixXcd modes;       // p x r, unit-norm columns
    Eigen::VectorXcd amplitudes;  // r
    int rank = 0;
    Backend backend = Backend::dmd;
    int delay = 0;
    double sample_period = 0.0;
    // Set when every singular value fell below the machine-scaled threshold;
    // the model then predicts identically zero.
    bool zero_dynamics = false;
};

KoopmanModel fit(const SnapshotMatrix& snapshots, Backend backend,
                 const FitOptions& options = {});

// Predicted states for steps first_step .. first_step+length-1 from the fit
// anchor (step 0 = first learning snapshot). Throws if the modal sum overflows.
Eigen::MatrixXd predict_window(const KoopmanModel& model, int first_step, int length);

// Steps 1..horizon, per the model anchoring convention.
Eigen::MatrixXd predict(const KoopmanModel& model, int horizon);

enum class ModeAggregation { incoherent, coherent };

// Per-sensor, per-step modal content over steps 1..horizon.
// incoherent: V[i,k] = sum_j |phi_j[i]| |lambda_j|^k |b_j| (non-negative).
// coherent:   V[i,k] = |sum_j phi_j[i] lambda_j^k b_j|.
Eigen::MatrixXd mode_amplitude_matrix(const KoopmanModel& model, int horizon,
                                      ModeAggregation agg = ModeAggregation::incoherent);

} // namespace kmsig::koopman
