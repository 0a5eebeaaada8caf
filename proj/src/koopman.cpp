#include "kmsig/koopman.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "kmsig/errors.hpp"

namespace kmsig::koopman {

namespace {

constexpr double k_eigenvalue_floor = 1e-12; // |lambda| below this is dropped

struct TruncatedSvd {
    Eigen::MatrixXd U;
    Eigen::MatrixXd V;
    Eigen::VectorXd sigma;
    int rank = 0;
    bool collapsed = false;
};

// Rank = smallest r whose cumulative sigma^2 energy reaches rank_energy,
// capped at max_rank and at the numerical rank.
TruncatedSvd truncated_svd(const Eigen::MatrixXd& A, double rank_energy, int max_rank,
                           double zero_threshold) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();

    TruncatedSvd out;
    const double sigma_max = sv.size() > 0 ? sv(0) : 0.0;
    const double floor = std::max(zero_threshold, 1e-300);
    if (sigma_max <= floor) {
        out.collapsed = true;
        return out;
    }

    const double rel_cut =
        static_cast<double>(std::max(A.rows(), A.cols())) *
        std::numeric_limits<double>::epsilon() * sigma_max;
    int numerical_rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > rel_cut) {
            ++numerical_rank;
        }
    }

    const double total_energy = sv.squaredNorm();
    double cum = 0.0;
    int energy_rank = numerical_rank;
    for (int i = 0; i < numerical_rank; ++i) {
        cum += sv(i) * sv(i);
        if (cum >= rank_energy * total_energy) {
            energy_rank = i + 1;
            break;
        }
    }

    out.rank = std::max(1, std::min({energy_rank, numerical_rank, max_rank}));
    out.U = svd.matrixU().leftCols(out.rank);
    out.V = svd.matrixV().leftCols(out.rank);
    out.sigma = sv.head(out.rank);
    return out;
}

// Drop eigenvalues below the floor and unit-normalize the surviving mode
// columns, folding the scale into the amplitudes.
void compact_modes(Eigen::VectorXcd& lambda, Eigen::MatrixXcd& phi, Eigen::VectorXcd& b) {
    const Eigen::Index r_in = lambda.size();
    Eigen::Index kept = 0;
    for (Eigen::Index j = 0; j < r_in; ++j) {
        if (std::abs(lambda(j)) < k_eigenvalue_floor) {
            continue;
        }
        const double norm = phi.col(j).norm();
        if (norm < 1e-300) {
            continue;
        }
        lambda(kept) = lambda(j);
        phi.col(kept) = phi.col(j) / norm;
        b(kept) = b(j) * norm;
        ++kept;
    }
    lambda.conservativeResize(kept);
    phi.conservativeResize(Eigen::NoChange, kept);
    b.conservativeResize(kept);
}

Eigen::VectorXcd solve_amplitudes(const Eigen::MatrixXcd& phi, const Eigen::VectorXd& x0) {
    if (phi.cols() == 0) {
        return Eigen::VectorXcd();
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(phi);
    return cod.solve(x0.cast<std::complex<double>>());
}

// Least-squares amplitudes over every snapshot, min_b sum_k |x_k - Phi D^k b|^2
// via the r x r normal equations. Anchoring b on the first snapshot alone lets
// modes near the unit circle amplify any amplitude error by |lambda|^m at the
// prediction boundary. Falls back to the first-snapshot anchor when the
// eigenvalue powers overflow.
Eigen::VectorXcd solve_amplitudes_global(const Eigen::MatrixXcd& phi,
                                         const Eigen::VectorXcd& lambda,
                                         const Eigen::MatrixXd& X) {
    const Eigen::Index r = phi.cols();
    if (r == 0) {
        return Eigen::VectorXcd();
    }
    const Eigen::Index m = X.cols();
    const Eigen::MatrixXcd gram = phi.adjoint() * phi;
    Eigen::MatrixXcd G = Eigen::MatrixXcd::Zero(r, r);
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(r);
    Eigen::VectorXcd power = Eigen::VectorXcd::Ones(r);
    for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::VectorXcd weighted = phi.adjoint() * X.col(k);
        rhs += power.conjugate().cwiseProduct(weighted);
        G += power.conjugate().asDiagonal() * gram * power.asDiagonal();
        power = power.cwiseProduct(lambda);
    }
    if (!G.allFinite() || !rhs.allFinite()) {
        return solve_amplitudes(phi, X.col(0));
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(G);
    Eigen::VectorXcd b = cod.solve(rhs);
    if (!b.allFinite()) {
        return solve_amplitudes(phi, X.col(0));
    }
    return b;
}

// Indices of modes growing no faster than max_magnitude; the slowest mode
// alone when every one is over the cap. Short windows that contain a
// discontinuity sprout spurious growing modes whose powers would swamp every
// stable mode over the prediction horizon.
std::vector<Eigen::Index> modes_within_cap(const Eigen::VectorXcd& lambda, double max_magnitude) {
    std::vector<Eigen::Index> kept;
    for (Eigen::Index j = 0; j < lambda.size(); ++j) {
        if (std::abs(lambda(j)) <= max_magnitude) {
            kept.push_back(j);
        }
    }
    if (kept.empty() && lambda.size() > 0) {
        Eigen::Index slowest = 0;
        for (Eigen::Index j = 1; j < lambda.size(); ++j) {
            if (std::abs(lambda(j)) < std::abs(lambda(slowest))) {
                slowest = j;
            }
        }
        kept.push_back(slowest);
    }
    return kept;
}

// Remove capped-out modes in place; callers re-solve amplitudes on the
// survivors.
void drop_fast_modes(Eigen::VectorXcd& lambda, Eigen::MatrixXcd& phi, double max_magnitude) {
    if (lambda.size() == 0 || !(max_magnitude < std::numeric_limits<double>::infinity())) {
        return;
    }
    const std::vector<Eigen::Index> kept = modes_within_cap(lambda, max_magnitude);
    if (static_cast<Eigen::Index>(kept.size()) == lambda.size()) {
        return;
    }
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(kept.size()); ++k) {
        lambda(k) = lambda(kept[k]);
        phi.col(k) = phi.col(kept[k]);
    }
    lambda.conservativeResize(kept.size());
    phi.conservativeResize(Eigen::NoChange, kept.size());
}

// Exact DMD on snapshot pairs of X; modes stay in the row space of X.
KoopmanModel fit_dmd_core(const Eigen::MatrixXd& X, double sample_period,
                          const FitOptions& options, double zero_threshold) {
    const Eigen::Index m = X.cols();
    KoopmanModel model;
    model.backend = Backend::dmd;
    model.sample_period = sample_period;

    const Eigen::MatrixXd X1 = X.leftCols(m - 1);
    const Eigen::MatrixXd X2 = X.rightCols(m - 1);

    TruncatedSvd svd = truncated_svd(X1, options.rank_energy, options.max_rank, zero_threshold);
    if (svd.collapsed) {
        model.zero_dynamics = true;
        model.modes = Eigen::MatrixXcd(X.rows(), 0);
        return model;
    }

    const Eigen::MatrixXd lifted = X2 * svd.V * svd.sigma.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd a_tilde = svd.U.transpose() * lifted;

    Eigen::EigenSolver<Eigen::MatrixXd> es(a_tilde);
    Eigen::VectorXcd lambda = es.eigenvalues();
    Eigen::MatrixXcd phi = lifted.cast<std::complex<double>>() * es.eigenvectors();
    Eigen::VectorXcd b = Eigen::VectorXcd::Ones(lambda.size());

    compact_modes(lambda, phi, b);
    drop_fast_modes(lambda, phi, options.max_magnitude);
    b = solve_amplitudes_global(phi, lambda, X);

    model.eigenvalues = std::move(lambda);
    model.modes = std::move(phi);
    model.amplitudes = std::move(b);
    model.rank = static_cast<int>(model.eigenvalues.size());
    return model;
}

// Companion-matrix (Krylov) formulation: express the last snapshot as a
// combination of the preceding ell snapshots, where ell is the numerical rank
// of the window; eigenvalues come from the ell x ell companion matrix and
// modes from a global Vandermonde least-squares fit.
KoopmanModel fit_arnoldi(const Eigen::MatrixXd& X, double sample_period,
                         const FitOptions& options, double zero_threshold) {
    const Eigen::Index m = X.cols();
    KoopmanModel model;
    model.backend = Backend::arnoldi;
    model.sample_period = sample_period;

    TruncatedSvd svd =
        truncated_svd(X.leftCols(m - 1), options.rank_energy, options.max_rank, zero_threshold);
    if (svd.collapsed) {
        model.zero_dynamics = true;
        model.modes = Eigen::MatrixXcd(X.rows(), 0);
        return model;
    }
    const Eigen::Index ell = svd.rank;

    // The order-ell recurrence is shift-invariant for linear dynamics, so the
    // coefficients are pooled over every length-ell shift of the window rather
    // than read off the final snapshot alone.
    const Eigen::Index p = X.rows();
    const Eigen::Index shifts = m - ell;
    Eigen::MatrixXd stacked(p * shifts, ell);
    Eigen::VectorXd target(p * shifts);
    for (Eigen::Index k = 0; k < shifts; ++k) {
        for (Eigen::Index i = 0; i < ell; ++i) {
            stacked.block(k * p, i, p, 1) = X.col(k + i);
        }
        target.segment(k * p, p) = X.col(k + ell);
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(stacked);
    const Eigen::VectorXd c = cod.solve(target);

    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(ell, ell);
    for (Eigen::Index i = 0; i + 1 < ell; ++i) {
        companion(i + 1, i) = 1.0;
    }
    companion.col(ell - 1) = c;

    Eigen::EigenSolver<Eigen::MatrixXd> es(companion);
    Eigen::VectorXcd lambda = es.eigenvalues();

    Eigen::Index kept = 0;
    for (Eigen::Index j = 0; j < lambda.size(); ++j) {
        if (std::abs(lambda(j)) >= k_eigenvalue_floor) {
            lambda(kept++) = lambda(j);
        }
    }
    lambda.conservativeResize(kept);
    if (kept == 0) {
        model.rank = 0;
        model.eigenvalues = Eigen::VectorXcd();
        model.modes = Eigen::MatrixXcd(X.rows(), 0);
        model.amplitudes = Eigen::VectorXcd();
        return model;
    }
    if (options.max_magnitude < std::numeric_limits<double>::infinity()) {
        const std::vector<Eigen::Index> within = modes_within_cap(lambda, options.max_magnitude);
        for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(within.size()); ++k) {
            lambda(k) = lambda(within[k]);
        }
        lambda.conservativeResize(within.size());
        kept = lambda.size();
    }

    // Ritz vectors v_j with x_k ~ sum_j v_j lambda_j^k over the whole window.
    Eigen::MatrixXcd vandermonde(kept, m);
    for (Eigen::Index j = 0; j < kept; ++j) {
        std::complex<double> power = 1.0;
        for (Eigen::Index k = 0; k < m; ++k) {
            vandermonde(j, k) = power;
            power *= lambda(j);
        }
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> vcod(
        vandermonde.transpose().eval());
    const Eigen::MatrixXcd ritz =
        vcod.solve(X.transpose().cast<std::complex<double>>().eval()).transpose();

    Eigen::MatrixXcd phi = ritz;
    Eigen::VectorXcd b = Eigen::VectorXcd::Ones(kept);
    compact_modes(lambda, phi, b); // folds each Ritz-vector norm into b

    model.eigenvalues = std::move(lambda);
    model.modes = std::move(phi);
    model.amplitudes = std::move(b);
    model.rank = static_cast<int>(model.eigenvalues.size());
    return model;
}

KoopmanModel fit_hankel(const Eigen::MatrixXd& X, double sample_period,
                        const FitOptions& options, double zero_threshold) {
    const Eigen::Index p = X.rows();
    const Eigen::Index m = X.cols();
    const Eigen::Index d = options.delay;

    Eigen::MatrixXd hankel(d * p, m - d + 1);
    for (Eigen::Index k = 0; k + d <= m; ++k) {
        for (Eigen::Index j = 0; j < d; ++j) {
            hankel.block(j * p, k, p, 1) = X.col(k + j);
        }
    }

    KoopmanModel model = fit_dmd_core(hankel, sample_period, options, zero_threshold);
    model.backend = Backend::hankel_dmd;
    model.delay = static_cast<int>(d);
    if (model.zero_dynamics || model.rank == 0) {
        model.modes = Eigen::MatrixXcd(p, 0);
        return model;
    }

    // Project embedded modes back to physical coordinates (first block row)
    // and restore the unit-norm mode convention.
    Eigen::VectorXcd lambda = model.eigenvalues;
    Eigen::MatrixXcd phi = model.modes.topRows(p).eval();
    Eigen::VectorXcd b = model.amplitudes;
    compact_modes(lambda, phi, b);

    model.eigenvalues = std::move(lambda);
    model.modes = std::move(phi);
    model.amplitudes = std::move(b);
    model.rank = static_cast<int>(model.eigenvalues.size());
    return model;
}

} // namespace

std::string backend_name(Backend b) {
    switch (b) {
    case Backend::dmd: return "dmd";
    case Backend::arnoldi: return "arnoldi";
    case Backend::hankel_dmd: return "hankel";
    }
    return "unknown";
}

std::optional<Backend> backend_from_name(const std::string& name) {
    if (name == "dmd") return Backend::dmd;
    if (name == "arnoldi") return Backend::arnoldi;
    if (name == "hankel" || name == "hankel_dmd") return Backend::hankel_dmd;
    return std::nullopt;
}

void SnapshotMatrix::validate(int min_cols) const {
    if (data.cols() < min_cols) {
        throw ConfigError("snapshot matrix needs at least " + std::to_string(min_cols) +
                          " columns, got " + std::to_string(data.cols()));
    }
    if (data.rows() < 1) {
        throw ConfigError("snapshot matrix has no rows");
    }
    if (!data.allFinite()) {
        throw RuntimeError("snapshot matrix contains non-finite values");
    }
}

KoopmanModel fit(const SnapshotMatrix& snapshots, Backend backend, const FitOptions& options) {
    if (options.rank_energy <= 0.0 || options.rank_energy > 1.0) {
        throw ConfigError("rank_energy must lie in (0, 1]");
    }
    if (options.max_rank < 1) {
        throw ConfigError("max_rank must be >= 1");
    }
    if (!(options.max_magnitude > 0.0)) {
        throw ConfigError("max_magnitude must be positive");
    }
    const int min_cols = backend == Backend::hankel_dmd ? options.delay + 2 : 2;
    if (backend == Backend::hankel_dmd && options.delay < 1) {
        throw ConfigError("hankel delay must be >= 1");
    }
    snapshots.validate(min_cols);

    switch (backend) {
    case Backend::dmd:
        return fit_dmd_core(snapshots.data, snapshots.sample_period, options,
                            options.zero_threshold);
    case Backend::arnoldi:
        return fit_arnoldi(snapshots.data, snapshots.sample_period, options,
                           options.zero_threshold);
    case Backend::hankel_dmd:
        return fit_hankel(snapshots.data, snapshots.sample_period, options,
                          options.zero_threshold);
    }
    throw ConfigError("unknown backend");
}

Eigen::MatrixXd predict_window(const KoopmanModel& model, int first_step, int length) {
    if (length < 1) {
        throw ConfigError("prediction length must be >= 1");
    }
    const Eigen::Index p = model.modes.rows();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(p, length);
    if (model.zero_dynamics || model.rank == 0) {
        return out;
    }

    const Eigen::Index r = model.eigenvalues.size();
    Eigen::VectorXcd state(r);
    for (Eigen::Index j = 0; j < r; ++j) {
        state(j) = std::pow(model.eigenvalues(j), static_cast<double>(first_step)) *
                   model.amplitudes(j);
    }
    for (int k = 0; k < length; ++k) {
        const Eigen::VectorXcd x = model.modes * state;
        if (!x.allFinite()) {
            throw RuntimeError("prediction overflow at step " +
                               std::to_string(first_step + k) +
                               " (unstable eigenvalue at long horizon)");
        }
        out.col(k) = x.real();
        for (Eigen::Index j = 0; j < r; ++j) {
            state(j) *= model.eigenvalues(j);
        }
    }
    return out;
}

Eigen::MatrixXd predict(const KoopmanModel& model, int horizon) {
    return predict_window(model, 1, horizon);
}

Eigen::MatrixXd mode_amplitude_matrix(const KoopmanModel& model, int horizon,
                                      ModeAggregation agg) {
    if (horizon < 1) {
        throw ConfigError("horizon must be >= 1");
    }
    const Eigen::Index p = model.modes.rows();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(p, horizon);
    if (model.zero_dynamics || model.rank == 0) {
        return out;
    }

    if (agg == ModeAggregation::coherent) {
        const Eigen::Index r = model.eigenvalues.size();
        Eigen::VectorXcd state = model.amplitudes;
        for (Eigen::Index j = 0; j < r; ++j) {
            state(j) *= model.eigenvalues(j);
        }
        for (int k = 0; k < horizon; ++k) {
            out.col(k) = (model.modes * state).cwiseAbs();
            for (Eigen::Index j = 0; j < r; ++j) {
                state(j) *= model.eigenvalues(j);
            }
        }
        return out;
    }

    const Eigen::MatrixXd abs_modes = model.modes.cwiseAbs();
    const Eigen::VectorXd abs_b = model.amplitudes.cwiseAbs();
    const Eigen::VectorXd abs_lambda = model.eigenvalues.cwiseAbs();
    Eigen::VectorXd weights = abs_b.cwiseProduct(abs_lambda);
    for (int k = 0; k < horizon; ++k) {
        out.col(k) = abs_modes * weights;
        weights = weights.cwiseProduct(abs_lambda);
    }
    return out;
}

} // namespace kmsig::koopman
