#include "kmsig/divergence.hpp"

#include <cmath>

#include "kmsig/errors.hpp"

namespace kmsig::detect {

namespace {

constexpr double k_pmf_sum_tol = 1e-6;

void require_pmf(const Eigen::VectorXd& v, const char* label) {
    if (!v.allFinite()) {
        throw ConfigError(std::string(label) + " contains non-finite entries");
    }
    if ((v.array() < 0.0).any()) {
        throw ConfigError(std::string(label) + " has negative entries");
    }
    if (std::abs(v.sum() - 1.0) > k_pmf_sum_tol) {
        throw ConfigError(std::string(label) + " does not sum to 1");
    }
}

// Sum of a_k ln(a_k / b_k) assuming b_k > 0 wherever a_k > 0.
double kl_terms(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double sum = 0.0;
    for (Eigen::Index k = 0; k < a.size(); ++k) {
        if (a(k) > 0.0) {
            sum += a(k) * std::log(a(k) / b(k));
        }
    }
    // Gibbs' inequality guarantees non-negativity for equal-mass inputs;
    // clamp the roundoff remainder.
    return sum < 0.0 ? 0.0 : sum;
}

} // namespace

std::string divergence_name(DivergenceKind k) {
    return k == DivergenceKind::kl ? "kl" : "js";
}

std::optional<DivergenceKind> divergence_from_name(const std::string& name) {
    if (name == "kl") return DivergenceKind::kl;
    if (name == "js") return DivergenceKind::js;
    return std::nullopt;
}

double kl_divergence(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double eps) {
    if (a.size() != b.size()) {
        throw ConfigError("pmf length mismatch");
    }
    require_pmf(a, "first pmf");
    require_pmf(b, "second pmf");
    if (eps <= 0.0) {
        throw ConfigError("smoothing epsilon must be positive");
    }
    const double w = static_cast<double>(b.size());
    const Eigen::VectorXd smoothed = (b.array() + eps) / (1.0 + w * eps);
    return kl_terms(a, smoothed);
}

double js_divergence(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) {
        throw ConfigError("pmf length mismatch");
    }
    require_pmf(a, "first pmf");
    require_pmf(b, "second pmf");
    const Eigen::VectorXd m = 0.5 * (a + b);
    return 0.5 * kl_terms(a, m) + 0.5 * kl_terms(b, m);
}

double divergence(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                  DivergenceKind kind, double eps) {
    return kind == DivergenceKind::kl ? kl_divergence(a, b, eps) : js_divergence(a, b);
}

} // namespace kmsig::detect
