#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

namespace kmsig::detect {

enum class DivergenceKind { kl, js };

std::string divergence_name(DivergenceKind k);
std::optional<DivergenceKind> divergence_from_name(const std::string& name);

// KL(a || b) with the second argument smoothed to (b + eps)/(1 + w*eps) so
// zero bins cannot blow up; 0 * ln(0/x) terms contribute 0. Natural log.
double kl_divergence(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double eps);

// Jensen-Shannon divergence (1/2)KL(a||m) + (1/2)KL(b||m), m = (a+b)/2.
// Bounded by ln 2; needs no smoothing. Natural log.
double js_divergence(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Dispatch on kind. Both inputs must be pmfs (non-negative, sum 1).
double divergence(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                  DivergenceKind kind, double eps);

} // namespace kmsig::detect
