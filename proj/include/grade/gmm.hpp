#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grade/util.hpp"

namespace grade {

using Point = std::vector<double>;
using Points = std::vector<Point>;

struct GmmOptions {
    std::size_t k = 2;
    std::uint64_t seed = 7;
    std::size_t max_iters = 200;
    double tol = 1e-6;
    double variance_floor = 1e-6;
};

/// Diagonal-covariance Gaussian mixture.
struct GmmModel {
    std::size_t k = 0;
    std::size_t dim = 0;
    std::vector<double> weights;
    Points means;
    Points variances;
    /// Total log-likelihood after each E-step. Restarts when a collapsed
    /// component is re-seeded, so it is non-decreasing as recorded.
    std::vector<double> log_likelihood_trace;
    std::size_t iterations = 0;
    std::size_t reinitializations = 0;
    bool converged = false;
};

void to_json(json& j, const GmmModel& m);
void from_json(const json& j, GmmModel& m);

/// EM from k-means++ seeding. Stops when the log-likelihood gain drops
/// below tol or after max_iters E-steps.
GmmModel fit_gmm(const Points& data, const GmmOptions& options);

/// Per-point log density under each component plus log weight, i.e.
/// log(w_j) + log N(x | mu_j, diag(var_j)).
std::vector<double> component_log_joint(const GmmModel& model, const Point& x);

/// E-step: rows sum to 1.
Points responsibilities(const GmmModel& model, const Points& data);

double log_likelihood(const GmmModel& model, const Points& data);

/// Bayesian information criterion; lower is better.
double bic(const GmmModel& model, const Points& data);

/// Fits k in [k_min, k_max] and returns the k with the lowest BIC.
std::size_t select_k_bic(const Points& data, std::size_t k_min, std::size_t k_max, const GmmOptions& base);

/// ceil(n / 20) clamped to [2, 64], never more than n (and at least 1).
std::size_t default_k(std::size_t n);

struct ClusterAssignment {
    std::string claim_id;
    std::vector<double> responsibilities;
    std::vector<std::size_t> memberships;  // ascending; always contains the argmax
};

void to_json(json& j, const ClusterAssignment& a);
void from_json(const json& j, ClusterAssignment& a);

/// Soft memberships: argmax plus every component with responsibility >= tau.
std::vector<ClusterAssignment> assign(const GmmModel& model, const Points& data, const std::vector<std::string>& ids,
                                      double tau = 0.2);

Points to_points(const std::vector<std::vector<float>>& vectors);

}  // namespace grade
