#pragma once

#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sketch/features.hpp"
#include "sketch/metrics.hpp"

namespace sketch {

struct ImputationSettings {
    int max_iters = 50000;
    /// Stop once the Frank-Wolfe duality gap, an upper bound on the distance to the
    /// optimal objective, falls below this value.
    double tol = 1e-8;
    /// Extra solves from vertex starts; the best objective wins.
    int restarts = 0;
    /// Accelerated-gradient iterations before the active-set finishing phase; 0 disables it.
    int polish_after = 200;
};

struct ImputationResult {
    DiscreteDistribution distribution;
    double objective = 0.0;
    double gap = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Euclidean projection onto the probability simplex (sort-based, exact).
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v);

/**
 * min_{p in simplex} || sum_i p_i phi(z_i) - u ||^2 over a fixed support,
 * solved by accelerated projected gradient with monotone restarts. When the
 * gradient phase stalls, a primal active-set phase warm-started from its
 * iterate finishes the solve. The feature columns and their Gram matrix are
 * computed once so the same support can be reused across targets.
 */
class ImputationProblem {
public:
    ImputationProblem(const FeatureMap& map, std::vector<double> support);

    ImputationResult solve(const Eigen::VectorXd& target, const ImputationSettings& settings = {}) const;
    double objective(const Eigen::VectorXd& weights, const Eigen::VectorXd& target) const;

    const std::vector<double>& support() const { return support_; }
    /// Column i holds phi(z_i).
    const Eigen::MatrixXd& features() const { return features_; }
    const Eigen::MatrixXd& gram() const { return gram_; }

private:
    struct Run {
        Eigen::VectorXd weights;
        double objective;
        double gap;
        int iterations;
        bool converged;
    };
    Run run(const Eigen::VectorXd& start, const Eigen::VectorXd& target, const ImputationSettings& settings) const;
    Run accelerated(Eigen::VectorXd p, const Eigen::VectorXd& linear, double constant, double tol, int max_iters) const;
    Run active_set(Eigen::VectorXd p, const Eigen::VectorXd& linear, double constant, double tol) const;

    std::vector<double> support_;
    Eigen::MatrixXd features_;
    Eigen::MatrixXd gram_;
    double step_;
};

ImputationResult impute_distribution(const FeatureMap& map, std::span<const double> support, const Eigen::VectorXd& u,
                                     const ImputationSettings& settings = {});

/// `n_jitters` copies of an evenly spaced grid with independent Uniform[-d/2, d/2] noise per point.
std::vector<std::vector<double>> jittered_supports(std::span<const double> base_support, int n_jitters,
                                                   std::mt19937_64& rng);

}  // namespace sketch
