#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "sketch/features.hpp"
#include "sketch/metrics.hpp"
#include "sketch/mrp.hpp"

namespace sketch {

inline constexpr double kDefaultTruncationTol = 1e-4;
inline constexpr int kGaussianHorizonFloor = 200;

/// Smallest L with max_abs_reward * gamma^L / (1 - gamma) <= tol.
int required_horizon(double max_abs_reward, double gamma, double tol);
/// As above using the MRP's largest absolute reward mean; stochastic-reward MRPs use at least 200 steps.
int required_horizon(const Mrp& mrp, double tol = kDefaultTruncationTol);

/// Monte Carlo return samples per state, sorted ascending.
struct GroundTruth {
    std::vector<std::vector<double>> returns;
    std::vector<DiscreteDistribution> distributions;
    int horizon = 0;
    int samples_per_state = 0;
    std::uint64_t seed = 0;

    int num_states() const { return static_cast<int>(returns.size()); }
    double min_return() const;
    double max_return() const;
};

/// Builds sorted sample sets and empirical laws from raw per-state samples.
GroundTruth make_ground_truth(std::vector<std::vector<double>> returns, int horizon, std::uint64_t seed);

/**
 * First-visit Monte Carlo: `samples_per_state` truncated rollouts started at
 * every state. Each state draws from its own generator seeded by (seed, state),
 * so results do not depend on evaluation order.
 */
GroundTruth monte_carlo_ground_truth(const Mrp& mrp, int samples_per_state, std::uint64_t seed,
                                     double truncation_tol = kDefaultTruncationTol);

/// Per-state sample mean of phi, one column per state.
Eigen::MatrixXd ground_truth_embedding(const GroundTruth& gt, const FeatureMap& map);

/// CSV with columns state,sample_index,return.
void write_ground_truth_csv(const GroundTruth& gt, const std::filesystem::path& path);
GroundTruth read_ground_truth_csv(const std::filesystem::path& path, int horizon, std::uint64_t seed);

}  // namespace sketch
