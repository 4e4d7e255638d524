#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "sketch/bellman.hpp"
#include "sketch/features.hpp"
#include "sketch/imputation.hpp"
#include "sketch/metrics.hpp"
#include "sketch/mrp.hpp"

namespace sketch {

/// Per-state sketch estimates; column x holds U(x).
struct SketchTable {
    Eigen::MatrixXd values;
    int iteration = 0;

    int num_states() const { return static_cast<int>(values.cols()); }
    int dimension() const { return static_cast<int>(values.rows()); }
    Eigen::VectorXd operator[](int state) const { return values.col(state); }
};

/// Every state set to phi(0), the sketch of a zero return.
SketchTable initial_table(const FeatureMap& map, int num_states);

/**
 * Sketch Bellman operator for a fixed MRP and model. Since rewards depend only
 * on the current state, U(x) <- E[B_R | x] sum_x' P(x'|x) U(x'), so one expected
 * coefficient matrix per state is precomputed. Terminal states stay at phi(0).
 */
class SketchDpOperator {
public:
    SketchDpOperator(const Mrp& mrp, const BellmanModel& model, int quadrature_points = kDefaultRewardQuadrature);

    SketchTable step(const SketchTable& table) const;

    int num_states() const { return static_cast<int>(expected_.size()); }
    int dimension() const { return static_cast<int>(phi_zero_.size()); }
    const Eigen::MatrixXd& expected_coefficients(int state) const { return expected_[state]; }

private:
    Eigen::MatrixXd transition_t_;
    std::vector<Eigen::MatrixXd> expected_;
    std::vector<bool> terminal_;
    Eigen::VectorXd phi_zero_;
};

SketchTable sketch_dp_step(const SketchTable& table, const Mrp& mrp, const BellmanModel& model);

struct SketchDpRun {
    SketchTable table;
    /// Tables after 0, 1, ..., k steps when recording was requested.
    std::vector<SketchTable> trajectory;
    /// Sup-norm change of the last step.
    double last_change = 0.0;
    bool converged = false;
};

inline constexpr int kDefaultDpIterations = 200;

/// Applies the operator up to `iterations` times, stopping early once the sup change drops below `stop_tol`.
SketchDpRun run_sketch_dp(const SketchDpOperator& op, SketchTable start, int iterations = kDefaultDpIterations,
                          double stop_tol = 0.0, bool record_trajectory = false);

/// U(x) <- (1 - alpha) U(x) + alpha B_r U(x'), with phi(0) standing in for a terminal x'.
void sketch_td_update(SketchTable& table, const Transition& t, const Mrp& mrp, const BellmanModel& model,
                      double alpha);

struct TdSettings {
    double alpha = 0.1;
    int sweeps = 100000;
    std::uint64_t seed = 0;
};

/**
 * Synchronous Sketch-TD: each sweep samples one transition per non-terminal state
 * in index order, computes every target from the table as it stood at the start
 * of the sweep, then applies all updates.
 */
SketchTable run_sketch_td(const Mrp& mrp, const BellmanModel& model, SketchTable start, const TdSettings& settings);

/// Categorical distributions on a shared support; column x holds the weights of state x.
struct CategoricalTable {
    std::vector<double> support;
    Eigen::MatrixXd probs;
    int iteration = 0;

    int num_states() const { return static_cast<int>(probs.cols()); }
    DiscreteDistribution distribution(int state) const;
};

/// All states at the projection of a point mass at zero.
CategoricalTable initial_categorical_table(std::vector<double> support, int num_states);

/// Distributional Bellman backup followed by the two-nearest-atom projection onto the table's support.
CategoricalTable categorical_dp_step(const CategoricalTable& table, const Mrp& mrp,
                                     int quadrature_points = kDefaultRewardQuadrature);

CategoricalTable run_categorical_dp(const Mrp& mrp, CategoricalTable start, int iterations = kDefaultDpIterations,
                                    int quadrature_points = kDefaultRewardQuadrature);

/**
 * Imputation-based update: each state's sketch is imputed to a categorical
 * distribution on `support`, backed up exactly and embedded again. Terminal
 * successors contribute a point mass at zero.
 */
class SfdpOperator {
public:
    SfdpOperator(const Mrp& mrp, const BellmanModel& model, std::vector<double> support,
                 ImputationSettings settings = {}, int quadrature_points = kDefaultRewardQuadrature);

    SketchTable step(const SketchTable& table) const;

    /// Imputations that stopped before reaching the solver tolerance, summed over all steps so far.
    long failed_imputations() const { return failed_; }

private:
    const Mrp* mrp_;
    FeatureMap map_;
    ImputationProblem problem_;
    ImputationSettings settings_;
    std::vector<std::vector<WeightedReward>> rewards_;
    Eigen::VectorXd phi_zero_;
    mutable long failed_ = 0;
};

SketchTable sfdp_step(const SketchTable& table, const Mrp& mrp, const BellmanModel& model,
                      const std::vector<double>& support, const ImputationSettings& settings = {});

}  // namespace sketch
