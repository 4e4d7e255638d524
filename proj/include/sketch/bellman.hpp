#pragma once

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "sketch/features.hpp"
#include "sketch/mrp.hpp"

namespace sketch {

/// Support of the regression distribution; weights are uniform.
struct RegressionGrid {
    std::vector<double> points;
};

RegressionGrid build_regression_grid(double g_min_hat, double g_max_hat, double pad, int count);

/// Raised when the ridge-regularized Gram matrix cannot be inverted reliably.
class SolveError : public std::runtime_error {
public:
    SolveError(const std::string& what, double condition) : std::runtime_error(what), condition_(condition) {}
    double condition() const { return condition_; }

private:
    double condition_;
};

inline constexpr double kMaxGramCondition = 1e14;
inline constexpr double kDefaultRidge = 1e-9;

/**
 * Features evaluated on a regression grid together with the factorized,
 * ridge-regularized Gram matrix C + lambda I. Reused across rewards so each
 * new reward only costs the cross moment C_r and a triangular solve.
 */
class GramSystem {
public:
    GramSystem(const FeatureMap& map, const RegressionGrid& grid, double ridge);

    /// Mean over the grid of phi(r + gamma g) phi(g)^T.
    Eigen::MatrixXd cross_moment(double gamma, double r) const;
    /// Returns X with X (C + lambda I) = rhs.
    Eigen::MatrixXd right_solve(const Eigen::MatrixXd& rhs) const;
    Eigen::MatrixXd coefficients(double gamma, double r) const;

    const Eigen::MatrixXd& gram() const { return gram_; }
    const Eigen::MatrixXd& features() const { return features_; }
    double condition() const { return condition_; }
    double ridge() const { return ridge_; }

private:
    FeatureMap map_;
    std::vector<double> points_;
    double ridge_;
    Eigen::MatrixXd features_;
    Eigen::MatrixXd gram_;
    Eigen::LLT<Eigen::MatrixXd> factor_;
    double condition_;
};

/// argmin_B mean_g ||phi(r + gamma g) - B phi(g)||^2 + lambda ||B||_F^2.
Eigen::MatrixXd solve_bellman_coefficients(const FeatureMap& map, const RegressionGrid& grid, double gamma, double r,
                                           double ridge);

/// Exact coefficients of a polynomial (moment) map: (r + gamma g)^k expanded binomially.
Eigen::MatrixXd polynomial_bellman_coefficients(const FeatureMap& map, double gamma, double r);

enum class CoefficientSource {
    regression,
    /// Binomial closed form; only valid for polynomial maps, whose Gram matrices are
    /// numerically singular beyond small degrees.
    polynomial_closed_form,
};

/**
 * Feature map, regression grid and ridge together with per-reward Bellman
 * coefficient matrices, solved lazily and cached. Copies share the cache.
 */
class BellmanModel {
public:
    BellmanModel(FeatureMap map, RegressionGrid grid, double discount, double ridge = kDefaultRidge,
                 CoefficientSource source = CoefficientSource::regression);

    const FeatureMap& feature_map() const { return *map_; }
    const RegressionGrid& grid() const { return grid_; }
    double discount() const { return discount_; }
    double ridge() const { return ridge_; }
    int dimension() const { return map_->dimension(); }
    CoefficientSource source() const { return source_; }

    /// B_r, computed on first use.
    Eigen::MatrixXd coefficients(double r) const;
    /// B_r without touching the cache, for one-off rewards such as noisy samples.
    Eigen::MatrixXd solve_uncached(double r) const;
    /// E[B_R] for a reward law; gaussian laws use the shared quadrature.
    Eigen::MatrixXd expected_coefficients(const RewardLaw& law,
                                          int quadrature_points = kDefaultRewardQuadrature) const;
    /// Value readout beta with <beta, phi(g)> ~ g on the grid.
    const Eigen::VectorXd& readout() const;
    std::size_t cached_rewards() const;

private:
    struct State;

    std::shared_ptr<const FeatureMap> map_;
    RegressionGrid grid_;
    double discount_;
    double ridge_;
    CoefficientSource source_;
    std::shared_ptr<State> state_;
};

/// Dirac rewards give B_r, finite laws the weighted sum and gaussians a quadrature average.
Eigen::MatrixXd expected_bellman_matrix(const BellmanModel& model, const RewardLaw& law,
                                        int quadrature_points = kDefaultRewardQuadrature);

struct GramPair {
    Eigen::MatrixXd gram;
    Eigen::MatrixXd cross;
};

/// Closed-form C and C_r for gaussian translation features under Lebesgue measure.
GramPair analytic_gaussian_lebesgue(const FeatureMap& map, double gamma, double r);

Eigen::VectorXd value_readout(const FeatureMap& map, const RegressionGrid& grid, double ridge);

struct BellmanDiagnostics {
    /// max over grid and rewards of ||phi(r + gamma g) - B_r phi(g)||_inf
    double worst_residual = 0.0;
    /// Same, under the Euclidean norm.
    double worst_residual_l2 = 0.0;
    double spectral_radius = 0.0;
    double operator_norm = 0.0;
    double max_real_eigenvalue = 0.0;
    /// Eigenvalues of each B_r, in the order of the requested rewards.
    std::vector<std::vector<std::complex<double>>> eigenvalues;
    std::vector<std::vector<double>> singular_values;
};

BellmanDiagnostics bellman_diagnostics(const FeatureMap& map, const RegressionGrid& grid, double gamma,
                                       const std::vector<double>& rewards, double ridge = kDefaultRidge);

/// Worst-case residual of a model's own coefficients over its grid for the given rewards.
double worst_regression_residual(const BellmanModel& model, const std::vector<double>& rewards);

/// True iff the worst-case regression residual for the model's map is below `tolerance`.
bool bellman_closed_check(const FeatureMap& map, const BellmanModel& model, double tolerance,
                          const std::vector<double>& rewards = {0.0, 1.0, -0.5});

}  // namespace sketch
