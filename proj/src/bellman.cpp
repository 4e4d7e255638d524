#include "sketch/bellman.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace sketch {

RegressionGrid build_regression_grid(double g_min_hat, double g_max_hat, double pad, int count)
{
    if (count < 2) throw std::invalid_argument("regression grid needs at least 2 points");
    if (!(g_min_hat < g_max_hat)) throw std::invalid_argument("regression grid: g_min_hat must be below g_max_hat");
    if (!(pad >= 0.0)) throw std::invalid_argument("regression grid: pad must be nonnegative");
    const double span = pad * (g_max_hat - g_min_hat);
    return {linspace(g_min_hat - span, g_max_hat + span, count)};
}

GramSystem::GramSystem(const FeatureMap& map, const RegressionGrid& grid, double ridge)
    : map_(map), points_(grid.points), ridge_(ridge)
{
    if (!(ridge >= 0.0)) throw std::invalid_argument("ridge must be nonnegative");
    if (points_.size() < 2) throw std::invalid_argument("regression grid needs at least 2 points");
    features_ = map_.evaluate_columns(points_);
    const double n = static_cast<double>(points_.size());
    gram_ = (features_ * features_.transpose()) / n;

    Eigen::MatrixXd regularized = gram_;
    regularized.diagonal().array() += ridge_;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(regularized, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    condition_ = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(condition_ < kMaxGramCondition))
        throw SolveError("Gram matrix is singular or ill-conditioned (condition estimate " + std::to_string(condition_) +
                             "); widen or refine the regression grid, or raise the ridge",
                         condition_);
    factor_.compute(regularized);
    if (factor_.info() != Eigen::Success) throw SolveError("Gram matrix factorization failed", condition_);
}

Eigen::MatrixXd GramSystem::cross_moment(double gamma, double r) const
{
    std::vector<double> shifted(points_.size());
    std::transform(points_.begin(), points_.end(), shifted.begin(), [&](double g) { return r + gamma * g; });
    const Eigen::MatrixXd targets = map_.evaluate_columns(shifted);
    return (targets * features_.transpose()) / static_cast<double>(points_.size());
}

Eigen::MatrixXd GramSystem::right_solve(const Eigen::MatrixXd& rhs) const
{
    // X (C + lambda I) = rhs  <=>  (C + lambda I) X^T = rhs^T, the Gram being symmetric.
    return factor_.solve(rhs.transpose()).transpose();
}

Eigen::MatrixXd GramSystem::coefficients(double gamma, double r) const
{
    return right_solve(cross_moment(gamma, r));
}

Eigen::MatrixXd solve_bellman_coefficients(const FeatureMap& map, const RegressionGrid& grid, double gamma, double r,
                                           double ridge)
{
    return GramSystem(map, grid, ridge).coefficients(gamma, r);
}

Eigen::MatrixXd polynomial_bellman_coefficients(const FeatureMap& map, double gamma, double r)
{
    const auto* poly = std::get_if<PolynomialFamily>(&map.family());
    if (!poly) throw std::invalid_argument("closed-form coefficients require a polynomial feature map");
    const int m = map.dimension();
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, m);
    for (int k = 0; k <= poly->degree; ++k) {
        double binom = 1.0;  // C(k, j)
        for (int j = 0; j <= k; ++j) {
            b(k, j) = binom * std::pow(r, k - j) * std::pow(gamma, j);
            binom = binom * (k - j) / (j + 1);
        }
    }
    if (auto c = map.constant_index()) b(*c, *c) = 1.0;
    return b;
}

struct BellmanModel::State {
    std::once_flag gram_once;
    std::optional<GramSystem> gram;
    std::mutex mutex;
    std::map<double, Eigen::MatrixXd> cache;
    std::once_flag readout_once;
    Eigen::VectorXd readout;
};

BellmanModel::BellmanModel(FeatureMap map, RegressionGrid grid, double discount, double ridge, CoefficientSource source)
    : map_(std::make_shared<const FeatureMap>(std::move(map))),
      grid_(std::move(grid)),
      discount_(discount),
      ridge_(ridge),
      source_(source),
      state_(std::make_shared<State>())
{
    if (!(discount_ >= 0.0 && discount_ < 1.0)) throw std::invalid_argument("bellman model: discount must lie in [0, 1)");
    if (!(ridge_ >= 0.0)) throw std::invalid_argument("bellman model: ridge must be nonnegative");
    if (source_ == CoefficientSource::polynomial_closed_form && !map_->is_polynomial())
        throw std::invalid_argument("bellman model: closed-form coefficients need a polynomial map");
    if (source_ == CoefficientSource::regression) {
        if (grid_.points.size() < 2) throw std::invalid_argument("bellman model: regression grid needs at least 2 points");
        // Build eagerly so configuration errors surface at construction.
        std::call_once(state_->gram_once, [this] { state_->gram.emplace(*map_, grid_, ridge_); });
    }
}

Eigen::MatrixXd BellmanModel::coefficients(double r) const
{
    {
        std::lock_guard lock(state_->mutex);
        if (auto it = state_->cache.find(r); it != state_->cache.end()) return it->second;
    }
    Eigen::MatrixXd b = solve_uncached(r);
    std::lock_guard lock(state_->mutex);
    return state_->cache.emplace(r, std::move(b)).first->second;
}

namespace {

// The constant output is fit exactly by e_c, so its row is pinned rather than left to absorb ridge bias.
Eigen::MatrixXd pin_constant_row(Eigen::MatrixXd b, const FeatureMap& map)
{
    if (auto c = map.constant_index()) {
        b.row(*c).setZero();
        b(*c, *c) = 1.0;
    }
    return b;
}

}  // namespace

Eigen::MatrixXd BellmanModel::solve_uncached(double r) const
{
    return source_ == CoefficientSource::regression
               ? pin_constant_row(state_->gram->coefficients(discount_, r), *map_)
               : polynomial_bellman_coefficients(*map_, discount_, r);
}

Eigen::MatrixXd BellmanModel::expected_coefficients(const RewardLaw& law, int quadrature_points) const
{
    const auto atoms = discretize_reward(law, quadrature_points);
    if (atoms.size() == 1) return coefficients(atoms.front().value);
    const int m = dimension();
    if (std::holds_alternative<GaussianReward>(law)) {
        // Average the cross moments first; one solve against the cached factorization.
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(m, m);
        if (source_ == CoefficientSource::regression) {
            for (const auto& a : atoms) acc += a.weight * state_->gram->cross_moment(discount_, a.value);
            return pin_constant_row(state_->gram->right_solve(acc), *map_);
        }
        for (const auto& a : atoms) acc += a.weight * polynomial_bellman_coefficients(*map_, discount_, a.value);
        return acc;
    }
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(m, m);
    for (const auto& a : atoms) acc += a.weight * coefficients(a.value);
    return acc;
}

const Eigen::VectorXd& BellmanModel::readout() const
{
    std::call_once(state_->readout_once, [this] {
        if (source_ == CoefficientSource::regression) {
            const GramSystem& gram = *state_->gram;
            Eigen::VectorXd target(dimension());
            Eigen::Map<const Eigen::VectorXd> g(grid_.points.data(), static_cast<Eigen::Index>(grid_.points.size()));
            target = gram.features() * g / static_cast<double>(grid_.points.size());
            state_->readout = gram.right_solve(target.transpose()).transpose();
        } else {
            state_->readout = Eigen::VectorXd::Zero(dimension());
            state_->readout[1] = 1.0;
        }
    });
    return state_->readout;
}

std::size_t BellmanModel::cached_rewards() const
{
    std::lock_guard lock(state_->mutex);
    return state_->cache.size();
}

Eigen::MatrixXd expected_bellman_matrix(const BellmanModel& model, const RewardLaw& law, int quadrature_points)
{
    return model.expected_coefficients(law, quadrature_points);
}

GramPair analytic_gaussian_lebesgue(const FeatureMap& map, double gamma, double r)
{
    const auto* t = std::get_if<TranslationFamily>(&map.family());
    if (!t || t->base != BaseFeature::gaussian || map.appends_constant())
        throw std::invalid_argument("analytic Gram matrices require a gaussian translation family");
    // phi_i(x) = exp(-s^2 (x - z_i)^2 / 2), integrated against Lebesgue measure.
    const double s2 = t->slope * t->slope;
    const auto m = static_cast<Eigen::Index>(t->anchors.size());
    const double c0 = std::sqrt(std::numbers::pi) / t->slope;
    const double cr0 = std::sqrt(2.0 * std::numbers::pi / (s2 * (1.0 + gamma * gamma)));
    GramPair out{Eigen::MatrixXd(m, m), Eigen::MatrixXd(m, m)};
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            const double d = t->anchors[i] - t->anchors[j];
            out.gram(i, j) = c0 * std::exp(-0.25 * s2 * d * d);
            const double e = r + gamma * t->anchors[j] - t->anchors[i];
            out.cross(i, j) = cr0 * std::exp(-s2 * e * e / (2.0 * (1.0 + gamma * gamma)));
        }
    }
    return out;
}

Eigen::VectorXd value_readout(const FeatureMap& map, const RegressionGrid& grid, double ridge)
{
    GramSystem gram(map, grid, ridge);
    Eigen::Map<const Eigen::VectorXd> g(grid.points.data(), static_cast<Eigen::Index>(grid.points.size()));
    const Eigen::VectorXd target = gram.features() * g / static_cast<double>(grid.points.size());
    return gram.right_solve(target.transpose()).transpose();
}

namespace {

struct Residuals {
    double max_abs = 0.0;
    double l2 = 0.0;
};

Residuals residuals_on_grid(const FeatureMap& map, const std::vector<double>& points, const Eigen::MatrixXd& features,
                            const Eigen::MatrixXd& b, double gamma, double r)
{
    std::vector<double> shifted(points.size());
    std::transform(points.begin(), points.end(), shifted.begin(), [&](double g) { return r + gamma * g; });
    const Eigen::MatrixXd diff = map.evaluate_columns(shifted) - b * features;
    return {diff.cwiseAbs().maxCoeff(), diff.colwise().norm().maxCoeff()};
}

}  // namespace

BellmanDiagnostics bellman_diagnostics(const FeatureMap& map, const RegressionGrid& grid, double gamma,
                                       const std::vector<double>& rewards, double ridge)
{
    GramSystem gram(map, grid, ridge);
    BellmanDiagnostics report;
    report.max_real_eigenvalue = -std::numeric_limits<double>::infinity();
    for (double r : rewards) {
        const Eigen::MatrixXd b = gram.coefficients(gamma, r);
        const auto res = residuals_on_grid(map, grid.points, gram.features(), b, gamma, r);
        report.worst_residual = std::max(report.worst_residual, res.max_abs);
        report.worst_residual_l2 = std::max(report.worst_residual_l2, res.l2);

        Eigen::EigenSolver<Eigen::MatrixXd> eig(b, false);
        std::vector<std::complex<double>> values(eig.eigenvalues().begin(), eig.eigenvalues().end());
        for (const auto& v : values) {
            report.spectral_radius = std::max(report.spectral_radius, std::abs(v));
            report.max_real_eigenvalue = std::max(report.max_real_eigenvalue, v.real());
        }
        report.eigenvalues.push_back(std::move(values));

        Eigen::JacobiSVD<Eigen::MatrixXd> svd(b);
        const auto& sv = svd.singularValues();
        report.operator_norm = std::max(report.operator_norm, sv[0]);
        report.singular_values.emplace_back(sv.begin(), sv.end());
    }
    return report;
}

double worst_regression_residual(const BellmanModel& model, const std::vector<double>& rewards)
{
    const auto& points = model.grid().points;
    if (points.empty()) throw std::invalid_argument("worst_regression_residual: model has no grid");
    const Eigen::MatrixXd features = model.feature_map().evaluate_columns(points);
    double worst = 0.0;
    for (double r : rewards)
        worst = std::max(worst, residuals_on_grid(model.feature_map(), points, features, model.coefficients(r),
                                                  model.discount(), r)
                                    .max_abs);
    return worst;
}

bool bellman_closed_check(const FeatureMap& map, const BellmanModel& model, double tolerance,
                          const std::vector<double>& rewards)
{
    if (map.dimension() != model.dimension())
        throw std::invalid_argument("bellman_closed_check: model was built for a different feature map");
    return worst_regression_residual(model, rewards) < tolerance;
}

}  // namespace sketch
