#include "sketch/imputation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace sketch {

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v)
{
    const auto n = v.size();
    if (n == 0) return v;
    std::vector<double> sorted(v.data(), v.data() + n);
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumulative = 0.0;
    double threshold = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        cumulative += sorted[k];
        const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
        if (sorted[k] - candidate > 0.0) threshold = candidate;
    }
    return (v.array() - threshold).max(0.0).matrix();
}

ImputationProblem::ImputationProblem(const FeatureMap& map, std::vector<double> support)
    : support_(std::move(support))
{
    if (support_.empty()) throw std::invalid_argument("imputation: support must be non-empty");
    for (std::size_t i = 1; i < support_.size(); ++i)
        if (!(support_[i] > support_[i - 1])) throw std::invalid_argument("imputation: support must be increasing");
    features_ = map.evaluate_columns(support_);
    gram_ = features_.transpose() * features_;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram_, Eigen::EigenvaluesOnly);
    const double lipschitz = 2.0 * std::max(eig.eigenvalues().maxCoeff(), 1e-300);
    step_ = 1.0 / lipschitz;
}

double ImputationProblem::objective(const Eigen::VectorXd& weights, const Eigen::VectorXd& target) const
{
    return (features_ * weights - target).squaredNorm();
}

namespace {

double objective_value(const Eigen::VectorXd& p, const Eigen::VectorXd& qp, const Eigen::VectorXd& linear,
                       double constant)
{
    return p.dot(qp) - 2.0 * linear.dot(p) + constant;
}

// Frank-Wolfe gap g'p - min_i g_i, an upper bound on f(p) - f*.
double duality_gap(const Eigen::VectorXd& p, const Eigen::VectorXd& qp, const Eigen::VectorXd& linear)
{
    const Eigen::VectorXd grad = 2.0 * (qp - linear);
    return std::max(grad.dot(p) - grad.minCoeff(), 0.0);
}

// Near an exact fit the gap only falls like sqrt(f), so a residual norm below tol also counts;
// since f* >= 0 that bounds f(p) - f* by tol^2.
bool certified(double gap, double value, double tol) { return gap <= tol || value <= tol * tol; }

}  // namespace

// f(p) = p'Qp - 2 c'p + u'u with gradient 2 (Qp - c).
ImputationProblem::Run ImputationProblem::accelerated(Eigen::VectorXd p, const Eigen::VectorXd& linear,
                                                      double constant, double tol, int max_iters) const
{
    Eigen::VectorXd qp = gram_ * p;
    double fp = objective_value(p, qp, linear, constant);
    double gap = duality_gap(p, qp, linear);
    Eigen::VectorXd y = p;
    double t = 1.0;
    int it = 0;
    while (!certified(gap, fp, tol) && it < max_iters) {
        ++it;
        const Eigen::VectorXd grad_y = 2.0 * (gram_ * y - linear);
        Eigen::VectorXd next = project_to_simplex(y - step_ * grad_y);
        Eigen::VectorXd q_next = gram_ * next;
        const double f_next = objective_value(next, q_next, linear, constant);
        if (f_next > fp) {
            // Momentum overshot: restart from the last accepted iterate.
            y = p;
            t = 1.0;
            continue;
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = next + ((t - 1.0) / t_next) * (next - p);
        t = t_next;
        p = std::move(next);
        qp = std::move(q_next);
        fp = f_next;
        gap = duality_gap(p, qp, linear);
    }
    return {std::move(p), fp, gap, it, certified(gap, fp, tol)};
}

// Primal active-set method on {p >= 0, sum p = 1}. The working set holds the
// coordinates pinned at zero; each step solves the equality-constrained
// problem on the free coordinates and moves as far as feasibility allows.
ImputationProblem::Run ImputationProblem::active_set(Eigen::VectorXd p, const Eigen::VectorXd& linear,
                                                     double constant, double tol) const
{
    const auto n = p.size();
    std::vector<char> is_free(n);
    for (Eigen::Index i = 0; i < n; ++i) is_free[i] = p[i] > 0.0;
    const double jitter = 1e-12 * std::max(gram_.diagonal().maxCoeff(), 1e-300);

    Eigen::VectorXd qp = gram_ * p;
    double gap = duality_gap(p, qp, linear);
    const int max_steps = 20 * static_cast<int>(n) + 50;
    int step = 0;
    for (; step < max_steps && !certified(gap, objective_value(p, qp, linear, constant), tol); ++step) {
        std::vector<Eigen::Index> free;
        for (Eigen::Index i = 0; i < n; ++i)
            if (is_free[i]) free.push_back(i);
        const auto k = static_cast<Eigen::Index>(free.size());
        const Eigen::VectorXd grad = 2.0 * (qp - linear);

        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + 1, k + 1);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k + 1);
        for (Eigen::Index a = 0; a < k; ++a) {
            for (Eigen::Index b = 0; b < k; ++b) kkt(a, b) = 2.0 * gram_(free[a], free[b]);
            kkt(a, a) += 2.0 * jitter;
            kkt(a, k) = 1.0;
            kkt(k, a) = 1.0;
            rhs[a] = -grad[free[a]];
        }
        const Eigen::VectorXd sol = kkt.partialPivLu().solve(rhs);
        Eigen::VectorXd direction = Eigen::VectorXd::Zero(n);
        for (Eigen::Index a = 0; a < k; ++a) direction[free[a]] = sol[a];

        const double grad_scale = std::max(grad.cwiseAbs().maxCoeff(), 1.0);
        if (!direction.allFinite() || direction.cwiseAbs().maxCoeff() <= 1e-14 ||
            grad.dot(direction) >= -1e-18 * grad_scale) {
            // Stationary on the current face: release the most violated pinned coordinate.
            double mu = 0.0;
            for (auto i : free) mu += grad[i];
            mu /= static_cast<double>(std::max<Eigen::Index>(k, 1));
            Eigen::Index release = -1;
            double worst = -1e-12 * grad_scale;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (!is_free[i] && grad[i] - mu < worst) {
                    worst = grad[i] - mu;
                    release = i;
                }
            }
            if (release < 0) break;
            is_free[release] = 1;
            continue;
        }

        double alpha = 1.0;
        Eigen::Index blocking = -1;
        for (auto i : free) {
            if (direction[i] < 0.0 && -p[i] / direction[i] < alpha) {
                alpha = -p[i] / direction[i];
                blocking = i;
            }
        }
        p += alpha * direction;
        if (blocking >= 0) {
            p[blocking] = 0.0;
            is_free[blocking] = 0;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            if (p[i] <= 0.0) {
                p[i] = 0.0;
                is_free[i] = 0;
            }
        }
        p /= p.sum();
        qp = gram_ * p;
        gap = duality_gap(p, qp, linear);
    }
    const double value = objective_value(p, qp, linear, constant);
    return {std::move(p), value, gap, step, certified(gap, value, tol)};
}

ImputationProblem::Run ImputationProblem::run(const Eigen::VectorXd& start, const Eigen::VectorXd& target,
                                              const ImputationSettings& settings) const
{
    const Eigen::VectorXd linear = features_.transpose() * target;
    const double constant = target.squaredNorm();
    const int first_phase = settings.polish_after > 0 ? std::min(settings.polish_after, settings.max_iters)
                                                      : settings.max_iters;
    Run result = accelerated(start, linear, constant, settings.tol, first_phase);
    if (result.converged || settings.polish_after <= 0) return result;

    Run polished = active_set(result.weights, linear, constant, settings.tol);
    polished.iterations += result.iterations;
    if (polished.objective <= result.objective && polished.weights.allFinite()) result = std::move(polished);
    if (result.converged || result.iterations >= settings.max_iters) return result;

    Run rest = accelerated(result.weights, linear, constant, settings.tol, settings.max_iters - result.iterations);
    rest.iterations += result.iterations;
    return rest.objective <= result.objective ? rest : result;
}

ImputationResult ImputationProblem::solve(const Eigen::VectorXd& target, const ImputationSettings& settings) const
{
    if (target.size() != features_.rows()) throw std::invalid_argument("imputation: target has wrong dimension");
    if (settings.max_iters < 0 || !(settings.tol >= 0.0) || settings.restarts < 0)
        throw std::invalid_argument("imputation: invalid solver settings");
    const auto n = static_cast<Eigen::Index>(support_.size());
    Run best = run(Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)), target, settings);
    for (int k = 0; k < settings.restarts; ++k) {
        Eigen::VectorXd vertex = Eigen::VectorXd::Zero(n);
        vertex[(k * (n - 1)) / std::max(settings.restarts - 1, 1) % n] = 1.0;
        Run candidate = run(vertex, target, settings);
        if (candidate.objective < best.objective) best = std::move(candidate);
    }
    // Renormalize away rounding drift from the projection.
    Eigen::VectorXd w = best.weights.cwiseMax(0.0);
    w /= w.sum();
    return {DiscreteDistribution(support_, std::vector<double>(w.data(), w.data() + n)), std::max(best.objective, 0.0),
            best.gap, best.iterations, best.converged};
}

ImputationResult impute_distribution(const FeatureMap& map, std::span<const double> support, const Eigen::VectorXd& u,
                                     const ImputationSettings& settings)
{
    return ImputationProblem(map, std::vector<double>(support.begin(), support.end())).solve(u, settings);
}

std::vector<std::vector<double>> jittered_supports(std::span<const double> base_support, int n_jitters,
                                                   std::mt19937_64& rng)
{
    if (n_jitters < 0) throw std::invalid_argument("jittered_supports: negative jitter count");
    if (base_support.size() < 2) throw std::invalid_argument("jittered_supports: need at least two support points");
    const double spacing = (base_support.back() - base_support.front()) / static_cast<double>(base_support.size() - 1);
    if (!(spacing > 0.0)) throw std::invalid_argument("jittered_supports: degenerate spacing");
    for (std::size_t i = 1; i < base_support.size(); ++i)
        if (std::abs((base_support[i] - base_support[i - 1]) - spacing) > 1e-9 * spacing)
            throw std::invalid_argument("jittered_supports: base support must be evenly spaced");

    std::uniform_real_distribution<double> noise(-0.5 * spacing, 0.5 * spacing);
    std::vector<std::vector<double>> out;
    out.reserve(n_jitters);
    for (int j = 0; j < n_jitters; ++j) {
        std::vector<double> grid(base_support.begin(), base_support.end());
        for (double& z : grid) z += noise(rng);
        std::sort(grid.begin(), grid.end());
        out.push_back(std::move(grid));
    }
    return out;
}

}  // namespace sketch
