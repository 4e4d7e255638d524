#include "sketch/dp.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace sketch {

namespace {

void check_compatible(const Mrp& mrp, const BellmanModel& model)
{
    if (std::abs(mrp.discount() - model.discount()) > 1e-15)
        throw std::invalid_argument("bellman model discount differs from the MRP discount");
}

void check_table(const SketchTable& table, int num_states, int dimension)
{
    if (table.num_states() != num_states || table.dimension() != dimension)
        throw std::invalid_argument("sketch table shape does not match the MRP and feature map");
}

// Adds `mass` at location y, split between the neighbouring support points.
void deposit(std::span<const double> grid, double y, double mass, Eigen::Ref<Eigen::VectorXd> out)
{
    const auto n = grid.size();
    if (y <= grid.front()) {
        out[0] += mass;
        return;
    }
    if (y >= grid.back()) {
        out[static_cast<Eigen::Index>(n - 1)] += mass;
        return;
    }
    const auto upper = static_cast<std::size_t>(std::upper_bound(grid.begin(), grid.end(), y) - grid.begin());
    const std::size_t lower = upper - 1;
    const double frac = (y - grid[lower]) / (grid[upper] - grid[lower]);
    out[static_cast<Eigen::Index>(lower)] += mass * (1.0 - frac);
    out[static_cast<Eigen::Index>(upper)] += mass * frac;
}

}  // namespace

SketchTable initial_table(const FeatureMap& map, int num_states)
{
    if (num_states < 1) throw std::invalid_argument("initial_table: need at least one state");
    SketchTable table;
    table.values = map(0.0).replicate(1, num_states);
    return table;
}

SketchDpOperator::SketchDpOperator(const Mrp& mrp, const BellmanModel& model, int quadrature_points)
    : transition_t_(mrp.transition().transpose()),
      phi_zero_(model.feature_map()(0.0))
{
    check_compatible(mrp, model);
    const int m = model.dimension();
    expected_.reserve(mrp.num_states());
    for (int x = 0; x < mrp.num_states(); ++x) {
        terminal_.push_back(mrp.is_terminal(x));
        expected_.push_back(terminal_.back() ? Eigen::MatrixXd::Zero(m, m)
                                             : model.expected_coefficients(mrp.reward(x), quadrature_points));
    }
}

SketchTable SketchDpOperator::step(const SketchTable& table) const
{
    check_table(table, num_states(), dimension());
    // Column x of `mixed` is sum_x' P(x'|x) U(x').
    const Eigen::MatrixXd mixed = table.values * transition_t_;
    SketchTable next;
    next.values.resize(dimension(), num_states());
    next.iteration = table.iteration + 1;
    for (int x = 0; x < num_states(); ++x) {
        if (terminal_[x])
            next.values.col(x) = phi_zero_;
        else
            next.values.col(x).noalias() = expected_[x] * mixed.col(x);
    }
    return next;
}

SketchTable sketch_dp_step(const SketchTable& table, const Mrp& mrp, const BellmanModel& model)
{
    return SketchDpOperator(mrp, model).step(table);
}

SketchDpRun run_sketch_dp(const SketchDpOperator& op, SketchTable start, int iterations, double stop_tol,
                          bool record_trajectory)
{
    if (iterations < 0) throw std::invalid_argument("run_sketch_dp: negative iteration count");
    SketchDpRun run;
    run.table = std::move(start);
    if (record_trajectory) run.trajectory.push_back(run.table);
    for (int k = 0; k < iterations; ++k) {
        SketchTable next = op.step(run.table);
        run.last_change = (next.values - run.table.values).cwiseAbs().maxCoeff();
        run.table = std::move(next);
        if (record_trajectory) run.trajectory.push_back(run.table);
        if (run.last_change < stop_tol) {
            run.converged = true;
            break;
        }
    }
    return run;
}

void sketch_td_update(SketchTable& table, const Transition& t, const Mrp& mrp, const BellmanModel& model,
                      double alpha)
{
    check_compatible(mrp, model);
    check_table(table, mrp.num_states(), model.dimension());
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("sketch_td_update: alpha must lie in [0, 1]");
    if (mrp.is_terminal(t.state)) throw std::invalid_argument("sketch_td_update: transition starts at a terminal state");
    if (alpha == 0.0) return;
    const Eigen::VectorXd successor =
        mrp.is_terminal(t.next_state) ? model.feature_map()(0.0) : Eigen::VectorXd(table.values.col(t.next_state));
    const Eigen::MatrixXd b =
        is_deterministic(mrp.reward(t.state)) ? model.coefficients(t.reward) : model.solve_uncached(t.reward);
    table.values.col(t.state) = (1.0 - alpha) * table.values.col(t.state) + alpha * (b * successor);
}

SketchTable run_sketch_td(const Mrp& mrp, const BellmanModel& model, SketchTable start, const TdSettings& settings)
{
    check_compatible(mrp, model);
    check_table(start, mrp.num_states(), model.dimension());
    if (!(settings.alpha >= 0.0 && settings.alpha <= 1.0))
        throw std::invalid_argument("run_sketch_td: alpha must lie in [0, 1]");
    if (settings.sweeps < 0) throw std::invalid_argument("run_sketch_td: negative sweep count");

    const std::vector<int> states = mrp.nonterminal_states();
    const Eigen::VectorXd phi_zero = model.feature_map()(0.0);
    // Deterministic rewards reuse one matrix per state; noisy rewards need a fresh solve per sample.
    std::vector<Eigen::MatrixXd> fixed(states.size());
    for (std::size_t k = 0; k < states.size(); ++k)
        if (is_deterministic(mrp.reward(states[k]))) fixed[k] = model.coefficients(reward_mean(mrp.reward(states[k])));

    std::mt19937_64 rng(settings.seed);
    SketchTable table = std::move(start);
    Eigen::MatrixXd targets(table.dimension(), static_cast<Eigen::Index>(states.size()));
    for (int sweep = 0; sweep < settings.sweeps; ++sweep) {
        for (std::size_t k = 0; k < states.size(); ++k) {
            const Transition t = sample_transition(mrp, states[k], rng);
            const auto successor = mrp.is_terminal(t.next_state) ? phi_zero : table.values.col(t.next_state);
            if (fixed[k].size() > 0)
                targets.col(k).noalias() = fixed[k] * successor;
            else
                targets.col(k).noalias() = model.solve_uncached(t.reward) * successor;
        }
        for (std::size_t k = 0; k < states.size(); ++k)
            table.values.col(states[k]) = (1.0 - settings.alpha) * table.values.col(states[k]) + settings.alpha * targets.col(k);
        ++table.iteration;
    }
    return table;
}

DiscreteDistribution CategoricalTable::distribution(int state) const
{
    const auto col = probs.col(state);
    std::vector<double> loc;
    std::vector<double> w;
    for (std::size_t i = 0; i < support.size(); ++i) {
        if (col[static_cast<Eigen::Index>(i)] > 0.0) {
            loc.push_back(support[i]);
            w.push_back(col[static_cast<Eigen::Index>(i)]);
        }
    }
    return DiscreteDistribution::from_atoms(std::move(loc), std::move(w));
}

CategoricalTable initial_categorical_table(std::vector<double> support, int num_states)
{
    if (support.empty()) throw std::invalid_argument("categorical table: empty support");
    for (std::size_t i = 1; i < support.size(); ++i)
        if (!(support[i] > support[i - 1])) throw std::invalid_argument("categorical table: support must be increasing");
    if (num_states < 1) throw std::invalid_argument("categorical table: need at least one state");
    CategoricalTable table;
    table.support = std::move(support);
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(table.support.size()));
    deposit(table.support, 0.0, 1.0, zero);
    table.probs = zero.replicate(1, num_states);
    return table;
}

CategoricalTable categorical_dp_step(const CategoricalTable& table, const Mrp& mrp, int quadrature_points)
{
    if (table.support.empty()) throw std::invalid_argument("categorical_dp_step: empty support");
    if (table.num_states() != mrp.num_states())
        throw std::invalid_argument("categorical_dp_step: table does not match the MRP");
    const auto n = static_cast<Eigen::Index>(table.support.size());
    const double gamma = mrp.discount();
    CategoricalTable next;
    next.support = table.support;
    next.probs = Eigen::MatrixXd::Zero(n, mrp.num_states());
    next.iteration = table.iteration + 1;
    for (int x = 0; x < mrp.num_states(); ++x) {
        auto out = next.probs.col(x);
        if (mrp.is_terminal(x)) {
            deposit(table.support, 0.0, 1.0, out);
            continue;
        }
        const auto rewards = discretize_reward(mrp.reward(x), quadrature_points);
        for (const Successor& s : mrp.successors(x)) {
            for (const auto& r : rewards) {
                const double mass = s.probability * r.weight;
                if (mrp.is_terminal(s.state)) {
                    deposit(table.support, r.value, mass, out);
                    continue;
                }
                const auto source = table.probs.col(s.state);
                for (Eigen::Index j = 0; j < n; ++j)
                    if (source[j] > 0.0) deposit(table.support, r.value + gamma * table.support[j], mass * source[j], out);
            }
        }
    }
    return next;
}

CategoricalTable run_categorical_dp(const Mrp& mrp, CategoricalTable start, int iterations, int quadrature_points)
{
    for (int k = 0; k < iterations; ++k) start = categorical_dp_step(start, mrp, quadrature_points);
    return start;
}

SfdpOperator::SfdpOperator(const Mrp& mrp, const BellmanModel& model, std::vector<double> support,
                           ImputationSettings settings, int quadrature_points)
    : mrp_(&mrp),
      map_(model.feature_map()),
      problem_(model.feature_map(), std::move(support)),
      settings_(settings),
      phi_zero_(model.feature_map()(0.0))
{
    check_compatible(mrp, model);
    for (int x = 0; x < mrp.num_states(); ++x)
        rewards_.push_back(mrp.is_terminal(x) ? std::vector<WeightedReward>{}
                                              : discretize_reward(mrp.reward(x), quadrature_points));
}

SketchTable SfdpOperator::step(const SketchTable& table) const
{
    const Mrp& mrp = *mrp_;
    check_table(table, mrp.num_states(), map_.dimension());
    const int n_states = mrp.num_states();
    std::vector<DiscreteDistribution> imputed(n_states);
    for (int x = 0; x < n_states; ++x) {
        if (mrp.is_terminal(x)) continue;
        ImputationResult res = problem_.solve(table.values.col(x), settings_);
        if (!res.converged) ++failed_;
        imputed[x] = std::move(res.distribution);
    }

    const double gamma = mrp.discount();
    SketchTable next;
    next.values.resize(map_.dimension(), n_states);
    next.iteration = table.iteration + 1;
    Eigen::VectorXd phi(map_.dimension());
    for (int x = 0; x < n_states; ++x) {
        auto out = next.values.col(x);
        if (mrp.is_terminal(x)) {
            out = phi_zero_;
            continue;
        }
        out.setZero();
        for (const Successor& s : mrp.successors(x)) {
            for (const auto& r : rewards_[x]) {
                const double mass = s.probability * r.weight;
                if (mrp.is_terminal(s.state)) {
                    map_.evaluate_into(r.value, phi);
                    out += mass * phi;
                    continue;
                }
                const auto& d = imputed[s.state];
                for (std::size_t j = 0; j < d.size(); ++j) {
                    if (d.probs()[j] <= 0.0) continue;
                    map_.evaluate_into(r.value + gamma * d.support()[j], phi);
                    out += (mass * d.probs()[j]) * phi;
                }
            }
        }
    }
    return next;
}

SketchTable sfdp_step(const SketchTable& table, const Mrp& mrp, const BellmanModel& model,
                      const std::vector<double>& support, const ImputationSettings& settings)
{
    return SfdpOperator(mrp, model, support, settings).step(table);
}

}  // namespace sketch
