#include "sketch/mrp.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sketch {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

constexpr double kStochasticTol = 1e-12;

}  // namespace

RewardLaw make_finite_reward(std::vector<double> support, std::vector<double> probs)
{
    if (support.empty() || support.size() != probs.size())
        throw std::invalid_argument("finite reward: support and probs must be non-empty and equal length");
    double total = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw std::invalid_argument("finite reward: negative probability");
        total += p;
    }
    if (std::abs(total - 1.0) > kStochasticTol)
        throw std::invalid_argument("finite reward: probabilities must sum to 1");
    return FiniteReward{std::move(support), std::move(probs)};
}

RewardLaw make_gaussian_reward(double mean, double stddev)
{
    if (!(stddev >= 0.0)) throw std::invalid_argument("gaussian reward: stddev must be >= 0");
    return GaussianReward{mean, stddev};
}

double reward_mean(const RewardLaw& law)
{
    return std::visit(overloaded{
                          [](const DiracReward& d) { return d.value; },
                          [](const GaussianReward& g) { return g.mean; },
                          [](const FiniteReward& f) {
                              return std::inner_product(f.support.begin(), f.support.end(), f.probs.begin(), 0.0);
                          },
                      },
                      law);
}

bool is_deterministic(const RewardLaw& law)
{
    return std::visit(overloaded{
                          [](const DiracReward&) { return true; },
                          [](const GaussianReward& g) { return g.stddev == 0.0; },
                          [](const FiniteReward& f) {
                              for (std::size_t i = 0; i < f.probs.size(); ++i)
                                  if (f.probs[i] > 0.0 && f.support[i] != f.support.front()) return false;
                              return true;
                          },
                      },
                      law);
}

double sample_reward(const RewardLaw& law, std::mt19937_64& rng)
{
    return std::visit(overloaded{
                          [](const DiracReward& d) { return d.value; },
                          [&rng](const GaussianReward& g) {
                              if (g.stddev == 0.0) return g.mean;
                              std::normal_distribution<double> dist(g.mean, g.stddev);
                              return dist(rng);
                          },
                          [&rng](const FiniteReward& f) {
                              std::uniform_real_distribution<double> unit(0.0, 1.0);
                              double u = unit(rng);
                              double acc = 0.0;
                              for (std::size_t i = 0; i < f.probs.size(); ++i) {
                                  acc += f.probs[i];
                                  if (u < acc) return f.support[i];
                              }
                              return f.support.back();
                          },
                      },
                      law);
}

std::vector<WeightedReward> discretize_reward(const RewardLaw& law, int quadrature_points)
{
    return std::visit(
        overloaded{
            [](const DiracReward& d) { return std::vector<WeightedReward>{{d.value, 1.0}}; },
            [quadrature_points](const GaussianReward& g) {
                if (g.stddev == 0.0) return std::vector<WeightedReward>{{g.mean, 1.0}};
                if (quadrature_points < 2) throw std::invalid_argument("gaussian quadrature needs at least 2 points");
                std::vector<WeightedReward> out(quadrature_points);
                const double lo = g.mean - 5.0 * g.stddev;
                const double step = 10.0 * g.stddev / (quadrature_points - 1);
                double total = 0.0;
                for (int i = 0; i < quadrature_points; ++i) {
                    const double x = lo + step * i;
                    const double zscore = (x - g.mean) / g.stddev;
                    out[i] = {x, std::exp(-0.5 * zscore * zscore)};
                    total += out[i].weight;
                }
                for (auto& w : out) w.weight /= total;
                return out;
            },
            [](const FiniteReward& f) {
                std::vector<WeightedReward> out;
                for (std::size_t i = 0; i < f.support.size(); ++i)
                    if (f.probs[i] > 0.0) out.push_back({f.support[i], f.probs[i]});
                return out;
            },
        },
        law);
}

Mrp::Mrp(Eigen::MatrixXd transition, std::vector<RewardLaw> rewards, double discount,
         std::vector<bool> terminal, std::vector<std::string> names)
    : transition_(std::move(transition)),
      rewards_(std::move(rewards)),
      discount_(discount),
      terminal_(std::move(terminal)),
      names_(std::move(names))
{
    const auto n = static_cast<Eigen::Index>(rewards_.size());
    if (n == 0) throw std::invalid_argument("mrp: needs at least one state");
    if (transition_.rows() != n || transition_.cols() != n)
        throw std::invalid_argument("mrp: transition matrix must be n x n");
    if (terminal_.size() != rewards_.size())
        throw std::invalid_argument("mrp: terminal flags must have one entry per state");
    if (!(discount_ >= 0.0 && discount_ < 1.0))
        throw std::invalid_argument("mrp: discount must lie in [0, 1)");
    if (names_.empty()) {
        for (Eigen::Index i = 0; i < n; ++i)
            names_.push_back(terminal_[i] ? "terminal" : "x" + std::to_string(i + 1));
    }
    if (names_.size() != rewards_.size()) throw std::invalid_argument("mrp: one name per state required");

    successors_.resize(rewards_.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double p = transition_(i, j);
            if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("mrp: transition entries must lie in [0, 1]");
            row_sum += p;
            if (p > 0.0) successors_[i].push_back({p, static_cast<int>(j)});
        }
        if (terminal_[i]) {
            if (row_sum != 0.0) throw std::invalid_argument("mrp: terminal state " + names_[i] + " must have a zero row");
        } else if (std::abs(row_sum - 1.0) > kStochasticTol) {
            throw std::invalid_argument("mrp: row of state " + names_[i] + " must sum to 1");
        }
        if (const auto* f = std::get_if<FiniteReward>(&rewards_[i])) make_finite_reward(f->support, f->probs);
        if (const auto* g = std::get_if<GaussianReward>(&rewards_[i]); g && !(g->stddev >= 0.0))
            throw std::invalid_argument("mrp: gaussian reward stddev must be >= 0");
    }
}

void Mrp::check_state(int state) const
{
    if (state < 0 || state >= num_states()) throw std::out_of_range("mrp: state index out of range");
}

const RewardLaw& Mrp::reward(int state) const
{
    check_state(state);
    return rewards_[state];
}

bool Mrp::is_terminal(int state) const
{
    check_state(state);
    return terminal_[state];
}

const std::string& Mrp::name(int state) const
{
    check_state(state);
    return names_[state];
}

std::span<const Successor> Mrp::successors(int state) const
{
    check_state(state);
    return successors_[state];
}

double Mrp::max_abs_reward_mean() const
{
    double best = 0.0;
    for (int s = 0; s < num_states(); ++s)
        if (!terminal_[s]) best = std::max(best, std::abs(reward_mean(rewards_[s])));
    return best;
}

bool Mrp::has_stochastic_rewards() const
{
    for (int s = 0; s < num_states(); ++s)
        if (!terminal_[s] && !is_deterministic(rewards_[s])) return true;
    return false;
}

std::vector<int> Mrp::nonterminal_states() const
{
    std::vector<int> out;
    for (int s = 0; s < num_states(); ++s)
        if (!terminal_[s]) out.push_back(s);
    return out;
}

Environment parse_environment(std::string_view name)
{
    if (name == "random_chain") return Environment::random_chain;
    if (name == "directed_chain") return Environment::directed_chain;
    if (name == "dc_gaussian") return Environment::dc_gaussian;
    if (name == "tree") return Environment::tree;
    if (name == "loopy_tree") return Environment::loopy_tree;
    if (name == "cycle") return Environment::cycle;
    throw std::invalid_argument("unknown environment: " + std::string(name));
}

std::string_view to_string(Environment env)
{
    switch (env) {
    case Environment::random_chain: return "random_chain";
    case Environment::directed_chain: return "directed_chain";
    case Environment::dc_gaussian: return "dc_gaussian";
    case Environment::tree: return "tree";
    case Environment::loopy_tree: return "loopy_tree";
    case Environment::cycle: return "cycle";
    }
    return "unknown";
}

RewardNoise parse_reward_noise(std::string_view name)
{
    if (name == "deterministic") return RewardNoise::deterministic;
    if (name == "gaussian_unit_sd") return RewardNoise::gaussian_unit_sd;
    throw std::invalid_argument("unknown reward noise: " + std::string(name));
}

std::string_view to_string(RewardNoise noise)
{
    return noise == RewardNoise::deterministic ? "deterministic" : "gaussian_unit_sd";
}

namespace {

constexpr double kSuiteDiscount = 0.9;

// Builder for the named suite: `n` ordinary states plus an optional trailing terminal state.
struct SuiteBuilder {
    SuiteBuilder(int n, bool with_terminal)
        : ordinary(n), total(n + (with_terminal ? 1 : 0)), transition(Eigen::MatrixXd::Zero(total, total)),
          means(total, 0.0), terminal(total, false)
    {
        if (with_terminal) terminal.back() = true;
    }

    int term() const { return ordinary; }

    void edge(int from, int to, double p) { transition(from, to) += p; }

    Mrp build(RewardNoise noise) const
    {
        std::vector<RewardLaw> rewards;
        rewards.reserve(total);
        for (int s = 0; s < total; ++s) {
            if (noise == RewardNoise::gaussian_unit_sd && means[s] != 0.0 && !terminal[s])
                rewards.emplace_back(GaussianReward{means[s], 1.0});
            else
                rewards.emplace_back(DiracReward{means[s]});
        }
        return Mrp(transition, std::move(rewards), kSuiteDiscount, terminal);
    }

    int ordinary;
    int total;
    Eigen::MatrixXd transition;
    std::vector<double> means;
    std::vector<bool> terminal;
};

Mrp build_tree(bool loopy, RewardNoise noise)
{
    // x1 -> {x2, x3}, x3 -> {x4, x5}; leaves x2, x4, x5 exit to the terminal state.
    SuiteBuilder b(5, true);
    b.edge(0, 1, 0.5);
    b.edge(0, 2, 0.5);
    b.edge(2, 3, 0.5);
    b.edge(2, 4, 0.5);
    if (loopy) {
        b.edge(1, 0, 0.5);
        b.edge(1, b.term(), 0.5);
    } else {
        b.edge(1, b.term(), 1.0);
    }
    b.edge(3, b.term(), 1.0);
    b.edge(4, b.term(), 1.0);
    b.means[1] = 5.0;
    b.means[3] = -10.0;
    b.means[4] = 10.0;
    return b.build(noise);
}

}  // namespace

Mrp build_named_environment(Environment env, RewardNoise noise)
{
    switch (env) {
    case Environment::random_chain: {
        SuiteBuilder b(10, true);
        for (int s = 0; s < 10; ++s) {
            b.edge(s, s == 0 ? b.term() : s - 1, 0.5);
            b.edge(s, s == 9 ? b.term() : s + 1, 0.5);
        }
        b.means[9] = 1.0;
        return b.build(noise);
    }
    case Environment::directed_chain: {
        SuiteBuilder b(5, true);
        for (int s = 0; s < 5; ++s) b.edge(s, s == 4 ? b.term() : s + 1, 1.0);
        b.means[4] = 1.0;
        return b.build(noise);
    }
    case Environment::dc_gaussian:
        return build_named_environment(Environment::directed_chain, RewardNoise::gaussian_unit_sd);
    case Environment::tree: return build_tree(false, noise);
    case Environment::loopy_tree: return build_tree(true, noise);
    case Environment::cycle: {
        SuiteBuilder b(5, false);
        for (int s = 0; s < 5; ++s) b.edge(s, (s + 1) % 5, 1.0);
        b.means[0] = 1.0;
        return b.build(noise);
    }
    }
    throw std::invalid_argument("unknown environment");
}

Mrp build_named_environment(std::string_view name, RewardNoise noise)
{
    return build_named_environment(parse_environment(name), noise);
}

std::vector<TransitionOutcome> enumerate_transitions(const Mrp& mrp, int state)
{
    if (mrp.is_terminal(state)) throw std::invalid_argument("enumerate_transitions: terminal state");
    std::vector<TransitionOutcome> out;
    for (const auto& succ : mrp.successors(state)) out.push_back({succ.probability, mrp.reward(state), succ.state});
    return out;
}

Transition sample_transition(const Mrp& mrp, int state, std::mt19937_64& rng)
{
    if (mrp.is_terminal(state)) throw std::invalid_argument("sample_transition: terminal state");
    const auto succ = mrp.successors(state);
    int next = succ.back().state;
    if (succ.size() > 1) {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double u = unit(rng);
        double acc = 0.0;
        for (const auto& s : succ) {
            acc += s.probability;
            if (u < acc) {
                next = s.state;
                break;
            }
        }
    }
    return {state, sample_reward(mrp.reward(state), rng), next};
}

namespace {

Eigen::VectorXd expected_rewards(const Mrp& mrp)
{
    Eigen::VectorXd r = Eigen::VectorXd::Zero(mrp.num_states());
    for (int s = 0; s < mrp.num_states(); ++s)
        if (!mrp.is_terminal(s)) r[s] = reward_mean(mrp.reward(s));
    return r;
}

}  // namespace

Eigen::VectorXd solve_values(const Mrp& mrp)
{
    const auto n = mrp.num_states();
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - mrp.discount() * mrp.transition();
    return system.partialPivLu().solve(expected_rewards(mrp));
}

Eigen::VectorXd value_iteration(const Mrp& mrp, int iterations)
{
    const Eigen::VectorXd r = expected_rewards(mrp);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(mrp.num_states());
    for (int k = 0; k < iterations; ++k) v = r + mrp.discount() * (mrp.transition() * v);
    return v;
}

}  // namespace sketch
