#pragma once

#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace sketch {

struct DiracReward {
    double value = 0.0;
};

struct GaussianReward {
    double mean = 0.0;
    double stddev = 1.0;
};

struct FiniteReward {
    std::vector<double> support;
    std::vector<double> probs;
};

/// Law of the reward emitted when leaving a state.
using RewardLaw = std::variant<DiracReward, GaussianReward, FiniteReward>;

/// Validates a finite reward law (nonnegative probabilities summing to 1).
RewardLaw make_finite_reward(std::vector<double> support, std::vector<double> probs);
RewardLaw make_gaussian_reward(double mean, double stddev);

double reward_mean(const RewardLaw& law);
bool is_deterministic(const RewardLaw& law);
double sample_reward(const RewardLaw& law, std::mt19937_64& rng);

struct WeightedReward {
    double value;
    double weight;
};

/// Default number of points for discretizing a gaussian reward over mean +/- 5 sd.
inline constexpr int kDefaultRewardQuadrature = 65;

/**
 * Finite approximation of a reward law. Dirac and finite laws are returned exactly;
 * a gaussian becomes `quadrature_points` evenly spaced values over mean +/- 5 sd weighted
 * by the normalized density.
 */
std::vector<WeightedReward> discretize_reward(const RewardLaw& law, int quadrature_points = kDefaultRewardQuadrature);

struct Successor {
    double probability;
    int state;
};

/**
 * Tabular Markov reward process with the policy already folded into the
 * transition matrix. Terminal states are explicit, have all-zero rows and
 * contribute a zero return once entered.
 */
class Mrp {
public:
    Mrp(Eigen::MatrixXd transition, std::vector<RewardLaw> rewards, double discount,
        std::vector<bool> terminal, std::vector<std::string> names = {});

    int num_states() const { return static_cast<int>(rewards_.size()); }
    const Eigen::MatrixXd& transition() const { return transition_; }
    const RewardLaw& reward(int state) const;
    double discount() const { return discount_; }
    bool is_terminal(int state) const;
    const std::string& name(int state) const;
    std::span<const Successor> successors(int state) const;

    /// Largest absolute reward mean over non-terminal states.
    double max_abs_reward_mean() const;
    bool has_stochastic_rewards() const;
    std::vector<int> nonterminal_states() const;

private:
    void check_state(int state) const;

    Eigen::MatrixXd transition_;
    std::vector<RewardLaw> rewards_;
    double discount_;
    std::vector<bool> terminal_;
    std::vector<std::string> names_;
    std::vector<std::vector<Successor>> successors_;
};

enum class Environment { random_chain, directed_chain, dc_gaussian, tree, loopy_tree, cycle };
enum class RewardNoise { deterministic, gaussian_unit_sd };

Environment parse_environment(std::string_view name);
std::string_view to_string(Environment env);
RewardNoise parse_reward_noise(std::string_view name);
std::string_view to_string(RewardNoise noise);

/// Named environment suite, all with discount 0.9.
Mrp build_named_environment(Environment env, RewardNoise noise = RewardNoise::deterministic);
Mrp build_named_environment(std::string_view name, RewardNoise noise = RewardNoise::deterministic);

struct TransitionOutcome {
    double probability;
    RewardLaw reward;
    int next_state;
};

/// Successor outcomes of a non-terminal state; the reward law does not depend on the successor.
std::vector<TransitionOutcome> enumerate_transitions(const Mrp& mrp, int state);

struct Transition {
    int state;
    double reward;
    int next_state;
};

Transition sample_transition(const Mrp& mrp, int state, std::mt19937_64& rng);

/// Exact value function, solving (I - gamma P) V = r.
Eigen::VectorXd solve_values(const Mrp& mrp);

/// `iterations` synchronous value-iteration sweeps starting from V = 0.
Eigen::VectorXd value_iteration(const Mrp& mrp, int iterations);

}  // namespace sketch
