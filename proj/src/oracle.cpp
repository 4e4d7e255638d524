#include "sketch/oracle.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace sketch {

int required_horizon(double max_abs_reward, double gamma, double tol)
{
    if (!(tol > 0.0)) throw std::invalid_argument("required_horizon: tol must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("required_horizon: discount must lie in [0, 1)");
    if (max_abs_reward == 0.0) return 0;
    int horizon = 0;
    double bound = std::abs(max_abs_reward) / (1.0 - gamma);
    while (bound > tol) {
        bound *= gamma;
        ++horizon;
    }
    return horizon;
}

int required_horizon(const Mrp& mrp, double tol)
{
    const int horizon = required_horizon(mrp.max_abs_reward_mean(), mrp.discount(), tol);
    return mrp.has_stochastic_rewards() ? std::max(horizon, kGaussianHorizonFloor) : horizon;
}

double GroundTruth::min_return() const
{
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& r : returns)
        if (!r.empty()) lo = std::min(lo, r.front());
    return lo;
}

double GroundTruth::max_return() const
{
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& r : returns)
        if (!r.empty()) hi = std::max(hi, r.back());
    return hi;
}

GroundTruth make_ground_truth(std::vector<std::vector<double>> returns, int horizon, std::uint64_t seed)
{
    GroundTruth gt;
    gt.horizon = horizon;
    gt.seed = seed;
    gt.samples_per_state = returns.empty() ? 0 : static_cast<int>(returns.front().size());
    for (auto& r : returns) {
        if (r.empty()) throw std::invalid_argument("ground truth: state without samples");
        gt.samples_per_state = std::min(gt.samples_per_state, static_cast<int>(r.size()));
        std::sort(r.begin(), r.end());
        gt.distributions.push_back(DiscreteDistribution::from_samples(r));
    }
    gt.returns = std::move(returns);
    return gt;
}

GroundTruth monte_carlo_ground_truth(const Mrp& mrp, int samples_per_state, std::uint64_t seed,
                                     double truncation_tol)
{
    if (samples_per_state < 1) throw std::invalid_argument("monte_carlo_ground_truth: need at least one sample");
    const int horizon = required_horizon(mrp, truncation_tol);
    const double gamma = mrp.discount();
    std::vector<std::vector<double>> returns(mrp.num_states());
    for (int start = 0; start < mrp.num_states(); ++start) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(start)};
        std::mt19937_64 rng(seq);
        auto& out = returns[start];
        out.reserve(samples_per_state);
        for (int k = 0; k < samples_per_state; ++k) {
            // Rollouts begin at `start`, so its first visit is time 0.
            double total = 0.0;
            double weight = 1.0;
            int state = start;
            for (int t = 0; t < horizon && !mrp.is_terminal(state); ++t) {
                const Transition tr = sample_transition(mrp, state, rng);
                total += weight * tr.reward;
                weight *= gamma;
                state = tr.next_state;
            }
            out.push_back(total);
        }
    }
    return make_ground_truth(std::move(returns), horizon, seed);
}

Eigen::MatrixXd ground_truth_embedding(const GroundTruth& gt, const FeatureMap& map)
{
    Eigen::MatrixXd out(map.dimension(), gt.num_states());
    for (int s = 0; s < gt.num_states(); ++s) out.col(s) = embed(map, gt.distributions[s]);
    // Probabilities sum to 1 only up to rounding.
    if (auto c = map.constant_index()) out.row(*c).setOnes();
    return out;
}

void write_ground_truth_csv(const GroundTruth& gt, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "state,sample_index,return\n";
    char buf[64];
    for (int s = 0; s < gt.num_states(); ++s) {
        for (std::size_t k = 0; k < gt.returns[s].size(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", gt.returns[s][k]);
            out << s << ',' << k << ',' << buf << '\n';
        }
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

GroundTruth read_ground_truth_csv(const std::filesystem::path& path, int horizon, std::uint64_t seed)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "state,sample_index,return")
        throw std::runtime_error(path.string() + ": unexpected ground truth header");
    std::vector<std::vector<double>> returns;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
        int state = 0;
        double value = 0.0;
        const char* begin = line.data();
        if (std::from_chars(begin, begin + c1, state).ec != std::errc{} ||
            std::from_chars(begin + c2 + 1, begin + line.size(), value).ec != std::errc{} || state < 0)
            throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
        if (static_cast<std::size_t>(state) >= returns.size()) returns.resize(state + 1);
        returns[state].push_back(value);
    }
    return make_ground_truth(std::move(returns), horizon, seed);
}

}  // namespace sketch
