#include "sketch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sketch {

namespace {
constexpr double kSimplexTol = 1e-10;
}

DiscreteDistribution::DiscreteDistribution(std::vector<double> support, std::vector<double> probs)
    : support_(std::move(support)), probs_(std::move(probs))
{
    if (support_.empty() || support_.size() != probs_.size())
        throw std::invalid_argument("distribution: support and probs must be non-empty and equal length");
    double total = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
        if (!(probs_[i] >= 0.0)) throw std::invalid_argument("distribution: negative probability");
        if (!std::isfinite(support_[i])) throw std::invalid_argument("distribution: non-finite support point");
        if (i > 0 && !(support_[i] > support_[i - 1]))
            throw std::invalid_argument("distribution: support must be strictly increasing");
        total += probs_[i];
    }
    if (std::abs(total - 1.0) > kSimplexTol) throw std::invalid_argument("distribution: probabilities must sum to 1");
}

DiscreteDistribution DiscreteDistribution::dirac(double z)
{
    return DiscreteDistribution({z}, {1.0});
}

DiscreteDistribution DiscreteDistribution::from_samples(std::vector<double> samples)
{
    if (samples.empty()) throw std::invalid_argument("distribution: no samples");
    std::sort(samples.begin(), samples.end());
    std::vector<double> support;
    std::vector<double> counts;
    for (double s : samples) {
        if (!support.empty() && support.back() == s) {
            counts.back() += 1.0;
        } else {
            support.push_back(s);
            counts.push_back(1.0);
        }
    }
    const double n = static_cast<double>(samples.size());
    for (auto& c : counts) c /= n;
    return DiscreteDistribution(std::move(support), std::move(counts));
}

DiscreteDistribution DiscreteDistribution::from_atoms(std::vector<double> locations, std::vector<double> weights)
{
    if (locations.empty() || locations.size() != weights.size())
        throw std::invalid_argument("distribution: atoms and weights must be non-empty and equal length");
    std::vector<std::size_t> order(locations.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto i, auto j) { return locations[i] < locations[j]; });
    std::vector<double> support;
    std::vector<double> probs;
    double total = 0.0;
    for (auto i : order) {
        if (!(weights[i] >= 0.0)) throw std::invalid_argument("distribution: negative weight");
        total += weights[i];
        if (!support.empty() && support.back() == locations[i]) {
            probs.back() += weights[i];
        } else {
            support.push_back(locations[i]);
            probs.push_back(weights[i]);
        }
    }
    if (!(total > 0.0)) throw std::invalid_argument("distribution: total weight must be positive");
    for (auto& p : probs) p /= total;
    return DiscreteDistribution(std::move(support), std::move(probs));
}

double DiscreteDistribution::mean() const
{
    return std::inner_product(support_.begin(), support_.end(), probs_.begin(), 0.0);
}

double cramer_distance(const DiscreteDistribution& a, const DiscreteDistribution& b)
{
    const auto& za = a.support();
    const auto& zb = b.support();
    const auto& pa = a.probs();
    const auto& pb = b.probs();
    std::size_t i = 0;
    std::size_t j = 0;
    double fa = 0.0;
    double fb = 0.0;
    double prev = std::min(za.front(), zb.front());
    double total = 0.0;
    while (i < za.size() || j < zb.size()) {
        const double next = (j >= zb.size() || (i < za.size() && za[i] <= zb[j])) ? za[i] : zb[j];
        const double gap = fa - fb;
        total += gap * gap * (next - prev);
        while (i < za.size() && za[i] == next) fa += pa[i++];
        while (j < zb.size() && zb[j] == next) fb += pb[j++];
        prev = next;
    }
    return total;
}

DiscreteDistribution categorical_projection(const DiscreteDistribution& dist, std::span<const double> grid)
{
    if (grid.empty()) throw std::invalid_argument("categorical_projection: empty grid");
    for (std::size_t k = 1; k < grid.size(); ++k)
        if (!(grid[k] > grid[k - 1])) throw std::invalid_argument("categorical_projection: grid must be increasing");
    std::vector<double> mass(grid.size(), 0.0);
    for (std::size_t k = 0; k < dist.size(); ++k) {
        const double z = dist.support()[k];
        const double p = dist.probs()[k];
        if (z <= grid.front()) {
            mass.front() += p;
        } else if (z >= grid.back()) {
            mass.back() += p;
        } else {
            const auto upper = static_cast<std::size_t>(std::upper_bound(grid.begin(), grid.end(), z) - grid.begin());
            const std::size_t lower = upper - 1;
            const double w = (z - grid[lower]) / (grid[upper] - grid[lower]);
            mass[lower] += p * (1.0 - w);
            mass[upper] += p * w;
        }
    }
    return DiscreteDistribution(std::vector<double>(grid.begin(), grid.end()), std::move(mass));
}

double embedding_error(const Eigen::VectorXd& u, const Eigen::VectorXd& u_ref)
{
    if (u.size() != u_ref.size()) throw std::invalid_argument("embedding_error: dimension mismatch");
    return (u - u_ref).squaredNorm();
}

double excess_cramer(const DiscreteDistribution& imputed, const DiscreteDistribution& gt, std::span<const double> grid)
{
    return cramer_distance(imputed, gt) - cramer_distance(categorical_projection(gt, grid), gt);
}

}  // namespace sketch
