#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace sketch {

/// Finitely supported distribution with strictly increasing support.
class DiscreteDistribution {
public:
    DiscreteDistribution() = default;
    DiscreteDistribution(std::vector<double> support, std::vector<double> probs);

    static DiscreteDistribution dirac(double z);
    /// Empirical law of `samples`, merging duplicates.
    static DiscreteDistribution from_samples(std::vector<double> samples);
    /// Sorts atoms and merges duplicate locations; weights need not be normalized but must be nonnegative.
    static DiscreteDistribution from_atoms(std::vector<double> locations, std::vector<double> weights);

    const std::vector<double>& support() const { return support_; }
    const std::vector<double>& probs() const { return probs_; }
    std::size_t size() const { return support_.size(); }
    double mean() const;

private:
    std::vector<double> support_;
    std::vector<double> probs_;
};

/// Squared L2 distance between CDFs, integrated exactly over the merged support.
double cramer_distance(const DiscreteDistribution& a, const DiscreteDistribution& b);

/**
 * Splits each atom between its two neighbouring grid points in proportion to
 * linear-interpolation weights; mass outside the grid goes to the boundary atom.
 * The grid must be strictly increasing; even spacing is not required, so jittered
 * supports are accepted.
 */
DiscreteDistribution categorical_projection(const DiscreteDistribution& dist, std::span<const double> grid);

/// Squared Euclidean distance ||u - u_ref||^2.
double embedding_error(const Eigen::VectorXd& u, const Eigen::VectorXd& u_ref);

/// cramer(imputed, gt) - cramer(categorical_projection(gt, grid), gt).
double excess_cramer(const DiscreteDistribution& imputed, const DiscreteDistribution& gt, std::span<const double> grid);

/// Mean embedding E[phi(Z)] of a discrete distribution under a column-evaluating map.
template <class Map>
Eigen::VectorXd embed(const Map& map, const DiscreteDistribution& dist)
{
    Eigen::VectorXd out = Eigen::VectorXd::Zero(map.dimension());
    Eigen::VectorXd phi(map.dimension());
    for (std::size_t i = 0; i < dist.size(); ++i) {
        map.evaluate_into(dist.support()[i], phi);
        out += dist.probs()[i] * phi;
    }
    return out;
}

}  // namespace sketch
