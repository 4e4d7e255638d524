#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sketch/experiment.hpp"
#include "sketch/metrics.hpp"

using namespace sketch;

namespace {

// Random law on a subset of `grid`.
DiscreteDistribution random_on(const std::vector<double>& grid, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> w(grid.size());
    for (double& x : w) x = u(rng) < 0.3 ? 0.0 : u(rng);
    w[rng() % grid.size()] += 0.1;
    return DiscreteDistribution::from_atoms(grid, w);
}

double cdf(const DiscreteDistribution& d, double x)
{
    double f = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (d.support()[i] <= x) f += d.probs()[i];
    return f;
}

}  // namespace

TEST_CASE("distribution construction")
{
    const DiscreteDistribution d = DiscreteDistribution::from_samples({2.0, 1.0, 2.0, 3.0});
    CHECK(d.support() == std::vector<double>{1.0, 2.0, 3.0});
    CHECK(d.probs() == std::vector<double>{0.25, 0.5, 0.25});
    CHECK(d.mean() == doctest::Approx(2.0));
    const DiscreteDistribution a = DiscreteDistribution::from_atoms({1.0, 0.0, 1.0}, {1.0, 2.0, 1.0});
    CHECK(a.support() == std::vector<double>{0.0, 1.0});
    CHECK(a.probs()[0] == doctest::Approx(0.5));
    CHECK(DiscreteDistribution::dirac(1.5).mean() == 1.5);
    CHECK_THROWS(DiscreteDistribution({1.0, 0.0}, {0.5, 0.5}));
    CHECK_THROWS(DiscreteDistribution({0.0, 1.0}, {0.5, 0.6}));
    CHECK_THROWS(DiscreteDistribution({0.0, 1.0}, {-0.1, 1.1}));
    CHECK_THROWS(DiscreteDistribution::from_samples({}));
}

TEST_CASE("Cramer distance examples")
{
    const DiscreteDistribution a({0.0, 1.0, 2.5}, {0.2, 0.5, 0.3});
    CHECK(cramer_distance(a, a) == 0.0);
    for (double delta : {0.1, 1.0, 3.7}) {
        CHECK(cramer_distance(DiscreteDistribution::dirac(0.0), DiscreteDistribution::dirac(delta)) ==
              doctest::Approx(delta).epsilon(1e-14));
        CHECK(oracle::numeric_cramer({0.0}, {1.0}, {delta}, {1.0}, -1.0, 5.0, 600000) ==
              doctest::Approx(delta).epsilon(1e-4));
    }
    // Half the mass moved by 2: the CDFs differ by 0.5 on an interval of length 2.
    const DiscreteDistribution b({0.0, 2.0}, {0.5, 0.5});
    CHECK(cramer_distance(DiscreteDistribution::dirac(0.0), b) == doctest::Approx(0.5));
}

TEST_CASE("Cramer distance matches numeric integration on shared grids")
{
    std::mt19937_64 rng(3);
    const std::vector<double> grid = linspace(-1.0, 2.0, 13);
    for (int trial = 0; trial < 50; ++trial) {
        const DiscreteDistribution a = random_on(grid, rng);
        const DiscreteDistribution b = random_on(grid, rng);
        // Cells of width 0.25 / 64 put every jump on a cell edge, so the midpoint rule is exact.
        const double numeric = oracle::numeric_cramer(a.support(), a.probs(), b.support(), b.probs(), -1.0, 2.0, 12 * 64);
        const double exact = cramer_distance(a, b);
        CHECK(std::abs(exact - numeric) < 1e-8);
        CHECK(exact == doctest::Approx(cramer_distance(b, a)).epsilon(1e-14));
        CHECK(exact >= 0.0);
    }
}

TEST_CASE("Cramer distance on arbitrary supports against fine quadrature")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> za, wa, zb, wb;
        for (int i = 0; i < 5; ++i) {
            za.push_back(u(rng));
            wa.push_back(u(rng));
            zb.push_back(u(rng));
            wb.push_back(u(rng));
        }
        const auto a = DiscreteDistribution::from_atoms(za, wa);
        const auto b = DiscreteDistribution::from_atoms(zb, wb);
        // Each of the ten jumps costs at most one cell width of error.
        const double numeric = oracle::numeric_cramer(a.support(), a.probs(), b.support(), b.probs(), 0.0, 1.0, 2000000);
        CHECK(std::abs(cramer_distance(a, b) - numeric) < 10.0 / 2000000);
    }
}

TEST_CASE("Cramer distance is zero only for equal laws")
{
    const DiscreteDistribution a({0.0, 1.0}, {0.5, 0.5});
    const DiscreteDistribution b = DiscreteDistribution::from_atoms({0.0, 1.0, 1.0}, {2.0, 1.0, 1.0});
    CHECK(cramer_distance(a, b) == 0.0);
    CHECK(cramer_distance(a, DiscreteDistribution({0.0, 1.0}, {0.5 + 1e-6, 0.5 - 1e-6})) > 0.0);
}

TEST_CASE("grid route agrees with the merged-support route")
{
    std::mt19937_64 rng(9);
    const std::vector<double> grid = linspace(0.5, 3.5, 25);
    const double delta = grid[1] - grid[0];
    for (int trial = 0; trial < 50; ++trial) {
        const DiscreteDistribution a = random_on(grid, rng);
        const DiscreteDistribution b = random_on(grid, rng);
        double sum = 0.0;
        for (std::size_t i = 0; i + 1 < grid.size(); ++i) sum += std::pow(cdf(a, grid[i]) - cdf(b, grid[i]), 2);
        CHECK(std::abs(cramer_distance(a, b) - delta * sum) < 1e-12);
    }
}

TEST_CASE("categorical projection examples")
{
    const std::vector<double> grid{0.0, 1.0, 2.0, 3.0};
    // The result lives on the full grid, with zero weight where no mass lands.
    const DiscreteDistribution on = categorical_projection(DiscreteDistribution::dirac(2.0), grid);
    CHECK(on.support() == grid);
    CHECK(on.probs() == std::vector<double>{0.0, 0.0, 1.0, 0.0});
    const DiscreteDistribution mid = categorical_projection(DiscreteDistribution::dirac(1.5), grid);
    CHECK(mid.probs()[1] == doctest::Approx(0.5));
    CHECK(mid.probs()[2] == doctest::Approx(0.5));
    const DiscreteDistribution skew = categorical_projection(DiscreteDistribution::dirac(0.25), grid);
    CHECK(skew.probs()[0] == doctest::Approx(0.75));
    CHECK(skew.probs()[1] == doctest::Approx(0.25));
    const DiscreteDistribution clipped = categorical_projection(DiscreteDistribution({-5.0, 9.0}, {0.4, 0.6}), grid);
    CHECK(clipped.probs() == std::vector<double>{0.4, 0.0, 0.0, 0.6});
    CHECK_THROWS(categorical_projection(DiscreteDistribution::dirac(0.0), std::vector<double>{}));
    CHECK_THROWS(categorical_projection(DiscreteDistribution::dirac(0.0), std::vector<double>{1.0, 0.0}));
}

TEST_CASE("projection conserves mass and mean and is idempotent")
{
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::vector<double> grid = linspace(-2.0, 2.0, 17);
    std::vector<double> jittered = grid;
    for (std::size_t i = 1; i + 1 < jittered.size(); ++i) jittered[i] += 0.2 * (u(rng) - 0.5) * 0.25;
    for (const std::vector<double>* g : {&grid, static_cast<const std::vector<double>*>(&jittered)}) {
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<double> z, w;
            for (int i = 0; i < 30; ++i) {
                z.push_back(-2.0 + 4.0 * u(rng));
                w.push_back(u(rng));
            }
            const auto d = DiscreteDistribution::from_atoms(z, w);
            const auto p = categorical_projection(d, *g);
            double mass = 0.0;
            for (double q : p.probs()) mass += q;
            CHECK(std::abs(mass - 1.0) < 1e-12);
            CHECK(std::abs(p.mean() - d.mean()) < 1e-12);
            const auto pp = categorical_projection(p, *g);
            CHECK(pp.support() == p.support());
            for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(pp.probs()[i] - p.probs()[i]) < 1e-12);
        }
    }
}

TEST_CASE("embedding error")
{
    const Eigen::Vector3d a(1.0, 2.0, 3.0);
    CHECK(embedding_error(a, a) == 0.0);
    CHECK(embedding_error(a, Eigen::Vector3d(1.0, 3.0, 3.0)) == 1.0);
    CHECK_THROWS(embedding_error(a, Eigen::Vector2d(1.0, 2.0)));
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        Eigen::VectorXd x(6), y(6), z(6);
        for (int i = 0; i < 6; ++i) {
            x[i] = n(rng);
            y[i] = n(rng);
            z[i] = n(rng);
        }
        CHECK(std::sqrt(embedding_error(x, z)) <= std::sqrt(embedding_error(x, y)) + std::sqrt(embedding_error(y, z)) + 1e-12);
    }
}

TEST_CASE("excess Cramer")
{
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::vector<double> grid = linspace(0.0, 1.0, 11);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> z, w;
        for (int i = 0; i < 10; ++i) {
            z.push_back(u(rng));
            w.push_back(u(rng));
        }
        const auto gt = DiscreteDistribution::from_atoms(z, w);
        CHECK(std::abs(excess_cramer(categorical_projection(gt, grid), gt, grid)) < 1e-14);
        const auto on_grid = random_on(grid, rng);
        const auto other = random_on(grid, rng);
        CHECK(excess_cramer(other, on_grid, grid) == doctest::Approx(cramer_distance(other, on_grid)).epsilon(1e-12));
    }
}

TEST_CASE("excess Cramer on the directed chain with 100 sigmoid features")
{
    ExperimentConfig config;
    config.environment.name = "directed_chain";
    config.m = {100};
    config.timing = false;
    const Mrp mrp = config.environment.build();
    const GroundTruth gt = monte_carlo_ground_truth(mrp, 1000, 0);
    const PointResult res = run_point(config, SweepPoint{100, 1.0, std::nullopt}, mrp, gt);
    bool found = false;
    for (const ResultRow& row : res.rows) {
        if (row.state == "all" && row.metric == "excess_cramer") {
            found = true;
            CHECK(row.value <= 0.05);
        }
    }
    CHECK(found);
}
