#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "sketch/oracle.hpp"

using namespace sketch;

namespace {

int state_named(const Mrp& mrp, const std::string& name)
{
    for (int s = 0; s < mrp.num_states(); ++s)
        if (mrp.name(s) == name) return s;
    FAIL("no state named " << name);
    return -1;
}

FeatureMap sigmoid_map(int m, double lo, double hi, bool constant = false)
{
    FeatureLayout layout;
    layout.g_min_hat = lo;
    layout.g_max_hat = hi;
    return make_feature_map(FamilyKind::sigmoid, m, layout, constant);
}

std::filesystem::path temp_path(const std::string& name)
{
    return std::filesystem::temp_directory_path() / ("sketch_oracle_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST_CASE("required horizon")
{
    CHECK(required_horizon(1.0, 0.9, 1e-4) == 110);
    CHECK(std::pow(0.9, 110) / 0.1 <= 1e-4);
    CHECK(std::pow(0.9, 109) / 0.1 > 1e-4);
    CHECK(required_horizon(0.0, 0.9, 1e-4) == 0);
    CHECK(required_horizon(1.0, 0.5, 1e-3) == oracle::horizon_search(1.0, 0.5, 1e-3));
    for (double r : {0.5, 1.0, 10.0})
        for (double g : {0.0, 0.3, 0.9, 0.99})
            for (double tol : {1e-2, 1e-4, 1e-6}) CHECK(required_horizon(r, g, tol) == oracle::horizon_search(r, g, tol));
    CHECK_THROWS(required_horizon(1.0, 0.9, 0.0));
    CHECK_THROWS(required_horizon(1.0, 0.9, -1.0));
    CHECK_THROWS(required_horizon(1.0, 1.0, 1e-4));

    CHECK(required_horizon(build_named_environment(Environment::directed_chain)) == 110);
    CHECK(required_horizon(build_named_environment(Environment::tree)) == oracle::horizon_search(10.0, 0.9, 1e-4));
    CHECK(required_horizon(build_named_environment(Environment::dc_gaussian)) >= 200);
}

TEST_CASE("directed chain returns are exact")
{
    const Mrp mrp = build_named_environment(Environment::directed_chain);
    const GroundTruth gt = monte_carlo_ground_truth(mrp, 500, 7);
    const int x1 = state_named(mrp, "x1");
    REQUIRE(gt.returns[x1].size() == 500);
    for (double g : gt.returns[x1]) CHECK(g == doctest::Approx(std::pow(0.9, 4)).epsilon(1e-15));
    CHECK(gt.distributions[x1].size() == 1);
    CHECK(gt.horizon == 110);
    CHECK(gt.samples_per_state == 500);
}

TEST_CASE("truncation error stays within the tolerance")
{
    const double tol = 1e-4;
    for (Environment env : {Environment::cycle, Environment::tree, Environment::directed_chain}) {
        const Mrp mrp = build_named_environment(env);
        const GroundTruth gt = monte_carlo_ground_truth(mrp, 200, 1, tol);
        const Eigen::VectorXd v = solve_values(mrp);
        // Deterministic transitions from every state make the return law a point mass.
        for (int x : mrp.nonterminal_states()) {
            if (mrp.successors(x).size() != 1) continue;
            if (env == Environment::tree) continue;
            for (double g : gt.returns[x]) CHECK(std::abs(g - v[x]) <= tol);
        }
    }
    const Mrp cycle = build_named_environment(Environment::cycle);
    const GroundTruth gt = monte_carlo_ground_truth(cycle, 50, 2);
    for (double g : gt.returns[0]) CHECK(std::abs(g - 1.0 / (1.0 - std::pow(0.9, 5))) <= 1e-4);
    CHECK(gt.max_return() <= 1.0 / (1.0 - std::pow(0.9, 5)));
}

TEST_CASE("tree returns take the enumerated values")
{
    const Mrp mrp = build_named_environment(Environment::tree);
    const GroundTruth gt = monte_carlo_ground_truth(mrp, 20000, 4);
    const Eigen::VectorXd v = solve_values(mrp);
    for (int x : mrp.nonterminal_states()) {
        double mean = 0.0;
        double sq = 0.0;
        for (double g : gt.returns[x]) {
            mean += g;
            sq += g * g;
        }
        const double n = static_cast<double>(gt.returns[x].size());
        mean /= n;
        const double se = std::sqrt(std::max(sq / n - mean * mean, 0.0) / n);
        CHECK(std::abs(mean - v[x]) <= 3.0 * se + 1e-12);
    }
}

TEST_CASE("random chain mean agrees with value iteration")
{
    const Mrp mrp = build_named_environment(Environment::random_chain);
    const GroundTruth gt = monte_carlo_ground_truth(mrp, 100000, 0);
    const Eigen::VectorXd v = value_iteration(mrp, 1000);
    for (const char* name : {"x10", "x5", "x1"}) {
        const int x = state_named(mrp, name);
        double mean = 0.0;
        double sq = 0.0;
        for (double g : gt.returns[x]) {
            mean += g;
            sq += g * g;
        }
        const double n = static_cast<double>(gt.returns[x].size());
        mean /= n;
        const double se = std::sqrt((sq / n - mean * mean) / n);
        CHECK_MESSAGE(std::abs(mean - v[x]) <= 3.0 * se, name << " mean " << mean << " value " << v[x] << " se " << se);
    }
    for (const auto& r : gt.returns) CHECK(std::is_sorted(r.begin(), r.end()));
}

TEST_CASE("ground truth embeddings")
{
    SUBCASE("deterministic environment embeds the analytic return")
    {
        const Mrp mrp = build_named_environment(Environment::cycle);
        const GroundTruth gt = monte_carlo_ground_truth(mrp, 100, 0);
        const FeatureMap map = sigmoid_map(20, 0.0, 2.5);
        const Eigen::MatrixXd u = ground_truth_embedding(gt, map);
        const Eigen::VectorXd v = solve_values(mrp);
        // Sigmoid slope s bounds |phi'| by s / 4.
        const double lipschitz = std::get<TranslationFamily>(map.family()).slope / 4.0;
        for (int x = 0; x < mrp.num_states(); ++x)
            CHECK((u.col(x) - map(v[x])).cwiseAbs().maxCoeff() <= lipschitz * 1e-4 + 1e-14);
    }
    SUBCASE("embedding is the sample mean of the features")
    {
        const Mrp mrp = build_named_environment(Environment::random_chain);
        const GroundTruth gt = monte_carlo_ground_truth(mrp, 300, 9);
        const FeatureMap map = sigmoid_map(8, 0.0, 1.0, true);
        const Eigen::MatrixXd u = ground_truth_embedding(gt, map);
        const int c = *map.constant_index();
        for (int x = 0; x < mrp.num_states(); ++x) {
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(map.dimension());
            for (double g : gt.returns[x]) mean += map(g);
            mean /= static_cast<double>(gt.returns[x].size());
            CHECK((u.col(x) - mean).cwiseAbs().maxCoeff() < 1e-12);
            CHECK(u(c, x) == 1.0);
        }
    }
    SUBCASE("doubling the sample count moves embeddings by a few standard errors")
    {
        const Mrp mrp = build_named_environment(Environment::random_chain);
        const FeatureMap map = sigmoid_map(10, 0.0, 1.0);
        const int n = 5000;
        const GroundTruth a = monte_carlo_ground_truth(mrp, n, 100);
        const GroundTruth b = monte_carlo_ground_truth(mrp, 2 * n, 200);
        const Eigen::MatrixXd ua = ground_truth_embedding(a, map);
        const Eigen::MatrixXd ub = ground_truth_embedding(b, map);
        for (int x : mrp.nonterminal_states()) {
            Eigen::VectorXd var = Eigen::VectorXd::Zero(map.dimension());
            for (double g : b.returns[x]) var += (map(g) - ub.col(x)).cwiseAbs2();
            var /= static_cast<double>(2 * n - 1);
            const Eigen::VectorXd se = (var / n + var / (2.0 * n)).cwiseSqrt();
            for (int i = 0; i < map.dimension(); ++i) CHECK(std::abs(ua(i, x) - ub(i, x)) <= 5.0 * se[i] + 1e-15);
        }
    }
}

TEST_CASE("seed determinism")
{
    const Mrp mrp = build_named_environment(Environment::loopy_tree, RewardNoise::gaussian_unit_sd);
    const GroundTruth a = monte_carlo_ground_truth(mrp, 400, 11);
    const GroundTruth b = monte_carlo_ground_truth(mrp, 400, 11);
    const GroundTruth c = monte_carlo_ground_truth(mrp, 400, 12);
    CHECK(a.returns == b.returns);
    CHECK(a.returns != c.returns);
    CHECK(a.seed == 11);
    CHECK(a.horizon == 200);
    CHECK_THROWS(monte_carlo_ground_truth(mrp, 0, 1));
}

TEST_CASE("ground truth CSV round trip")
{
    const Mrp mrp = build_named_environment(Environment::dc_gaussian);
    const GroundTruth gt = monte_carlo_ground_truth(mrp, 250, 3);
    const auto path = temp_path("gt.csv");
    write_ground_truth_csv(gt, path);
    {
        std::ifstream in(path);
        std::string header;
        std::getline(in, header);
        CHECK(header == "state,sample_index,return");
    }
    const GroundTruth back = read_ground_truth_csv(path, gt.horizon, gt.seed);
    CHECK(back.returns == gt.returns);
    CHECK(back.samples_per_state == 250);
    std::filesystem::remove(path);

    const auto bad = temp_path("bad.csv");
    {
        std::ofstream out(bad);
        out << "state,sample_index,return\n0,0,not_a_number\n";
    }
    CHECK_THROWS(read_ground_truth_csv(bad, 1, 0));
    std::filesystem::remove(bad);
    CHECK_THROWS(read_ground_truth_csv(temp_path("missing.csv"), 1, 0));
}
