// Acceptance run: one PASS/FAIL line per criterion. A criterion passes when its
// numeric check holds and it finishes within its time budget.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "sketch/bellman.hpp"
#include "sketch/dp.hpp"
#include "sketch/experiment.hpp"
#include "sketch/oracle.hpp"

using namespace sketch;

namespace {

using Clock = std::chrono::steady_clock;

std::filesystem::path g_configs = "configs";

struct Outcome {
    bool ok = true;
    std::ostringstream detail;

    void require(bool cond, const std::string& what)
    {
        if (!cond) ok = false;
        if (!detail.str().empty()) detail << "; ";
        detail << what << (cond ? "" : " [violated]");
    }
};

int g_failures = 0;

void criterion(int id, const char* name, double budget_s, const std::function<void(Outcome&)>& body)
{
    Outcome out;
    const auto t0 = Clock::now();
    try {
        body(out);
    } catch (const std::exception& e) {
        out.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (secs > budget_s) {
        std::ostringstream s;
        s << "runtime " << secs << " s over budget " << budget_s << " s";
        out.require(false, s.str());
    }
    if (!out.ok) ++g_failures;
    std::printf("%s %d %s (%.2f s): %s\n", out.ok ? "PASS" : "FAIL", id, name, secs, out.detail.str().c_str());
    std::fflush(stdout);
}

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

FeatureLayout range_layout(double lo, double hi)
{
    FeatureLayout layout;
    layout.g_min_hat = lo;
    layout.g_max_hat = hi;
    return layout;
}

ExperimentConfig config_with_samples(const std::string& file, int samples)
{
    ExperimentConfig c = load_config(g_configs / file);
    c.oracle.samples = samples;
    c.timing = false;
    return c;
}

// Aggregate ("all") value of each metric, keyed by the sweep axis value; diverged points map to +inf.
std::map<double, std::map<std::string, double>> sweep(const ExperimentConfig& c, bool by_m)
{
    const Mrp mrp = c.environment.build();
    const GroundTruth gt = monte_carlo_ground_truth(mrp, c.oracle.samples, c.oracle.seed, c.oracle.truncation_tol);
    std::map<double, std::map<std::string, double>> out;
    for (const SweepPoint& p : expand_sweep(c)) {
        const double key = by_m ? p.m : p.slope_scale;
        try {
            for (const ResultRow& r : run_point(c, p, mrp, gt).rows)
                if (r.state == "all") out[key][r.metric] = r.value;
        } catch (const std::runtime_error&) {
            for (const char* metric : {"embedding_sq_error", "cramer", "dirac_cramer"}) out[key][metric] = INFINITY;
        }
    }
    return out;
}

void moment_closure(Outcome& out)
{
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ur(-2.0, 2.0);
    std::uniform_real_distribution<double> ug(0.0, 0.99);
    const RegressionGrid grid = build_regression_grid(-1.0, 1.0, 0.2, 200);
    const FeatureMap linear(PolynomialFamily{1});
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const double r = ur(rng);
        const double gamma = ug(rng);
        Eigen::Matrix2d expected;
        expected << 1.0, 0.0, r, gamma;
        worst = std::max(worst, (solve_bellman_coefficients(linear, grid, gamma, r, 0.0) - expected).cwiseAbs().maxCoeff());
    }
    out.require(worst <= 1e-10, "max |B_r - [[1,0],[r,gamma]]| = " + fmt(worst) + " <= 1e-10");
    double residual = 0.0;
    for (int degree = 1; degree <= 5; ++degree) {
        const BellmanModel model(FeatureMap(PolynomialFamily{degree}), grid, 0.9, 0.0);
        residual = std::max(residual, worst_regression_residual(model, {-1.0, -0.5, 0.0, 0.5, 1.0}));
    }
    out.require(residual <= 1e-8, "worst residual up to degree 5 = " + fmt(residual) + " <= 1e-8");
}

void diagnostics_reproduction(Outcome& out)
{
    const RegressionGrid grid{linspace(-5.0, 5.0, 10000)};
    for (auto [base, slope] : {std::pair{BaseFeature::sigmoid, 2.0}, std::pair{BaseFeature::gaussian, 1.0}}) {
        const FeatureMap map(TranslationFamily{base, linspace(-8.0, 8.0, 20), slope});
        const BellmanDiagnostics d = bellman_diagnostics(map, grid, 0.8, {1.0}, 1e-6);
        const std::string tag(to_string(base));
        out.require(d.worst_residual < 0.002, tag + " residual " + fmt(d.worst_residual) + " < 0.002");
        out.require(d.operator_norm > 1.0, tag + " sigma_max " + fmt(d.operator_norm) + " > 1");
        out.require(d.max_real_eigenvalue <= 1.05, tag + " max Re(lambda) " + fmt(d.max_real_eigenvalue) + " <= 1.05");
    }
}

void indicator_bound(Outcome& out)
{
    for (Environment env : {Environment::directed_chain, Environment::random_chain}) {
        const Mrp mrp = build_named_environment(env);
        const double gamma = mrp.discount();
        double rmin = 0.0;
        double rmax = 0.0;
        for (int x : mrp.nonterminal_states()) {
            rmin = std::min(rmin, reward_mean(mrp.reward(x)));
            rmax = std::max(rmax, reward_mean(mrp.reward(x)));
        }
        // [G_min, G_max] from the reward extremes, so every return lies inside and off the top edge's jump.
        const FeatureLayout layout = range_layout(rmin / (1.0 - gamma), rmax / (1.0 - gamma));
        const double width = layout.range_length();
        const GroundTruth gt = monte_carlo_ground_truth(mrp, 100000, 0, 1e-4);
        for (int m : {10, 20, 50}) {
            const FeatureMap map = make_feature_map(FamilyKind::indicator, m, layout);
            const Eigen::MatrixXd truth = ground_truth_embedding(gt, map);
            const BellmanModel model(map, build_regression_grid(layout.g_min_hat, layout.g_max_hat, 0.0, 20 * m + 1),
                                     gamma);
            const SketchDpRun run = run_sketch_dp(SketchDpOperator(mrp, model), initial_table(map, mrp.num_states()), 200);
            double err = 0.0;
            for (int x : mrp.nonterminal_states())
                err = std::max(err, width / m * (run.table[x] - truth.col(x)).lpNorm<1>());
            const double bound = width * (3.0 + 2.0 * gamma) / ((1.0 - gamma) * m);
            out.require(err <= bound,
                        std::string(to_string(env)) + " m=" + std::to_string(m) + " " + fmt(err) + " <= " + fmt(bound));
        }
    }
}

void oracle_horizon(Outcome& out)
{
    const int h = required_horizon(1.0, 0.9, 1e-4);
    out.require(h == 110, "required_horizon(1, 0.9, 1e-4) = " + std::to_string(h));
}

void sweep_trends(Outcome& out)
{
    for (const char* env : {"random_chain", "directed_chain", "dc_gaussian"}) {
        const std::string name(env);
        const auto by_m = sweep(config_with_samples("m_sweep_" + name + ".json", 10000), true);
        const double e5 = by_m.at(5).at("embedding_sq_error");
        const double e100 = by_m.at(100).at("embedding_sq_error");
        out.require(e100 * 10.0 <= e5, name + " embedding m=5 " + fmt(e5) + " vs m=100 " + fmt(e100));
        if (name != "directed_chain") {
            const double c = by_m.at(100).at("cramer");
            const double d = by_m.at(100).at("dirac_cramer");
            out.require(c < d, name + " cramer m=100 " + fmt(c) + " < dirac " + fmt(d));
        }
        const auto by_slope = sweep(config_with_samples("slope_sweep_" + name + ".json", 10000), false);
        double best_key = by_slope.begin()->first;
        double best = INFINITY;
        for (const auto& [key, metrics] : by_slope) {
            if (metrics.at("cramer") < best) {
                best = metrics.at("cramer");
                best_key = key;
            }
        }
        const bool interior = best_key != by_slope.begin()->first && best_key != by_slope.rbegin()->first;
        out.require(interior, name + " slope minimizer " + fmt(best_key));
    }
}

void walkthrough(Outcome& out)
{
    const ExperimentConfig c = load_config(g_configs / "walkthrough.json");
    const Mrp mrp = c.environment.build();
    const GroundTruth gt = monte_carlo_ground_truth(mrp, c.oracle.samples, c.oracle.seed, c.oracle.truncation_tol);
    const auto t0 = Clock::now();
    const SweepPoint point = expand_sweep(c).front();
    const FeatureLayout layout = make_layout(c, point, gt);
    const FeatureMap map = make_feature_map(c.family, point.m, layout, c.append_constant);
    const BellmanModel model = make_model(c, map, layout, mrp.discount());
    const SketchDpRun run = run_sketch_dp(SketchDpOperator(mrp, model), initial_table(map, mrp.num_states()), 200, 1e-8,
                                          true);
    out.require(run.converged && run.last_change < 1e-8,
                "sup change " + fmt(run.last_change) + " after " + std::to_string(run.table.iteration) + " iterations");

    const PcaResult pca = pca_project(run.trajectory, ground_truth_embedding(gt, map));
    out.require(pca.explained_total() > 0.70, "top-2 PCA variance " + fmt(pca.explained_total()) + " > 0.70");

    std::mt19937_64 rng(c.jitter_seed);
    const auto grids = jittered_supports(base_support(map, layout, point.m), c.jitters, rng);
    double worst = 0.0;
    for (int x : mrp.nonterminal_states()) {
        double total = 0.0;
        for (const auto& grid : grids) {
            const auto imputed = impute_distribution(map, grid, run.table[x], c.imputation).distribution;
            total += cramer_distance(imputed, categorical_projection(gt.distributions[x], grid));
        }
        worst = std::max(worst, total / static_cast<double>(grids.size()));
    }
    out.require(worst <= 0.1, "worst jitter-averaged Cramer to projected truth " + fmt(worst) + " <= 0.1");
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    out.require(secs < 60.0, "time after the oracle " + fmt(secs) + " s < 60 s");
}

void sfdp_comparison(Outcome& out)
{
    ExperimentConfig c = config_with_samples("sfdp_directed_chain.json", 100000);
    const Mrp mrp = c.environment.build();
    const GroundTruth gt = monte_carlo_ground_truth(mrp, c.oracle.samples, c.oracle.seed, c.oracle.truncation_tol);
    const SweepPoint point{50, 1.0, std::nullopt};
    const FeatureLayout layout = make_layout(c, point, gt);
    const FeatureMap map = make_feature_map(c.family, 50, layout, c.append_constant);
    const BellmanModel model = make_model(c, map, layout, mrp.discount());
    const SketchDpOperator dp(mrp, model);
    const SfdpOperator sfdp(mrp, model, base_support(map, layout, 50), c.imputation);
    auto per_iter = [](auto&& step, SketchTable table, int iters) {
        const auto t0 = Clock::now();
        for (int k = 0; k < iters; ++k) table = step(table);
        return std::chrono::duration<double>(Clock::now() - t0).count() / iters;
    };
    const SketchTable start = initial_table(map, mrp.num_states());
    const double t_dp = per_iter([&](const SketchTable& t) { return dp.step(t); }, start, 2000);
    const double t_sfdp = per_iter([&](const SketchTable& t) { return sfdp.step(t); }, start, 20);
    out.require(t_sfdp >= 10.0 * t_dp, "per-iteration sfdp " + fmt(t_sfdp * 1e6) + " us vs dp " + fmt(t_dp * 1e6) + " us");

    auto cramer = [&](Algorithm alg) -> double {
        c.algorithm = alg;
        for (const ResultRow& r : run_point(c, point, mrp, gt).rows)
            if (r.state == "all" && r.metric == "cramer") return r.value;
        return INFINITY;
    };
    const double c_dp = cramer(Algorithm::sketch_dp);
    const double c_sfdp = cramer(Algorithm::sfdp);
    out.require(c_dp <= c_sfdp + 0.05, "final Cramer dp " + fmt(c_dp) + " <= sfdp " + fmt(c_sfdp) + " + 0.05");
}

// Best and worst over the step sizes of the max-state embedding error between TD and the DP fixed point.
std::pair<double, double> td_errors(const std::string& file)
{
    const ExperimentConfig c = config_with_samples(file, 100000);
    const Mrp mrp = c.environment.build();
    const GroundTruth gt = monte_carlo_ground_truth(mrp, c.oracle.samples, c.oracle.seed, c.oracle.truncation_tol);
    const SweepPoint point{50, 1.0, std::nullopt};
    const FeatureLayout layout = make_layout(c, point, gt);
    const FeatureMap map = make_feature_map(c.family, 50, layout, c.append_constant);
    const BellmanModel model = make_model(c, map, layout, mrp.discount());
    const SketchDpRun dp = run_sketch_dp(SketchDpOperator(mrp, model), initial_table(map, mrp.num_states()), 1000);
    double best = INFINITY;
    double worst = 0.0;
    for (double alpha : {1e-3, 3e-3, 0.01, 0.03, 0.1, 0.3}) {
        const SketchTable td =
            run_sketch_td(mrp, model, initial_table(map, mrp.num_states()), TdSettings{alpha, 100000, c.td.seed});
        double err = 0.0;
        for (int x : mrp.nonterminal_states()) {
            const double e = embedding_error(td[x], dp.table[x]);
            err = std::isfinite(e) ? std::max(err, e) : INFINITY;
        }
        best = std::min(best, err);
        worst = std::max(worst, err);
    }
    return {best, worst};
}

void td_consistency(Outcome& out)
{
    const auto [sig_best, sig_worst] = td_errors("td_directed_chain.json");
    out.require(sig_best <= 1e-3, "sigmoid best-alpha embedding error " + fmt(sig_best) + " <= 1e-3");
    const auto [poly_best, poly_worst] = td_errors("td_polynomial_directed_chain.json");
    out.require(poly_best > 1e-3, "polynomial best-alpha embedding error " + fmt(poly_best) + " > 1e-3 (worst " +
                                      fmt(poly_worst) + ")");
}

void property_suites(Outcome& out)
{
    std::mt19937_64 rng(99);
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> u01;

    double simplex = 0.0;
    for (int n = 1; n <= 7; ++n) {
        for (int trial = 0; trial < 200; ++trial) {
            Eigen::VectorXd v(n);
            for (int i = 0; i < n; ++i) v[i] = 1.5 * n01(rng);
            simplex = std::max(simplex, (project_to_simplex(v) - oracle::brute_force_simplex_projection(v)).cwiseAbs().maxCoeff());
        }
    }
    out.require(simplex < 1e-10, "simplex vs active-set oracle " + fmt(simplex));

    // Jumps on a shared grid fall on quadrature cell edges, so the midpoint rule is exact up to rounding.
    const std::vector<double> grid = linspace(-1.0, 2.0, 13);
    auto random_law = [&] {
        std::vector<double> w(grid.size());
        for (double& x : w) x = u01(rng) < 0.3 ? 0.0 : u01(rng);
        w[rng() % grid.size()] += 0.1;
        return DiscreteDistribution::from_atoms(grid, w);
    };
    double quad = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto a = random_law();
        const auto b = random_law();
        const double numeric = oracle::numeric_cramer(a.support(), a.probs(), b.support(), b.probs(), -1.0, 2.0, 12 * 64);
        quad = std::max(quad, std::abs(cramer_distance(a, b) - numeric));
    }
    out.require(quad < 1e-8, "Cramer vs quadrature " + fmt(quad));

    const std::vector<double> proj_grid = linspace(-2.0, 2.0, 17);
    double conservation = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> z, w;
        for (int i = 0; i < 30; ++i) {
            z.push_back(-2.0 + 4.0 * u01(rng));
            w.push_back(u01(rng));
        }
        const auto d = DiscreteDistribution::from_atoms(z, w);
        const auto p = categorical_projection(d, proj_grid);
        double mass = 0.0;
        for (double q : p.probs()) mass += q;
        conservation = std::max({conservation, std::abs(mass - 1.0), std::abs(p.mean() - d.mean())});
    }
    out.require(conservation < 1e-12, "projection mass/mean drift " + fmt(conservation));

    const FeatureLayout layout = range_layout(0.0, 2.0);
    const auto [lo, hi] = layout.regression_interval();
    const RegressionGrid rgrid{linspace(lo, hi, 400)};
    const FeatureMap gauss = make_feature_map(FamilyKind::gaussian, 6, layout);
    const Eigen::MatrixXd b = solve_bellman_coefficients(gauss, rgrid, 0.9, 0.5, 0.0);
    double basis = 0.0;
    int checked = 0;
    while (checked < 5) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Identity(6, 6);
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) m(i, j) += 0.3 * n01(rng);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
        if (svd.singularValues()(0) / svd.singularValues()(5) > 50.0) continue;
        const Eigen::MatrixXd minv = m.inverse();
        const Eigen::MatrixXd transformed = oracle::lstsq_coefficients(
            [&](double z) -> Eigen::VectorXd { return minv * gauss(z); }, rgrid.points, 0.9, 0.5);
        basis = std::max(basis, (transformed - minv * b * m).cwiseAbs().maxCoeff());
        ++checked;
    }
    out.require(basis < 1e-6, "basis-change invariance " + fmt(basis));

    double drift = 0.0;
    for (Environment env : {Environment::random_chain, Environment::directed_chain, Environment::dc_gaussian,
                            Environment::tree, Environment::loopy_tree, Environment::cycle}) {
        const Mrp mrp = build_named_environment(env);
        const GroundTruth gt = monte_carlo_ground_truth(mrp, 2000, 1);
        const FeatureLayout env_layout = range_layout(std::min(0.0, gt.min_return()), std::max(0.0, gt.max_return()));
        const FeatureMap map = make_feature_map(FamilyKind::sigmoid, 20, env_layout, true);
        const BellmanModel model(
            map, build_regression_grid(env_layout.g_min_hat, env_layout.g_max_hat, env_layout.grid_pad, 2000),
            mrp.discount());
        const SketchDpOperator op(mrp, model);
        const int c = *map.constant_index();
        SketchTable table = initial_table(map, mrp.num_states());
        for (int k = 0; k < 200; ++k) {
            table = op.step(table);
            drift = std::max(drift, (table.values.row(c).array() - 1.0).abs().maxCoeff());
        }
    }
    out.require(drift < 1e-6, "constant coordinate drift over 200 iterations " + fmt(drift));
}

}  // namespace

int main(int argc, char** argv)
{
    if (argc > 1) g_configs = argv[1];

    criterion(1, "moment closure exactness", 1.0, moment_closure);
    criterion(2, "regression diagnostics, 20 anchors on [-8, 8]", 10.0, diagnostics_reproduction);
    criterion(3, "indicator weighted-l1 error bound", 120.0, indicator_bound);
    criterion(4, "oracle horizon", 1.0, oracle_horizon);
    criterion(5, "m and slope sweep trends", 600.0, sweep_trends);
    // One minute for the run itself, checked inside; the outer budget also covers the oracle.
    criterion(6, "sinusoid walk-through", 600.0, walkthrough);
    criterion(7, "Sketch-DP vs SFDP", 300.0, sfdp_comparison);
    criterion(8, "TD consistency", 600.0, td_consistency);
    criterion(9, "property suites", 120.0, property_suites);

    std::printf("%d criteria failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
