// Command-line front end: run / sweep experiment configs, sample ground truth, print Bellman diagnostics.
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "sketch/experiment.hpp"

namespace {

using namespace sketch;

void write_rows(const ExperimentConfig& config, const std::vector<ResultRow>& rows, const std::string& out_override,
                bool append)
{
    const std::string out = out_override.empty() ? config.output : out_override;
    if (out.empty() || out == "-")
        write_csv(rows, std::cout);
    else {
        emit_csv(rows, out, append);
        // Resolved settings (solver tolerances included) next to the results.
        std::ofstream meta(out + ".meta.json");
        meta << to_json(config).dump(2) << "\n";
    }
}

int cmd_run(const std::string& path, const std::string& out, bool require_sweep, bool append)
{
    const ExperimentConfig config = load_config(path);
    const auto axis = sweep_axis(config);
    if (require_sweep && !axis) throw ConfigError("sweep: no axis lists more than one value");
    if (!require_sweep && axis) throw ConfigError(*axis + ": lists several values; use the sweep subcommand");
    write_rows(config, run_experiment(config, cache_dir_from_env()), out, append);
    return 0;
}

int cmd_oracle(const std::string& env, const std::string& noise, int samples, std::uint64_t seed, double tol,
               const std::string& out)
{
    const Mrp mrp = build_named_environment(env, parse_reward_noise(noise));
    const GroundTruth gt = monte_carlo_ground_truth(mrp, samples, seed, tol);
    write_ground_truth_csv(gt, out);
    std::fprintf(stderr, "wrote %d states x %d samples (horizon %d) to %s\n", gt.num_states(), gt.samples_per_state,
                 gt.horizon, out.c_str());
    return 0;
}

int cmd_diagnose(const std::string& path)
{
    const ExperimentConfig config = load_config(path);
    const Mrp mrp = config.environment.build();
    const GroundTruth gt = load_or_compute_ground_truth(config.environment, mrp, config.oracle, cache_dir_from_env());
    std::set<double> reward_set;
    for (int x : mrp.nonterminal_states())
        for (const auto& r : discretize_reward(mrp.reward(x), 1)) reward_set.insert(r.value);
    const std::vector<double> rewards(reward_set.begin(), reward_set.end());

    nlohmann::json report = nlohmann::json::array();
    for (const auto& point : expand_sweep(config)) {
        const FeatureLayout layout = make_layout(config, point, gt);
        const FeatureMap map = make_feature_map(config.family, point.m, layout, config.append_constant);
        const BellmanModel model = make_model(config, map, layout, mrp.discount());
        nlohmann::json entry = {{"m", point.m}, {"slope_scale", point.slope_scale},
                                {"anchor_ratio", layout.effective_anchor_ratio()}, {"rewards", rewards}};
        if (map.is_polynomial()) {
            entry["worst_residual"] = worst_regression_residual(model, rewards);
        } else {
            const auto d = bellman_diagnostics(map, model.grid(), mrp.discount(), rewards, config.ridge);
            entry["worst_residual"] = d.worst_residual;
            entry["worst_residual_l2"] = d.worst_residual_l2;
            entry["spectral_radius"] = d.spectral_radius;
            entry["operator_norm"] = d.operator_norm;
            entry["max_real_eigenvalue"] = d.max_real_eigenvalue;
        }
        report.push_back(std::move(entry));
    }
    std::cout << report.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Sketch-based distributional policy evaluation"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out;
    bool append = false;
    auto* run = app.add_subcommand("run", "Run a single-point experiment config");
    run->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out, "Output CSV (overrides the config; '-' for stdout)");
    run->add_flag("--append", append, "Append to an existing CSV");

    auto* sweep = app.add_subcommand("sweep", "Run a config that sweeps m, slope_scale or anchor_range_ratio");
    sweep->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sweep->add_option("--out", out, "Output CSV (overrides the config; '-' for stdout)");
    sweep->add_flag("--append", append, "Append to an existing CSV");

    std::string env;
    std::string noise = "deterministic";
    int samples = 100000;
    std::uint64_t seed = 0;
    double tol = kDefaultTruncationTol;
    auto* oracle = app.add_subcommand("oracle", "Sample Monte Carlo ground-truth returns for a named environment");
    oracle->add_option("env", env, "Environment name")->required();
    oracle->add_option("--noise", noise, "deterministic or gaussian_unit_sd");
    oracle->add_option("--samples", samples, "Samples per state")->check(CLI::PositiveNumber);
    oracle->add_option("--seed", seed, "Random seed");
    oracle->add_option("--tol", tol, "Truncation tolerance")->check(CLI::PositiveNumber);
    oracle->add_option("--out", out, "Output CSV")->required();

    auto* diagnose = app.add_subcommand("diagnose", "Print regression residual and spectral diagnostics as JSON");
    diagnose->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return cmd_run(config_path, out, false, append);
        if (*sweep) return cmd_run(config_path, out, true, append);
        if (*oracle) return cmd_oracle(env, noise, samples, seed, tol, out);
        if (*diagnose) return cmd_diagnose(config_path);
    } catch (const sketch::SolveError& e) {
        std::fprintf(stderr, "error: %s (condition estimate %.3g)\n", e.what(), e.condition());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
