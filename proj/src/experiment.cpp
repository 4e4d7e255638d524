#include "sketch/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <Eigen/SVD>

namespace sketch {

using nlohmann::json;

Algorithm parse_algorithm(std::string_view name)
{
    if (name == "sketch_dp") return Algorithm::sketch_dp;
    if (name == "sketch_td") return Algorithm::sketch_td;
    if (name == "cdrl") return Algorithm::cdrl;
    if (name == "sfdp") return Algorithm::sfdp;
    throw ConfigError("algorithm: unknown value '" + std::string(name) + "'");
}

std::string_view to_string(Algorithm algorithm)
{
    switch (algorithm) {
    case Algorithm::sketch_dp: return "sketch_dp";
    case Algorithm::sketch_td: return "sketch_td";
    case Algorithm::cdrl: return "cdrl";
    case Algorithm::sfdp: return "sfdp";
    }
    return "unknown";
}

// ---------------------------------------------------------------- config I/O

json reward_law_to_json(const RewardLaw& law)
{
    if (const auto* d = std::get_if<DiracReward>(&law)) return {{"kind", "dirac"}, {"value", d->value}};
    if (const auto* g = std::get_if<GaussianReward>(&law))
        return {{"kind", "gaussian"}, {"mean", g->mean}, {"stddev", g->stddev}};
    const auto& f = std::get<FiniteReward>(law);
    return {{"kind", "finite"}, {"support", f.support}, {"probs", f.probs}};
}

RewardLaw reward_law_from_json(const json& j)
{
    if (j.is_number()) return DiracReward{j.get<double>()};
    const std::string kind = j.value("kind", "dirac");
    if (kind == "dirac") return DiracReward{j.value("value", 0.0)};
    if (kind == "gaussian") return make_gaussian_reward(j.at("mean").get<double>(), j.value("stddev", 1.0));
    if (kind == "finite")
        return make_finite_reward(j.at("support").get<std::vector<double>>(), j.at("probs").get<std::vector<double>>());
    throw ConfigError("reward kind: unknown value '" + kind + "'");
}

Mrp mrp_from_json(const json& j)
{
    try {
        const auto rows = j.at("transition").get<std::vector<std::vector<double>>>();
        const auto n = static_cast<Eigen::Index>(rows.size());
        Eigen::MatrixXd p(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (static_cast<Eigen::Index>(rows[i].size()) != n)
                throw ConfigError("environment.custom.transition: row " + std::to_string(i) + " has wrong length");
            for (Eigen::Index k = 0; k < n; ++k) p(i, k) = rows[i][k];
        }
        std::vector<RewardLaw> rewards;
        for (const auto& r : j.at("rewards")) rewards.push_back(reward_law_from_json(r));
        const auto terminal = j.at("terminal").get<std::vector<bool>>();
        const auto names = j.value("names", std::vector<std::string>{});
        return Mrp(std::move(p), std::move(rewards), j.value("discount", 0.9), terminal, names);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("environment.custom: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("environment.custom: ") + e.what());
    }
}

std::string EnvironmentSpec::display_name() const
{
    if (custom) return label;
    return noise == RewardNoise::deterministic ? name : name + "+" + std::string(to_string(noise));
}

Mrp EnvironmentSpec::build() const
{
    if (custom) return mrp_from_json(*custom);
    return build_named_environment(name, noise);
}

namespace {

template <class T>
std::vector<T> scalar_or_list(const json& j, const char* field)
{
    try {
        if (j.is_array()) return j.get<std::vector<T>>();
        return {j.get<T>()};
    } catch (const json::exception&) {
        throw ConfigError(std::string(field) + ": expected a number or a list of numbers");
    }
}

template <class T>
T field(const json& j, const char* key, T fallback, const char* path)
{
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string(path) + ": wrong type");
    }
}

}  // namespace

ExperimentConfig parse_config(const json& j)
{
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    static const std::vector<std::string> known = {
        "environment", "family", "append_constant", "m", "slope_scale", "anchor_range_ratio", "anchor_pad", "grid_pad",
        "grid_points", "return_range", "ridge", "algorithm", "iterations", "stop_tol", "td", "oracle", "jitters",
        "jitter_seed", "imputation", "timing", "walkthrough", "output", "description"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError(key + ": unknown field");

    ExperimentConfig c;
    if (!j.contains("environment")) throw ConfigError("environment: required");
    const json& env = j.at("environment");
    if (env.is_string()) {
        c.environment.name = env.get<std::string>();
    } else if (env.is_object()) {
        if (env.contains("custom")) {
            c.environment.custom = env.at("custom");
            mrp_from_json(*c.environment.custom);
            c.environment.label = field<std::string>(env, "label", "custom", "environment.label");
        } else {
            c.environment.name = field<std::string>(env, "name", "", "environment.name");
        }
        try {
            c.environment.noise = parse_reward_noise(field<std::string>(env, "reward_noise", "deterministic",
                                                                        "environment.reward_noise"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("environment.reward_noise: ") + e.what());
        }
    } else {
        throw ConfigError("environment: expected a name or an object");
    }
    if (!c.environment.custom) {
        try {
            parse_environment(c.environment.name);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("environment.name: ") + e.what());
        }
    }

    try {
        c.family = parse_family(field<std::string>(j, "family", "sigmoid", "family"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("family: ") + e.what());
    }
    c.append_constant = field(j, "append_constant", false, "append_constant");
    if (j.contains("m")) c.m = scalar_or_list<int>(j.at("m"), "m");
    if (j.contains("slope_scale")) c.slope_scale = scalar_or_list<double>(j.at("slope_scale"), "slope_scale");
    if (j.contains("anchor_range_ratio") && !j.at("anchor_range_ratio").is_null())
        c.anchor_range_ratio = scalar_or_list<double>(j.at("anchor_range_ratio"), "anchor_range_ratio");
    c.anchor_pad = field(j, "anchor_pad", c.anchor_pad, "anchor_pad");
    c.grid_pad = field(j, "grid_pad", c.grid_pad, "grid_pad");
    c.grid_points = field(j, "grid_points", c.grid_points, "grid_points");
    if (j.contains("return_range") && !j.at("return_range").is_null()) {
        const auto r = scalar_or_list<double>(j.at("return_range"), "return_range");
        if (r.size() != 2 || !(r[0] < r[1])) throw ConfigError("return_range: expected [low, high] with low < high");
        c.return_range = std::make_pair(r[0], r[1]);
    }
    c.ridge = field(j, "ridge", c.ridge, "ridge");
    c.algorithm = parse_algorithm(field<std::string>(j, "algorithm", "sketch_dp", "algorithm"));
    c.iterations = field(j, "iterations", c.iterations, "iterations");
    c.stop_tol = field(j, "stop_tol", c.stop_tol, "stop_tol");
    if (j.contains("td")) {
        const json& td = j.at("td");
        c.td.alpha = field(td, "alpha", c.td.alpha, "td.alpha");
        c.td.sweeps = field(td, "sweeps", c.td.sweeps, "td.sweeps");
        c.td.seed = field<std::uint64_t>(td, "seed", c.td.seed, "td.seed");
    }
    if (j.contains("oracle")) {
        const json& o = j.at("oracle");
        c.oracle.samples = field(o, "samples", c.oracle.samples, "oracle.samples");
        c.oracle.seed = field<std::uint64_t>(o, "seed", c.oracle.seed, "oracle.seed");
        c.oracle.truncation_tol = field(o, "truncation_tol", c.oracle.truncation_tol, "oracle.truncation_tol");
    }
    c.jitters = field(j, "jitters", c.jitters, "jitters");
    c.jitter_seed = field<std::uint64_t>(j, "jitter_seed", c.jitter_seed, "jitter_seed");
    if (j.contains("imputation")) {
        const json& im = j.at("imputation");
        c.imputation.max_iters = field(im, "max_iters", c.imputation.max_iters, "imputation.max_iters");
        c.imputation.tol = field(im, "tol", c.imputation.tol, "imputation.tol");
        c.imputation.restarts = field(im, "restarts", c.imputation.restarts, "imputation.restarts");
        c.imputation.polish_after = field(im, "polish_after", c.imputation.polish_after, "imputation.polish_after");
    }
    c.timing = field(j, "timing", c.timing, "timing");
    if (j.contains("walkthrough") && !j.at("walkthrough").is_null()) {
        const json& w = j.at("walkthrough");
        WalkthroughSettings ws;
        ws.snapshots = field(w, "snapshots", std::vector<int>{}, "walkthrough.snapshots");
        ws.pca_out = field<std::string>(w, "pca_out", "", "walkthrough.pca_out");
        ws.imputation_out = field<std::string>(w, "imputation_out", "", "walkthrough.imputation_out");
        c.walkthrough = ws;
    }
    c.output = field<std::string>(j, "output", "", "output");

    if (c.m.empty()) throw ConfigError("m: at least one value required");
    for (int m : c.m)
        if (m < 2) throw ConfigError("m: every value must be at least 2");
    if (c.slope_scale.empty()) throw ConfigError("slope_scale: at least one value required");
    for (double s : c.slope_scale)
        if (!(s > 0.0)) throw ConfigError("slope_scale: values must be positive");
    for (double r : c.anchor_range_ratio)
        if (!(r > 0.0)) throw ConfigError("anchor_range_ratio: values must be positive");
    if (c.anchor_pad < 0.0) throw ConfigError("anchor_pad: must be nonnegative");
    if (c.grid_pad < 0.0) throw ConfigError("grid_pad: must be nonnegative");
    if (c.grid_points < 2) throw ConfigError("grid_points: must be at least 2");
    if (c.ridge < 0.0) throw ConfigError("ridge: must be nonnegative");
    if (c.iterations < 0) throw ConfigError("iterations: must be nonnegative");
    if (!(c.td.alpha > 0.0 && c.td.alpha <= 1.0)) throw ConfigError("td.alpha: must lie in (0, 1]");
    if (c.td.sweeps < 0) throw ConfigError("td.sweeps: must be nonnegative");
    if (c.oracle.samples < 1) throw ConfigError("oracle.samples: must be positive");
    if (!(c.oracle.truncation_tol > 0.0)) throw ConfigError("oracle.truncation_tol: must be positive");
    if (c.jitters < 1) throw ConfigError("jitters: must be positive");
    if (c.walkthrough)
        for (int s : c.walkthrough->snapshots)
            if (s < 0 || s > c.iterations) throw ConfigError("walkthrough.snapshots: must lie in [0, iterations]");
    if (c.walkthrough && c.algorithm != Algorithm::sketch_dp)
        throw ConfigError("walkthrough: only available for sketch_dp");
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_config(j);
}

json to_json(const ExperimentConfig& c)
{
    json j;
    if (c.environment.custom) {
        j["environment"] = {{"custom", *c.environment.custom},
                            {"label", c.environment.label},
                            {"reward_noise", to_string(c.environment.noise)}};
    } else {
        j["environment"] = {{"name", c.environment.name}, {"reward_noise", to_string(c.environment.noise)}};
    }
    j["family"] = to_string(c.family);
    j["append_constant"] = c.append_constant;
    j["m"] = c.m;
    j["slope_scale"] = c.slope_scale;
    j["anchor_range_ratio"] = c.anchor_range_ratio;
    j["anchor_pad"] = c.anchor_pad;
    j["grid_pad"] = c.grid_pad;
    j["grid_points"] = c.grid_points;
    j["return_range"] = c.return_range ? json{c.return_range->first, c.return_range->second} : json(nullptr);
    j["ridge"] = c.ridge;
    j["algorithm"] = to_string(c.algorithm);
    j["iterations"] = c.iterations;
    j["stop_tol"] = c.stop_tol;
    j["td"] = {{"alpha", c.td.alpha}, {"sweeps", c.td.sweeps}, {"seed", c.td.seed}};
    j["oracle"] = {{"samples", c.oracle.samples}, {"seed", c.oracle.seed}, {"truncation_tol", c.oracle.truncation_tol}};
    j["jitters"] = c.jitters;
    j["jitter_seed"] = c.jitter_seed;
    j["imputation"] = {{"max_iters", c.imputation.max_iters},
                       {"tol", c.imputation.tol},
                       {"restarts", c.imputation.restarts},
                       {"polish_after", c.imputation.polish_after}};
    j["timing"] = c.timing;
    if (c.walkthrough)
        j["walkthrough"] = {{"snapshots", c.walkthrough->snapshots},
                            {"pca_out", c.walkthrough->pca_out},
                            {"imputation_out", c.walkthrough->imputation_out}};
    else
        j["walkthrough"] = nullptr;
    j["output"] = c.output;
    return j;
}

// ---------------------------------------------------------------- sweeps

std::optional<std::string> sweep_axis(const ExperimentConfig& config)
{
    std::vector<std::string> axes;
    if (config.m.size() > 1) axes.push_back("m");
    if (config.slope_scale.size() > 1) axes.push_back("slope_scale");
    if (config.anchor_range_ratio.size() > 1) axes.push_back("anchor_range_ratio");
    if (axes.size() > 1) throw ConfigError("sweep: only one of m, slope_scale, anchor_range_ratio may list several values");
    if (axes.empty()) return std::nullopt;
    return axes.front();
}

std::vector<SweepPoint> expand_sweep(const ExperimentConfig& config)
{
    sweep_axis(config);
    std::vector<SweepPoint> points;
    std::vector<std::optional<double>> ratios;
    if (config.anchor_range_ratio.empty())
        ratios.push_back(std::nullopt);
    else
        ratios.assign(config.anchor_range_ratio.begin(), config.anchor_range_ratio.end());
    for (int m : config.m)
        for (double s : config.slope_scale)
            for (const auto& r : ratios) points.push_back({m, s, r});
    return points;
}

// ---------------------------------------------------------------- CSV

namespace {

std::string format_real(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

}  // namespace

void write_csv(const std::vector<ResultRow>& rows, std::ostream& out, bool header)
{
    if (header) out << kCsvHeader << '\n';
    for (const auto& r : rows) {
        if (!std::isfinite(r.value)) throw std::runtime_error("result row '" + r.metric + "' has a non-finite value");
        out << r.environment << ',' << r.algorithm << ',' << r.family << ',' << r.m << ',' << format_real(r.slope_scale)
            << ',' << format_real(r.anchor_ratio) << ',' << r.state << ',' << r.metric << ',' << format_real(r.value)
            << ',' << r.seed << '\n';
    }
}

void emit_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path, bool append)
{
    const bool need_header = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_csv(rows, out, need_header);
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<ResultRow> parse_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw std::runtime_error("results CSV: unexpected header");
    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 10) throw std::runtime_error("results CSV: expected 10 fields in '" + line + "'");
        ResultRow r;
        r.environment = f[0];
        r.algorithm = f[1];
        r.family = f[2];
        r.m = std::stoi(f[3]);
        r.slope_scale = std::stod(f[4]);
        r.anchor_ratio = std::stod(f[5]);
        r.state = f[6];
        r.metric = f[7];
        r.value = std::stod(f[8]);
        r.seed = std::stoull(f[9]);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<ResultRow> parse_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return parse_csv(in);
}

// ---------------------------------------------------------------- PCA

PcaResult pca_project(const std::vector<SketchTable>& trajectory, const Eigen::MatrixXd& reference)
{
    if (trajectory.size() < 2) throw std::invalid_argument("pca_project: need at least two snapshots");
    const int n_states = trajectory.front().num_states();
    const int m = trajectory.front().dimension();
    if (reference.size() > 0 && reference.rows() != m)
        throw std::invalid_argument("pca_project: reference dimension differs from the snapshots");
    const auto total = static_cast<Eigen::Index>(trajectory.size()) * n_states + reference.cols();
    Eigen::MatrixXd pooled(total, m);
    Eigen::Index row = 0;
    for (const auto& snap : trajectory) {
        if (snap.num_states() != n_states || snap.dimension() != m)
            throw std::invalid_argument("pca_project: snapshots differ in shape");
        for (int x = 0; x < n_states; ++x) pooled.row(row++) = snap.values.col(x).transpose();
    }
    for (Eigen::Index k = 0; k < reference.cols(); ++k) pooled.row(row++) = reference.col(k).transpose();

    const Eigen::RowVectorXd mean = pooled.colwise().mean();
    pooled.rowwise() -= mean;
    const double scale = std::max(pooled.cwiseAbs().maxCoeff(), mean.cwiseAbs().maxCoeff());
    if (!(pooled.cwiseAbs().maxCoeff() > 1e-13 * std::max(scale, 1.0)))
        throw std::invalid_argument("pca_project: pooled embeddings have zero variance");

    Eigen::BDCSVD<Eigen::MatrixXd> svd(pooled, Eigen::ComputeThinV);
    const Eigen::VectorXd var = svd.singularValues().array().square();
    PcaResult out;
    out.num_snapshots = static_cast<int>(trajectory.size());
    out.num_states = n_states;
    const Eigen::Index k = std::min<Eigen::Index>(2, var.size());
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(m, 2);
    basis.leftCols(k) = svd.matrixV().leftCols(k);
    out.coordinates = pooled * basis;
    for (Eigen::Index i = 0; i < k; ++i) out.explained[i] = var[i] / var.sum();
    return out;
}

// ---------------------------------------------------------------- building blocks

FeatureLayout make_layout(const ExperimentConfig& config, const SweepPoint& point, const GroundTruth& gt)
{
    FeatureLayout layout;
    if (config.return_range) {
        layout.g_min_hat = config.return_range->first;
        layout.g_max_hat = config.return_range->second;
    } else {
        // Returns of zero always occur: tables start at phi(0) and terminal states return 0.
        layout.g_min_hat = std::min(0.0, gt.min_return());
        layout.g_max_hat = std::max(0.0, gt.max_return());
        if (!(layout.g_max_hat > layout.g_min_hat)) layout.g_max_hat = layout.g_min_hat + 1.0;
    }
    layout.anchor_pad = config.anchor_pad;
    layout.grid_pad = config.grid_pad;
    layout.slope_scale = point.slope_scale;
    layout.anchor_range_ratio = point.anchor_range_ratio;
    layout.validate();
    return layout;
}

BellmanModel make_model(const ExperimentConfig& config, const FeatureMap& map, const FeatureLayout& layout,
                        double discount)
{
    const auto [lo, hi] = layout.regression_interval();
    RegressionGrid grid{linspace(lo, hi, std::max(config.grid_points, 2 * map.dimension()))};
    const auto source = map.is_polynomial() ? CoefficientSource::polynomial_closed_form : CoefficientSource::regression;
    return BellmanModel(map, std::move(grid), discount, config.ridge, source);
}

std::vector<double> base_support(const FeatureMap& map, const FeatureLayout& layout, int m)
{
    if (!map.is_polynomial()) return map.anchor_points();
    const auto [lo, hi] = layout.anchor_interval();
    return linspace(lo, hi, m);
}

std::optional<std::filesystem::path> cache_dir_from_env()
{
    const char* dir = std::getenv("SKETCH_CACHE_DIR");
    if (!dir || !*dir) return std::nullopt;
    return std::filesystem::path(dir);
}

namespace {

std::uint64_t fnv1a(std::string_view text)
{
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string cache_key(const EnvironmentSpec& env, const OracleSettings& oracle)
{
    std::string base = env.custom ? "custom-" + std::to_string(fnv1a(env.custom->dump()))
                                  : env.name + "-" + std::string(to_string(env.noise));
    char tol[32];
    std::snprintf(tol, sizeof tol, "%g", oracle.truncation_tol);
    return "gt-" + base + "-s" + std::to_string(oracle.seed) + "-n" + std::to_string(oracle.samples) + "-t" + tol +
           ".csv";
}

}  // namespace

GroundTruth load_or_compute_ground_truth(const EnvironmentSpec& env, const Mrp& mrp, const OracleSettings& oracle,
                                         const std::optional<std::filesystem::path>& cache_dir)
{
    const int horizon = required_horizon(mrp, oracle.truncation_tol);
    if (cache_dir) {
        const auto path = *cache_dir / cache_key(env, oracle);
        if (std::filesystem::exists(path)) {
            GroundTruth gt = read_ground_truth_csv(path, horizon, oracle.seed);
            if (gt.num_states() == mrp.num_states() && gt.samples_per_state == oracle.samples) return gt;
        }
        GroundTruth gt = monte_carlo_ground_truth(mrp, oracle.samples, oracle.seed, oracle.truncation_tol);
        std::filesystem::create_directories(*cache_dir);
        // Write then rename so concurrent readers never see a partial file.
        const auto tmp = path.string() + ".tmp" + std::to_string(fnv1a(path.string()) ^ static_cast<std::uint64_t>(
                                                                          std::chrono::steady_clock::now()
                                                                              .time_since_epoch()
                                                                              .count()));
        write_ground_truth_csv(gt, tmp);
        std::filesystem::rename(tmp, path);
        return gt;
    }
    return monte_carlo_ground_truth(mrp, oracle.samples, oracle.seed, oracle.truncation_tol);
}

// ---------------------------------------------------------------- runs

namespace {

struct MetricAccumulator {
    std::vector<double> embedding;
    std::vector<double> cramer;
    std::vector<double> excess;
    std::vector<double> dirac;
};

}  // namespace

PointResult run_point(const ExperimentConfig& config, const SweepPoint& point, const Mrp& mrp, const GroundTruth& gt)
{
    if (gt.num_states() != mrp.num_states()) throw std::invalid_argument("ground truth does not match the MRP");
    const FeatureLayout layout = make_layout(config, point, gt);
    const FeatureMap map = make_feature_map(config.family, point.m, layout, config.append_constant);
    const BellmanModel model = make_model(config, map, layout, mrp.discount());
    const std::vector<double> support = base_support(map, layout, point.m);
    const int n_states = mrp.num_states();

    PointResult result;
    std::optional<CategoricalTable> categorical;
    long steps = 0;
    const auto start = std::chrono::steady_clock::now();
    switch (config.algorithm) {
    case Algorithm::sketch_dp: {
        const SketchDpOperator op(mrp, model);
        SketchDpRun run = run_sketch_dp(op, initial_table(map, n_states), config.iterations, config.stop_tol,
                                        config.walkthrough.has_value());
        steps = run.table.iteration;
        result.table = std::move(run.table);
        result.trajectory = std::move(run.trajectory);
        break;
    }
    case Algorithm::sketch_td:
        result.table = run_sketch_td(mrp, model, initial_table(map, n_states), config.td);
        steps = config.td.sweeps;
        break;
    case Algorithm::cdrl: {
        CategoricalTable table = initial_categorical_table(support, n_states);
        for (int k = 0; k < config.iterations; ++k) table = categorical_dp_step(table, mrp);
        steps = config.iterations;
        categorical = std::move(table);
        break;
    }
    case Algorithm::sfdp: {
        const SfdpOperator op(mrp, model, support, config.imputation);
        SketchTable table = initial_table(map, n_states);
        for (int k = 0; k < config.iterations; ++k) {
            SketchTable next = op.step(table);
            const double change = (next.values - table.values).cwiseAbs().maxCoeff();
            table = std::move(next);
            if (change < config.stop_tol) break;
        }
        steps = table.iteration;
        result.table = std::move(table);
        break;
    }
    }
    const double elapsed_ns =
        std::chrono::duration<double, std::nano>(std::chrono::steady_clock::now() - start).count();
    if (categorical) {
        result.table.values.resize(map.dimension(), n_states);
        for (int x = 0; x < n_states; ++x) result.table.values.col(x) = embed(map, categorical->distribution(x));
        result.table.iteration = categorical->iteration;
    }

    if (!result.table.values.allFinite()) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s iterates diverged at m=%d, slope_scale=%g",
                      std::string(to_string(config.algorithm)).c_str(), point.m, point.slope_scale);
        throw std::runtime_error(buf);
    }

    const Eigen::MatrixXd reference = ground_truth_embedding(gt, map);
    const Eigen::VectorXd values = solve_values(mrp);
    const std::vector<int> states = mrp.nonterminal_states();

    MetricAccumulator acc;
    acc.cramer.assign(states.size(), 0.0);
    acc.excess.assign(states.size(), 0.0);
    double cramer_max_mean = 0.0;
    double excess_max_mean = 0.0;
    for (int x : states) {
        acc.embedding.push_back(embedding_error(result.table.values.col(x), reference.col(x)));
        acc.dirac.push_back(cramer_distance(DiscreteDistribution::dirac(values[x]), gt.distributions[x]));
    }
    if (categorical) {
        for (std::size_t k = 0; k < states.size(); ++k) {
            const auto& truth = gt.distributions[states[k]];
            acc.cramer[k] = cramer_distance(categorical->distribution(states[k]), truth);
            acc.excess[k] = acc.cramer[k] - cramer_distance(categorical_projection(truth, support), truth);
        }
        cramer_max_mean = *std::max_element(acc.cramer.begin(), acc.cramer.end());
        excess_max_mean = *std::max_element(acc.excess.begin(), acc.excess.end());
    } else {
        std::mt19937_64 rng(config.jitter_seed);
        const auto grids = jittered_supports(support, config.jitters, rng);
        for (const auto& grid : grids) {
            const ImputationProblem problem(map, grid);
            double worst_c = 0.0;
            double worst_e = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < states.size(); ++k) {
                const auto& truth = gt.distributions[states[k]];
                const auto imputed = problem.solve(result.table.values.col(states[k]), config.imputation);
                const double c = cramer_distance(imputed.distribution, truth);
                const double e = c - cramer_distance(categorical_projection(truth, grid), truth);
                acc.cramer[k] += c / config.jitters;
                acc.excess[k] += e / config.jitters;
                worst_c = std::max(worst_c, c);
                worst_e = std::max(worst_e, e);
            }
            cramer_max_mean += worst_c / config.jitters;
            excess_max_mean += worst_e / config.jitters;
        }
    }

    const std::string env_name = config.environment.display_name();
    auto emit = [&](const std::string& state, const char* metric, double value) {
        result.rows.push_back({env_name, std::string(to_string(config.algorithm)), std::string(to_string(config.family)),
                               point.m, point.slope_scale, layout.effective_anchor_ratio(), state, metric, value,
                               config.oracle.seed});
    };
    for (std::size_t k = 0; k < states.size(); ++k) {
        const std::string& name = mrp.name(states[k]);
        emit(name, "embedding_sq_error", acc.embedding[k]);
        emit(name, "cramer", acc.cramer[k]);
        emit(name, "excess_cramer", acc.excess[k]);
        emit(name, "dirac_cramer", acc.dirac[k]);
    }
    emit("all", "embedding_sq_error", *std::max_element(acc.embedding.begin(), acc.embedding.end()));
    emit("all", "cramer", cramer_max_mean);
    emit("all", "excess_cramer", excess_max_mean);
    emit("all", "dirac_cramer", *std::max_element(acc.dirac.begin(), acc.dirac.end()));
    if (config.timing && steps > 0) emit("all", "wallclock_per_iter_ns", elapsed_ns / static_cast<double>(steps));
    return result;
}

namespace {

void write_walkthrough(const ExperimentConfig& config, const PointResult& point, const Mrp& mrp,
                       const GroundTruth& gt)
{
    const WalkthroughSettings& w = *config.walkthrough;
    const SweepPoint sp = expand_sweep(config).front();
    const FeatureLayout layout = make_layout(config, sp, gt);
    const FeatureMap map = make_feature_map(config.family, sp.m, layout, config.append_constant);
    if (!w.pca_out.empty()) {
        const Eigen::MatrixXd reference = ground_truth_embedding(gt, map);
        const PcaResult pca = pca_project(point.trajectory, reference);
        std::ofstream out(w.pca_out);
        if (!out) throw std::runtime_error("cannot open " + w.pca_out);
        out << "kind,state,iteration,pc1,pc2\n";
        out << "explained,all,-1," << format_real(pca.explained[0]) << ',' << format_real(pca.explained[1]) << '\n';
        Eigen::Index row = 0;
        for (int k = 0; k < pca.num_snapshots; ++k)
            for (int x = 0; x < pca.num_states; ++x, ++row)
                out << "estimate," << mrp.name(x) << ',' << k << ',' << format_real(pca.coordinates(row, 0)) << ','
                    << format_real(pca.coordinates(row, 1)) << '\n';
        for (int x = 0; x < mrp.num_states(); ++x, ++row)
            out << "reference," << mrp.name(x) << ",-1," << format_real(pca.coordinates(row, 0)) << ','
                << format_real(pca.coordinates(row, 1)) << '\n';
    }
    if (!w.imputation_out.empty()) {
        const ImputationProblem problem(map, base_support(map, layout, sp.m));
        std::ofstream out(w.imputation_out);
        if (!out) throw std::runtime_error("cannot open " + w.imputation_out);
        out << "iteration,state,location,probability\n";
        for (int snap : w.snapshots) {
            if (snap >= static_cast<int>(point.trajectory.size())) continue;
            for (int x : mrp.nonterminal_states()) {
                const auto res = problem.solve(point.trajectory[snap].values.col(x), config.imputation);
                const auto& d = res.distribution;
                for (std::size_t i = 0; i < d.size(); ++i)
                    out << snap << ',' << mrp.name(x) << ',' << format_real(d.support()[i]) << ','
                        << format_real(d.probs()[i]) << '\n';
            }
        }
    }
}

}  // namespace

std::vector<ResultRow> run_experiment(const ExperimentConfig& config,
                                      const std::optional<std::filesystem::path>& cache_dir)
{
    const Mrp mrp = config.environment.build();
    const GroundTruth gt = load_or_compute_ground_truth(config.environment, mrp, config.oracle, cache_dir);
    const auto points = expand_sweep(config);
    // Points run concurrently; results and errors are collected by index so output order is fixed.
    std::vector<std::optional<PointResult>> results(points.size());
    std::vector<std::exception_ptr> errors(points.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < points.size(); i = next++) {
            try {
                results[i] = run_point(config, points[i], mrp, gt);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t n_threads =
        std::min<std::size_t>(points.size(), std::max(1u, std::thread::hardware_concurrency()));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::vector<ResultRow> rows;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
        if (config.walkthrough && i == 0) write_walkthrough(config, *results[i], mrp, gt);
        rows.insert(rows.end(), results[i]->rows.begin(), results[i]->rows.end());
    }
    return rows;
}

}  // namespace sketch
