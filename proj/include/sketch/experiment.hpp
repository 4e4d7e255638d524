#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sketch/bellman.hpp"
#include "sketch/dp.hpp"
#include "sketch/features.hpp"
#include "sketch/imputation.hpp"
#include "sketch/mrp.hpp"
#include "sketch/oracle.hpp"

namespace sketch {

/// Raised for malformed or inconsistent configs; the message names the offending field.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Algorithm { sketch_dp, sketch_td, cdrl, sfdp };
Algorithm parse_algorithm(std::string_view name);
std::string_view to_string(Algorithm algorithm);

struct EnvironmentSpec {
    /// Named environment, or empty when `custom` is set.
    std::string name;
    RewardNoise noise = RewardNoise::deterministic;
    /// Inline MRP in the config's JSON form (transition, rewards, discount, terminal, names).
    std::optional<nlohmann::json> custom;
    std::string label = "custom";

    std::string display_name() const;
    Mrp build() const;
};

struct OracleSettings {
    int samples = 100000;
    std::uint64_t seed = 0;
    double truncation_tol = kDefaultTruncationTol;
};

struct WalkthroughSettings {
    std::vector<int> snapshots;
    std::string pca_out;
    std::string imputation_out;
};

struct ExperimentConfig {
    EnvironmentSpec environment;
    FamilyKind family = FamilyKind::sigmoid;
    bool append_constant = false;
    std::vector<int> m = {50};
    std::vector<double> slope_scale = {1.0};
    /// Empty means anchors follow the padding heuristic.
    std::vector<double> anchor_range_ratio;
    double anchor_pad = 0.4;
    double grid_pad = 0.2;
    int grid_points = 2000;
    /// Overrides the return range otherwise estimated from the ground truth.
    std::optional<std::pair<double, double>> return_range;
    double ridge = kDefaultRidge;
    Algorithm algorithm = Algorithm::sketch_dp;
    int iterations = kDefaultDpIterations;
    double stop_tol = 0.0;
    TdSettings td;
    OracleSettings oracle;
    int jitters = 100;
    std::uint64_t jitter_seed = 0;
    ImputationSettings imputation;
    /// Emit wallclock_per_iter_ns rows; disable for byte-reproducible output.
    bool timing = true;
    std::optional<WalkthroughSettings> walkthrough;
    std::string output;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

/// Mrp from the inline JSON form.
Mrp mrp_from_json(const nlohmann::json& j);
nlohmann::json reward_law_to_json(const RewardLaw& law);
RewardLaw reward_law_from_json(const nlohmann::json& j);

/// One concrete configuration point of a sweep.
struct SweepPoint {
    int m;
    double slope_scale;
    std::optional<double> anchor_range_ratio;
};

/// Name of the single multi-valued axis, or nullopt if none is.
std::optional<std::string> sweep_axis(const ExperimentConfig& config);
/// All points of the config; at most one axis may carry several values.
std::vector<SweepPoint> expand_sweep(const ExperimentConfig& config);

struct ResultRow {
    std::string environment;
    std::string algorithm;
    std::string family;
    int m = 0;
    double slope_scale = 1.0;
    double anchor_ratio = 0.0;
    /// State name, or "all" for the aggregate over non-terminal states.
    std::string state;
    std::string metric;
    double value = 0.0;
    std::uint64_t seed = 0;

    bool operator==(const ResultRow&) const = default;
};

inline constexpr std::string_view kCsvHeader = "environment,algorithm,family,m,slope_scale,anchor_ratio,state,metric,value,seed";

void emit_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path, bool append = false);
void write_csv(const std::vector<ResultRow>& rows, std::ostream& out, bool header = true);
std::vector<ResultRow> parse_csv(std::istream& in);
std::vector<ResultRow> parse_csv(const std::filesystem::path& path);

struct PcaResult {
    /// Row k holds the 2-D coordinates of the k-th pooled vector.
    Eigen::MatrixX2d coordinates;
    /// Fraction of variance explained by each of the first two components.
    double explained[2] = {0.0, 0.0};
    double explained_total() const { return explained[0] + explained[1]; }
    /// Pooled order: snapshot-major over states, then the reference columns.
    int num_snapshots = 0;
    int num_states = 0;
};

/// Principal components of every snapshot column together with the reference columns.
PcaResult pca_project(const std::vector<SketchTable>& trajectory, const Eigen::MatrixXd& reference);

/// Feature layout implied by the config for one sweep point and ground-truth range.
FeatureLayout make_layout(const ExperimentConfig& config, const SweepPoint& point, const GroundTruth& gt);

/// Regression model for a feature map; polynomial maps use the binomial closed form.
BellmanModel make_model(const ExperimentConfig& config, const FeatureMap& map, const FeatureLayout& layout,
                        double discount);

/// Evenly spaced support for imputation and CDRL: the anchors, or an m-point grid over the anchor interval.
std::vector<double> base_support(const FeatureMap& map, const FeatureLayout& layout, int m);

/// Ground truth from the cache directory when available, else fresh Monte Carlo (stored if a cache is set).
GroundTruth load_or_compute_ground_truth(const EnvironmentSpec& env, const Mrp& mrp, const OracleSettings& oracle,
                                         const std::optional<std::filesystem::path>& cache_dir);

/// Cache directory from the SKETCH_CACHE_DIR environment variable.
std::optional<std::filesystem::path> cache_dir_from_env();

struct PointResult {
    std::vector<ResultRow> rows;
    /// Final per-state sketches (for CDRL, embeddings of its distributions).
    SketchTable table;
    std::vector<SketchTable> trajectory;
};

/// Runs one configuration point against an already computed ground truth.
PointResult run_point(const ExperimentConfig& config, const SweepPoint& point, const Mrp& mrp, const GroundTruth& gt);

/// Every sweep point of the config, including walk-through side outputs when configured.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config,
                                      const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

}  // namespace sketch
