#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace sketch {

enum class BaseFeature { sigmoid, gaussian, parabolic, tanh };

/// kappa(slope * (z - anchor_i)) for each anchor.
struct TranslationFamily {
    BaseFeature base = BaseFeature::sigmoid;
    std::vector<double> anchors;
    double slope = 1.0;
};

/// Cumulative bins on an equally spaced grid z_1 < ... < z_{m+1}:
/// phi_i(z) = 1{z_i <= z <= z_{m+1}}.
struct IndicatorFamily {
    std::vector<double> grid;
};

/// Harmonics 1, cos(k pi (z - c) / W), sin(k pi (z - c) / W), k = 1, 2, ..., truncated to `count`.
struct SinusoidFamily {
    double center = 0.0;
    double half_width = 1.0;
    int count = 1;
};

/// Monomials 1, z, ..., z^degree.
struct PolynomialFamily {
    int degree = 1;
};

using FeatureFamily = std::variant<TranslationFamily, IndicatorFamily, SinusoidFamily, PolynomialFamily>;

/// Feature map phi: R -> R^m.
class FeatureMap {
public:
    explicit FeatureMap(FeatureFamily family, bool append_constant = false);

    int dimension() const { return dim_; }
    const FeatureFamily& family() const { return family_; }
    bool appends_constant() const { return append_constant_; }
    /// Index of the appended constant coordinate, if any.
    std::optional<int> constant_index() const;

    Eigen::VectorXd operator()(double z) const;
    void evaluate_into(double z, Eigen::Ref<Eigen::VectorXd> out) const;
    /// Column j holds phi(zs[j]).
    Eigen::MatrixXd evaluate_columns(std::span<const double> zs) const;

    bool is_polynomial() const { return std::holds_alternative<PolynomialFamily>(family_); }
    bool is_bounded() const { return !is_polynomial(); }
    /// Natural support points: the anchors, the left bin edges, or an even grid over the sinusoid period.
    std::vector<double> anchor_points() const;

private:
    FeatureFamily family_;
    bool append_constant_;
    int base_dim_;
    int dim_;
};

double evaluate_base(BaseFeature base, double x);
/// Length of the base feature's non-trivial support.
double base_width(BaseFeature base);

std::string_view to_string(BaseFeature base);

enum class FamilyKind { sigmoid, gaussian, parabolic, tanh, indicator, sinusoid, polynomial };

FamilyKind parse_family(std::string_view name);
std::string_view to_string(FamilyKind kind);
std::optional<BaseFeature> translation_base(FamilyKind kind);

/// Estimated return range and padding heuristics used to place anchors and the regression grid.
struct FeatureLayout {
    double g_min_hat = 0.0;
    double g_max_hat = 1.0;
    double anchor_pad = 0.4;
    double grid_pad = 0.2;
    double slope_scale = 1.0;
    /// Width of the anchor range relative to the regression grid range, sharing its midpoint.
    std::optional<double> anchor_range_ratio;

    void validate() const;
    double range_length() const { return g_max_hat - g_min_hat; }
    std::pair<double, double> regression_interval() const;
    std::pair<double, double> anchor_interval() const;
    /// Ratio of the anchor interval width to the regression interval width.
    double effective_anchor_ratio() const;
    /// 5 w / L, scaled by slope_scale.
    double default_slope(BaseFeature base) const;
};

FeatureMap make_feature_map(FamilyKind kind, int m, const FeatureLayout& layout, bool append_constant = false);

/// Evenly spaced points including both endpoints.
std::vector<double> linspace(double lo, double hi, int count);

}  // namespace sketch
