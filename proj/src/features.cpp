#include "sketch/features.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sketch {

std::vector<double> linspace(double lo, double hi, int count)
{
    if (count < 1) throw std::invalid_argument("linspace: count must be positive");
    std::vector<double> out(count);
    if (count == 1) {
        out[0] = lo;
        return out;
    }
    const double step = (hi - lo) / (count - 1);
    for (int i = 0; i < count; ++i) out[i] = lo + step * i;
    out.back() = hi;
    return out;
}

double evaluate_base(BaseFeature base, double x)
{
    switch (base) {
    case BaseFeature::sigmoid:
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    case BaseFeature::gaussian: return std::exp(-0.5 * x * x);
    case BaseFeature::parabolic: return std::abs(x) <= 1.0 ? 1.0 - x * x : 0.0;
    case BaseFeature::tanh: return std::tanh(x);
    }
    return 0.0;
}

double base_width(BaseFeature base)
{
    return base == BaseFeature::parabolic ? 2.0 : 4.0;
}

std::string_view to_string(BaseFeature base)
{
    switch (base) {
    case BaseFeature::sigmoid: return "sigmoid";
    case BaseFeature::gaussian: return "gaussian";
    case BaseFeature::parabolic: return "parabolic";
    case BaseFeature::tanh: return "tanh";
    }
    return "unknown";
}

namespace {

bool strictly_increasing(const std::vector<double>& xs)
{
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (!(xs[i] > xs[i - 1])) return false;
    return true;
}

int family_dimension(const FeatureFamily& family)
{
    struct {
        int operator()(const TranslationFamily& f) const
        {
            if (f.anchors.empty()) throw std::invalid_argument("translation family needs anchors");
            if (!strictly_increasing(f.anchors)) throw std::invalid_argument("anchors must be strictly increasing");
            if (!(f.slope > 0.0) || !std::isfinite(f.slope)) throw std::invalid_argument("slope must be positive");
            return static_cast<int>(f.anchors.size());
        }
        int operator()(const IndicatorFamily& f) const
        {
            if (f.grid.size() < 2) throw std::invalid_argument("indicator grid needs at least two edges");
            if (!strictly_increasing(f.grid)) throw std::invalid_argument("indicator grid must be increasing");
            const double step = (f.grid.back() - f.grid.front()) / (f.grid.size() - 1);
            for (std::size_t i = 1; i < f.grid.size(); ++i)
                if (std::abs((f.grid[i] - f.grid[i - 1]) - step) > 1e-10 * std::abs(step))
                    throw std::invalid_argument("indicator grid must be equally spaced");
            return static_cast<int>(f.grid.size()) - 1;
        }
        int operator()(const SinusoidFamily& f) const
        {
            if (f.count < 1) throw std::invalid_argument("sinusoid family needs at least one harmonic");
            if (!(f.half_width > 0.0)) throw std::invalid_argument("sinusoid half width must be positive");
            return f.count;
        }
        int operator()(const PolynomialFamily& f) const
        {
            if (f.degree < 0) throw std::invalid_argument("polynomial degree must be nonnegative");
            return f.degree + 1;
        }
    } visitor;
    return std::visit(visitor, family);
}

}  // namespace

FeatureMap::FeatureMap(FeatureFamily family, bool append_constant)
    : family_(std::move(family)), append_constant_(append_constant), base_dim_(family_dimension(family_)),
      dim_(base_dim_ + (append_constant ? 1 : 0))
{
}

std::optional<int> FeatureMap::constant_index() const
{
    if (append_constant_) return base_dim_;
    return std::nullopt;
}

void FeatureMap::evaluate_into(double z, Eigen::Ref<Eigen::VectorXd> out) const
{
    if (out.size() != dim_) throw std::invalid_argument("feature output has wrong dimension");
    if (const auto* t = std::get_if<TranslationFamily>(&family_)) {
        for (int i = 0; i < base_dim_; ++i) out[i] = evaluate_base(t->base, t->slope * (z - t->anchors[i]));
    } else if (const auto* ind = std::get_if<IndicatorFamily>(&family_)) {
        const double top = ind->grid.back();
        for (int i = 0; i < base_dim_; ++i) out[i] = (ind->grid[i] <= z && z <= top) ? 1.0 : 0.0;
    } else if (const auto* sn = std::get_if<SinusoidFamily>(&family_)) {
        const double theta = std::numbers::pi * (z - sn->center) / sn->half_width;
        out[0] = 1.0;
        for (int i = 1; i < base_dim_; ++i) {
            const int k = (i + 1) / 2;
            out[i] = (i % 2 == 1) ? std::cos(k * theta) : std::sin(k * theta);
        }
    } else {
        double power = 1.0;
        for (int i = 0; i < base_dim_; ++i) {
            out[i] = power;
            power *= z;
        }
    }
    if (append_constant_) out[base_dim_] = 1.0;
}

Eigen::VectorXd FeatureMap::operator()(double z) const
{
    Eigen::VectorXd out(dim_);
    evaluate_into(z, out);
    return out;
}

Eigen::MatrixXd FeatureMap::evaluate_columns(std::span<const double> zs) const
{
    Eigen::MatrixXd out(dim_, static_cast<Eigen::Index>(zs.size()));
    for (std::size_t j = 0; j < zs.size(); ++j) evaluate_into(zs[j], out.col(static_cast<Eigen::Index>(j)));
    return out;
}

std::vector<double> FeatureMap::anchor_points() const
{
    if (const auto* t = std::get_if<TranslationFamily>(&family_)) return t->anchors;
    if (const auto* ind = std::get_if<IndicatorFamily>(&family_))
        return std::vector<double>(ind->grid.begin(), ind->grid.end() - 1);
    if (const auto* sn = std::get_if<SinusoidFamily>(&family_))
        return linspace(sn->center - sn->half_width, sn->center + sn->half_width, sn->count);
    throw std::invalid_argument("polynomial features have no anchor points");
}

FamilyKind parse_family(std::string_view name)
{
    if (name == "sigmoid") return FamilyKind::sigmoid;
    if (name == "gaussian") return FamilyKind::gaussian;
    if (name == "parabolic") return FamilyKind::parabolic;
    if (name == "tanh") return FamilyKind::tanh;
    if (name == "indicator") return FamilyKind::indicator;
    if (name == "sinusoid") return FamilyKind::sinusoid;
    if (name == "polynomial") return FamilyKind::polynomial;
    throw std::invalid_argument("unknown feature family: " + std::string(name));
}

std::string_view to_string(FamilyKind kind)
{
    switch (kind) {
    case FamilyKind::sigmoid: return "sigmoid";
    case FamilyKind::gaussian: return "gaussian";
    case FamilyKind::parabolic: return "parabolic";
    case FamilyKind::tanh: return "tanh";
    case FamilyKind::indicator: return "indicator";
    case FamilyKind::sinusoid: return "sinusoid";
    case FamilyKind::polynomial: return "polynomial";
    }
    return "unknown";
}

std::optional<BaseFeature> translation_base(FamilyKind kind)
{
    switch (kind) {
    case FamilyKind::sigmoid: return BaseFeature::sigmoid;
    case FamilyKind::gaussian: return BaseFeature::gaussian;
    case FamilyKind::parabolic: return BaseFeature::parabolic;
    case FamilyKind::tanh: return BaseFeature::tanh;
    default: return std::nullopt;
    }
}

void FeatureLayout::validate() const
{
    if (!(g_min_hat < g_max_hat)) throw std::invalid_argument("layout: g_min_hat must be below g_max_hat");
    if (!(anchor_pad >= 0.0) || !(grid_pad >= 0.0)) throw std::invalid_argument("layout: pads must be nonnegative");
    if (!(slope_scale > 0.0)) throw std::invalid_argument("layout: slope_scale must be positive");
    if (anchor_range_ratio && !(*anchor_range_ratio > 0.0))
        throw std::invalid_argument("layout: anchor_range_ratio must be positive");
}

std::pair<double, double> FeatureLayout::regression_interval() const
{
    const double pad = grid_pad * range_length();
    return {g_min_hat - pad, g_max_hat + pad};
}

std::pair<double, double> FeatureLayout::anchor_interval() const
{
    if (anchor_range_ratio) {
        const auto [lo, hi] = regression_interval();
        const double mid = 0.5 * (lo + hi);
        const double half = 0.5 * (hi - lo) * *anchor_range_ratio;
        return {mid - half, mid + half};
    }
    const double pad = anchor_pad * range_length();
    return {g_min_hat - pad, g_max_hat + pad};
}

double FeatureLayout::effective_anchor_ratio() const
{
    const auto [alo, ahi] = anchor_interval();
    const auto [glo, ghi] = regression_interval();
    return (ahi - alo) / (ghi - glo);
}

double FeatureLayout::default_slope(BaseFeature base) const
{
    return slope_scale * 5.0 * base_width(base) / range_length();
}

FeatureMap make_feature_map(FamilyKind kind, int m, const FeatureLayout& layout, bool append_constant)
{
    if (m < 2) throw std::invalid_argument("make_feature_map: m must be at least 2");
    layout.validate();
    const auto [lo, hi] = layout.anchor_interval();
    if (auto base = translation_base(kind))
        return FeatureMap(TranslationFamily{*base, linspace(lo, hi, m), layout.default_slope(*base)}, append_constant);
    switch (kind) {
    case FamilyKind::indicator:
        return FeatureMap(IndicatorFamily{linspace(layout.g_min_hat, layout.g_max_hat, m + 1)}, append_constant);
    case FamilyKind::sinusoid:
        return FeatureMap(SinusoidFamily{0.5 * (lo + hi), 0.5 * (hi - lo), m}, append_constant);
    case FamilyKind::polynomial: return FeatureMap(PolynomialFamily{m - 1}, append_constant);
    default: break;
    }
    throw std::invalid_argument("make_feature_map: unsupported family");
}

}  // namespace sketch
