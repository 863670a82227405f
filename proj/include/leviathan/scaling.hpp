#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "leviathan/config.hpp"

namespace leviathan {

enum class ScalingAxis { parameters, tokens };

std::string to_string(ScalingAxis axis);
ScalingAxis scaling_axis_from_string(const std::string& name);

inline constexpr double irreducible_loss = 1.69;

/// L(x) = A x^-alpha + b with b held fixed.
struct PowerLawFit {
    double A = 0.0;
    double alpha = 0.0;
    double b_fixed = irreducible_loss;
    ScalingAxis axis = ScalingAxis::parameters;
    double residual = 0.0;  // RMS of ln(loss - b) residuals

    Json to_json() const;
};

struct ScalingPoint {
    double x = 0.0;
    double loss = 0.0;
};

// Closed-form least squares on ln(loss - b) = ln A - alpha ln x.
PowerLawFit fit_power_law(std::span<const ScalingPoint> points, double b_fixed = irreducible_loss,
                          ScalingAxis axis = ScalingAxis::parameters);

// Also fits b: golden-section search on [b_lo, b_hi) minimizing the squared
// residual of the inner closed-form fit. b_hi defaults to just below the
// smallest observed loss.
PowerLawFit fit_power_law_free_b(std::span<const ScalingPoint> points, double b_lo = 0.0,
                                 std::optional<double> b_hi = std::nullopt,
                                 ScalingAxis axis = ScalingAxis::parameters);

double eval_law(const PowerLawFit& fit, double x);

// The x at which `fit` predicts `loss`.
double effective_size(double loss, const PowerLawFit& fit);

// 100 (1 - exp(lev - dense)); positive when the Leviathan loss is lower.
double perplexity_reduction(double dense_loss, double leviathan_loss);

struct PublishedLaw {
    std::string regime;  // iso_body | isoparam
    std::string family;  // dense | leviathan
    PowerLawFit fit;
};

// The eight fitted laws of the full-scale study, b = 1.69 throughout.
const std::vector<PublishedLaw>& published_laws();
const PowerLawFit& published_law(const std::string& regime, const std::string& family, ScalingAxis axis);

struct FrontierRow {
    std::string run;
    std::string family;
    std::uint64_t params = 0;
    std::uint64_t tokens = 0;
    double loss = 0.0;
    double perplexity = 0.0;
    std::optional<double> effective_params;
    std::optional<double> reduction;
};

std::string frontier_csv(std::span<const FrontierRow> rows);

}  // namespace leviathan
