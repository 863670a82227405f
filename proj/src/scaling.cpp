#include "leviathan/scaling.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "leviathan/errors.hpp"

namespace leviathan {

std::string to_string(ScalingAxis axis)
{
    return axis == ScalingAxis::parameters ? "params" : "tokens";
}

ScalingAxis scaling_axis_from_string(const std::string& name)
{
    if (name == "params" || name == "parameters" || name == "N")
        return ScalingAxis::parameters;
    if (name == "tokens" || name == "T")
        return ScalingAxis::tokens;
    throw ConfigError("unknown scaling axis '" + name + "' (expected params or tokens)");
}

Json PowerLawFit::to_json() const
{
    return Json{{"A", A}, {"alpha", alpha}, {"b_fixed", b_fixed}, {"axis", to_string(axis)}, {"residual", residual}};
}

namespace {

struct LineFit {
    double intercept, slope, sse;
};

LineFit least_squares(std::span<const ScalingPoint> points, double b)
{
    const double n = static_cast<double>(points.size());
    double mx = 0.0, my = 0.0;
    for (const auto& p : points) {
        mx += std::log(p.x);
        my += std::log(p.loss - b);
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& p : points) {
        const double dx = std::log(p.x) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(p.loss - b) - my);
    }
    if (sxx == 0.0)
        throw AnalysisError("power-law fit needs at least two distinct x values");
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    double sse = 0.0;
    for (const auto& p : points) {
        const double r = std::log(p.loss - b) - (intercept + slope * std::log(p.x));
        sse += r * r;
    }
    return {intercept, slope, sse};
}

void check_points(std::span<const ScalingPoint> points, double b)
{
    if (points.size() < 2)
        throw AnalysisError("power-law fit needs at least 2 points, got " + std::to_string(points.size()));
    for (const auto& p : points) {
        if (!(p.x > 0.0) || !std::isfinite(p.x))
            throw AnalysisError("power-law fit needs positive finite x");
        if (!std::isfinite(p.loss) || !(p.loss > b))
            throw NumericDomainError("loss " + std::to_string(p.loss) + " is not above the irreducible loss " +
                                     std::to_string(b));
    }
}

}  // namespace

PowerLawFit fit_power_law(std::span<const ScalingPoint> points, double b_fixed, ScalingAxis axis)
{
    check_points(points, b_fixed);
    const LineFit line = least_squares(points, b_fixed);
    PowerLawFit fit;
    fit.A = std::exp(line.intercept);
    fit.alpha = -line.slope;
    fit.b_fixed = b_fixed;
    fit.axis = axis;
    fit.residual = std::sqrt(line.sse / static_cast<double>(points.size()));
    return fit;
}

PowerLawFit fit_power_law_free_b(std::span<const ScalingPoint> points, double b_lo, std::optional<double> b_hi,
                                 ScalingAxis axis)
{
    if (points.empty())
        throw AnalysisError("power-law fit needs at least 2 points");
    double min_loss = std::numeric_limits<double>::infinity();
    for (const auto& p : points)
        min_loss = std::min(min_loss, p.loss);
    double hi = b_hi.value_or(min_loss - 1e-9 * std::max(1.0, std::abs(min_loss)));
    hi = std::min(hi, std::nextafter(min_loss, -std::numeric_limits<double>::infinity()));
    if (!(b_lo < hi))
        throw AnalysisError("free-b search interval is empty");
    check_points(points, hi);

    auto cost = [&](double b) { return least_squares(points, b).sse; };
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = b_lo, c = hi;
    double x1 = c - inv_phi * (c - a), x2 = a + inv_phi * (c - a);
    double f1 = cost(x1), f2 = cost(x2);
    for (int it = 0; it < 200 && (c - a) > 1e-12 * std::max(1.0, std::abs(c)); ++it) {
        if (f1 <= f2) {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - inv_phi * (c - a);
            f1 = cost(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (c - a);
            f2 = cost(x2);
        }
    }
    return fit_power_law(points, 0.5 * (a + c), axis);
}

double eval_law(const PowerLawFit& fit, double x)
{
    if (!(x > 0.0))
        throw NumericDomainError("scaling law evaluated at non-positive x");
    return fit.A * std::pow(x, -fit.alpha) + fit.b_fixed;
}

double effective_size(double loss, const PowerLawFit& fit)
{
    if (!(loss > fit.b_fixed))
        throw NumericDomainError("loss " + std::to_string(loss) + " is not above the irreducible loss " +
                                 std::to_string(fit.b_fixed) + "; effective size is undefined");
    return std::pow(fit.A / (loss - fit.b_fixed), 1.0 / fit.alpha);
}

double perplexity_reduction(double dense_loss, double leviathan_loss)
{
    return 100.0 * (1.0 - std::exp(leviathan_loss - dense_loss));
}

const std::vector<PublishedLaw>& published_laws()
{
    auto law = [](const char* regime, const char* family, ScalingAxis axis, double A, double alpha) {
        PublishedLaw p;
        p.regime = regime;
        p.family = family;
        p.fit.A = A;
        p.fit.alpha = alpha;
        p.fit.axis = axis;
        return p;
    };
    using S = ScalingAxis;
    static const std::vector<PublishedLaw> laws = {
        law("iso_body", "dense", S::parameters, 2000.0, 0.38),
        law("iso_body", "leviathan", S::parameters, 9800.0, 0.47),
        law("iso_body", "dense", S::tokens, 180.0, 0.39),
        law("iso_body", "leviathan", S::tokens, 450.0, 0.47),
        law("isoparam", "dense", S::parameters, 360.0, 0.29),
        law("isoparam", "leviathan", S::parameters, 166.0, 0.26),
        law("isoparam", "dense", S::tokens, 52.0, 0.29),
        law("isoparam", "leviathan", S::tokens, 31.0, 0.26),
    };
    return laws;
}

const PowerLawFit& published_law(const std::string& regime, const std::string& family, ScalingAxis axis)
{
    for (const auto& l : published_laws())
        if (l.regime == regime && l.family == family && l.fit.axis == axis)
            return l.fit;
    throw ConfigError("no published law for " + regime + "/" + family + "/" + to_string(axis));
}

std::string frontier_csv(std::span<const FrontierRow> rows)
{
    std::ostringstream out;
    out << std::setprecision(17);
    out << "run,family,params,tokens,loss,perplexity,effective_params,reduction_pct\n";
    for (const auto& r : rows) {
        out << r.run << ',' << r.family << ',' << r.params << ',' << r.tokens << ',' << r.loss << ','
            << r.perplexity << ',';
        if (r.effective_params)
            out << *r.effective_params;
        out << ',';
        if (r.reduction)
            out << *r.reduction;
        out << '\n';
    }
    return out.str();
}

}  // namespace leviathan
