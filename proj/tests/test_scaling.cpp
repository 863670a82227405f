#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "leviathan/errors.hpp"
#include "leviathan/rng.hpp"
#include "leviathan/scaling.hpp"

using namespace leviathan;

namespace {

std::vector<ScalingPoint> law_points(double A, double alpha, double b, std::initializer_list<double> xs)
{
    std::vector<ScalingPoint> out;
    for (double x : xs)
        out.push_back({x, A * std::pow(x, -alpha) + b});
    return out;
}

double rel(double got, double want)
{
    return std::abs(got - want) / std::abs(want);
}

}  // namespace

TEST_SUITE("scaling") {

TEST_CASE("noiseless recovery")
{
    const auto pts = law_points(360.0, 0.29, 1.69, {1e8, 2e8, 4e8});
    const PowerLawFit f = fit_power_law(pts);
    CHECK(rel(f.A, 360.0) <= 1e-9);
    CHECK(rel(f.alpha, 0.29) <= 1e-9);
    CHECK(f.b_fixed == 1.69);
    CHECK(f.residual <= 1e-12);
    for (const auto& p : pts)
        CHECK(rel(eval_law(f, p.x), p.loss) <= 1e-12);

    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const double A = std::exp(rng.uniform() * 8.0), alpha = 0.05 + rng.uniform() * 0.6;
        const double b = rng.uniform() * 3.0;
        std::vector<ScalingPoint> p;
        const std::size_t n = 2 + rng.below(6);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = std::exp(10.0 + 10.0 * rng.uniform());
            p.push_back({x, A * std::pow(x, -alpha) + b});
        }
        std::sort(p.begin(), p.end(), [](auto& l, auto& r) { return l.x < r.x; });
        if (p.back().x / p.front().x < 2.0)
            continue;
        const PowerLawFit g = fit_power_law(p, b);
        CHECK(rel(g.A, A) <= 1e-8);
        CHECK(rel(g.alpha, alpha) <= 1e-8);
    }
}

TEST_CASE("two points interpolate exactly")
{
    const std::vector<ScalingPoint> p = {{1e6, 4.0}, {1e7, 3.0}};
    const PowerLawFit f = fit_power_law(p);
    CHECK(f.residual <= 1e-14);
    CHECK(rel(eval_law(f, 1e6), 4.0) <= 1e-13);
    CHECK(rel(eval_law(f, 1e7), 3.0) <= 1e-13);
    // ln(2.31/1.31) / ln 10
    CHECK(rel(f.alpha, std::log(2.31 / 1.31) / std::log(10.0)) <= 1e-13);
}

TEST_CASE("fit domain errors")
{
    const std::vector<ScalingPoint> one = {{1e6, 3.0}};
    CHECK_THROWS_AS(fit_power_law(one), AnalysisError);
    const std::vector<ScalingPoint> below = {{1e6, 3.0}, {1e7, 1.5}};
    CHECK_THROWS_AS(fit_power_law(below), NumericDomainError);
    const std::vector<ScalingPoint> at = {{1e6, 3.0}, {1e7, 1.69}};
    CHECK_THROWS_AS(fit_power_law(at), NumericDomainError);
    CHECK_THROWS_AS(effective_size(1.69, published_law("isoparam", "dense", ScalingAxis::parameters)),
                    NumericDomainError);
    CHECK_THROWS_AS(effective_size(1.0, published_law("isoparam", "dense", ScalingAxis::parameters)),
                    NumericDomainError);
}

TEST_CASE("noisy recovery: median exponent within 5%")
{
    std::vector<double> alphas;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        auto pts = law_points(360.0, 0.29, 1.69, {5e7, 1e8, 2e8, 4e8});
        for (auto& p : pts)
            p.loss = 1.69 + (p.loss - 1.69) * (1.0 + 0.01 * rng.normal());
        alphas.push_back(fit_power_law(pts).alpha);
    }
    std::nth_element(alphas.begin(), alphas.begin() + 50, alphas.end());
    CHECK(rel(alphas[50], 0.29) <= 0.05);
}

TEST_CASE("free irreducible loss")
{
    const auto pts = law_points(50.0, 0.3, 1.2, {1e4, 1e5, 1e6, 1e7, 1e8});
    const PowerLawFit f = fit_power_law_free_b(pts, 0.0);
    CHECK(f.b_fixed == doctest::Approx(1.2).epsilon(1e-4));
    CHECK(f.alpha == doctest::Approx(0.3).epsilon(1e-3));
}

TEST_CASE("law evaluation")
{
    const PowerLawFit& dense_iso = published_law("isoparam", "dense", ScalingAxis::parameters);
    CHECK(std::abs(eval_law(dense_iso, 1e20) - 1.69) <= 1e-3);
    CHECK(eval_law(dense_iso, 1e15) - 1.69 == doctest::Approx(360.0 * std::pow(10.0, -4.35)).epsilon(1e-12));
    CHECK(eval_law(dense_iso, 1e8) == doctest::Approx(360.0 * std::pow(1e8, -0.29) + 1.69).epsilon(1e-15));
    CHECK(eval_law(dense_iso, 1e8) == doctest::Approx(3.41).epsilon(5e-3));
    CHECK_THROWS(eval_law(dense_iso, 0.0));

    const double dense = eval_law(published_law("iso_body", "dense", ScalingAxis::parameters), 57600512.0);
    const double lev = eval_law(published_law("iso_body", "leviathan", ScalingAxis::parameters), 60185912.0);
    CHECK(lev < dense);
}

TEST_CASE("published laws fixture")
{
    CHECK(published_laws().size() == 8);
    for (const auto& l : published_laws()) {
        CHECK(l.fit.b_fixed == 1.69);
        CHECK(l.fit.A > 0.0);
        CHECK(l.fit.alpha > 0.0);
        // Refitting points sampled from a published law echoes its constants.
        std::vector<ScalingPoint> pts;
        for (double x : {1e7, 1e8, 1e9, 1e10})
            pts.push_back({x, eval_law(l.fit, x)});
        const PowerLawFit back = fit_power_law(pts, 1.69, l.fit.axis);
        CHECK(rel(back.A, l.fit.A) <= 1e-9);
        CHECK(rel(back.alpha, l.fit.alpha) <= 1e-9);
    }
    CHECK(published_law("iso_body", "leviathan", ScalingAxis::tokens).A == 450.0);
    CHECK_THROWS_AS(published_law("nope", "dense", ScalingAxis::tokens), ConfigError);
}

TEST_CASE("effective size")
{
    const PowerLawFit& dense = published_law("isoparam", "dense", ScalingAxis::parameters);
    const PowerLawFit& lev = published_law("isoparam", "leviathan", ScalingAxis::parameters);
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        const double n = std::exp(12.0 + 12.0 * rng.uniform());
        CHECK(rel(effective_size(eval_law(dense, n), dense), n) <= 1e-9);
    }
    double previous = INFINITY;
    for (double loss = 1.70; loss < 6.0; loss += 0.05) {
        const double n = effective_size(loss, dense);
        CHECK(n < previous);
        previous = n;
    }
    const double N = 421151032.0;
    const double multiplier = effective_size(eval_law(lev, N), dense) / N;
    CHECK(multiplier >= 1.6);
    CHECK(multiplier <= 2.1);
    MESSAGE("multiplier at 421M from fitted laws: " << multiplier);
}

TEST_CASE("perplexity reduction")
{
    CHECK(perplexity_reduction(3.0, 3.0) == 0.0);
    CHECK(perplexity_reduction(3.0, 2.9) == doctest::Approx(9.516258196404).epsilon(1e-12));
    CHECK(perplexity_reduction(3.0, 3.1) < 0.0);
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const double d = 2.0 + rng.uniform(), l = 2.0 + rng.uniform(), c = rng.uniform() * 4.0 - 2.0;
        CHECK(perplexity_reduction(d + c, l + c) == doctest::Approx(perplexity_reduction(d, l)).epsilon(1e-12));
        CHECK(perplexity_reduction(d, l) == doctest::Approx(100.0 * (1.0 - std::exp(l) / std::exp(d))).epsilon(1e-10));
    }
}

TEST_CASE("frontier CSV")
{
    CHECK(frontier_csv({}) == "run,family,params,tokens,loss,perplexity,effective_params,reduction_pct\n");
    std::vector<FrontierRow> rows(1);
    rows[0] = {"d", "dense", 100, 200, 3.0, std::exp(3.0), std::nullopt, std::nullopt};
    const std::string csv = frontier_csv(rows);
    CHECK(csv.substr(csv.find('\n') + 1).find("d,dense,100,200,3,") == 0);
    CHECK(csv.substr(csv.size() - 3) == ",,\n");
}

TEST_CASE("axis names")
{
    CHECK(scaling_axis_from_string(to_string(ScalingAxis::parameters)) == ScalingAxis::parameters);
    CHECK(scaling_axis_from_string(to_string(ScalingAxis::tokens)) == ScalingAxis::tokens);
    CHECK_THROWS_AS(scaling_axis_from_string("flops"), ConfigError);
}

}  // TEST_SUITE
