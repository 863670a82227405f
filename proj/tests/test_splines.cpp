#include "doctest.h"

#include <cmath>
#include <vector>

#include "leviathan/errors.hpp"
#include "leviathan/rng.hpp"
#include "leviathan/splines.hpp"

using namespace leviathan;

namespace {

// Textbook Cox-de Boor by direct recursion on an independently built clamped
// knot vector, with 0/0 := 0 and x = 1 assigned to the last interval.
struct Reference {
    std::vector<double> t;
    std::size_t p;

    Reference(std::size_t segments, std::size_t degree) : p{degree}
    {
        for (std::size_t i = 0; i < degree; ++i)
            t.push_back(0.0);
        for (std::size_t i = 0; i <= segments; ++i)
            t.push_back(static_cast<double>(i) / static_cast<double>(segments));
        for (std::size_t i = 0; i < degree; ++i)
            t.push_back(1.0);
    }

    double box(std::size_t i, double x) const
    {
        if (t[i] <= x && x < t[i + 1])
            return 1.0;
        // Closed right end: the last non-empty interval owns x = 1.
        if (x == 1.0 && t[i] < t[i + 1] && t[i + 1] == 1.0)
            return 1.0;
        return 0.0;
    }

    double value(std::size_t i, std::size_t q, double x) const
    {
        if (q == 0)
            return box(i, x);
        double out = 0.0;
        const double left = t[i + q] - t[i];
        const double right = t[i + q + 1] - t[i + 1];
        if (left > 0.0)
            out += (x - t[i]) / left * value(i, q - 1, x);
        if (right > 0.0)
            out += (t[i + q + 1] - x) / right * value(i + 1, q - 1, x);
        return out;
    }

    std::size_t n_basis() const { return t.size() - p - 1; }
};

const std::vector<std::pair<std::size_t, std::size_t>> grids = {{4, 2}, {32, 2}, {8, 3}, {1, 0}, {5, 1}, {16, 2}};

}  // namespace

TEST_SUITE("splines") {

TEST_CASE("grid construction")
{
    const SplineGrid g32 = build_grid(32, 2);
    CHECK(g32.n_basis() == 34);
    CHECK(Reference(32, 2).n_basis() == 34);
    const SplineGrid g4 = build_grid(4, 2);
    CHECK(g4.n_basis() == 6);
    CHECK(g4.knots == std::vector<double>{0, 0, 0, 0.25, 0.5, 0.75, 1, 1, 1});
    const SplineGrid box = build_grid(1, 0);
    CHECK(box.n_basis() == 1);
    for (double x : {0.0, 0.3, 1.0})
        CHECK(basis_eval(x, box) == std::vector<double>{1.0});
    CHECK_THROWS_AS(build_grid(0, 2), ConfigError);
    for (std::size_t i = 1; i < g32.knots.size(); ++i)
        CHECK(g32.knots[i - 1] <= g32.knots[i]);
}

TEST_CASE("clamped endpoints interpolate")
{
    for (auto [G, p] : grids) {
        const SplineGrid g = build_grid(G, p);
        const auto at0 = basis_eval(0.0, g), at1 = basis_eval(1.0, g);
        for (std::size_t c = 0; c < g.n_basis(); ++c) {
            CHECK(at0[c] == (c == 0 ? 1.0 : 0.0));
            CHECK(at1[c] == (c + 1 == g.n_basis() ? 1.0 : 0.0));
        }
    }
}

TEST_CASE("independent recursion oracle")
{
    const SplineGrid g = build_grid(4, 2);
    const Reference ref(4, 2);
    const auto v = basis_eval(0.5, g);
    for (std::size_t c = 0; c < g.n_basis(); ++c)
        CHECK(std::abs(v[c] - ref.value(c, 2, 0.5)) <= 1e-14);

    Rng rng(3);
    for (auto [G, p] : grids) {
        const SplineGrid grid = build_grid(G, p);
        const Reference r(G, p);
        for (int i = 0; i < 200; ++i) {
            const double x = i == 0 ? 1.0 : rng.uniform();
            const auto b = basis_eval(x, grid);
            for (std::size_t c = 0; c < grid.n_basis(); ++c)
                CHECK(std::abs(b[c] - r.value(c, p, x)) <= 1e-14);
        }
    }
}

TEST_CASE("partition of unity, locality and non-negativity")
{
    Rng rng(4);
    for (auto [G, p] : grids) {
        const SplineGrid g = build_grid(G, p);
        std::size_t last_first = 0;
        for (int i = 0; i <= 2000; ++i) {
            const double x = static_cast<double>(i) / 2000.0;
            const auto b = basis_eval(x, g);
            double s = 0.0;
            std::size_t lo = b.size(), hi = 0;
            for (std::size_t c = 0; c < b.size(); ++c) {
                CHECK(b[c] >= 0.0);
                s += b[c];
                if (b[c] != 0.0) {
                    lo = std::min(lo, c);
                    hi = c;
                }
            }
            CHECK(std::abs(s - 1.0) <= 1e-12);
            CHECK(hi - lo + 1 <= p + 1);
            std::vector<double> window(p + 1);
            const BasisWindow w = basis_local(x, g, window);
            CHECK(w.first >= last_first);
            CHECK(lo >= w.first);
            CHECK(hi <= w.first + p);
            last_first = w.first;
        }
    }
}

TEST_CASE("derivative sums to zero and matches finite differences")
{
    Rng rng(5);
    for (auto [G, p] : grids) {
        if (p == 0)
            continue;
        const SplineGrid g = build_grid(G, p);
        for (int i = 0; i < 300; ++i) {
            const double x = 0.01 + 0.98 * rng.uniform();
            const auto d = basis_grad(x, g);
            double s = 0.0;
            for (double v : d)
                s += v;
            CHECK(std::abs(s) <= 1e-10);
        }
    }
    const SplineGrid g = build_grid(32, 2);
    const double h = 1e-6, x = 0.37;
    const auto d = basis_grad(x, g), up = basis_eval(x + h, g), dn = basis_eval(x - h, g);
    for (std::size_t c = 0; c < g.n_basis(); ++c)
        CHECK(std::abs(d[c] - (up[c] - dn[c]) / (2 * h)) <= 1e-6);
}

TEST_CASE("degree zero has zero derivative off the knots")
{
    const SplineGrid g = build_grid(6, 0);
    for (double x : {0.05, 0.2, 0.45, 0.61, 0.99})
        for (double v : basis_grad(x, g))
            CHECK(v == 0.0);
}

TEST_CASE("quadratic basis is continuous")
{
    Rng rng(6);
    const SplineGrid g = build_grid(32, 2);
    const double delta = 1e-9, K = 4.0 * 32;
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.uniform() * (1.0 - delta);
        const auto a = basis_eval(x, g), b = basis_eval(x + delta, g);
        for (std::size_t c = 0; c < a.size(); ++c)
            CHECK(std::abs(a[c] - b[c]) <= K * delta);
    }
}

TEST_CASE("local and dense evaluation agree")
{
    Rng rng(7);
    const SplineGrid g = build_grid(8, 3);
    std::vector<double> vals(4), ders(4);
    for (int i = 0; i < 100; ++i) {
        const double x = rng.uniform();
        const auto dense = basis_eval(x, g), grad = basis_grad(x, g);
        const BasisWindow w = basis_local(x, g, vals, ders);
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(vals[j] == dense[w.first + j]);
            CHECK(ders[j] == grad[w.first + j]);
        }
    }
}

TEST_CASE("arguments outside the unit interval are rejected")
{
    const SplineGrid g = build_grid(4, 2);
    CHECK_THROWS_AS(basis_eval(-1e-12, g), NumericDomainError);
    CHECK_THROWS_AS(basis_eval(1.0 + 1e-12, g), NumericDomainError);
    CHECK_THROWS_AS(basis_grad(std::nan(""), g), NumericDomainError);
}

}  // TEST_SUITE
