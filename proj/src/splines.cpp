#include "leviathan/splines.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "leviathan/errors.hpp"

namespace leviathan {

SplineGrid build_grid(std::size_t segments, std::size_t degree)
{
    if (segments == 0)
        throw ConfigError("spline grid needs at least one segment");
    SplineGrid grid;
    grid.segments = segments;
    grid.degree = degree;
    grid.knots.reserve(segments + 2 * degree + 1);
    for (std::size_t i = 0; i < degree; ++i)
        grid.knots.push_back(0.0);
    for (std::size_t i = 0; i <= segments; ++i)
        grid.knots.push_back(static_cast<double>(i) / static_cast<double>(segments));
    for (std::size_t i = 0; i < degree; ++i)
        grid.knots.push_back(1.0);
    return grid;
}

namespace {

void check_domain(double x)
{
    if (!(x >= 0.0 && x <= 1.0))
        throw NumericDomainError("spline argument " + std::to_string(x) + " outside [0, 1]");
}

// Index of the knot span [t_mu, t_mu+1) containing x, with x = 1 in the last span.
std::size_t find_span(double x, const SplineGrid& grid)
{
    const double g = static_cast<double>(grid.segments);
    auto seg = static_cast<std::size_t>(std::floor(x * g));
    seg = std::min(seg, grid.segments - 1);
    // Guard against x * g rounding across a knot.
    const std::size_t p = grid.degree;
    while (seg > 0 && x < grid.knots[seg + p])
        --seg;
    while (seg + 1 < grid.segments && x >= grid.knots[seg + p + 1])
        ++seg;
    return seg + p;
}

// Nonzero basis values of `degree` at span mu (triangular Cox-de Boor scheme).
void nonzero_basis(double x, std::size_t mu, std::size_t degree, const std::vector<double>& t,
                   double* out)
{
    double left[16], right[16];
    out[0] = 1.0;
    for (std::size_t j = 1; j <= degree; ++j) {
        left[j] = x - t[mu + 1 - j];
        right[j] = t[mu + j] - x;
        double saved = 0.0;
        for (std::size_t r = 0; r < j; ++r) {
            const double denom = right[r + 1] + left[j - r];
            const double temp = denom != 0.0 ? out[r] / denom : 0.0;
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

constexpr std::size_t max_degree = 15;

void check_degree(const SplineGrid& grid)
{
    if (grid.degree > max_degree)
        throw ConfigError("spline degree above " + std::to_string(max_degree) + " unsupported");
}

}  // namespace

BasisWindow basis_local(double x, const SplineGrid& grid, std::span<double> values)
{
    check_domain(x);
    check_degree(grid);
    if (values.size() < grid.degree + 1)
        throw DimensionError("basis window buffer too small");
    const std::size_t mu = find_span(x, grid);
    nonzero_basis(x, mu, grid.degree, grid.knots, values.data());
    return BasisWindow{mu - grid.degree};
}

BasisWindow basis_local(double x, const SplineGrid& grid, std::span<double> values,
                        std::span<double> derivs)
{
    const BasisWindow w = basis_local(x, grid, values);
    const std::size_t p = grid.degree;
    if (derivs.size() < p + 1)
        throw DimensionError("basis derivative buffer too small");
    std::fill(derivs.begin(), derivs.begin() + static_cast<std::ptrdiff_t>(p + 1), 0.0);
    if (p == 0)
        return w;

    // Lower-degree values cover basis functions first + 1 .. first + p.
    const std::size_t mu = w.first + p;
    double lower[max_degree + 1];
    nonzero_basis(x, mu, p - 1, grid.knots, lower);
    const auto& t = grid.knots;
    const double pd = static_cast<double>(p);
    for (std::size_t j = 0; j <= p; ++j) {
        const std::size_t i = w.first + j;
        // B'_{i,p} = p * (B_{i,p-1} / (t_{i+p} - t_i) - B_{i+1,p-1} / (t_{i+p+1} - t_{i+1}))
        const double a = j >= 1 ? lower[j - 1] : 0.0;
        const double b = j < p ? lower[j] : 0.0;
        const double da = t[i + p] - t[i];
        const double db = t[i + p + 1] - t[i + 1];
        double d = 0.0;
        if (da != 0.0)
            d += a / da;
        if (db != 0.0)
            d -= b / db;
        derivs[j] = pd * d;
    }
    return w;
}

std::vector<double> basis_eval(double x, const SplineGrid& grid)
{
    std::vector<double> out(grid.n_basis(), 0.0);
    double local[max_degree + 1];
    const BasisWindow w = basis_local(x, grid, std::span<double>(local, grid.degree + 1));
    for (std::size_t j = 0; j <= grid.degree; ++j)
        out[w.first + j] = local[j];
    return out;
}

std::vector<double> basis_grad(double x, const SplineGrid& grid)
{
    std::vector<double> out(grid.n_basis(), 0.0);
    double local[max_degree + 1], deriv[max_degree + 1];
    const BasisWindow w = basis_local(x, grid, std::span<double>(local, grid.degree + 1),
                                      std::span<double>(deriv, grid.degree + 1));
    for (std::size_t j = 0; j <= grid.degree; ++j)
        out[w.first + j] = deriv[j];
    return out;
}

}  // namespace leviathan
