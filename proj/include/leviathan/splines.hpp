#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace leviathan {

/// Clamped uniform knot vector on [0, 1]: `segments` equal intervals with the
/// boundary knots repeated degree + 1 times, giving segments + degree basis
/// functions.
struct SplineGrid {
    std::size_t segments = 0;
    std::size_t degree = 0;
    std::vector<double> knots;

    std::size_t n_basis() const noexcept { return segments + degree; }
};

SplineGrid build_grid(std::size_t segments, std::size_t degree);

/// Nonzero window of the basis at one point: values[j] belongs to basis
/// function first + j, j in [0, degree].
struct BasisWindow {
    std::size_t first = 0;
};

// Writes the degree + 1 possibly-nonzero basis values at x into `values` and
// returns the window. x = 1 belongs to the last interval.
BasisWindow basis_local(double x, const SplineGrid& grid, std::span<double> values);

// Same window, plus first derivatives in `derivs`.
BasisWindow basis_local(double x, const SplineGrid& grid, std::span<double> values,
                        std::span<double> derivs);

// Dense vectors of length n_basis.
std::vector<double> basis_eval(double x, const SplineGrid& grid);
std::vector<double> basis_grad(double x, const SplineGrid& grid);

}  // namespace leviathan
