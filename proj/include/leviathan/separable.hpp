#pragma once

#include <cstddef>

#include "leviathan/autodiff.hpp"
#include "leviathan/splines.hpp"
#include "leviathan/tensor.hpp"

namespace leviathan {

/// Rank-M separable surface: for every point x in [0,1]^d, mode j and channel
/// ch the value
///
///     m_{j,ch}(x) = prod_r phi_{r,j,ch}(x_r),
///     phi_{r,j,ch}(x) = sum_c theta[r, j, c, ch] * B_c(x),
///
/// with B the B-spline basis of `grid`. theta has shape
/// [d x modes x n_basis x channels]; the result is [points x modes*channels]
/// with column j * channels + ch.
Tensor separable_modes_values(const Tensor& points, const Tensor& theta, const SplineGrid& grid);

/// Differentiable version; the gradient of each factor uses the product of the
/// other d - 1 factors (prefix/suffix products), so zero factors are handled
/// without division.
Var separable_modes(Tape& tape, Var points, Var theta, const SplineGrid& grid);

// Checks theta's rank and basis extent against the grid, returning
// {dims, modes, channels}.
struct SeparableLayout {
    std::size_t dims, modes, channels;
};
SeparableLayout separable_layout(const Tensor& theta, const SplineGrid& grid);

}  // namespace leviathan
