#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "leviathan/config.hpp"
#include "leviathan/tensor.hpp"

namespace leviathan {

/// Closed-form target on the unit cube.
struct SurfaceTarget {
    std::string name;
    std::size_t dims = 2;
    std::function<double(std::span<const double>)> f;
};

// constant (0.7), sincos = sin(pi x) cos(pi y), sincos_xy = sincos + x y.
SurfaceTarget surface_fixture(const std::string& name);
std::vector<std::string> surface_fixture_names();

struct ApproxConfig {
    std::size_t modes = 4;
    std::size_t segments = 16;
    std::size_t degree = 2;
    std::size_t steps = 5000;
    double lr = 1e-1;
    double final_lr_fraction = 0.01;  // cosine decay to lr * fraction
    std::size_t train_grid = 64;      // points per axis, endpoints included
    std::size_t eval_grid = 100;
    std::uint64_t seed = 0;
    std::size_t divergence_window = 500;
};

struct ApproxResult {
    std::string fixture;
    ApproxConfig config;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double sup_error = 0.0;
    std::size_t steps_run = 0;
    bool diverged = false;
    Tensor theta;  // [d x modes x n_basis x 1]

    Json to_json() const;
};

// Regular grid of n^d points covering [0,1]^d including both faces.
Tensor unit_grid(std::size_t dims, std::size_t n);

// Sum of the separable modes at each point.
Tensor surface_values(const Tensor& points, const Tensor& theta, std::size_t segments, std::size_t degree);

// Gradient-trained rank-M spline surface (AdamW, default betas, no decay)
// on the training grid; reports the max error on the evaluation grid.
ApproxResult fit_surface(const SurfaceTarget& target, const ApproxConfig& config);

}  // namespace leviathan
