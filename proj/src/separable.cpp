#include "leviathan/separable.hpp"

#include <memory>
#include <string>
#include <vector>

#include "leviathan/errors.hpp"

namespace leviathan {

SeparableLayout separable_layout(const Tensor& theta, const SplineGrid& grid)
{
    if (theta.rank() != 4)
        throw DimensionError("separable coefficients must be [d x modes x n_basis x channels], got " +
                             shape_string(theta.shape()));
    if (theta.extent(2) != grid.n_basis())
        throw DimensionError("coefficient basis extent " + std::to_string(theta.extent(2)) +
                             " does not match grid n_basis " + std::to_string(grid.n_basis()));
    return {theta.extent(0), theta.extent(1), theta.extent(3)};
}

namespace {

// Per-point basis windows, cached between forward and backward.
struct BasisCache {
    std::size_t width = 0;              // degree + 1
    std::vector<std::size_t> first;     // [points x d]
    std::vector<double> values;         // [points x d x width]
    std::vector<double> derivs;         // [points x d x width]
};

BasisCache evaluate_bases(const Tensor& points, const SplineGrid& grid, bool with_derivs)
{
    BasisCache cache;
    cache.width = grid.degree + 1;
    const std::size_t n = points.numel();
    cache.first.resize(n);
    cache.values.resize(n * cache.width);
    if (with_derivs)
        cache.derivs.resize(n * cache.width);
    for (std::size_t i = 0; i < n; ++i) {
        std::span<double> vals(cache.values.data() + i * cache.width, cache.width);
        BasisWindow w;
        if (with_derivs)
            w = basis_local(points[i], grid, vals,
                            std::span<double>(cache.derivs.data() + i * cache.width, cache.width));
        else
            w = basis_local(points[i], grid, vals);
        cache.first[i] = w.first;
    }
    return cache;
}

// factors[n, r, j, ch] = phi_{r,j,ch}(x_{n,r}); returns mode products.
Tensor forward(const Tensor& points, const Tensor& theta, const SplineGrid& grid,
               const BasisCache& cache, std::vector<double>* factors)
{
    const auto [d, modes, channels] = separable_layout(theta, grid);
    if (points.rank() != 2 || points.cols() != d)
        throw DimensionError("separable points must be [n x " + std::to_string(d) + "], got " +
                             shape_string(points.shape()));
    const std::size_t n = points.rows();
    const std::size_t nb = grid.n_basis();
    const std::size_t width = cache.width;
    const std::size_t mc = modes * channels;
    Tensor out({n, mc}, 1.0);
    if (factors)
        factors->assign(n * d * mc, 0.0);

    for (std::size_t i = 0; i < n; ++i) {
        double* prod = out.ptr() + i * mc;
        for (std::size_t r = 0; r < d; ++r) {
            const std::size_t cell = i * d + r;
            const double* vals = cache.values.data() + cell * width;
            const std::size_t first = cache.first[cell];
            for (std::size_t j = 0; j < modes; ++j) {
                const double* th = theta.ptr() + ((r * modes + j) * nb + first) * channels;
                for (std::size_t ch = 0; ch < channels; ++ch) {
                    double phi = 0.0;
                    for (std::size_t q = 0; q < width; ++q)
                        phi += th[q * channels + ch] * vals[q];
                    prod[j * channels + ch] *= phi;
                    if (factors)
                        (*factors)[cell * mc + j * channels + ch] = phi;
                }
            }
        }
    }
    return out;
}

}  // namespace

Tensor separable_modes_values(const Tensor& points, const Tensor& theta, const SplineGrid& grid)
{
    const BasisCache cache = evaluate_bases(points, grid, false);
    return forward(points, theta, grid, cache, nullptr);
}

Var separable_modes(Tape& tape, Var points, Var theta, const SplineGrid& grid)
{
    const Tensor& x = tape.value(points);
    const Tensor& th = tape.value(theta);
    auto cache = std::make_shared<BasisCache>(evaluate_bases(x, grid, true));
    auto factors = std::make_shared<std::vector<double>>();
    Tensor out = forward(x, th, grid, *cache, factors.get());

    const SeparableLayout layout = separable_layout(th, grid);
    const std::size_t d = layout.dims, modes = layout.modes, channels = layout.channels;
    const std::size_t n = x.rows();
    const std::size_t nb = grid.n_basis();
    Var in[] = {points, theta};
    return tape.record(std::move(out), in, [=](Tape& t, const Tensor& g) {
        const Tensor& th = t.value(theta);
        const bool want_x = t.requires_grad(points);
        const bool want_theta = t.requires_grad(theta);
        double* gx = want_x ? t.grad_buffer(points).ptr() : nullptr;
        double* gth = want_theta ? t.grad_buffer(theta).ptr() : nullptr;
        const std::size_t width = cache->width;
        const std::size_t mc = modes * channels;
        std::vector<double> prefix(d + 1), suffix(d + 1);

        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < modes; ++j)
                for (std::size_t ch = 0; ch < channels; ++ch) {
                    const std::size_t col = j * channels + ch;
                    const double go = g[i * mc + col];
                    if (go == 0.0)
                        continue;
                    prefix[0] = 1.0;
                    for (std::size_t r = 0; r < d; ++r)
                        prefix[r + 1] = prefix[r] * (*factors)[(i * d + r) * mc + col];
                    suffix[d] = 1.0;
                    for (std::size_t r = d; r-- > 0;)
                        suffix[r] = suffix[r + 1] * (*factors)[(i * d + r) * mc + col];

                    for (std::size_t r = 0; r < d; ++r) {
                        const double dphi = go * prefix[r] * suffix[r + 1];
                        const std::size_t cell = i * d + r;
                        const std::size_t first = cache->first[cell];
                        const std::size_t base = ((r * modes + j) * nb + first) * channels + ch;
                        const double* vals = cache->values.data() + cell * width;
                        if (gth)
                            for (std::size_t q = 0; q < width; ++q)
                                gth[base + q * channels] += dphi * vals[q];
                        if (gx) {
                            const double* der = cache->derivs.data() + cell * width;
                            double slope = 0.0;
                            for (std::size_t q = 0; q < width; ++q)
                                slope += th[base + q * channels] * der[q];
                            gx[cell] += dphi * slope;
                        }
                    }
                }
    });
}

}  // namespace leviathan
