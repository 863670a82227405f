#include "leviathan/approx.hpp"

#include <cmath>
#include <numbers>

#include "leviathan/errors.hpp"
#include "leviathan/optim.hpp"
#include "leviathan/rng.hpp"
#include "leviathan/separable.hpp"

namespace leviathan {

SurfaceTarget surface_fixture(const std::string& name)
{
    constexpr double pi = std::numbers::pi;
    if (name == "constant")
        return {name, 2, [](std::span<const double>) { return 0.7; }};
    if (name == "sincos")
        return {name, 2, [](std::span<const double> x) { return std::sin(pi * x[0]) * std::cos(pi * x[1]); }};
    if (name == "sincos_xy")
        return {name, 2,
                [](std::span<const double> x) { return std::sin(pi * x[0]) * std::cos(pi * x[1]) + x[0] * x[1]; }};
    throw ConfigError("unknown surface fixture '" + name + "' (expected constant, sincos or sincos_xy)");
}

std::vector<std::string> surface_fixture_names()
{
    return {"constant", "sincos", "sincos_xy"};
}

Json ApproxResult::to_json() const
{
    return Json{{"fixture", fixture},
                {"modes", config.modes},
                {"segments", config.segments},
                {"degree", config.degree},
                {"steps", config.steps},
                {"lr", config.lr},
                {"seed", config.seed},
                {"train_grid", config.train_grid},
                {"eval_grid", config.eval_grid},
                {"initial_loss", initial_loss},
                {"final_loss", final_loss},
                {"sup_error", sup_error},
                {"steps_run", steps_run},
                {"diverged", diverged}};
}

Tensor unit_grid(std::size_t dims, std::size_t n)
{
    if (dims == 0 || n < 2)
        throw ConfigError("grid needs dims >= 1 and at least 2 points per axis");
    std::size_t total = 1;
    for (std::size_t i = 0; i < dims; ++i)
        total *= n;
    Tensor pts({total, dims});
    for (std::size_t p = 0; p < total; ++p) {
        std::size_t rest = p;
        for (std::size_t i = dims; i-- > 0;) {
            pts.at(p, i) = static_cast<double>(rest % n) / static_cast<double>(n - 1);
            rest /= n;
        }
    }
    return pts;
}

Tensor surface_values(const Tensor& points, const Tensor& theta, std::size_t segments, std::size_t degree)
{
    const SplineGrid grid = build_grid(segments, degree);
    const Tensor modes = separable_modes_values(points, theta, grid);
    Tensor out({modes.rows()});
    for (std::size_t r = 0; r < modes.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < modes.cols(); ++c)
            s += modes.at(r, c);
        out[r] = s;
    }
    return out;
}

namespace {

Tensor target_values(const SurfaceTarget& target, const Tensor& points)
{
    Tensor y({points.rows(), 1});
    for (std::size_t r = 0; r < points.rows(); ++r)
        y[r] = target.f(std::span<const double>(points.ptr() + r * points.cols(), points.cols()));
    return y;
}

}  // namespace

ApproxResult fit_surface(const SurfaceTarget& target, const ApproxConfig& config)
{
    if (target.dims == 0 || target.dims > 4)
        throw ConfigError("surface fitting supports 1 to 4 dimensions");
    if (config.modes == 0 || config.steps == 0)
        throw ConfigError("surface fitting needs modes >= 1 and steps >= 1");
    if (target.dims <= 2 && config.eval_grid < 50)
        throw ConfigError("evaluation grid must have at least 50 points per axis");
    const std::size_t d = target.dims, M = config.modes;
    const SplineGrid grid = build_grid(config.segments, config.degree);
    const std::size_t nb = grid.n_basis();

    const Tensor train_pts = unit_grid(d, config.train_grid);
    const Tensor train_y = target_values(target, train_pts);

    // Each factor starts near a constant with a small random tilt, scaled so
    // the mode sum begins near zero-mean unit-order output.
    Rng rng(config.seed);
    Tensor theta({d, M, nb, 1});
    const double level = std::pow(1.0 / static_cast<double>(M), 1.0 / static_cast<double>(d));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t m = 0; m < M; ++m) {
            const double sign = (i == 0 && m % 2 == 1) ? -1.0 : 1.0;
            for (std::size_t c = 0; c < nb; ++c)
                theta[((i * M + m) * nb + c)] = sign * level + rng.normal(0.0, 0.3);
        }

    TrainConfig opt;
    opt.peak_lr = config.lr;
    opt.min_lr = config.lr * config.final_lr_fraction;
    opt.warmup_steps = 0;
    opt.total_steps = config.steps;
    opt.weight_decay = 0.0;
    AdamState adam;
    adam.m.emplace_back(theta.shape(), 0.0);
    adam.v.emplace_back(theta.shape(), 0.0);

    Tensor ones({M, 1}, 1.0);
    ApproxResult result;
    result.fixture = target.name;
    result.config = config;
    std::size_t worse = 0;
    for (std::size_t step = 0; step < config.steps; ++step) {
        Tape tape;
        Var pts = tape.constant(train_pts);
        Var th = tape.leaf(theta);
        Var pred = matmul(tape, separable_modes(tape, pts, th, grid), tape.constant(ones));
        Var diff = sub(tape, pred, tape.constant(train_y));
        Var loss = mean(tape, mul(tape, diff, diff));
        const double value = tape.value(loss).item();
        if (step == 0)
            result.initial_loss = value;
        result.final_loss = value;
        result.steps_run = step;
        if (!std::isfinite(value) || value > result.initial_loss) {
            if (++worse >= config.divergence_window || !std::isfinite(value)) {
                result.diverged = true;
                break;
            }
        } else {
            worse = 0;
        }
        tape.backward(loss);
        Tensor g = tape.grad(th);
        Tensor* params[] = {&theta};
        const Tensor* grads[] = {&g};
        adamw_step(params, grads, adam, lr_at(step, opt), opt);
        result.steps_run = step + 1;
    }

    result.theta = theta;
    const Tensor eval_pts = unit_grid(d, config.eval_grid);
    const Tensor eval_y = target_values(target, eval_pts);
    const Tensor fitted = surface_values(eval_pts, theta, config.segments, config.degree);
    double sup = 0.0;
    for (std::size_t r = 0; r < eval_pts.rows(); ++r)
        sup = std::max(sup, std::abs(fitted[r] - eval_y[r]));
    result.sup_error = sup;
    return result;
}

}  // namespace leviathan
