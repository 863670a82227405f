#include "leviathan/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "leviathan/errors.hpp"

namespace leviathan {

double lr_at(std::size_t step, const TrainConfig& config)
{
    const double peak = config.peak_lr, floor = config.min_lr;
    if (step >= config.total_steps)
        return floor;
    if (step == config.warmup_steps)
        return peak;
    if (step < config.warmup_steps)
        return floor + (peak - floor) * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
    const double progress = static_cast<double>(step - config.warmup_steps) /
                            static_cast<double>(config.total_steps - config.warmup_steps);
    return floor + 0.5 * (peak - floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

double global_norm(std::span<const Tensor* const> grads)
{
    double sq = 0.0;
    for (const Tensor* g : grads)
        for (double x : g->data())
            sq += x * x;
    return std::sqrt(sq);
}

double clip_global_norm(std::span<Tensor* const> grads, double clip_norm)
{
    std::vector<const Tensor*> view(grads.begin(), grads.end());
    const double norm = global_norm(view);
    if (!std::isfinite(norm))
        throw TrainingError("non-finite gradient norm");
    if (norm > clip_norm) {
        const double s = clip_norm / norm;
        for (Tensor* g : grads)
            for (double& x : g->data())
                x *= s;
    }
    return norm;
}

AdamState AdamState::zeros_for(std::span<const Tensor* const> params)
{
    AdamState s;
    for (const Tensor* p : params) {
        s.m.emplace_back(p->shape(), 0.0);
        s.v.emplace_back(p->shape(), 0.0);
    }
    return s;
}

void adamw_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state, double lr,
                const TrainConfig& config)
{
    if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size())
        throw DimensionError("optimizer received " + std::to_string(params.size()) + " parameters, " +
                             std::to_string(grads.size()) + " gradients and " + std::to_string(state.m.size()) +
                             " moment slots");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(state.m[i]))
            throw DimensionError("optimizer shape mismatch at tensor " + std::to_string(i) + ": " +
                                 shape_string(params[i]->shape()) + " vs " + shape_string(grads[i]->shape()));

    state.t += 1;
    const double b1 = config.beta1, b2 = config.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        double* p = params[i]->ptr();
        const double* g = grads[i]->ptr();
        double* m = state.m[i].ptr();
        double* v = state.v[i].ptr();
        for (std::size_t j = 0, n = params[i]->numel(); j < n; ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            p[j] -= lr * (mhat / (std::sqrt(vhat) + config.eps) + config.weight_decay * p[j]);
        }
    }
}

}  // namespace leviathan
