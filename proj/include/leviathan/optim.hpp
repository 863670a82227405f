#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "leviathan/config.hpp"
#include "leviathan/tensor.hpp"

namespace leviathan {

// Linear warmup from min_lr to peak_lr over warmup_steps, then cosine decay to
// min_lr at total_steps. Steps past the end clamp to min_lr.
double lr_at(std::size_t step, const TrainConfig& config);

// Scales all gradients by clip_norm / g when the global L2 norm g exceeds
// clip_norm. Returns g (before clipping). Throws TrainingError on non-finite
// gradients.
double clip_global_norm(std::span<Tensor* const> grads, double clip_norm);
double global_norm(std::span<const Tensor* const> grads);

struct AdamState {
    std::vector<Tensor> m, v;
    std::uint64_t t = 0;  // completed updates

    static AdamState zeros_for(std::span<const Tensor* const> params);
};

// One decoupled-decay Adam update at t = state.t + 1.
void adamw_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state, double lr,
                const TrainConfig& config);

}  // namespace leviathan
