#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "leviathan/checkpoint.hpp"
#include "leviathan/config.hpp"
#include "leviathan/corpus.hpp"
#include "leviathan/metrics.hpp"
#include "leviathan/model.hpp"
#include "leviathan/optim.hpp"

namespace leviathan {

// Independent sub-seeds from the single run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Owns parameters, optimizer state and the token stream of one run. Each
/// logical step accumulates accum_steps physical batches, clips, and applies
/// one AdamW update; evaluation runs every eval_every steps and at the end.
class Trainer {
public:
    Trainer(ModelConfig model, TrainConfig train, std::shared_ptr<const BlockSource> source);

    // Rebuilds a trainer exactly as it was when the checkpoint was taken.
    static Trainer resume(const Checkpoint& ckpt, std::shared_ptr<const BlockSource> source);

    std::size_t step() const noexcept { return step_; }
    bool done() const noexcept { return step_ >= train_.total_steps; }

    TrainRecord train_step();
    EvalRecord evaluate();

    using Observer = std::function<void(const Trainer&)>;
    // Steps until `until` (clamped to total_steps), evaluating on cadence.
    void run(std::size_t until = SIZE_MAX, const Observer& observer = {});

    Checkpoint checkpoint() const;
    void save(const std::filesystem::path& path) const;
    // Where to write the last good state if training hits a non-finite loss.
    void set_failure_checkpoint(std::filesystem::path path) { failure_path_ = std::move(path); }

    const ModelConfig& model_config() const noexcept { return model_; }
    const TrainConfig& train_config() const noexcept { return train_; }
    const ModelParams& params() const noexcept { return params_; }
    ModelParams& params() noexcept { return params_; }
    const AdamState& optimizer() const noexcept { return adam_; }
    const TokenStream& stream() const noexcept { return stream_; }
    const MetricLog& log() const noexcept { return log_; }
    std::uint64_t param_count() const;

    double validation_loss() const;

private:
    void check_finite(double value, const char* what, std::size_t micro);

    ModelConfig model_;
    TrainConfig train_;
    std::shared_ptr<const BlockSource> source_;
    ModelParams params_;
    AdamState adam_;
    TokenStream stream_;
    std::vector<TokenBatch> validation_;
    MetricLog log_;
    std::size_t step_ = 0;
    std::optional<std::filesystem::path> failure_path_;
};

struct PairPlan {
    Regime regime = Regime::iso_body;
    ModelConfig dense;
    ModelConfig leviathan;
    std::uint64_t dense_params = 0;
    std::uint64_t leviathan_params = 0;

    double relative_gap() const;
};

// Leviathan depth in [1, max_layers] minimizing |N_lev - N_dense|; ties go to
// the shallower model.
std::size_t isoparametric_depth(const ModelConfig& dense, const ModelConfig& leviathan, std::size_t max_layers = 256);

// iso_body: dense tied vs generator input + untied head on the same backbone.
// isoparametric: dense untied vs generator with depth from the search above.
PairPlan plan_pair(const ModelConfig& shared, Regime regime, const GeneratorConfig& generator,
                   std::size_t max_layers = 256);

struct ComparisonPoint {
    std::size_t step = 0;
    std::uint64_t tokens_seen = 0;
    double dense_loss = 0.0;
    double leviathan_loss = 0.0;
    double reduction = 0.0;  // percent
};

struct PairResult {
    PairPlan plan;
    MetricLog dense;
    MetricLog leviathan;
    std::vector<ComparisonPoint> curve;
    std::optional<double> final_dense;
    std::optional<double> final_leviathan;
    std::optional<double> final_reduction;
    std::uint64_t dense_stream_hash = 0;
    std::uint64_t leviathan_stream_hash = 0;

    bool streams_match() const noexcept { return dense_stream_hash == leviathan_stream_hash; }
    Json summary() const;
};

std::vector<ComparisonPoint> compare_logs(const MetricLog& dense, const MetricLog& leviathan);

// Trains both sides on identically configured streams. With `concurrent` the
// two trainers run on separate threads; results are identical either way.
PairResult run_pair(const PairPlan& plan, const TrainConfig& train, std::shared_ptr<const BlockSource> source,
                    bool concurrent = false);

}  // namespace leviathan
