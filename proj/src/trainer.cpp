#include "leviathan/trainer.hpp"

#include <cmath>
#include <mutex>
#include <limits>
#include <sstream>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "leviathan/errors.hpp"
#include "leviathan/scaling.hpp"

namespace leviathan {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    // splitmix64 finalizer over (seed, stream)
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

// Every micro-batch allocates and frees the same multi-megabyte activation
// buffers. glibc would serve those with fresh mmaps (and page faults) each
// time; keeping them on the heap is markedly faster.
void keep_large_buffers_on_heap()
{
#if defined(__GLIBC__)
    static std::once_flag once;
    std::call_once(once, [] {
        mallopt(M_MMAP_THRESHOLD, 256 << 20);
        mallopt(M_TRIM_THRESHOLD, 512 << 20);
    });
#endif
}

enum SeedStream : std::uint64_t { init_stream = 1, data_stream = 2, validation_stream = 3 };

std::vector<Tensor*> tensor_list(ModelParams& p)
{
    std::vector<Tensor*> out;
    for (auto& [name, t] : p.named())
        out.push_back(t);
    return out;
}

std::vector<const Tensor*> const_list(std::vector<Tensor*> v)
{
    return {v.begin(), v.end()};
}

void check_compatible(const ModelConfig& model, const TrainConfig& train, const BlockSource& source)
{
    model.validate();
    train.validate();
    if (train.seq_len > model.seq_len)
        throw ConfigError("train.seq_len " + std::to_string(train.seq_len) + " exceeds model context " +
                          std::to_string(model.seq_len));
    if (source.seq_len() != train.seq_len)
        throw ConfigError("block source seq_len " + std::to_string(source.seq_len()) +
                          " does not match train.seq_len " + std::to_string(train.seq_len));
}

std::shared_ptr<const BlockSource> checked(std::shared_ptr<const BlockSource> source)
{
    if (!source)
        throw ConfigError("trainer needs a block source");
    return source;
}

Json run_header(const ModelConfig& model, const TrainConfig& train, const BlockSource& source, std::uint64_t params)
{
    Json model_json = to_json(model);
    Json train_json = to_json(train);
    return Json{{"model", model_json},
                {"train", train_json},
                {"params", params},
                {"source", hex64(source.fingerprint())},
                {"config_hash", hex64(config_hash(Json{{"model", model_json}, {"train", train_json}}))}};
}

}  // namespace

Trainer::Trainer(ModelConfig model, TrainConfig train, std::shared_ptr<const BlockSource> source)
  : model_{std::move(model)},
    train_{train},
    source_{checked(std::move(source))},
    stream_{source_, StreamConfig{train.shuffle_buffer, derive_seed(train.seed, data_stream)}}
{
    check_compatible(model_, train_, *source_);
    keep_large_buffers_on_heap();
    params_ = init_model(model_, derive_seed(train_.seed, init_stream));
    auto list = tensor_list(params_);
    adam_ = AdamState::zeros_for(const_list(list));
    validation_ = validation_batches(*source_, train_.eval_batches, train_.physical_batch,
                                     derive_seed(train_.seed, validation_stream));
    log_.run = run_header(model_, train_, *source_, param_count());
}

std::uint64_t Trainer::param_count() const
{
    std::uint64_t n = 0;
    for (auto& [name, t] : params_.named())
        n += t->numel();
    return n;
}

void Trainer::check_finite(double value, const char* what, std::size_t micro)
{
    if (std::isfinite(value))
        return;
    std::ostringstream msg;
    msg << "non-finite " << what << " (" << value << ") at logical step " << step_ + 1 << ", micro-batch " << micro
        << ", lr " << lr_at(step_, train_);
    if (failure_path_) {
        save(*failure_path_);
        msg << "; last good state written to " << failure_path_->string();
    }
    throw TrainingError(msg.str());
}

TrainRecord Trainer::train_step()
{
    if (done())
        throw TrainingError("training already reached total_steps");
    ModelParams grads = zeros_like(params_);
    double loss_sum = 0.0;
    for (std::size_t micro = 0; micro < train_.accum_steps; ++micro) {
        const TokenBatch batch = stream_.next_batch(train_.physical_batch);
        const auto inputs = batch.inputs();
        const auto targets = batch.targets();
        Tape tape(train_.precision);
        const ModelVars vars = bind_model(tape, params_, true);
        const Var loss = lm_loss(tape, vars, model_, inputs, targets, batch.rows, batch.seq_len());
        const double value = tape.value(loss).item();
        check_finite(value, "training loss", micro);
        loss_sum += value;
        tape.backward(loss);
        accumulate_model_grads(tape, vars, grads);
    }

    auto grad_list = tensor_list(grads);
    const double inv = 1.0 / static_cast<double>(train_.accum_steps);
    for (Tensor* g : grad_list)
        for (double& x : g->data())
            x *= inv;
    double norm;
    try {
        norm = clip_global_norm(grad_list, train_.clip_norm);
    } catch (const TrainingError&) {
        check_finite(std::numeric_limits<double>::quiet_NaN(), "gradient norm", train_.accum_steps - 1);
        throw;
    }
    const double lr = lr_at(step_, train_);
    auto param_list = tensor_list(params_);
    adamw_step(param_list, const_list(grad_list), adam_, lr, train_);
    ++step_;

    TrainRecord rec;
    rec.step = step_;
    rec.tokens_seen = static_cast<std::uint64_t>(step_) * train_.logical_batch_tokens();
    rec.loss = loss_sum * inv;
    rec.lr = lr;
    rec.grad_norm = norm;
    log_.add(rec);
    return rec;
}

double Trainer::validation_loss() const
{
    double weighted = 0.0;
    std::size_t rows = 0;
    for (const auto& batch : validation_) {
        Tape tape(train_.precision);
        const ModelVars vars = bind_model(tape, params_, false);
        const auto inputs = batch.inputs();
        const auto targets = batch.targets();
        const Var loss = lm_loss(tape, vars, model_, inputs, targets, batch.rows, batch.seq_len());
        weighted += tape.value(loss).item() * static_cast<double>(batch.rows);
        rows += batch.rows;
    }
    return weighted / static_cast<double>(rows);
}

EvalRecord Trainer::evaluate()
{
    EvalRecord rec;
    rec.step = step_;
    rec.tokens_seen = static_cast<std::uint64_t>(step_) * train_.logical_batch_tokens();
    rec.loss = validation_loss();
    rec.perplexity = std::exp(rec.loss);
    log_.add(rec);
    return rec;
}

void Trainer::run(std::size_t until, const Observer& observer)
{
    until = std::min(until, train_.total_steps);
    while (step_ < until) {
        train_step();
        if (step_ % train_.eval_every == 0 || step_ == train_.total_steps)
            evaluate();
        if (observer)
            observer(*this);
    }
}

Checkpoint Trainer::checkpoint() const
{
    Checkpoint ckpt;
    ckpt.metadata = Json{{"kind", "trainer"},
                         {"model", to_json(model_)},
                         {"train", to_json(train_)},
                         {"step", step_},
                         {"adam_t", adam_.t},
                         {"stream", Json::parse(stream_.state())},
                         {"source", hex64(source_->fingerprint())},
                         {"log", log_.to_json()}};
    std::size_t i = 0;
    for (auto& [name, t] : params_.named()) {
        ckpt.tensors.emplace_back(name, *t);
        ++i;
    }
    i = 0;
    for (auto& [name, t] : params_.named()) {
        ckpt.tensors.emplace_back("adam.m." + name, adam_.m[i]);
        ckpt.tensors.emplace_back("adam.v." + name, adam_.v[i]);
        ++i;
    }
    return ckpt;
}

void Trainer::save(const std::filesystem::path& path) const
{
    write_checkpoint(path, checkpoint());
}

Trainer Trainer::resume(const Checkpoint& ckpt, std::shared_ptr<const BlockSource> source)
{
    const Json& meta = ckpt.metadata;
    if (meta.value("kind", "") != "trainer")
        throw FormatError("checkpoint was not written by a trainer");
    Trainer t(model_config_from_json(meta.at("model")), train_config_from_json(meta.at("train")), std::move(source));
    if (meta.at("source").get<std::string>() != hex64(t.source_->fingerprint()))
        throw ConsistencyError("checkpoint was taken on a different corpus");
    std::size_t i = 0;
    for (auto& [name, tensor] : t.params_.named()) {
        const Tensor& stored = ckpt.tensor(name);
        if (!stored.same_shape(*tensor))
            throw DimensionError("checkpoint tensor " + name + " has shape " + shape_string(stored.shape()));
        *tensor = stored;
        t.adam_.m[i] = ckpt.tensor("adam.m." + name);
        t.adam_.v[i] = ckpt.tensor("adam.v." + name);
        if (!t.adam_.m[i].same_shape(*tensor) || !t.adam_.v[i].same_shape(*tensor))
            throw DimensionError("optimizer moments for " + name + " have the wrong shape");
        ++i;
    }
    t.adam_.t = meta.at("adam_t").get<std::uint64_t>();
    t.step_ = meta.at("step").get<std::size_t>();
    t.stream_.restore(meta.at("stream").dump());
    t.log_ = MetricLog::from_json(meta.at("log"));
    return t;
}

double PairPlan::relative_gap() const
{
    const double d = static_cast<double>(dense_params);
    return std::abs(static_cast<double>(leviathan_params) - d) / d;
}

std::size_t isoparametric_depth(const ModelConfig& dense, const ModelConfig& leviathan, std::size_t max_layers)
{
    if (max_layers == 0)
        throw ConfigError("depth search needs max_layers >= 1");
    const std::uint64_t target = model_param_count(dense).total();
    std::size_t best = 1;
    std::uint64_t best_gap = UINT64_MAX;
    ModelConfig probe = leviathan;
    for (std::size_t L = 1; L <= max_layers; ++L) {
        probe.layers = L;
        const std::uint64_t n = model_param_count(probe).total();
        const std::uint64_t gap = n > target ? n - target : target - n;
        if (gap < best_gap) {
            best_gap = gap;
            best = L;
        }
    }
    return best;
}

PairPlan plan_pair(const ModelConfig& shared, Regime regime, const GeneratorConfig& generator, std::size_t max_layers)
{
    PairPlan plan;
    plan.regime = regime;
    plan.dense = shared;
    plan.dense.generator.reset();
    plan.dense.input_mode = regime == Regime::iso_body ? InputMode::dense_tied : InputMode::dense_untied;
    plan.leviathan = shared;
    plan.leviathan.input_mode = InputMode::generator;
    plan.leviathan.generator = generator;
    plan.leviathan.generator->embed_dim = shared.dim;
    if (regime == Regime::isoparametric)
        plan.leviathan.layers = isoparametric_depth(plan.dense, plan.leviathan, max_layers);
    plan.dense.validate();
    plan.leviathan.validate();
    plan.dense_params = model_param_count(plan.dense).total();
    plan.leviathan_params = model_param_count(plan.leviathan).total();
    return plan;
}

std::vector<ComparisonPoint> compare_logs(const MetricLog& dense, const MetricLog& leviathan)
{
    std::vector<ComparisonPoint> out;
    std::size_t j = 0;
    for (const auto& d : dense.evals) {
        while (j < leviathan.evals.size() && leviathan.evals[j].step < d.step)
            ++j;
        if (j == leviathan.evals.size())
            break;
        const auto& l = leviathan.evals[j];
        if (l.step != d.step)
            continue;
        if (l.tokens_seen != d.tokens_seen)
            throw ConsistencyError("paired runs disagree on tokens seen at step " + std::to_string(d.step));
        out.push_back({d.step, d.tokens_seen, d.loss, l.loss, perplexity_reduction(d.loss, l.loss)});
    }
    return out;
}

Json PairResult::summary() const
{
    Json curve_json = Json::array();
    for (const auto& p : curve)
        curve_json.push_back({{"step", p.step},
                              {"tokens_seen", p.tokens_seen},
                              {"dense_loss", p.dense_loss},
                              {"leviathan_loss", p.leviathan_loss},
                              {"reduction_pct", p.reduction}});
    auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
    return Json{{"regime", to_string(plan.regime)},
                {"dense", {{"model", to_json(plan.dense)}, {"params", plan.dense_params}}},
                {"leviathan", {{"model", to_json(plan.leviathan)}, {"params", plan.leviathan_params}}},
                {"relative_param_gap", plan.relative_gap()},
                {"dense_stream_hash", hex64(dense_stream_hash)},
                {"leviathan_stream_hash", hex64(leviathan_stream_hash)},
                {"streams_match", streams_match()},
                {"curve", curve_json},
                {"final_dense_loss", opt(final_dense)},
                {"final_leviathan_loss", opt(final_leviathan)},
                {"final_reduction_pct", opt(final_reduction)}};
}

PairResult run_pair(const PairPlan& plan, const TrainConfig& train, std::shared_ptr<const BlockSource> source,
                    bool concurrent)
{
    Trainer dense(plan.dense, train, source);
    Trainer lev(plan.leviathan, train, source);
    if (concurrent) {
        std::exception_ptr failure;
        std::thread worker([&] {
            try {
                lev.run();
            } catch (...) {
                failure = std::current_exception();
            }
        });
        try {
            dense.run();
        } catch (...) {
            worker.join();
            throw;
        }
        worker.join();
        if (failure)
            std::rethrow_exception(failure);
    } else {
        dense.run();
        lev.run();
    }

    PairResult result;
    result.plan = plan;
    result.dense = dense.log();
    result.leviathan = lev.log();
    result.dense_stream_hash = dense.stream().hash();
    result.leviathan_stream_hash = lev.stream().hash();
    if (!result.streams_match())
        throw ConsistencyError("paired runs consumed different token streams");
    result.curve = compare_logs(result.dense, result.leviathan);
    try {
        result.final_dense = final_validation_loss(result.dense, train.total_steps);
        result.final_leviathan = final_validation_loss(result.leviathan, train.total_steps);
        result.final_reduction = perplexity_reduction(*result.final_dense, *result.final_leviathan);
    } catch (const AnalysisError&) {
        // Too few evaluations for the end-of-run aggregate; the curve stands alone.
        result.final_dense.reset();
        result.final_leviathan.reset();
    }
    return result;
}

}  // namespace leviathan
