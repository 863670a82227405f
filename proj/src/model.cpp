#include "leviathan/model.hpp"

#include <numeric>
#include <string>

#include "leviathan/errors.hpp"

namespace leviathan {

std::string to_string(InputMode mode)
{
    switch (mode) {
    case InputMode::dense_tied: return "dense_tied";
    case InputMode::dense_untied: return "dense_untied";
    case InputMode::generator: return "generator";
    }
    return "unknown";
}

InputMode input_mode_from_string(const std::string& name)
{
    if (name == "dense_tied" || name == "tied")
        return InputMode::dense_tied;
    if (name == "dense_untied" || name == "untied")
        return InputMode::dense_untied;
    if (name == "generator")
        return InputMode::generator;
    throw ConfigError("unknown input mode '" + name + "' (expected dense_tied, dense_untied or generator)");
}

void ModelConfig::validate() const
{
    if (vocab == 0 || vocab_raw == 0 || vocab_raw > vocab)
        throw ConfigError("model needs 1 <= vocab_raw <= vocab, got vocab_raw=" + std::to_string(vocab_raw) +
                          " vocab=" + std::to_string(vocab));
    if (dim == 0 || heads == 0 || seq_len == 0)
        throw ConfigError("model dim, heads and seq_len must be positive");
    if (dim % heads != 0)
        throw ConfigError("dim " + std::to_string(dim) + " is not divisible by heads " + std::to_string(heads));
    if (head_dim() % 2 != 0)
        throw ConfigError("head dimension " + std::to_string(head_dim()) + " must be even for RoPE");
    if (input_mode == InputMode::generator) {
        if (!generator)
            throw ConfigError("generator input mode requires a generator config");
        generator->validate();
        if (generator->embed_dim != dim)
            throw ConfigError("generator embed_dim " + std::to_string(generator->embed_dim) +
                              " does not match model dim " + std::to_string(dim));
        if (generator->capacity() < vocab_raw)
            throw ConfigError("generator covers " + std::to_string(generator->capacity()) + " ids, vocabulary has " +
                              std::to_string(vocab_raw));
    }
}

namespace {

Tensor normal_tensor(Shape shape, double stddev, Rng& rng)
{
    Tensor t(std::move(shape));
    for (auto& v : t.data())
        v = rng.normal(0.0, stddev);
    return t;
}

constexpr double init_std = 0.02;

void add_into(Tensor& dst, const Tensor& src)
{
    for (std::size_t i = 0; i < dst.numel(); ++i)
        dst[i] += src[i];
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> ModelParams::named()
{
    std::vector<std::pair<std::string, Tensor*>> out;
    if (embedding.numel())
        out.emplace_back("embed.table", &embedding);
    if (generator)
        for (auto& entry : generator->named("gen."))
            out.push_back(entry);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& p = layers[l];
        const std::string pre = "layers." + std::to_string(l) + ".";
        out.emplace_back(pre + "ln1.gain", &p.ln1_gain);
        out.emplace_back(pre + "ln1.bias", &p.ln1_bias);
        out.emplace_back(pre + "attn.wq", &p.wq);
        out.emplace_back(pre + "attn.bq", &p.bq);
        out.emplace_back(pre + "attn.wk", &p.wk);
        out.emplace_back(pre + "attn.bk", &p.bk);
        out.emplace_back(pre + "attn.wv", &p.wv);
        out.emplace_back(pre + "attn.bv", &p.bv);
        out.emplace_back(pre + "attn.wo", &p.wo);
        out.emplace_back(pre + "attn.bo", &p.bo);
        out.emplace_back(pre + "ln2.gain", &p.ln2_gain);
        out.emplace_back(pre + "ln2.bias", &p.ln2_bias);
        out.emplace_back(pre + "ffn.w_gate", &p.w_gate);
        out.emplace_back(pre + "ffn.w_up", &p.w_up);
        out.emplace_back(pre + "ffn.w_down", &p.w_down);
    }
    out.emplace_back("final_norm.gain", &final_gain);
    out.emplace_back("final_norm.bias", &final_bias);
    if (head.numel())
        out.emplace_back("head.w_class", &head);
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const
{
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (auto& [name, t] : const_cast<ModelParams*>(this)->named())
        out.emplace_back(name, t);
    return out;
}

ModelParams init_model(const ModelConfig& config, std::uint64_t seed)
{
    config.validate();
    Rng rng(seed);
    const std::size_t D = config.dim, F = config.ffn_dim();
    ModelParams p;
    if (config.input_mode == InputMode::generator)
        p.generator = init_generator(*config.generator, rng);
    else
        p.embedding = normal_tensor({config.vocab, D}, init_std, rng);
    for (std::size_t l = 0; l < config.layers; ++l) {
        LayerParams layer;
        layer.ln1_gain = Tensor({D}, 1.0);
        layer.ln1_bias = Tensor({D}, 0.0);
        layer.wq = normal_tensor({D, D}, init_std, rng);
        layer.bq = Tensor({D}, 0.0);
        layer.wk = normal_tensor({D, D}, init_std, rng);
        layer.bk = Tensor({D}, 0.0);
        layer.wv = normal_tensor({D, D}, init_std, rng);
        layer.bv = Tensor({D}, 0.0);
        layer.wo = normal_tensor({D, D}, init_std, rng);
        layer.bo = Tensor({D}, 0.0);
        layer.ln2_gain = Tensor({D}, 1.0);
        layer.ln2_bias = Tensor({D}, 0.0);
        layer.w_gate = normal_tensor({D, F}, init_std, rng);
        layer.w_up = normal_tensor({D, F}, init_std, rng);
        layer.w_down = normal_tensor({F, D}, init_std, rng);
        p.layers.push_back(std::move(layer));
    }
    p.final_gain = Tensor({D}, 1.0);
    p.final_bias = Tensor({D}, 0.0);
    if (config.input_mode != InputMode::dense_tied)
        p.head = normal_tensor({D, config.vocab}, init_std, rng);
    return p;
}

ModelParams zeros_like(const ModelParams& params)
{
    ModelParams z = params;
    for (auto& [name, t] : z.named())
        t->fill(0.0);
    return z;
}

void check_model_params(const ModelConfig& config, const ModelParams& params)
{
    config.validate();
    ModelParams expected = init_model(config, 0);
    auto want = expected.named();
    auto have = params.named();
    if (want.size() != have.size())
        throw DimensionError("model has " + std::to_string(have.size()) + " parameter tensors, config expects " +
                             std::to_string(want.size()));
    for (std::size_t i = 0; i < want.size(); ++i)
        if (want[i].first != have[i].first || want[i].second->shape() != have[i].second->shape())
            throw DimensionError("parameter " + have[i].first + " " + shape_string(have[i].second->shape()) +
                                 " does not match expected " + want[i].first + " " +
                                 shape_string(want[i].second->shape()));
}

ModelVars bind_model(Tape& tape, const ModelParams& params, bool requires_grad)
{
    ModelVars v;
    if (params.embedding.numel())
        v.embedding = tape.leaf(params.embedding, requires_grad);
    if (params.generator)
        v.generator = bind_generator(tape, *params.generator, requires_grad);
    for (const auto& p : params.layers) {
        LayerVars l;
        l.ln1_gain = tape.leaf(p.ln1_gain, requires_grad);
        l.ln1_bias = tape.leaf(p.ln1_bias, requires_grad);
        l.wq = tape.leaf(p.wq, requires_grad);
        l.bq = tape.leaf(p.bq, requires_grad);
        l.wk = tape.leaf(p.wk, requires_grad);
        l.bk = tape.leaf(p.bk, requires_grad);
        l.wv = tape.leaf(p.wv, requires_grad);
        l.bv = tape.leaf(p.bv, requires_grad);
        l.wo = tape.leaf(p.wo, requires_grad);
        l.bo = tape.leaf(p.bo, requires_grad);
        l.ln2_gain = tape.leaf(p.ln2_gain, requires_grad);
        l.ln2_bias = tape.leaf(p.ln2_bias, requires_grad);
        l.w_gate = tape.leaf(p.w_gate, requires_grad);
        l.w_up = tape.leaf(p.w_up, requires_grad);
        l.w_down = tape.leaf(p.w_down, requires_grad);
        v.layers.push_back(l);
    }
    v.final_gain = tape.leaf(params.final_gain, requires_grad);
    v.final_bias = tape.leaf(params.final_bias, requires_grad);
    if (params.head.numel())
        v.head = tape.leaf(params.head, requires_grad);
    return v;
}

void accumulate_model_grads(const Tape& tape, const ModelVars& vars, ModelParams& grads)
{
    if (vars.embedding.valid())
        add_into(grads.embedding, tape.grad(vars.embedding));
    if (vars.generator)
        accumulate_generator_grads(tape, *vars.generator, *grads.generator);
    for (std::size_t l = 0; l < vars.layers.size(); ++l) {
        const LayerVars& v = vars.layers[l];
        LayerParams& g = grads.layers[l];
        add_into(g.ln1_gain, tape.grad(v.ln1_gain));
        add_into(g.ln1_bias, tape.grad(v.ln1_bias));
        add_into(g.wq, tape.grad(v.wq));
        add_into(g.bq, tape.grad(v.bq));
        add_into(g.wk, tape.grad(v.wk));
        add_into(g.bk, tape.grad(v.bk));
        add_into(g.wv, tape.grad(v.wv));
        add_into(g.bv, tape.grad(v.bv));
        add_into(g.wo, tape.grad(v.wo));
        add_into(g.bo, tape.grad(v.bo));
        add_into(g.ln2_gain, tape.grad(v.ln2_gain));
        add_into(g.ln2_bias, tape.grad(v.ln2_bias));
        add_into(g.w_gate, tape.grad(v.w_gate));
        add_into(g.w_up, tape.grad(v.w_up));
        add_into(g.w_down, tape.grad(v.w_down));
    }
    add_into(grads.final_gain, tape.grad(vars.final_gain));
    add_into(grads.final_bias, tape.grad(vars.final_bias));
    if (vars.head.valid())
        add_into(grads.head, tape.grad(vars.head));
}

Var embed_tokens(Tape& tape, const ModelVars& vars, const ModelConfig& config,
                 std::span<const std::uint32_t> tokens)
{
    for (auto id : tokens)
        if (id >= config.vocab_raw)
            throw IndexError("token id " + std::to_string(id) + " outside [0, " + std::to_string(config.vocab_raw) +
                             ")");
    if (config.input_mode != InputMode::generator)
        return gather_rows(tape, vars.embedding, tokens);

    // The generator's domain is finite: materialize every row once, then look up.
    std::vector<std::uint32_t> all(config.vocab_raw);
    std::iota(all.begin(), all.end(), 0u);
    Var table = generator_embed(tape, *vars.generator, *config.generator, all);
    return gather_rows(tape, table, tokens);
}

Var attention_block(Tape& tape, const LayerVars& layer, const ModelConfig& config, Var h,
                    std::size_t batch, std::size_t seq)
{
    if (seq > config.seq_len)
        throw DimensionError("sequence of " + std::to_string(seq) + " exceeds context " +
                             std::to_string(config.seq_len));
    std::vector<std::size_t> positions(batch * seq);
    for (std::size_t i = 0; i < positions.size(); ++i)
        positions[i] = i % seq;

    Var a = layer_norm(tape, h, layer.ln1_gain, layer.ln1_bias, config.norm_eps);
    Var q = add_row(tape, matmul(tape, a, layer.wq), layer.bq);
    Var k = add_row(tape, matmul(tape, a, layer.wk), layer.bk);
    Var v = add_row(tape, matmul(tape, a, layer.wv), layer.bv);
    q = rope(tape, q, positions, config.heads, config.rope_base);
    k = rope(tape, k, positions, config.heads, config.rope_base);
    Var o = causal_attention(tape, q, k, v, batch, seq, config.heads);
    return add(tape, h, add_row(tape, matmul(tape, o, layer.wo), layer.bo));
}

Var swiglu_ffn(Tape& tape, const LayerVars& layer, const ModelConfig& config, Var h)
{
    Var f = layer_norm(tape, h, layer.ln2_gain, layer.ln2_bias, config.norm_eps);
    Var gate = silu(tape, matmul(tape, f, layer.w_gate));
    Var up = matmul(tape, f, layer.w_up);
    return add(tape, h, matmul(tape, mul(tape, gate, up), layer.w_down));
}

Var forward(Tape& tape, const ModelVars& vars, const ModelConfig& config,
            std::span<const std::uint32_t> tokens, std::size_t batch, std::size_t seq)
{
    if (tokens.size() != batch * seq)
        throw DimensionError("forward: " + std::to_string(tokens.size()) + " tokens for batch " +
                             std::to_string(batch) + " x seq " + std::to_string(seq));
    Var h = embed_tokens(tape, vars, config, tokens);
    for (const auto& layer : vars.layers) {
        h = attention_block(tape, layer, config, h, batch, seq);
        h = swiglu_ffn(tape, layer, config, h);
    }
    h = layer_norm(tape, h, vars.final_gain, vars.final_bias, config.norm_eps);
    if (config.input_mode == InputMode::dense_tied)
        return matmul(tape, h, transpose(tape, vars.embedding));
    return matmul(tape, h, vars.head);
}

Tensor forward_logits(const ModelConfig& config, const ModelParams& params,
                      std::span<const std::uint32_t> tokens, std::size_t batch, std::size_t seq,
                      Precision precision)
{
    Tape tape(precision);
    const ModelVars vars = bind_model(tape, params, false);
    return tape.value(forward(tape, vars, config, tokens, batch, seq));
}

Var lm_loss(Tape& tape, const ModelVars& vars, const ModelConfig& config,
            std::span<const std::uint32_t> inputs, std::span<const std::uint32_t> targets,
            std::size_t batch, std::size_t seq)
{
    Var logits = forward(tape, vars, config, inputs, batch, seq);
    return softmax_cross_entropy(tape, logits, targets);
}

ParamCount model_param_count(const ModelConfig& config)
{
    config.validate();
    const std::uint64_t V = config.vocab, D = config.dim, F = config.ffn_dim(), L = config.layers;
    ParamCount c;
    if (config.input_mode == InputMode::generator)
        c.parts.emplace_back("generator", generator_param_count(*config.generator).total());
    else
        c.parts.emplace_back("embedding", V * D);
    c.parts.emplace_back("attention", L * 4 * (D * D + D));
    c.parts.emplace_back("ffn", L * 3 * D * F);
    c.parts.emplace_back("layer_norms", L * 4 * D);
    c.parts.emplace_back("final_norm", 2 * D);
    c.parts.emplace_back("head", config.input_mode == InputMode::dense_tied ? 0 : D * V);
    return c;
}

}  // namespace leviathan
