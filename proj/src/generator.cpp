#include "leviathan/generator.hpp"

#include <numeric>
#include <string>

#include "leviathan/errors.hpp"
#include "leviathan/separable.hpp"

namespace leviathan {

GeneratorConfig GeneratorConfig::for_vocab(std::uint64_t vocab_raw, std::uint32_t k, std::size_t embed_dim)
{
    GeneratorConfig c;
    c.k = k;
    c.base = base_for_vocab(vocab_raw, k);
    c.embed_dim = embed_dim;
    return c;
}

void GeneratorConfig::validate() const
{
    if (k == 0 || base == 0 || d_seed == 0 || segments == 0 || modes == 0 || mode_channels == 0 ||
        embed_dim == 0)
        throw ConfigError("generator counts must all be at least 1");
    (void)capacity();
}

namespace {

Tensor normal_tensor(Shape shape, double mean, double stddev, Rng& rng)
{
    Tensor t(std::move(shape));
    for (auto& v : t.data())
        v = rng.normal(mean, stddev);
    return t;
}

void expect_shape(const Tensor& t, const Shape& shape, const std::string& name)
{
    if (t.shape() != shape)
        throw DimensionError("generator parameter " + name + " has shape " + shape_string(t.shape()) +
                             ", expected " + shape_string(shape));
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> GeneratorParams::named(const std::string& prefix)
{
    std::vector<std::pair<std::string, Tensor*>> out;
    for (std::size_t r = 0; r < codebooks.size(); ++r)
        out.emplace_back(prefix + "codebook." + std::to_string(r), &codebooks[r]);
    out.emplace_back(prefix + "w_seed", &w_seed);
    out.emplace_back(prefix + "b_seed", &b_seed);
    out.emplace_back(prefix + "ln_gain", &ln_gain);
    out.emplace_back(prefix + "ln_bias", &ln_bias);
    out.emplace_back(prefix + "theta", &theta);
    out.emplace_back(prefix + "w_out", &w_out);
    out.emplace_back(prefix + "w_res", &w_res);
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> GeneratorParams::named(const std::string& prefix) const
{
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (auto& [name, t] : const_cast<GeneratorParams*>(this)->named(prefix))
        out.emplace_back(name, t);
    return out;
}

std::uint64_t GeneratorParams::hash() const
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto& [name, t] : named())
        h = hash_tensor(*t, h);
    return h;
}

GeneratorParams init_generator(const GeneratorConfig& config, Rng& rng)
{
    config.validate();
    const std::size_t d = config.d_seed;
    const std::size_t mc = config.modes * config.mode_channels;
    const std::size_t nb = config.segments + config.degree;
    GeneratorParams p;
    for (std::uint32_t r = 0; r < config.k; ++r)
        p.codebooks.push_back(normal_tensor({config.base, d}, 0.0, 0.02, rng));
    p.w_seed = normal_tensor({d, d}, 0.0, 0.02, rng);
    p.b_seed = Tensor({d}, 0.0);
    p.ln_gain = Tensor({d}, 1.0);
    p.ln_bias = Tensor({d}, 0.0);
    // Each factor starts near 1 so the d-fold product is O(1).
    p.theta = normal_tensor({d, config.modes, nb, config.mode_channels}, 1.0, 0.05, rng);
    p.w_out = normal_tensor({mc, config.embed_dim}, 0.0, 0.02, rng);
    p.w_res = normal_tensor({d, config.embed_dim}, 0.0, 0.02, rng);
    return p;
}

GeneratorParams zeros_like(const GeneratorParams& params)
{
    GeneratorParams z = params;
    for (auto& [name, t] : z.named())
        t->fill(0.0);
    return z;
}

void check_generator_params(const GeneratorConfig& config, const GeneratorParams& params)
{
    config.validate();
    const std::size_t d = config.d_seed;
    if (params.codebooks.size() != config.k)
        throw DimensionError("generator has " + std::to_string(params.codebooks.size()) +
                             " codebooks, config expects " + std::to_string(config.k));
    for (std::size_t r = 0; r < params.codebooks.size(); ++r)
        expect_shape(params.codebooks[r], {config.base, d}, "codebook." + std::to_string(r));
    expect_shape(params.w_seed, {d, d}, "w_seed");
    expect_shape(params.b_seed, {d}, "b_seed");
    expect_shape(params.ln_gain, {d}, "ln_gain");
    expect_shape(params.ln_bias, {d}, "ln_bias");
    expect_shape(params.theta, {d, config.modes, config.segments + config.degree, config.mode_channels},
                 "theta");
    expect_shape(params.w_out, {config.modes * config.mode_channels, config.embed_dim}, "w_out");
    expect_shape(params.w_res, {d, config.embed_dim}, "w_res");
}

GeneratorVars bind_generator(Tape& tape, const GeneratorParams& params, bool requires_grad)
{
    GeneratorVars v;
    for (const auto& c : params.codebooks)
        v.codebooks.push_back(tape.leaf(c, requires_grad));
    v.w_seed = tape.leaf(params.w_seed, requires_grad);
    v.b_seed = tape.leaf(params.b_seed, requires_grad);
    v.ln_gain = tape.leaf(params.ln_gain, requires_grad);
    v.ln_bias = tape.leaf(params.ln_bias, requires_grad);
    v.theta = tape.leaf(params.theta, requires_grad);
    v.w_out = tape.leaf(params.w_out, requires_grad);
    v.w_res = tape.leaf(params.w_res, requires_grad);
    return v;
}

namespace {

void add_into(Tensor& dst, const Tensor& src)
{
    for (std::size_t i = 0; i < dst.numel(); ++i)
        dst[i] += src[i];
}

}  // namespace

void accumulate_generator_grads(const Tape& tape, const GeneratorVars& vars, GeneratorParams& grads)
{
    for (std::size_t r = 0; r < vars.codebooks.size(); ++r)
        add_into(grads.codebooks[r], tape.grad(vars.codebooks[r]));
    add_into(grads.w_seed, tape.grad(vars.w_seed));
    add_into(grads.b_seed, tape.grad(vars.b_seed));
    add_into(grads.ln_gain, tape.grad(vars.ln_gain));
    add_into(grads.ln_bias, tape.grad(vars.ln_bias));
    add_into(grads.theta, tape.grad(vars.theta));
    add_into(grads.w_out, tape.grad(vars.w_out));
    add_into(grads.w_res, tape.grad(vars.w_res));
}

Var generator_seed(Tape& tape, const GeneratorVars& vars, const GeneratorConfig& config,
                   std::span<const std::uint32_t> ids)
{
    const CoordinateMap map(config.k, config.base);
    std::vector<std::vector<std::uint32_t>> digit_ids(config.k, std::vector<std::uint32_t>(ids.size()));
    std::vector<std::uint64_t> digits(config.k);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        map.decompose(ids[i], digits);
        for (std::uint32_t r = 0; r < config.k; ++r)
            digit_ids[r][i] = static_cast<std::uint32_t>(digits[r]);
    }
    Var z = gather_rows(tape, vars.codebooks[0], digit_ids[0]);
    for (std::uint32_t r = 1; r < config.k; ++r)
        z = add(tape, z, gather_rows(tape, vars.codebooks[r], digit_ids[r]));
    return z;
}

Var generator_latent(Tape& tape, const GeneratorVars& vars, Var seed)
{
    Var projected = add_row(tape, matmul(tape, seed, vars.w_seed), vars.b_seed);
    Var normalized = layer_norm(tape, projected, vars.ln_gain, vars.ln_bias);
    return sigmoid(tape, normalized);
}

Var generator_modes(Tape& tape, const GeneratorVars& vars, const GeneratorConfig& config, Var latent)
{
    const SplineGrid grid = build_grid(config.segments, config.degree);
    return separable_modes(tape, latent, vars.theta, grid);
}

Var generator_embed(Tape& tape, const GeneratorVars& vars, const GeneratorConfig& config,
                    std::span<const std::uint32_t> ids)
{
    Var z = generator_seed(tape, vars, config, ids);
    Var latent = generator_latent(tape, vars, z);
    Var modes = generator_modes(tape, vars, config, latent);
    return add(tape, matmul(tape, modes, vars.w_out), matmul(tape, latent, vars.w_res));
}

Tensor seed(std::uint32_t id, const GeneratorConfig& config, const GeneratorParams& params)
{
    Tape tape;
    const GeneratorVars vars = bind_generator(tape, params, false);
    const std::uint32_t ids[] = {id};
    return tape.value(generator_seed(tape, vars, config, ids)).reshaped({config.d_seed});
}

Tensor latent_coord(const Tensor& seed, const GeneratorParams& params)
{
    Tape tape;
    const GeneratorVars vars = bind_generator(tape, params, false);
    const std::size_t d = params.w_seed.extent(0);
    if (seed.numel() % d != 0)
        throw DimensionError("seed length " + std::to_string(seed.numel()) + " is not a multiple of d_seed");
    Var z = tape.constant(seed.reshaped({seed.numel() / d, d}));
    return tape.value(generator_latent(tape, vars, z)).reshaped(seed.shape());
}

Tensor mode_eval(const Tensor& latent, std::size_t mode, const GeneratorConfig& config,
                 const GeneratorParams& params)
{
    if (mode >= config.modes)
        throw IndexError("mode " + std::to_string(mode) + " outside [0, " + std::to_string(config.modes) + ")");
    const SplineGrid grid = build_grid(config.segments, config.degree);
    const Tensor all = separable_modes_values(latent.reshaped({1, latent.numel()}), params.theta, grid);
    const std::size_t c = config.mode_channels;
    Tensor out({c});
    for (std::size_t ch = 0; ch < c; ++ch)
        out[ch] = all[mode * c + ch];
    return out;
}

Tensor embed(std::uint32_t id, const GeneratorConfig& config, const GeneratorParams& params)
{
    Tape tape;
    const GeneratorVars vars = bind_generator(tape, params, false);
    const std::uint32_t ids[] = {id};
    return tape.value(generator_embed(tape, vars, config, ids)).reshaped({config.embed_dim});
}

Tensor embed_table(const GeneratorConfig& config, const GeneratorParams& params, std::uint64_t vocab_raw)
{
    if (vocab_raw == 0 || vocab_raw > config.capacity())
        throw IndexError("vocabulary of " + std::to_string(vocab_raw) + " tokens exceeds generator capacity " +
                         std::to_string(config.capacity()));
    std::vector<std::uint32_t> ids(vocab_raw);
    std::iota(ids.begin(), ids.end(), 0u);
    Tape tape;
    const GeneratorVars vars = bind_generator(tape, params, false);
    return tape.value(generator_embed(tape, vars, config, ids));
}

void EmbeddingCache::refresh(const GeneratorConfig& config, const GeneratorParams& params,
                             std::uint64_t vocab_raw)
{
    table_ = embed_table(config, params, vocab_raw);
    params_hash_ = params.hash();
    table_hash_ = hash_tensor(table_);
    built_ = true;
}

bool EmbeddingCache::valid_for(const GeneratorParams& params) const
{
    return built_ && params.hash() == params_hash_;
}

const Tensor& EmbeddingCache::table(const GeneratorParams& params) const
{
    if (!built_)
        throw ConsistencyError("embedding cache read before it was built");
    if (params.hash() != params_hash_)
        throw ConsistencyError("embedding cache is stale: generator parameters changed since refresh");
    return table_;
}

std::uint64_t ParamCount::total() const
{
    std::uint64_t t = 0;
    for (auto& [name, n] : parts)
        t += n;
    return t;
}

ParamCount generator_param_count(const GeneratorConfig& config)
{
    config.validate();
    const std::uint64_t d = config.d_seed;
    const std::uint64_t nb = config.segments + config.degree;
    const std::uint64_t mc = config.modes * config.mode_channels;
    const std::uint64_t D = config.embed_dim;
    ParamCount c;
    c.parts = {
        {"codebooks", std::uint64_t(config.k) * config.base * d},
        {"seed_projection", d * d + d},
        {"latent_norm", 2 * d},
        {"spline_coefficients", d * config.modes * nb * config.mode_channels},
        {"output_projection", D * mc},
        {"residual_projection", D * d},
    };
    return c;
}

}  // namespace leviathan
