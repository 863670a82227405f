#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "leviathan/autodiff.hpp"
#include "leviathan/coordinates.hpp"
#include "leviathan/rng.hpp"
#include "leviathan/splines.hpp"
#include "leviathan/tensor.hpp"

namespace leviathan {

/// Continuous token embedding generator: token id -> base-b digits -> summed
/// codebook seed -> projected, normalized, squashed latent point in (0,1)^d
/// -> rank-M separable spline surface -> output projection plus a residual
/// from the latent point.
struct GeneratorConfig {
    std::uint32_t k = 3;
    std::uint64_t base = 59;
    std::size_t d_seed = 128;
    std::size_t segments = 32;
    std::size_t degree = 2;
    std::size_t modes = 8;
    std::size_t mode_channels = 1;
    std::size_t embed_dim = 256;

    // Config with base derived from the raw vocabulary size.
    static GeneratorConfig for_vocab(std::uint64_t vocab_raw, std::uint32_t k, std::size_t embed_dim);

    std::uint64_t capacity() const { return checked_power(base, k); }
    void validate() const;
};

/// Learnable state. Matrices are stored for row-vector products
/// (x[1 x in] * W[in x out]).
struct GeneratorParams {
    std::vector<Tensor> codebooks;  // k x [base x d_seed]
    Tensor w_seed;                  // [d_seed x d_seed]
    Tensor b_seed;                  // [d_seed]
    Tensor ln_gain;                 // [d_seed]
    Tensor ln_bias;                 // [d_seed]
    Tensor theta;                   // [d_seed x modes x n_basis x channels]
    Tensor w_out;                   // [modes*channels x embed_dim]
    Tensor w_res;                   // [d_seed x embed_dim]

    std::vector<std::pair<std::string, Tensor*>> named(const std::string& prefix = "gen.");
    std::vector<std::pair<std::string, const Tensor*>> named(const std::string& prefix = "gen.") const;
    std::uint64_t hash() const;
};

GeneratorParams init_generator(const GeneratorConfig& config, Rng& rng);
GeneratorParams zeros_like(const GeneratorParams& params);
void check_generator_params(const GeneratorConfig& config, const GeneratorParams& params);

struct GeneratorVars {
    std::vector<Var> codebooks;
    Var w_seed, b_seed, ln_gain, ln_bias, theta, w_out, w_res;
};

GeneratorVars bind_generator(Tape& tape, const GeneratorParams& params, bool requires_grad);
// grads += tape gradients of vars
void accumulate_generator_grads(const Tape& tape, const GeneratorVars& vars, GeneratorParams& grads);

// Differentiable pipeline pieces; ids are token ids below base^k.
Var generator_seed(Tape& tape, const GeneratorVars& vars, const GeneratorConfig& config,
                   std::span<const std::uint32_t> ids);
Var generator_latent(Tape& tape, const GeneratorVars& vars, Var seed);
Var generator_modes(Tape& tape, const GeneratorVars& vars, const GeneratorConfig& config, Var latent);
Var generator_embed(Tape& tape, const GeneratorVars& vars, const GeneratorConfig& config,
                    std::span<const std::uint32_t> ids);

// Value-level accessors, all routed through the same pipeline.
Tensor seed(std::uint32_t id, const GeneratorConfig& config, const GeneratorParams& params);
Tensor latent_coord(const Tensor& seed, const GeneratorParams& params);
Tensor mode_eval(const Tensor& latent, std::size_t mode, const GeneratorConfig& config,
                 const GeneratorParams& params);
Tensor embed(std::uint32_t id, const GeneratorConfig& config, const GeneratorParams& params);
// [vocab_raw x embed_dim], row i == embed(i)
Tensor embed_table(const GeneratorConfig& config, const GeneratorParams& params, std::uint64_t vocab_raw);

/// Materialized embedding table tied to the parameter values it was built
/// from; reading it after the parameters change is an error.
class EmbeddingCache {
public:
    void refresh(const GeneratorConfig& config, const GeneratorParams& params, std::uint64_t vocab_raw);
    const Tensor& table(const GeneratorParams& params) const;
    bool valid_for(const GeneratorParams& params) const;
    std::uint64_t hash() const noexcept { return table_hash_; }

private:
    Tensor table_;
    std::uint64_t params_hash_ = 0;
    std::uint64_t table_hash_ = 0;
    bool built_ = false;
};

struct ParamCount {
    std::vector<std::pair<std::string, std::uint64_t>> parts;
    std::uint64_t total() const;
};

// k*b*d + (d^2 + d) + 2d + d*M*n_basis*c + D*M*c + D*d
ParamCount generator_param_count(const GeneratorConfig& config);

}  // namespace leviathan
