#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "leviathan/autodiff.hpp"
#include "leviathan/generator.hpp"
#include "leviathan/rng.hpp"
#include "leviathan/tensor.hpp"

namespace leviathan {

enum class InputMode { dense_tied, dense_untied, generator };

std::string to_string(InputMode mode);
InputMode input_mode_from_string(const std::string& name);

struct ModelConfig {
    std::uint64_t vocab = 343;      // padded V: logits width, dense table rows
    std::uint64_t vocab_raw = 256;  // ids actually produced by the tokenizer
    std::size_t dim = 32;
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t seq_len = 128;
    InputMode input_mode = InputMode::dense_tied;
    std::optional<GeneratorConfig> generator;
    double rope_base = 10000.0;
    double norm_eps = 1e-5;

    std::size_t ffn_dim() const noexcept { return 4 * dim; }
    std::size_t head_dim() const noexcept { return heads ? dim / heads : 0; }
    void validate() const;
};

struct LayerParams {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gain, ln2_bias;
    Tensor w_gate, w_up, w_down;
};

/// All transformer weights. In tied mode `embedding` doubles as the
/// classification head and `head` is empty.
struct ModelParams {
    Tensor embedding;                          // [V x D], dense modes
    std::optional<GeneratorParams> generator;  // generator mode
    std::vector<LayerParams> layers;
    Tensor final_gain, final_bias;
    Tensor head;                               // [D x V], untied and generator modes

    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;
};

ModelParams init_model(const ModelConfig& config, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& params);
void check_model_params(const ModelConfig& config, const ModelParams& params);

struct LayerVars {
    Var ln1_gain, ln1_bias, wq, bq, wk, bk, wv, bv, wo, bo, ln2_gain, ln2_bias, w_gate, w_up, w_down;
};

struct ModelVars {
    Var embedding;
    std::optional<GeneratorVars> generator;
    std::vector<LayerVars> layers;
    Var final_gain, final_bias;
    Var head;
};

ModelVars bind_model(Tape& tape, const ModelParams& params, bool requires_grad);
void accumulate_model_grads(const Tape& tape, const ModelVars& vars, ModelParams& grads);

// Token embeddings [tokens x D] from the table or the generator.
Var embed_tokens(Tape& tape, const ModelVars& vars, const ModelConfig& config,
                 std::span<const std::uint32_t> tokens);

// h + W_o * Attn(RoPE(W_q LN(h)), RoPE(W_k LN(h)), W_v LN(h)), causal.
Var attention_block(Tape& tape, const LayerVars& layer, const ModelConfig& config, Var h,
                    std::size_t batch, std::size_t seq);

// h + W_down (silu(W_gate LN(h)) * W_up LN(h))
Var swiglu_ffn(Tape& tape, const LayerVars& layer, const ModelConfig& config, Var h);

// tokens: [batch x seq] row-major; returns logits [batch*seq x V].
Var forward(Tape& tape, const ModelVars& vars, const ModelConfig& config,
            std::span<const std::uint32_t> tokens, std::size_t batch, std::size_t seq);

Tensor forward_logits(const ModelConfig& config, const ModelParams& params,
                      std::span<const std::uint32_t> tokens, std::size_t batch, std::size_t seq,
                      Precision precision = Precision::double_precision);

// Mean next-token cross-entropy; inputs and targets are [batch x seq].
Var lm_loss(Tape& tape, const ModelVars& vars, const ModelConfig& config,
            std::span<const std::uint32_t> inputs, std::span<const std::uint32_t> targets,
            std::size_t batch, std::size_t seq);

/// Closed-form count: embedding V*D (stored once when tied) or the generator,
/// per layer 4(D^2 + D) attention + 3 D d_ff FFN + 4D norms, final 2D norm,
/// head D*V unless tied.
ParamCount model_param_count(const ModelConfig& config);

}  // namespace leviathan
