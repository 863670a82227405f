#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "leviathan/autodiff.hpp"
#include "leviathan/corpus.hpp"
#include "leviathan/generator.hpp"
#include "leviathan/model.hpp"

namespace leviathan {

using Json = nlohmann::json;

struct TrainConfig {
    double peak_lr = 3e-4;
    double min_lr = 1e-5;
    std::size_t warmup_steps = 1000;
    std::size_t total_steps = 2000;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double clip_norm = 1.0;
    std::size_t accum_steps = 4;
    std::size_t physical_batch = 8;
    std::size_t seq_len = 128;
    std::uint64_t seed = 0;
    std::size_t eval_every = 50;
    std::size_t eval_batches = 4;
    std::size_t shuffle_buffer = 10000;
    double validation_fraction = 0.05;
    std::size_t checkpoint_every = 0;  // 0: only at the end
    Precision precision = Precision::double_precision;

    std::uint64_t logical_batch_sequences() const noexcept { return physical_batch * accum_steps; }
    std::uint64_t logical_batch_tokens() const noexcept { return logical_batch_sequences() * seq_len; }
    void validate() const;

    // Full-scale protocol: 512-token sequences, 32 x 16 accumulation.
    static TrainConfig full_scale_profile();
};

enum class Regime { iso_body, isoparametric };

std::string to_string(Regime regime);
Regime regime_from_string(const std::string& name);
std::string to_string(Precision precision);
Precision precision_from_string(const std::string& name);

struct DataConfig {
    std::string corpus;  // UTF-8 text, tokenized on load
    std::string tokens;  // or a prepared token file
    TokenScheme scheme = TokenScheme::byte;
    std::uint32_t k = 3;
};

struct ExperimentConfig {
    ModelConfig model;
    TrainConfig train;
    DataConfig data;
    std::optional<Regime> regime;
    // Generator used by the Leviathan side of a pair (and by generator-mode
    // single runs when model.generator is absent).
    std::optional<GeneratorConfig> generator;
    std::string out;
};

// Conversions. Parsing rejects unknown keys and wrong types with ConfigError;
// missing keys keep their defaults.
Json to_json(const GeneratorConfig& c);
Json to_json(const ModelConfig& c);
Json to_json(const TrainConfig& c);
Json to_json(const DataConfig& c);
Json to_json(const ExperimentConfig& c);
GeneratorConfig generator_config_from_json(const Json& j);
ModelConfig model_config_from_json(const Json& j);
TrainConfig train_config_from_json(const Json& j);
DataConfig data_config_from_json(const Json& j);
ExperimentConfig experiment_config_from_json(const Json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Canonical (sorted-key, compact) serialization and its FNV-1a hash.
std::string canonical_json(const Json& j);
std::uint64_t config_hash(const Json& j);
std::string hex64(std::uint64_t value);

/// Named architecture presets for the full-scale table rows.
struct Preset {
    std::string name;
    ModelConfig model;
    double peak_lr = 3e-4;
    std::size_t total_steps = 0;
    std::uint64_t reported_params = 0;  // as printed in the source tables
};

const std::vector<Preset>& presets();
const Preset& find_preset(const std::string& name);

// Generator shape used at desk scale where the default seed width would not
// fit inside a single transformer layer's budget.
GeneratorConfig desk_generator(std::uint64_t vocab_raw, std::uint32_t k, std::size_t embed_dim);

// Vocabulary of the large presets: 200,018 raw ids and the published padded
// width 200,376 (not itself a cube; its base is still 59).
inline constexpr std::uint64_t preset_vocab_raw = 200018;
inline constexpr std::uint64_t preset_vocab = 200376;
inline constexpr std::uint32_t preset_k = 3;

}  // namespace leviathan
