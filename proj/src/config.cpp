#include "leviathan/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <type_traits>

#include "leviathan/coordinates.hpp"
#include "leviathan/errors.hpp"
#include "leviathan/tensor.hpp"

namespace leviathan {

void TrainConfig::validate() const
{
    auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
    if (!positive(peak_lr) || !positive(min_lr) || min_lr > peak_lr)
        throw ConfigError("learning rates need 0 < min_lr <= peak_lr");
    if (total_steps == 0)
        throw ConfigError("total_steps must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ConfigError("Adam betas must lie in [0, 1)");
    if (!positive(eps) || weight_decay < 0.0 || !positive(clip_norm))
        throw ConfigError("eps and clip_norm must be positive, weight_decay non-negative");
    if (accum_steps == 0 || physical_batch == 0 || seq_len == 0)
        throw ConfigError("accum_steps, physical_batch and seq_len must be positive");
    if (eval_every == 0 || eval_batches == 0 || shuffle_buffer == 0)
        throw ConfigError("eval_every, eval_batches and shuffle_buffer must be positive");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw ConfigError("validation_fraction must lie in (0, 1)");
}

TrainConfig TrainConfig::full_scale_profile()
{
    TrainConfig c;
    c.accum_steps = 16;
    c.physical_batch = 32;
    c.seq_len = 512;
    c.eval_batches = 16;
    return c;
}

std::string to_string(Regime regime)
{
    return regime == Regime::iso_body ? "iso_body" : "isoparam";
}

Regime regime_from_string(const std::string& name)
{
    if (name == "iso_body" || name == "iso-body")
        return Regime::iso_body;
    if (name == "isoparam" || name == "isoparametric")
        return Regime::isoparametric;
    throw ConfigError("unknown regime '" + name + "' (expected iso_body or isoparam)");
}

std::string to_string(Precision precision)
{
    return precision == Precision::single_precision ? "single" : "double";
}

Precision precision_from_string(const std::string& name)
{
    if (name == "double")
        return Precision::double_precision;
    if (name == "single")
        return Precision::single_precision;
    throw ConfigError("unknown precision '" + name + "' (expected single or double)");
}

namespace {

// Reads known keys from an object and rejects everything else.
class Fields {
public:
    Fields(const Json& j, std::string where) : j_{j}, where_{std::move(where)}
    {
        if (!j_.is_object())
            throw ConfigError(where_ + " must be a JSON object");
    }

    template <typename T>
    void read(const char* key, T& out)
    {
        known_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end())
            return;
        const Json& v = *it;
        const std::string path = where_ + "." + key;
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean())
                throw ConfigError(path + " must be a boolean");
            out = v.get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_unsigned())
                throw ConfigError(path + " must be a non-negative integer");
            const auto raw = v.get<std::uint64_t>();
            if (raw > std::numeric_limits<T>::max())
                throw ConfigError(path + " is too large");
            out = static_cast<T>(raw);
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number())
                throw ConfigError(path + " must be a number");
            out = v.get<T>();
        } else {
            if (!v.is_string())
                throw ConfigError(path + " must be a string");
            out = v.get<std::string>();
        }
    }

    const Json* child(const char* key)
    {
        known_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() || it->is_null() ? nullptr : &*it;
    }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!known_.count(it.key()))
                throw ConfigError("unknown key '" + where_ + "." + it.key() + "'");
    }

private:
    const Json& j_;
    std::string where_;
    std::set<std::string> known_;
};

}  // namespace

Json to_json(const GeneratorConfig& c)
{
    return Json{{"k", c.k},
                {"base", c.base},
                {"d_seed", c.d_seed},
                {"segments", c.segments},
                {"degree", c.degree},
                {"modes", c.modes},
                {"mode_channels", c.mode_channels},
                {"embed_dim", c.embed_dim}};
}

Json to_json(const ModelConfig& c)
{
    Json j{{"vocab", c.vocab},
           {"vocab_raw", c.vocab_raw},
           {"dim", c.dim},
           {"layers", c.layers},
           {"heads", c.heads},
           {"seq_len", c.seq_len},
           {"input_mode", to_string(c.input_mode)},
           {"rope_base", c.rope_base},
           {"norm_eps", c.norm_eps}};
    if (c.generator)
        j["generator"] = to_json(*c.generator);
    return j;
}

Json to_json(const TrainConfig& c)
{
    return Json{{"peak_lr", c.peak_lr},
                {"min_lr", c.min_lr},
                {"warmup_steps", c.warmup_steps},
                {"total_steps", c.total_steps},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"eps", c.eps},
                {"weight_decay", c.weight_decay},
                {"clip_norm", c.clip_norm},
                {"accum_steps", c.accum_steps},
                {"physical_batch", c.physical_batch},
                {"seq_len", c.seq_len},
                {"seed", c.seed},
                {"eval_every", c.eval_every},
                {"eval_batches", c.eval_batches},
                {"shuffle_buffer", c.shuffle_buffer},
                {"validation_fraction", c.validation_fraction},
                {"checkpoint_every", c.checkpoint_every},
                {"precision", to_string(c.precision)}};
}

Json to_json(const DataConfig& c)
{
    return Json{{"corpus", c.corpus}, {"tokens", c.tokens}, {"scheme", to_string(c.scheme)}, {"k", c.k}};
}

Json to_json(const ExperimentConfig& c)
{
    Json j{{"model", to_json(c.model)}, {"train", to_json(c.train)}, {"data", to_json(c.data)}, {"out", c.out}};
    if (c.regime)
        j["regime"] = to_string(*c.regime);
    if (c.generator)
        j["generator"] = to_json(*c.generator);
    return j;
}

GeneratorConfig generator_config_from_json(const Json& j)
{
    GeneratorConfig c;
    Fields f(j, "generator");
    f.read("k", c.k);
    f.read("base", c.base);
    f.read("d_seed", c.d_seed);
    f.read("segments", c.segments);
    f.read("degree", c.degree);
    f.read("modes", c.modes);
    f.read("mode_channels", c.mode_channels);
    f.read("embed_dim", c.embed_dim);
    f.finish();
    c.validate();
    return c;
}

ModelConfig model_config_from_json(const Json& j)
{
    ModelConfig c;
    Fields f(j, "model");
    f.read("vocab", c.vocab);
    f.read("vocab_raw", c.vocab_raw);
    f.read("dim", c.dim);
    f.read("layers", c.layers);
    f.read("heads", c.heads);
    f.read("seq_len", c.seq_len);
    std::string mode = to_string(c.input_mode);
    f.read("input_mode", mode);
    c.input_mode = input_mode_from_string(mode);
    f.read("rope_base", c.rope_base);
    f.read("norm_eps", c.norm_eps);
    if (const Json* g = f.child("generator"))
        c.generator = generator_config_from_json(*g);
    f.finish();
    return c;
}

TrainConfig train_config_from_json(const Json& j)
{
    TrainConfig c;
    Fields f(j, "train");
    f.read("peak_lr", c.peak_lr);
    f.read("min_lr", c.min_lr);
    f.read("warmup_steps", c.warmup_steps);
    f.read("total_steps", c.total_steps);
    f.read("beta1", c.beta1);
    f.read("beta2", c.beta2);
    f.read("eps", c.eps);
    f.read("weight_decay", c.weight_decay);
    f.read("clip_norm", c.clip_norm);
    f.read("accum_steps", c.accum_steps);
    f.read("physical_batch", c.physical_batch);
    f.read("seq_len", c.seq_len);
    f.read("seed", c.seed);
    f.read("eval_every", c.eval_every);
    f.read("eval_batches", c.eval_batches);
    f.read("shuffle_buffer", c.shuffle_buffer);
    f.read("validation_fraction", c.validation_fraction);
    f.read("checkpoint_every", c.checkpoint_every);
    std::string precision = to_string(c.precision);
    f.read("precision", precision);
    c.precision = precision_from_string(precision);
    f.finish();
    c.validate();
    return c;
}

DataConfig data_config_from_json(const Json& j)
{
    DataConfig c;
    Fields f(j, "data");
    f.read("corpus", c.corpus);
    f.read("tokens", c.tokens);
    std::string scheme = to_string(c.scheme);
    f.read("scheme", scheme);
    c.scheme = token_scheme_from_string(scheme);
    f.read("k", c.k);
    f.finish();
    if (c.k == 0)
        throw ConfigError("data.k must be positive");
    return c;
}

ExperimentConfig experiment_config_from_json(const Json& j)
{
    ExperimentConfig c;
    Fields f(j, "config");
    if (const Json* m = f.child("model"))
        c.model = model_config_from_json(*m);
    if (const Json* t = f.child("train")) {
        c.train = train_config_from_json(*t);
        if (!t->contains("seq_len"))
            c.train.seq_len = c.model.seq_len;
    } else {
        c.train.seq_len = c.model.seq_len;
    }
    if (const Json* d = f.child("data"))
        c.data = data_config_from_json(*d);
    if (const Json* g = f.child("generator"))
        c.generator = generator_config_from_json(*g);
    std::string regime;
    f.read("regime", regime);
    if (!regime.empty())
        c.regime = regime_from_string(regime);
    f.read("out", c.out);
    f.finish();
    if (c.train.seq_len > c.model.seq_len)
        throw ConfigError("train.seq_len exceeds the model context length");
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return experiment_config_from_json(j);
}

std::string canonical_json(const Json& j)
{
    // nlohmann objects are std::map backed, so keys are already sorted.
    return j.dump();
}

std::uint64_t config_hash(const Json& j)
{
    const std::string s = canonical_json(j);
    return fnv1a(std::as_bytes(std::span<const char>(s.data(), s.size())));
}

std::string hex64(std::uint64_t value)
{
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << value;
    return out.str();
}

namespace {

Preset make_preset(std::string name, InputMode mode, std::size_t dim, std::size_t layers, std::size_t heads,
                   double lr, std::size_t steps, std::uint64_t reported)
{
    Preset p;
    p.name = std::move(name);
    p.model.vocab_raw = preset_vocab_raw;
    p.model.vocab = preset_vocab;
    p.model.dim = dim;
    p.model.layers = layers;
    p.model.heads = heads;
    p.model.seq_len = 512;
    p.model.input_mode = mode;
    if (mode == InputMode::generator)
        p.model.generator = GeneratorConfig::for_vocab(preset_vocab_raw, preset_k, dim);
    p.peak_lr = lr;
    p.total_steps = steps;
    p.reported_params = reported;
    return p;
}

}  // namespace

const std::vector<Preset>& presets()
{
    using M = InputMode;
    static const std::vector<Preset> table = {
        make_preset("dense-60m", M::dense_tied, 256, 6, 4, 3e-4, 75000, 57600512),
        make_preset("leviathan-60m", M::generator, 256, 6, 4, 3e-4, 75000, 60185912),
        make_preset("dense-138m", M::dense_tied, 512, 8, 8, 3e-4, 170000, 138287416),
        make_preset("leviathan-138m", M::generator, 512, 8, 8, 3e-4, 170000, 138897208),
        make_preset("dense-270m", M::dense_tied, 768, 12, 12, 3e-4, 330000, 267210240),
        make_preset("leviathan-270m", M::generator, 768, 12, 12, 3e-4, 330000, 270057784),
        make_preset("dense-410m", M::dense_tied, 1024, 12, 16, 3e-4, 500000, 406611968),
        make_preset("leviathan-410m", M::generator, 1024, 12, 16, 3e-4, 500000, 409590584),
        make_preset("dense-109m", M::dense_untied, 256, 6, 4, 6e-4, 135000, 109097144),
        make_preset("leviathan-109m", M::generator, 256, 52, 4, 6e-4, 135000, 108514616),
        make_preset("dense-173m", M::dense_untied, 384, 8, 6, 3e-4, 210000, 172988856),
        make_preset("leviathan-173m", M::generator, 384, 39, 6, 3e-4, 210000, 171728440),
        make_preset("dense-238m", M::dense_untied, 512, 8, 8, 3e-4, 294000, 238973624),
        make_preset("leviathan-238m", M::generator, 512, 32, 8, 3e-4, 294000, 239658808),
        make_preset("dense-421m", M::dense_untied, 768, 12, 12, 2e-4, 515000, 421299384),
        make_preset("leviathan-421m", M::generator, 768, 28, 12, 2e-4, 515000, 421151032),
    };
    return table;
}

const Preset& find_preset(const std::string& name)
{
    for (const auto& p : presets())
        if (p.name == name)
            return p;
    std::string known;
    for (const auto& p : presets())
        known += (known.empty() ? "" : ", ") + p.name;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
}

GeneratorConfig desk_generator(std::uint64_t vocab_raw, std::uint32_t k, std::size_t embed_dim)
{
    GeneratorConfig g = GeneratorConfig::for_vocab(vocab_raw, k, embed_dim);
    g.d_seed = 30;
    return g;
}

}  // namespace leviathan
