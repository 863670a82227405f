#include "leviathan/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <unordered_map>

#include <json.hpp>

#include "leviathan/coordinates.hpp"
#include "leviathan/errors.hpp"
#include "leviathan/tensor.hpp"

namespace leviathan {

std::string to_string(TokenScheme scheme)
{
    return scheme == TokenScheme::byte ? "byte" : "word";
}

TokenScheme token_scheme_from_string(const std::string& name)
{
    if (name == "byte")
        return TokenScheme::byte;
    if (name == "word" || name == "whitespace-word")
        return TokenScheme::word;
    throw ConfigError("unknown token scheme '" + name + "' (expected byte or word)");
}

Vocab Vocab::padded(std::uint64_t raw_size, std::uint32_t k)
{
    Vocab v;
    v.raw_size = raw_size;
    v.k = k;
    v.base = base_for_vocab(raw_size, k);
    v.padded_size = checked_power(v.base, k);
    return v;
}

namespace {

bool is_space(unsigned char c)
{
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

}  // namespace

TokenizedCorpus tokenize_corpus(std::string_view text, TokenScheme scheme, std::uint32_t k)
{
    if (text.empty())
        throw IngestionError("corpus is empty");
    TokenizedCorpus out;
    if (scheme == TokenScheme::byte) {
        out.ids.reserve(text.size());
        for (unsigned char c : text)
            out.ids.push_back(c);
        out.vocab = Vocab::padded(256, k);
        return out;
    }

    std::vector<std::string_view> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(static_cast<unsigned char>(text[i])))
            ++i;
        std::size_t j = i;
        while (j < text.size() && !is_space(static_cast<unsigned char>(text[j])))
            ++j;
        if (j > i)
            words.push_back(text.substr(i, j - i));
        i = j;
    }
    if (words.empty())
        throw IngestionError("corpus contains no words");

    std::map<std::string_view, std::uint32_t> index;
    for (auto w : words)
        index.emplace(w, 0);
    std::uint32_t next = 0;
    for (auto& [w, id] : index) {
        id = next++;
        out.words.emplace_back(w);
    }
    out.ids.reserve(words.size());
    for (auto w : words)
        out.ids.push_back(index[w]);
    out.vocab = Vocab::padded(out.words.size(), k);
    return out;
}

namespace {

constexpr char token_magic[4] = {'L', 'V', 'T', 'K'};
constexpr std::uint16_t token_version = 1;
constexpr std::size_t token_header = 4 + 2 + 4 + 4 + 1;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value)
{
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset)
{
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
    return static_cast<T>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_token_file(std::span<const std::uint32_t> ids, const Vocab& vocab)
{
    if (vocab.raw_size > UINT32_MAX || vocab.padded_size > UINT32_MAX || vocab.k > UINT8_MAX)
        throw FormatError("vocabulary too large for the token file header");
    if (ids.empty())
        throw FormatError("refusing to write a token file with an empty payload");
    for (auto id : ids)
        if (id >= vocab.raw_size)
            throw IndexError("token id " + std::to_string(id) + " outside raw vocabulary of " +
                             std::to_string(vocab.raw_size));
    std::vector<std::uint8_t> out;
    out.reserve(token_header + 4 * ids.size());
    out.insert(out.end(), std::begin(token_magic), std::end(token_magic));
    put_le<std::uint16_t>(out, token_version);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(vocab.raw_size));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(vocab.padded_size));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(vocab.k));
    for (auto id : ids)
        put_le<std::uint32_t>(out, id);
    return out;
}

TokenFile decode_token_file(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < token_header || !std::equal(std::begin(token_magic), std::end(token_magic), bytes.begin()))
        throw FormatError("not a token file (bad magic)");
    const auto version = get_le<std::uint16_t>(bytes, 4);
    if (version != token_version)
        throw FormatError("unsupported token file version " + std::to_string(version));
    const std::size_t body = bytes.size() - token_header;
    if (body == 0)
        throw FormatError("token file has an empty payload");
    if (body % 4 != 0)
        throw FormatError("token file payload is not a whole number of u32 ids");

    TokenFile file;
    file.vocab.raw_size = get_le<std::uint32_t>(bytes, 6);
    file.vocab.padded_size = get_le<std::uint32_t>(bytes, 10);
    file.vocab.k = get_le<std::uint8_t>(bytes, 14);
    if (file.vocab.k == 0 || file.vocab.raw_size == 0)
        throw FormatError("token file header has zero k or vocabulary");
    file.vocab.base = base_for_vocab(file.vocab.raw_size, file.vocab.k);
    if (checked_power(file.vocab.base, file.vocab.k) != file.vocab.padded_size)
        throw FormatError("token file padded vocabulary " + std::to_string(file.vocab.padded_size) +
                          " is inconsistent with V_raw=" + std::to_string(file.vocab.raw_size) +
                          " and k=" + std::to_string(file.vocab.k));
    file.ids.resize(body / 4);
    for (std::size_t i = 0; i < file.ids.size(); ++i) {
        file.ids[i] = get_le<std::uint32_t>(bytes, token_header + 4 * i);
        if (file.ids[i] >= file.vocab.raw_size)
            throw FormatError("token file id " + std::to_string(file.ids[i]) + " at position " + std::to_string(i) +
                              " exceeds V_raw");
    }
    return file;
}

void write_token_file(const std::filesystem::path& path, std::span<const std::uint32_t> ids, const Vocab& vocab)
{
    const auto bytes = encode_token_file(ids, vocab);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IngestionError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IngestionError("failed writing " + path.string());
}

TokenFile read_token_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IngestionError("cannot open token file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_token_file(bytes);
}

namespace {

std::uint64_t hash_ids(std::span<const std::uint32_t> ids, std::uint64_t state)
{
    std::byte buf[4];
    for (auto id : ids) {
        for (int i = 0; i < 4; ++i)
            buf[i] = static_cast<std::byte>(id >> (8 * i));
        state = fnv1a(buf, state);
    }
    return state;
}

constexpr std::uint64_t fnv_offset = 0xcbf29ce484222325ULL;

}  // namespace

BlockSource::BlockSource(std::shared_ptr<const std::vector<std::uint32_t>> ids, std::size_t seq_len,
                         double validation_fraction)
  : ids_{std::move(ids)}, seq_len_{seq_len}
{
    if (!ids_ || seq_len_ == 0)
        throw ConfigError("block source needs token ids and a positive seq_len");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
        throw ConfigError("validation fraction must lie in [0, 1)");
    if (seq_len_ + 1 > ids_->size())
        throw IngestionError("corpus of " + std::to_string(ids_->size()) + " tokens is shorter than one block of " +
                             std::to_string(seq_len_ + 1));
    blocks_ = (ids_->size() - 1) / seq_len_;
    std::size_t held_out = static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(blocks_)));
    if (held_out == 0 && validation_fraction > 0.0 && blocks_ >= 2)
        held_out = 1;
    train_blocks_ = blocks_ - held_out;
    fingerprint_ = hash_ids(*ids_, fnv_offset);
}

std::span<const std::uint32_t> BlockSource::block(std::size_t index) const
{
    if (index >= blocks_)
        throw IndexError("block " + std::to_string(index) + " out of range (" + std::to_string(blocks_) + " blocks)");
    return std::span<const std::uint32_t>(*ids_).subspan(index * seq_len_, seq_len_ + 1);
}

std::vector<std::uint32_t> TokenBatch::inputs() const
{
    std::vector<std::uint32_t> out;
    out.reserve(rows * (width - 1));
    for (std::size_t r = 0; r < rows; ++r)
        out.insert(out.end(), tokens.begin() + r * width, tokens.begin() + (r + 1) * width - 1);
    return out;
}

std::vector<std::uint32_t> TokenBatch::targets() const
{
    std::vector<std::uint32_t> out;
    out.reserve(rows * (width - 1));
    for (std::size_t r = 0; r < rows; ++r)
        out.insert(out.end(), tokens.begin() + r * width + 1, tokens.begin() + (r + 1) * width);
    return out;
}

TokenStream::TokenStream(std::shared_ptr<const BlockSource> source, StreamConfig config)
  : source_{std::move(source)}, config_{config}, rng_{config.seed}, hash_{fnv_offset}
{
    if (!source_)
        throw ConfigError("token stream needs a block source");
    if (source_->train_blocks() == 0)
        throw IngestionError("corpus has no training blocks");
    if (config_.shuffle_buffer == 0)
        throw ConfigError("shuffle buffer must hold at least one block");
    const std::size_t fill = std::min(config_.shuffle_buffer, source_->train_blocks());
    buffer_.reserve(fill);
    for (std::size_t i = 0; i < fill; ++i)
        buffer_.push_back(pull());
}

std::size_t TokenStream::pull()
{
    const std::size_t index = cursor_++;
    if (cursor_ == source_->train_blocks()) {
        cursor_ = 0;
        ++epoch_;
    }
    return index;
}

TokenBatch TokenStream::next_batch(std::size_t batch)
{
    if (batch == 0)
        throw ConfigError("batch size must be positive");
    TokenBatch out;
    out.rows = batch;
    out.width = source_->block_width();
    out.tokens.reserve(batch * out.width);
    for (std::size_t r = 0; r < batch; ++r) {
        const std::size_t slot = buffer_.size() == 1 ? 0 : static_cast<std::size_t>(rng_.below(buffer_.size()));
        const auto block = source_->block(buffer_[slot]);
        out.tokens.insert(out.tokens.end(), block.begin(), block.end());
        buffer_[slot] = pull();
        ++consumed_;
    }
    hash_ = hash_ids(out.tokens, hash_);
    return out;
}

std::string TokenStream::state() const
{
    nlohmann::json j;
    j["source"] = source_->fingerprint();
    j["seq_len"] = source_->seq_len();
    j["shuffle_buffer"] = config_.shuffle_buffer;
    j["seed"] = config_.seed;
    j["rng"] = rng_.state();
    j["buffer"] = buffer_;
    j["cursor"] = cursor_;
    j["epoch"] = epoch_;
    j["consumed"] = consumed_;
    j["hash"] = hash_;
    return j.dump();
}

void TokenStream::restore(const std::string& state)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(state);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed stream state: ") + e.what());
    }
    if (j.at("source").get<std::uint64_t>() != source_->fingerprint() ||
        j.at("seq_len").get<std::size_t>() != source_->seq_len() ||
        j.at("shuffle_buffer").get<std::size_t>() != config_.shuffle_buffer ||
        j.at("seed").get<std::uint64_t>() != config_.seed)
        throw ConsistencyError("stream state belongs to a different corpus or stream configuration");
    auto buffer = j.at("buffer").get<std::vector<std::size_t>>();
    for (auto b : buffer)
        if (b >= source_->train_blocks())
            throw FormatError("stream state references a block outside the training split");
    rng_.restore(j.at("rng").get<std::string>());
    buffer_ = std::move(buffer);
    cursor_ = j.at("cursor").get<std::size_t>();
    epoch_ = j.at("epoch").get<std::uint64_t>();
    consumed_ = j.at("consumed").get<std::uint64_t>();
    hash_ = j.at("hash").get<std::uint64_t>();
}

std::vector<TokenBatch> validation_batches(const BlockSource& source, std::size_t batches, std::size_t batch,
                                           std::uint64_t seed)
{
    const std::size_t held_out = source.validation_blocks();
    if (held_out == 0)
        throw IngestionError("corpus has no validation blocks");
    if (batches == 0 || batch == 0)
        throw ConfigError("validation needs positive batch count and size");
    std::vector<std::size_t> order(held_out);
    for (std::size_t i = 0; i < held_out; ++i)
        order[i] = source.train_blocks() + i;
    // Partial Fisher-Yates: the first `want` entries are a uniform subset.
    Rng rng(seed);
    const std::size_t want = std::min(held_out, batches * batch);
    for (std::size_t i = 0; i < want; ++i)
        std::swap(order[i], order[i + rng.below(held_out - i)]);
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(want));

    std::vector<TokenBatch> out;
    for (std::size_t start = 0; start < want; start += batch) {
        TokenBatch b;
        b.rows = std::min(batch, want - start);
        b.width = source.block_width();
        for (std::size_t r = 0; r < b.rows; ++r) {
            const auto blk = source.block(order[start + r]);
            b.tokens.insert(b.tokens.end(), blk.begin(), blk.end());
        }
        out.push_back(std::move(b));
    }
    return out;
}

double unigram_entropy(std::span<const std::uint32_t> ids)
{
    if (ids.empty())
        throw AnalysisError("entropy of an empty sequence");
    std::unordered_map<std::uint32_t, std::size_t> counts;
    for (auto id : ids)
        ++counts[id];
    std::vector<std::size_t> sorted;
    for (auto& [id, c] : counts)
        sorted.push_back(c);
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(ids.size());
    double h = 0.0;
    for (auto c : sorted) {
        const double p = static_cast<double>(c) / n;
        h -= p * std::log(p);
    }
    return h;
}

}  // namespace leviathan
