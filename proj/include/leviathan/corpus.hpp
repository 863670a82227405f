#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "leviathan/rng.hpp"

namespace leviathan {

enum class TokenScheme { byte, word };

std::string to_string(TokenScheme scheme);
TokenScheme token_scheme_from_string(const std::string& name);

/// Raw tokenizer cardinality padded up to a perfect k-th power.
struct Vocab {
    std::uint64_t raw_size = 0;
    std::uint64_t padded_size = 0;
    std::uint32_t k = 3;
    std::uint64_t base = 0;

    static Vocab padded(std::uint64_t raw_size, std::uint32_t k);
};

struct TokenizedCorpus {
    std::vector<std::uint32_t> ids;
    Vocab vocab;
    std::vector<std::string> words;  // word scheme only: id -> word, sorted
};

// byte: one id per byte, V_raw = 256. word: whitespace-separated words,
// ids assigned in lexicographic order of the distinct words.
TokenizedCorpus tokenize_corpus(std::string_view text, TokenScheme scheme, std::uint32_t k);

struct TokenFile {
    Vocab vocab;
    std::vector<std::uint32_t> ids;
};

// "LVTK", u16 version 1, u32 V_raw, u32 V_padded, u8 k, u32 LE ids.
void write_token_file(const std::filesystem::path& path, std::span<const std::uint32_t> ids, const Vocab& vocab);
TokenFile read_token_file(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_token_file(std::span<const std::uint32_t> ids, const Vocab& vocab);
TokenFile decode_token_file(std::span<const std::uint8_t> bytes);

/// Ids cut into overlapping blocks of seq_len + 1 tokens with stride seq_len.
/// The final validation_fraction of blocks (in source order) is held out.
class BlockSource {
public:
    BlockSource(std::shared_ptr<const std::vector<std::uint32_t>> ids, std::size_t seq_len,
                double validation_fraction = 0.05);

    std::size_t seq_len() const noexcept { return seq_len_; }
    std::size_t block_width() const noexcept { return seq_len_ + 1; }
    std::size_t blocks() const noexcept { return blocks_; }
    std::size_t train_blocks() const noexcept { return train_blocks_; }
    std::size_t validation_blocks() const noexcept { return blocks_ - train_blocks_; }
    std::span<const std::uint32_t> block(std::size_t index) const;
    std::uint64_t fingerprint() const noexcept { return fingerprint_; }

private:
    std::shared_ptr<const std::vector<std::uint32_t>> ids_;
    std::size_t seq_len_;
    std::size_t blocks_;
    std::size_t train_blocks_;
    std::uint64_t fingerprint_;
};

/// Rows of seq_len + 1 ids; inputs are columns [0, seq_len), targets [1, seq_len].
struct TokenBatch {
    std::size_t rows = 0;
    std::size_t width = 0;
    std::vector<std::uint32_t> tokens;

    std::size_t seq_len() const noexcept { return width - 1; }
    std::vector<std::uint32_t> inputs() const;
    std::vector<std::uint32_t> targets() const;
};

struct StreamConfig {
    std::size_t shuffle_buffer = 10000;
    std::uint64_t seed = 0;
};

/// Infinite stream of training blocks: source order, wrapping with an epoch
/// counter, passed through a seeded shuffle buffer. Single consumer.
class TokenStream {
public:
    TokenStream(std::shared_ptr<const BlockSource> source, StreamConfig config);

    TokenBatch next_batch(std::size_t batch);

    std::uint64_t epoch() const noexcept { return epoch_; }
    std::uint64_t blocks_consumed() const noexcept { return consumed_; }
    // Running FNV-1a hash over every delivered batch.
    std::uint64_t hash() const noexcept { return hash_; }
    std::size_t buffer_size() const noexcept { return buffer_.size(); }
    const BlockSource& source() const noexcept { return *source_; }

    std::string state() const;
    void restore(const std::string& state);

private:
    std::size_t pull();

    std::shared_ptr<const BlockSource> source_;
    StreamConfig config_;
    Rng rng_;
    std::vector<std::size_t> buffer_;
    std::size_t cursor_ = 0;
    std::uint64_t epoch_ = 0;
    std::uint64_t consumed_ = 0;
    std::uint64_t hash_;
};

// Fixed seeded subset of held-out blocks grouped into batches; identical on
// every call with the same arguments.
std::vector<TokenBatch> validation_batches(const BlockSource& source, std::size_t batches, std::size_t batch,
                                           std::uint64_t seed);

// Entropy in nats of the empirical unigram distribution.
double unigram_entropy(std::span<const std::uint32_t> ids);

}  // namespace leviathan
