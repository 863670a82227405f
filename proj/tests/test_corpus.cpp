#include "doctest.h"

#include <filesystem>
#include <set>

#include "leviathan/corpus.hpp"
#include "leviathan/errors.hpp"
#include "leviathan/rng.hpp"
#include "support/synthetic_text.hpp"
#include "support/temp_dir.hpp"

using namespace leviathan;

namespace {

// Independent 64-bit polynomial hash over the id values.
std::uint64_t poly_hash(std::span<const std::uint32_t> ids)
{
    std::uint64_t h = 1469598103934665603ULL;
    for (auto id : ids)
        h = h * 1099511628211ULL + id + 0x9e3779b97f4a7c15ULL;
    return h;
}

std::shared_ptr<const BlockSource> counting_source(std::size_t n_tokens, std::size_t seq_len,
                                                   double validation = 0.05)
{
    auto ids = std::make_shared<std::vector<std::uint32_t>>(n_tokens);
    for (std::size_t i = 0; i < n_tokens; ++i)
        (*ids)[i] = static_cast<std::uint32_t>(i % 251);
    return std::make_shared<BlockSource>(ids, seq_len, validation);
}

std::vector<std::size_t> block_starts(const TokenBatch& b, std::size_t seq_len)
{
    // With counting ids the first token of a block identifies it (mod 251).
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < b.rows; ++r)
        out.push_back(b.tokens[r * b.width] / seq_len);
    return out;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("byte scheme pads 256 to 7^3")
{
    const auto c = tokenize_corpus("hello world", TokenScheme::byte, 3);
    CHECK(c.vocab.raw_size == 256);
    CHECK(c.vocab.base == 7);
    CHECK(c.vocab.padded_size == 343);
    // 6^3 < 256 <= 7^3
    CHECK(6 * 6 * 6 < 256);
    CHECK(c.ids.size() == 11);
    CHECK(c.ids[0] == 'h');
}

TEST_CASE("vocabulary padding arithmetic")
{
    const Vocab v = Vocab::padded(200018, 3);
    CHECK(v.base == 59);
    CHECK(v.padded_size == 59ULL * 59 * 59);
    CHECK(58ULL * 58 * 58 < 200018);
    // The published padded size 200,376 is not itself a cube, but it needs the
    // same base.
    CHECK(Vocab::padded(200376, 3).base == 59);

    const auto single = tokenize_corpus("a", TokenScheme::word, 3);
    CHECK(single.vocab.raw_size == 1);
    CHECK(single.vocab.base == 1);
    CHECK(single.vocab.padded_size == 1);
    CHECK(single.ids == std::vector<std::uint32_t>{0});
}

TEST_CASE("word scheme assigns ids in sorted word order")
{
    const auto c = tokenize_corpus("the cat saw the\tdog\n cat", TokenScheme::word, 2);
    CHECK(c.words == std::vector<std::string>{"cat", "dog", "saw", "the"});
    CHECK(c.ids == std::vector<std::uint32_t>{3, 0, 2, 3, 1, 0});
    CHECK(c.vocab.raw_size == 4);
    CHECK(c.vocab.base == 2);
    CHECK(c.vocab.padded_size == 4);
}

TEST_CASE("empty corpora are rejected")
{
    CHECK_THROWS_AS(tokenize_corpus("", TokenScheme::byte, 3), IngestionError);
    CHECK_THROWS_AS(tokenize_corpus(" \n\t ", TokenScheme::word, 3), IngestionError);
    CHECK_THROWS_AS(token_scheme_from_string("bpe"), ConfigError);
}

TEST_CASE("token file roundtrip and rejection")
{
    const Vocab v = Vocab::padded(256, 3);
    const std::vector<std::uint32_t> ids = {0, 1, 2};
    const auto bytes = encode_token_file(ids, v);
    const TokenFile back = decode_token_file(bytes);
    CHECK(back.ids == ids);
    CHECK(back.vocab.raw_size == 256);
    CHECK(back.vocab.padded_size == 343);
    CHECK(back.vocab.k == 3);

    CHECK_THROWS_AS(encode_token_file(std::vector<std::uint32_t>{}, v), FormatError);
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_token_file(bad), FormatError);
    bad = bytes;
    bad[4] = 2;  // version
    CHECK_THROWS_AS(decode_token_file(bad), FormatError);
    bad = bytes;
    bad.pop_back();
    CHECK_THROWS_AS(decode_token_file(bad), FormatError);
    // Header only, no ids.
    bad.assign(bytes.begin(), bytes.end() - 12);
    CHECK_THROWS_AS(decode_token_file(bad), FormatError);
    // A padding id must never appear in data.
    const std::vector<std::uint32_t> padding = {300};
    CHECK_THROWS_AS(encode_token_file(padding, v), IndexError);
}

TEST_CASE("token file layout is little-endian u32 after the header")
{
    const std::vector<std::uint32_t> ids = {0x01020304u, 7u};
    Vocab v = Vocab::padded(0x01020305u, 1);
    const auto bytes = encode_token_file(ids, v);
    REQUIRE(bytes.size() == 4 + 2 + 4 + 4 + 1 + 8);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "LVTK");
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    CHECK(bytes[15] == 0x04);
    CHECK(bytes[16] == 0x03);
    CHECK(bytes[17] == 0x02);
    CHECK(bytes[18] == 0x01);
    CHECK(bytes[19] == 7);
}

TEST_CASE("one million random ids roundtrip through a file")
{
    Rng rng(99);
    const Vocab v = Vocab::padded(200018, 3);
    std::vector<std::uint32_t> ids(1000000);
    for (auto& id : ids)
        id = static_cast<std::uint32_t>(rng.below(v.raw_size));
    leviathan::testing::TempDir dir;
    const auto path = dir.path() / "ids.lvtk";
    write_token_file(path, ids, v);
    const TokenFile back = read_token_file(path);
    CHECK(poly_hash(back.ids) == poly_hash(ids));
    CHECK(back.ids.size() == ids.size());
    CHECK_THROWS_AS(read_token_file(dir.path() / "missing.lvtk"), IngestionError);
}

TEST_CASE("blocks overlap by one token and the validation tail is held out")
{
    auto src = counting_source(1001, 10);
    CHECK(src->blocks() == 100);
    CHECK(src->validation_blocks() == 5);
    CHECK(src->train_blocks() == 95);
    const auto b3 = src->block(3);
    CHECK(b3.size() == 11);
    CHECK(b3.front() == 30);
    CHECK(b3.back() == 40);
    CHECK(src->block(4).front() == b3.back());
    CHECK_THROWS_AS(src->block(100), IndexError);

    auto ids = std::make_shared<std::vector<std::uint32_t>>(10, 1u);
    CHECK_THROWS_AS(BlockSource(ids, 10), IngestionError);
    CHECK_NOTHROW(BlockSource(std::make_shared<std::vector<std::uint32_t>>(11, 1u), 10));
}

TEST_CASE("batches expose offset input and target views")
{
    auto src = counting_source(2001, 8);
    TokenStream s(src, {1, 0});
    const TokenBatch b = s.next_batch(3);
    CHECK(b.rows == 3);
    CHECK(b.width == 9);
    const auto in = b.inputs(), tg = b.targets();
    REQUIRE(in.size() == 24);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t t = 0; t < 8; ++t) {
            CHECK(in[r * 8 + t] == b.tokens[r * 9 + t]);
            CHECK(tg[r * 8 + t] == b.tokens[r * 9 + t + 1]);
        }
}

TEST_CASE("a one-block shuffle buffer preserves source order and wraps")
{
    auto src = counting_source(201, 10, 0.0);
    REQUIRE(src->train_blocks() == 20);
    TokenStream s(src, {1, 5});
    std::vector<std::size_t> seen;
    for (int i = 0; i < 5; ++i)
        for (auto blk : block_starts(s.next_batch(6), 10))
            seen.push_back(blk);
    for (std::size_t i = 0; i < seen.size(); ++i)
        CHECK(seen[i] == i % 20);
    CHECK(s.epoch() == 1);
    CHECK(s.blocks_consumed() == 30);
}

TEST_CASE("streams are deterministic per seed and differ across seeds")
{
    auto src = counting_source(20001, 16);
    REQUIRE(src->train_blocks() >= 100);
    TokenStream a(src, {10000, 3}), b(src, {10000, 3}), c(src, {10000, 4});
    CHECK(a.buffer_size() == src->train_blocks());
    bool differs = false;
    for (int i = 0; i < 20; ++i) {
        const auto ba = a.next_batch(8), bb = b.next_batch(8), bc = c.next_batch(8);
        CHECK(ba.tokens == bb.tokens);
        differs = differs || ba.tokens != bc.tokens;
    }
    CHECK(differs);
    CHECK(a.hash() == b.hash());
    CHECK(a.hash() != c.hash());
}

TEST_CASE("a full shuffle buffer reorders blocks and reaches all of them")
{
    auto src = counting_source(5001, 10, 0.1);
    const std::size_t n = src->train_blocks();
    TokenStream s(src, {n, 11});
    std::multiset<std::vector<std::uint32_t>> want;
    for (std::size_t i = 0; i < n; ++i) {
        const auto blk = src->block(i);
        want.insert(std::vector<std::uint32_t>(blk.begin(), blk.end()));
    }
    std::set<std::vector<std::uint32_t>> seen;
    bool in_order = true;
    for (std::size_t i = 0; i < 20 * n; ++i) {
        const auto b = s.next_batch(1).tokens;
        CHECK(want.count(b) > 0);
        if (i < n) {
            const auto blk = src->block(i);
            in_order = in_order && std::equal(blk.begin(), blk.end(), b.begin());
        }
        seen.insert(b);
    }
    CHECK_FALSE(in_order);
    CHECK(seen.size() == std::set<std::vector<std::uint32_t>>(want.begin(), want.end()).size());
    CHECK(s.epoch() >= 19);
}

TEST_CASE("training and validation splits are disjoint")
{
    auto src = counting_source(4001, 10);
    TokenStream s(src, {64, 1});
    for (int i = 0; i < 200; ++i) {
        const auto b = s.next_batch(4);
        for (std::size_t r = 0; r < b.rows; ++r) {
            // Counting ids recover the block start position modulo 251.
            const std::uint32_t first = b.tokens[r * b.width];
            bool in_train = false;
            for (std::size_t blk = 0; blk < src->train_blocks() && !in_train; ++blk)
                in_train = src->block(blk).front() == first;
            CHECK(in_train);
        }
    }
    const auto val = validation_batches(*src, 2, 3, 7);
    REQUIRE(val.size() == 2);
    for (const auto& b : val)
        for (std::size_t r = 0; r < b.rows; ++r) {
            bool match = false;
            for (std::size_t blk = src->train_blocks(); blk < src->blocks() && !match; ++blk) {
                const auto bb = src->block(blk);
                match = std::equal(bb.begin(), bb.end(), b.tokens.begin() + r * b.width);
            }
            CHECK(match);
        }
    const auto again = validation_batches(*src, 2, 3, 7);
    for (std::size_t i = 0; i < val.size(); ++i)
        CHECK(val[i].tokens == again[i].tokens);
}

TEST_CASE("stream state restores mid-run")
{
    auto src = counting_source(20001, 16);
    TokenStream a(src, {50, 21});
    for (int i = 0; i < 37; ++i)
        a.next_batch(5);
    const std::string saved = a.state();
    TokenStream b(src, {50, 21});
    b.restore(saved);
    CHECK(b.hash() == a.hash());
    for (int i = 0; i < 40; ++i)
        CHECK(a.next_batch(5).tokens == b.next_batch(5).tokens);
    CHECK(a.hash() == b.hash());
    CHECK(a.epoch() == b.epoch());

    TokenStream other(src, {60, 21});
    CHECK_THROWS_AS(other.restore(saved), ConsistencyError);
    auto src2 = counting_source(20002, 16);
    TokenStream elsewhere(src2, {50, 21});
    CHECK_THROWS_AS(elsewhere.restore(saved), ConsistencyError);
}

TEST_CASE("emitted ids stay below the raw vocabulary")
{
    const std::string text = leviathan::testing::synthetic_text(20000, 3);
    const auto c = tokenize_corpus(text, TokenScheme::byte, 3);
    auto src = std::make_shared<BlockSource>(std::make_shared<std::vector<std::uint32_t>>(c.ids), 32);
    TokenStream s(src, {100, 0});
    for (int i = 0; i < 50; ++i)
        for (auto id : s.next_batch(4).tokens)
            CHECK(id < c.vocab.raw_size);
}

TEST_CASE("unigram entropy of simple sequences")
{
    const std::vector<std::uint32_t> constant(10, 4u);
    CHECK(unigram_entropy(constant) == 0.0);
    const std::vector<std::uint32_t> two = {0, 1, 0, 1};
    CHECK(unigram_entropy(two) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(unigram_entropy(std::vector<std::uint32_t>{}), AnalysisError);
}

}  // TEST_SUITE
