#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace leviathan {

/// Base-b digit decomposition of token ids into k coordinates, most
/// significant digit first. Covers exactly the ids [0, b^k).
class CoordinateMap {
public:
    CoordinateMap(std::uint32_t axes, std::uint64_t base);

    std::uint32_t axes() const noexcept { return axes_; }
    std::uint64_t base() const noexcept { return base_; }
    std::uint64_t capacity() const noexcept { return capacity_; }

    std::vector<std::uint64_t> decompose(std::uint64_t id) const;
    void decompose(std::uint64_t id, std::span<std::uint64_t> digits) const;
    std::uint64_t recompose(std::span<const std::uint64_t> digits) const;

private:
    std::uint32_t axes_;
    std::uint64_t base_;
    std::uint64_t capacity_;
};

// Smallest b >= 1 with b^k >= vocab, found by integer search.
std::uint64_t base_for_vocab(std::uint64_t vocab, std::uint32_t k);

// b^k, throwing ConfigError on overflow.
std::uint64_t checked_power(std::uint64_t base, std::uint32_t k);

// Total codebook rows k * base_for_vocab(vocab, k).
std::uint64_t indexing_rows(std::uint64_t vocab, std::uint32_t k);

}  // namespace leviathan
