#include "leviathan/coordinates.hpp"

#include <limits>
#include <string>

#include "leviathan/errors.hpp"

namespace leviathan {

namespace {

// out = b^k; false on 64-bit overflow.
bool power_fits(std::uint64_t base, std::uint32_t k, std::uint64_t& out)
{
    std::uint64_t acc = 1;
    for (std::uint32_t i = 0; i < k; ++i) {
        if (base != 0 && acc > std::numeric_limits<std::uint64_t>::max() / base)
            return false;
        acc *= base;
    }
    out = acc;
    return true;
}

}  // namespace

std::uint64_t checked_power(std::uint64_t base, std::uint32_t k)
{
    std::uint64_t out = 0;
    if (!power_fits(base, k, out))
        throw ConfigError(std::to_string(base) + "^" + std::to_string(k) + " overflows 64 bits");
    return out;
}

std::uint64_t base_for_vocab(std::uint64_t vocab, std::uint32_t k)
{
    if (vocab == 0)
        throw ConfigError("vocabulary size must be at least 1");
    if (k == 0)
        throw ConfigError("coordinate axes k must be at least 1");

    // Binary search for the smallest b with b^k >= vocab; b = vocab always works.
    std::uint64_t lo = 1, hi = vocab;
    while (lo < hi) {
        const std::uint64_t mid = lo + (hi - lo) / 2;
        std::uint64_t p = 0;
        const bool fits = power_fits(mid, k, p);
        if (!fits || p >= vocab)
            hi = mid;
        else
            lo = mid + 1;
    }
    return lo;
}

std::uint64_t indexing_rows(std::uint64_t vocab, std::uint32_t k)
{
    return static_cast<std::uint64_t>(k) * base_for_vocab(vocab, k);
}

CoordinateMap::CoordinateMap(std::uint32_t axes, std::uint64_t base)
  : axes_{axes}, base_{base}
{
    if (axes == 0)
        throw ConfigError("coordinate map needs at least one axis");
    if (base == 0)
        throw ConfigError("coordinate base must be at least 1");
    capacity_ = checked_power(base, axes);
}

void CoordinateMap::decompose(std::uint64_t id, std::span<std::uint64_t> digits) const
{
    if (id >= capacity_)
        throw IndexError("token id " + std::to_string(id) + " outside [0, " +
                         std::to_string(capacity_) + ")");
    if (digits.size() != axes_)
        throw DimensionError("digit buffer must hold " + std::to_string(axes_) + " entries");
    for (std::uint32_t r = axes_; r-- > 0;) {
        digits[r] = id % base_;
        id /= base_;
    }
}

std::vector<std::uint64_t> CoordinateMap::decompose(std::uint64_t id) const
{
    std::vector<std::uint64_t> digits(axes_);
    decompose(id, digits);
    return digits;
}

std::uint64_t CoordinateMap::recompose(std::span<const std::uint64_t> digits) const
{
    if (digits.size() != axes_)
        throw DimensionError("expected " + std::to_string(axes_) + " digits, got " +
                             std::to_string(digits.size()));
    std::uint64_t id = 0;
    for (auto d : digits) {
        if (d >= base_)
            throw IndexError("digit " + std::to_string(d) + " outside [0, " +
                             std::to_string(base_) + ")");
        id = id * base_ + d;
    }
    return id;
}

}  // namespace leviathan
