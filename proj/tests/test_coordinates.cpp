#include "doctest.h"

#include <vector>

#include "leviathan/coordinates.hpp"
#include "leviathan/errors.hpp"

using namespace leviathan;

namespace {

// Smallest b with b^k >= v by counting up.
std::uint64_t brute_base(std::uint64_t v, std::uint32_t k)
{
    for (std::uint64_t b = 1;; ++b) {
        unsigned __int128 p = 1;
        for (std::uint32_t i = 0; i < k; ++i)
            p *= b;
        if (p >= v)
            return b;
    }
}

// Digits by repeated divmod, least significant first, then reversed.
std::vector<std::uint64_t> divmod_digits(std::uint64_t i, std::uint64_t b, std::uint32_t k)
{
    std::vector<std::uint64_t> d(k);
    for (std::uint32_t r = k; r-- > 0;) {
        d[r] = i % b;
        i /= b;
    }
    return d;
}

}  // namespace

TEST_SUITE("coordinates") {

TEST_CASE("base for vocabulary")
{
    CHECK(base_for_vocab(200376, 3) == 59);
    CHECK(base_for_vocab(1, 1) == 1);
    CHECK(base_for_vocab(1, 7) == 1);
    CHECK(base_for_vocab(256, 3) == 7);
    CHECK(base_for_vocab(343, 3) == 7);
    CHECK(base_for_vocab(344, 3) == 8);
    for (std::uint64_t v : {2ULL, 9ULL, 27ULL, 28ULL, 1000ULL, 1001ULL, 65536ULL, 1000000ULL, 999999999ULL})
        for (std::uint32_t k : {1u, 2u, 3u, 4u}) {
            CAPTURE(v);
            CAPTURE(k);
            CHECK(base_for_vocab(v, k) == brute_base(v, k));
        }
}

TEST_CASE("perfect powers sit exactly on the boundary")
{
    for (std::uint64_t b = 1; b <= 200; ++b)
        for (std::uint32_t k : {2u, 3u}) {
            const std::uint64_t p = checked_power(b, k);
            CHECK(base_for_vocab(p, k) == b);
            CHECK(base_for_vocab(p + 1, k) == b + 1);
        }
}

TEST_CASE("decompose examples")
{
    const CoordinateMap m3(3, 59);
    CHECK(m3.decompose(0) == std::vector<std::uint64_t>{0, 0, 0});
    CHECK(m3.decompose(7123) == std::vector<std::uint64_t>{2, 2, 43});
    CHECK(7123 == 2 * 3481 + 2 * 59 + 43);
    CHECK(m3.decompose(59 * 59 * 59 - 1) == std::vector<std::uint64_t>{58, 58, 58});
    CHECK_THROWS_AS(m3.decompose(59 * 59 * 59), IndexError);
}

TEST_CASE("recompose examples")
{
    const CoordinateMap m(3, 59);
    const std::uint64_t zero[] = {0, 0, 0}, d[] = {2, 2, 43}, bad[] = {2, 59, 0};
    CHECK(m.recompose(zero) == 0);
    CHECK(m.recompose(d) == 7123);
    CHECK_THROWS_AS(m.recompose(bad), IndexError);
    const std::uint64_t short_digits[] = {1, 2};
    CHECK_THROWS(m.recompose(short_digits));
}

TEST_CASE("exhaustive roundtrip at b=7, k=3")
{
    const CoordinateMap m(3, 7);
    REQUIRE(m.capacity() == 343);
    for (std::uint64_t i = 0; i < 343; ++i) {
        const auto d = m.decompose(i);
        CHECK(d == divmod_digits(i, 7, 3));
        CHECK(m.recompose(d) == i);
    }
}

TEST_CASE("exhaustive roundtrips up to 1e5 ids")
{
    for (auto [k, b] : std::vector<std::pair<std::uint32_t, std::uint64_t>>{{1, 1000}, {2, 316}, {3, 46}, {4, 17}, {5, 10},
                                                                              {2, 2}, {1, 1}}) {
        const CoordinateMap m(k, b);
        REQUIRE(m.capacity() <= 100000);
        for (std::uint64_t i = 0; i < m.capacity(); ++i) {
            const auto d = m.decompose(i);
            for (auto digit : d)
                CHECK(digit < b);
            CHECK(m.recompose(d) == i);
        }
        // recompose then decompose over the digit domain, in odometer order
        std::vector<std::uint64_t> digits(k, 0);
        for (std::uint64_t i = 0; i < m.capacity(); ++i) {
            CHECK(m.decompose(m.recompose(digits)) == digits);
            for (std::uint32_t r = k; r-- > 0;) {
                if (++digits[r] < b)
                    break;
                digits[r] = 0;
            }
        }
    }
}

TEST_CASE("indexing rows")
{
    CHECK(indexing_rows(200376, 3) == 177);
    CHECK(200376 / 177 > 1100);
    CHECK(indexing_rows(343, 3) == 21);
    CHECK(indexing_rows(1, 5) == 5);
    double previous = 1.0;
    for (std::uint64_t v : {1000ULL, 1000000ULL, 1000000000ULL}) {
        const double ratio = static_cast<double>(indexing_rows(v, 3)) / static_cast<double>(v);
        CHECK(ratio < previous);
        previous = ratio;
    }
    CHECK(previous < 1e-5);
}

TEST_CASE("invalid maps")
{
    CHECK_THROWS_AS(CoordinateMap(0, 5), ConfigError);
    CHECK_THROWS_AS(CoordinateMap(3, 0), ConfigError);
    CHECK_THROWS_AS(checked_power(1ULL << 32, 3), ConfigError);
}

}  // TEST_SUITE
