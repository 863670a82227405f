#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

namespace leviathan {

/// Seeded generator with platform-independent draws. The engine is the
/// standard-specified mt19937_64; the distributions are implemented here
/// because the standard library ones are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_{seed} {}

    std::uint64_t next() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer on [0, n) by rejection; n > 0.
    std::uint64_t below(std::uint64_t n)
    {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do
            x = engine_();
        while (x >= limit);
        return x % n;
    }

    // Box-Muller; one value per call.
    double normal(double mean = 0.0, double stddev = 1.0)
    {
        double u1 = uniform();
        while (u1 <= 0.0)
            u1 = uniform();
        const double u2 = uniform();
        return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::string state() const
    {
        std::ostringstream out;
        out << engine_;
        return out.str();
    }

    void restore(const std::string& state)
    {
        std::istringstream in(state);
        in >> engine_;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace leviathan
