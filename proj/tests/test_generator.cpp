#include "doctest.h"

#include <cmath>
#include <numeric>

#include "leviathan/errors.hpp"
#include "leviathan/generator.hpp"
#include "leviathan/optim.hpp"
#include "support/oracles.hpp"

using namespace leviathan;
using namespace leviathan::testing;

namespace {

GeneratorConfig small_config(std::uint32_t k = 3, std::uint64_t base = 3, std::size_t d_seed = 4,
                             std::size_t modes = 2, std::size_t segments = 4, std::size_t embed_dim = 8)
{
    GeneratorConfig c;
    c.k = k;
    c.base = base;
    c.d_seed = d_seed;
    c.modes = modes;
    c.segments = segments;
    c.embed_dim = embed_dim;
    return c;
}

// Parameters with larger-than-default spread so every term matters.
GeneratorParams spread_params(const GeneratorConfig& c, std::uint64_t seed)
{
    Rng rng(seed);
    GeneratorParams p = init_generator(c, rng);
    for (auto& [name, t] : p.named())
        if (name != "gen.theta" && name != "gen.ln_gain")
            for (auto& x : t->data())
                x = rng.normal(0.0, 0.5);
    return p;
}

std::vector<Tensor> flatten(const GeneratorParams& p)
{
    std::vector<Tensor> out;
    for (auto& [name, t] : p.named())
        out.push_back(*t);
    return out;
}

GeneratorVars vars_from(const std::vector<Var>& v, std::size_t k)
{
    GeneratorVars g;
    g.codebooks.assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k));
    g.w_seed = v[k];
    g.b_seed = v[k + 1];
    g.ln_gain = v[k + 2];
    g.ln_bias = v[k + 3];
    g.theta = v[k + 4];
    g.w_out = v[k + 5];
    g.w_res = v[k + 6];
    return g;
}

long double sigmoid_ld(long double x)
{
    return 1.0L / (1.0L + std::exp(-x));
}

}  // namespace

TEST_SUITE("generator") {

TEST_CASE("named parameter order matches the variable layout")
{
    const GeneratorConfig c = small_config();
    Rng rng(1);
    GeneratorParams p = init_generator(c, rng);
    std::vector<std::string> names;
    for (auto& [n, t] : p.named())
        names.push_back(n);
    CHECK(names == std::vector<std::string>{"gen.codebook.0", "gen.codebook.1", "gen.codebook.2", "gen.w_seed",
                                            "gen.b_seed", "gen.ln_gain", "gen.ln_bias", "gen.theta", "gen.w_out",
                                            "gen.w_res"});
    CHECK(p.theta.shape() == Shape{4, 2, 6, 1});
    CHECK(p.w_out.shape() == Shape{2, 8});
    CHECK(p.w_res.shape() == Shape{4, 8});
    check_generator_params(c, p);
    p.w_res = Tensor({3, 8});
    CHECK_THROWS_AS(check_generator_params(c, p), DimensionError);
}

TEST_CASE("seed examples")
{
    GeneratorConfig c = small_config(2, 2, 1);
    Rng rng(2);
    GeneratorParams p = init_generator(c, rng);
    p.codebooks[0] = Tensor({2, 1}, {0.1, 0.2});
    p.codebooks[1] = Tensor({2, 1}, {0.01, 0.02});
    CHECK(seed(3, c, p)[0] == doctest::Approx(0.22).epsilon(1e-15));
    CHECK(seed(2, c, p)[0] == doctest::Approx(0.21).epsilon(1e-15));
    CHECK_THROWS_AS(seed(4, c, p), IndexError);

    for (auto& cb : p.codebooks)
        cb.fill(0.0);
    for (std::uint32_t i = 0; i < 4; ++i)
        CHECK(seed(i, c, p)[0] == 0.0);

    const GeneratorConfig one = small_config(1, 10, 3);
    const GeneratorParams q = spread_params(one, 3);
    for (std::uint32_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(seed(i, one, q)[j] == q.codebooks[0].at(i, j));
}

TEST_CASE("latent coordinates")
{
    const GeneratorConfig c = small_config(3, 3, 5);
    GeneratorParams p = spread_params(c, 4);
    p.b_seed.fill(0.0);
    p.ln_bias.fill(0.0);
    const Tensor half = latent_coord(Tensor({5}, 0.0), p);
    for (double v : half.data())
        CHECK(v == 0.5);

    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor z = random_tensor({5}, rng, 10.0);
        const Tensor lat = latent_coord(z, p);
        for (double v : lat.data()) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }

    // Step-by-step recomputation in extended precision.
    const GeneratorParams q = spread_params(c, 6);
    const Tensor z = random_tensor({5}, rng);
    const Tensor lat = latent_coord(z, q);
    long double proj[5], mu = 0.0L, var = 0.0L;
    for (std::size_t j = 0; j < 5; ++j) {
        long double s = q.b_seed[j];
        for (std::size_t i = 0; i < 5; ++i)
            s += static_cast<long double>(z[i]) * q.w_seed.at(i, j);
        proj[j] = s;
        mu += s;
    }
    mu /= 5;
    for (auto s : proj)
        var += (s - mu) * (s - mu);
    var /= 5;
    for (std::size_t j = 0; j < 5; ++j) {
        const long double n = (proj[j] - mu) / std::sqrt(var + 1e-5L) * q.ln_gain[j] + q.ln_bias[j];
        CHECK(std::abs(lat[j] - static_cast<double>(sigmoid_ld(n))) <= 1e-12);
    }
}

TEST_CASE("mode evaluation")
{
    GeneratorConfig c = small_config(3, 3, 3, 2, 6);
    GeneratorParams p = spread_params(c, 7);
    Rng rng(8);
    const SplineGrid grid = build_grid(c.segments, c.degree);
    for (int trial = 0; trial < 20; ++trial) {
        p.theta = random_tensor(p.theta.shape(), rng);
        const Tensor lat = uniform_tensor({3}, rng, 0.01, 0.99);
        for (std::size_t j = 0; j < c.modes; ++j) {
            long double prod = 1.0L;
            for (std::size_t r = 0; r < 3; ++r) {
                const auto b = basis_eval(lat[r], grid);
                long double phi = 0.0L;
                for (std::size_t cc = 0; cc < b.size(); ++cc)
                    phi += static_cast<long double>(p.theta[(r * c.modes + j) * b.size() + cc]) * b[cc];
                prod *= phi;
            }
            const double got = mode_eval(lat, j, c, p)[0];
            CHECK(std::abs(got - static_cast<double>(prod)) <= 1e-12 * std::abs(static_cast<double>(prod)));
        }
    }
    p.theta.fill(1.0);
    CHECK(mode_eval(Tensor({3}, 0.3), 1, c, p)[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(mode_eval(Tensor({3}, 0.3), 2, c, p), IndexError);

    GeneratorConfig single = small_config(3, 3, 1, 1, 4);
    GeneratorParams s = spread_params(single, 9);
    s.theta = random_tensor(s.theta.shape(), rng);
    const auto b = basis_eval(0.42, build_grid(4, 2));
    double phi = 0.0;
    for (std::size_t cc = 0; cc < b.size(); ++cc)
        phi += s.theta[cc] * b[cc];
    CHECK(mode_eval(Tensor({1}, 0.42), 0, single, s)[0] == doctest::Approx(phi).epsilon(1e-14));
}

TEST_CASE("multi-channel modes multiply elementwise per channel")
{
    GeneratorConfig c = small_config(2, 3, 2, 2, 4);
    c.mode_channels = 3;
    Rng rng(10);
    GeneratorParams p = init_generator(c, rng);
    p.theta = random_tensor(p.theta.shape(), rng);
    const SplineGrid grid = build_grid(4, 2);
    const Tensor lat = Tensor({2}, {0.3, 0.8});
    for (std::size_t j = 0; j < 2; ++j) {
        const Tensor got = mode_eval(lat, j, c, p);
        for (std::size_t ch = 0; ch < 3; ++ch) {
            double prod = 1.0;
            for (std::size_t r = 0; r < 2; ++r) {
                const auto b = basis_eval(lat[r], grid);
                double phi = 0.0;
                for (std::size_t cc = 0; cc < 6; ++cc)
                    phi += p.theta[((r * 2 + j) * 6 + cc) * 3 + ch] * b[cc];
                prod *= phi;
            }
            CHECK(got[ch] == doctest::Approx(prod).epsilon(1e-13));
        }
    }
}

TEST_CASE("embedding examples")
{
    const GeneratorConfig c = small_config();
    GeneratorParams p = spread_params(c, 11);
    GeneratorParams zero = p;
    zero.w_out.fill(0.0);
    zero.w_res.fill(0.0);
    for (std::uint32_t i = 0; i < 27; ++i) {
        const Tensor e = embed(i, c, zero);
        for (double v : e.data())
            CHECK(v == 0.0);
    }
    CHECK(embed(5, c, p).identical(embed(5, c, p)));

    // Ids 5 = (0,1,2) and 14 = (1,1,2) differ only in the first digit: their
    // seeds differ by exactly C_1[1] - C_1[0].
    const Tensor s5 = seed(5, c, p), s14 = seed(14, c, p);
    for (std::size_t j = 0; j < c.d_seed; ++j) {
        const double expect = p.codebooks[0].at(1, j) - p.codebooks[0].at(0, j);
        CHECK((s14[j] - s5[j]) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("end-to-end gradient of the squared embedding norm")
{
    struct Case {
        std::uint32_t k;
        std::uint64_t base;
        std::size_t d_seed, modes, segments, channels, embed_dim;
    };
    const std::vector<Case> cases = {{3, 3, 4, 2, 4, 1, 8}, {2, 4, 3, 3, 5, 1, 6}, {1, 9, 2, 2, 3, 2, 4},
                                     {3, 2, 5, 1, 8, 1, 5}, {2, 3, 4, 2, 4, 3, 7}, {4, 2, 3, 2, 6, 1, 3}};
    std::uint64_t seed_value = 20;
    for (const auto& cs : cases) {
        GeneratorConfig c = small_config(cs.k, cs.base, cs.d_seed, cs.modes, cs.segments, cs.embed_dim);
        c.mode_channels = cs.channels;
        const GeneratorParams p = spread_params(c, seed_value++);
        const std::vector<std::uint32_t> ids = {0, 1, static_cast<std::uint32_t>(c.capacity() - 1)};
        for (std::uint32_t id : ids) {
            const std::uint32_t one[] = {id};
            const auto g = gradients(flatten(p), [&](Tape& tape, const std::vector<Var>& v) {
                Var e = generator_embed(tape, vars_from(v, c.k), c, one);
                return sum(tape, mul(tape, e, e));
            });
            const auto r = compare_elementwise(g, 1e-5);
            INFO(r.where);
            CHECK(r.ok);
        }
    }
}

TEST_CASE("embedding table rows equal per-token embeddings bitwise")
{
    GeneratorConfig c = small_config(3, 4, 6, 3, 8, 10);
    const GeneratorParams p = spread_params(c, 30);
    const Tensor table = embed_table(c, p, 64);
    REQUIRE(table.shape() == Shape{64, 10});
    for (std::uint32_t i = 0; i < 64; ++i) {
        const Tensor e = embed(i, c, p);
        bool same = true;
        for (std::size_t j = 0; j < 10; ++j)
            same = same && e[j] == table.at(i, j);
        CHECK(same);
    }
    const Tensor single = embed_table(c, p, 1);
    CHECK(single.reshaped({10}).identical(embed(0, c, p)));
    CHECK_THROWS_AS(embed_table(c, p, 65), IndexError);
}

TEST_CASE("embedding cache invalidates on parameter change")
{
    const GeneratorConfig c = small_config();
    GeneratorParams p = spread_params(c, 31);
    EmbeddingCache cache;
    CHECK_THROWS_AS(cache.table(p), ConsistencyError);
    cache.refresh(c, p, 27);
    CHECK(cache.valid_for(p));
    CHECK(cache.table(p).identical(embed_table(c, p, 27)));
    const std::uint64_t before = cache.hash();

    // One optimizer step with a nonzero gradient.
    std::vector<Tensor*> params;
    std::vector<Tensor> grads;
    for (auto& [n, t] : p.named()) {
        params.push_back(t);
        grads.emplace_back(t->shape(), 0.1);
    }
    std::vector<const Tensor*> gptr;
    for (auto& g : grads)
        gptr.push_back(&g);
    std::vector<const Tensor*> cptr(params.begin(), params.end());
    AdamState state = AdamState::zeros_for(cptr);
    TrainConfig tc;
    adamw_step(params, gptr, state, 1e-2, tc);

    CHECK_FALSE(cache.valid_for(p));
    CHECK_THROWS_AS(cache.table(p), ConsistencyError);
    cache.refresh(c, p, 27);
    CHECK(cache.hash() != before);
}

TEST_CASE("shared weights: output projection touches every token, a codebook row only its digit class")
{
    const GeneratorConfig c = small_config(2, 3, 4, 2, 4, 6);
    const GeneratorParams p = spread_params(c, 32);
    const Tensor base_table = embed_table(c, p, 9);
    auto changed_rows = [&](const GeneratorParams& q) {
        const Tensor t = embed_table(c, q, 9);
        std::vector<bool> out(9);
        for (std::size_t i = 0; i < 9; ++i)
            for (std::size_t j = 0; j < 6; ++j)
                out[i] = out[i] || t.at(i, j) != base_table.at(i, j);
        return out;
    };
    GeneratorParams q = p;
    q.w_out.at(0, 0) += 0.5;
    q.w_out.at(1, 0) += 0.5;
    for (bool b : changed_rows(q))
        CHECK(b);

    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t d = 0; d < 3; ++d) {
            GeneratorParams s = p;
            for (std::size_t j = 0; j < 4; ++j)
                s.codebooks[r].at(d, j) += 0.3;
            const auto rows = changed_rows(s);
            std::size_t count = 0;
            for (std::size_t i = 0; i < 9; ++i) {
                const std::size_t digit = r == 0 ? i / 3 : i % 3;
                CHECK(rows[i] == (digit == d));
                count += rows[i];
            }
            CHECK(count == 3);
        }
}

TEST_CASE("surface output is Lipschitz in the latent point")
{
    const GeneratorConfig c = small_config(3, 3, 6, 3, 16, 4);
    const GeneratorParams p = spread_params(c, 33);
    double max_theta = 0.0;
    for (double v : p.theta.data())
        max_theta = std::max(max_theta, std::abs(v));
    // |phi| <= max|theta| and |phi'| <= 2 p G max|theta| on the clamped grid.
    const double phi_bound = max_theta, dphi_bound = 2.0 * 2 * 16 * max_theta;
    const double K = static_cast<double>(c.d_seed) * dphi_bound * std::pow(phi_bound, c.d_seed - 1);
    Rng rng(34);
    for (int trial = 0; trial < 200; ++trial) {
        const Tensor x = uniform_tensor({6}, rng, 0.01, 0.99);
        Tensor dir = random_tensor({6}, rng);
        double norm = 0.0;
        for (double v : dir.data())
            norm += v * v;
        Tensor y = x;
        for (std::size_t i = 0; i < 6; ++i)
            y[i] += 1e-6 * dir[i] / std::sqrt(norm);
        for (std::size_t j = 0; j < c.modes; ++j)
            CHECK(std::abs(mode_eval(x, j, c, p)[0] - mode_eval(y, j, c, p)[0]) <= K * 1e-6);
    }
}

TEST_CASE("closed-form parameter count")
{
    const GeneratorConfig d = GeneratorConfig::for_vocab(200018, 3, 256);
    CHECK(d.base == 59);
    CHECK(d.d_seed == 128);
    CHECK(d.segments == 32);
    CHECK(d.degree == 2);
    CHECK(d.modes == 8);
    CHECK(d.mode_channels == 1);
    const ParamCount pc = generator_param_count(d);
    const std::vector<std::uint64_t> want = {22656, 16512, 256, 34816, 2048, 32768};
    REQUIRE(pc.parts.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(pc.parts[i].second == want[i]);
    CHECK(pc.total() == 109056);
    CHECK(60185912 - 57600512 == 2585400);

    // The count agrees with the number of stored scalars.
    for (std::size_t ch : {1u, 3u}) {
        GeneratorConfig c = small_config(3, 5, 7, 3, 9, 11);
        c.mode_channels = ch;
        Rng rng(35);
        const GeneratorParams p = init_generator(c, rng);
        std::uint64_t stored = 0;
        for (auto& [n, t] : p.named())
            stored += t->numel();
        CHECK(stored == generator_param_count(c).total());
    }

    // Only the codebook term depends on V.
    const auto c1 = generator_param_count(GeneratorConfig::for_vocab(1000, 3, 256));
    const auto c2 = generator_param_count(GeneratorConfig::for_vocab(2000, 3, 256));
    CHECK(c1.parts[0].second * 13 == c2.parts[0].second * 10);
    for (std::size_t i = 1; i < c1.parts.size(); ++i)
        CHECK(c1.parts[i].second == c2.parts[i].second);
}

TEST_CASE("configuration validation")
{
    GeneratorConfig c = small_config();
    c.modes = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.base = 1ULL << 32;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

}  // TEST_SUITE
