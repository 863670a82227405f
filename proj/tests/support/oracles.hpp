#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "leviathan/autodiff.hpp"
#include "leviathan/rng.hpp"
#include "leviathan/tensor.hpp"

namespace leviathan::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double scale = 1.0)
{
    Tensor t(shape);
    for (auto& x : t.data())
        x = rng.normal(0.0, scale);
    return t;
}

inline Tensor uniform_tensor(const Shape& shape, Rng& rng, double lo, double hi)
{
    Tensor t(shape);
    for (auto& x : t.data())
        x = lo + (hi - lo) * rng.uniform();
    return t;
}

// Builds the function under test from leaf variables on a fresh tape.
using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

namespace detail {

// Contracts any output with a fixed random weighting so every output entry
// contributes to the scalar being differentiated.
inline double probe(const std::vector<Tensor>& inputs, const Builder& build, const Tensor* weights,
                    Tensor* out_weights)
{
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs)
        vars.push_back(tape.leaf(t));
    const Tensor& y = tape.value(build(tape, vars));
    if (out_weights) {
        Rng rng(0x5eed);
        *out_weights = random_tensor(y.shape(), rng);
    }
    const Tensor& w = weights ? *weights : *out_weights;
    long double s = 0.0L;
    for (std::size_t i = 0; i < y.numel(); ++i)
        s += static_cast<long double>(y[i]) * w[i];
    return static_cast<double>(s);
}

}  // namespace detail

struct GradientPair {
    std::vector<Tensor> analytic;
    std::vector<Tensor> numeric;
};

inline GradientPair gradients(const std::vector<Tensor>& inputs, const Builder& build, double h = 1e-5)
{
    Tensor w;
    detail::probe(inputs, build, nullptr, &w);

    GradientPair out;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const auto& t : inputs)
            vars.push_back(tape.leaf(t));
        Var y = build(tape, vars);
        Var loss = sum(tape, mul(tape, y, tape.constant(w)));
        tape.backward(loss);
        for (Var v : vars)
            out.analytic.push_back(tape.grad(v));
    }
    std::vector<Tensor> work = inputs;
    for (std::size_t a = 0; a < inputs.size(); ++a) {
        Tensor g(inputs[a].shape());
        for (std::size_t i = 0; i < inputs[a].numel(); ++i) {
            const double x0 = inputs[a][i];
            work[a][i] = x0 + h;
            const double fp = detail::probe(work, build, &w, nullptr);
            work[a][i] = x0 - h;
            const double fm = detail::probe(work, build, &w, nullptr);
            work[a][i] = x0;
            g[i] = (fp - fm) / (2.0 * h);
        }
        out.numeric.push_back(std::move(g));
    }
    return out;
}

struct Agreement {
    bool ok = true;
    double worst_ratio = 0.0;  // max |a - f| / (rtol * max(|a|,|f|) + atol)
    std::string where;
};

inline Agreement compare_elementwise(const GradientPair& g, double rtol, double atol = 1e-9)
{
    Agreement r;
    for (std::size_t a = 0; a < g.analytic.size(); ++a)
        for (std::size_t i = 0; i < g.analytic[a].numel(); ++i) {
            const double x = g.analytic[a][i], f = g.numeric[a][i];
            const double ratio = std::abs(x - f) / (rtol * std::max(std::abs(x), std::abs(f)) + atol);
            if (ratio <= r.worst_ratio)
                continue;
            r.worst_ratio = std::isnan(ratio) ? INFINITY : ratio;
            std::ostringstream s;
            s << "input " << a << " entry " << i << ": analytic " << x << " numeric " << f;
            r.where = s.str();
        }
    r.ok = r.worst_ratio <= 1.0;
    return r;
}

// ||a - f|| / max(||a||, ||f||) for one tensor.
inline double normwise_relative_error(const Tensor& analytic, const Tensor& numeric)
{
    double diff = 0.0, na = 0.0, nf = 0.0;
    for (std::size_t i = 0; i < analytic.numel(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        na += analytic[i] * analytic[i];
        nf += numeric[i] * numeric[i];
    }
    const double denom = std::sqrt(std::max(na, nf));
    return denom == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / denom;
}

}  // namespace leviathan::testing
