#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "leviathan/tensor.hpp"

namespace leviathan {

enum class Precision { double_precision, single_precision };

/// Handle to a node on a Tape. Only meaningful together with the tape that
/// produced it.
struct Var {
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
    std::size_t id = npos;

    bool valid() const noexcept { return id != npos; }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
/// sweep visits every node after all of its consumers and exactly once.
/// Gradients accumulate additively when a node feeds several consumers.
///
/// A tape has a single owner; independent tapes may live on different threads.
class Tape {
public:
    using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

    explicit Tape(Precision precision = Precision::double_precision) : precision_{precision} {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    Var leaf(Tensor value, bool requires_grad = true);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    const Tensor& value(Var v) const;
    bool requires_grad(Var v) const;

    // Gradient after backward(); a zero tensor if no gradient reached v.
    Tensor grad(Var v) const;

    void backward(Var loss);

    std::size_t size() const noexcept { return nodes_.size(); }
    Precision precision() const noexcept { return precision_; }

    // Primitive registration. `backward` is dropped when no input requires a
    // gradient.
    Var record(Tensor value, std::span<const Var> inputs, Backward backward);

    // Adds `g` into the gradient buffer of `v` (no-op when v is a constant).
    void accumulate(Var v, const Tensor& g);
    // Direct access to the gradient buffer of `v`, allocated as zeros on first
    // use. Only valid for nodes that require a gradient.
    Tensor& grad_buffer(Var v);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool has_grad = false;
        Backward backward;
    };

    const Node& node(Var v) const;
    Node& node(Var v);

    std::vector<Node> nodes_;
    Precision precision_;
};

// --- primitives ------------------------------------------------------------
// Shapes: matmul/transpose take rank-2 tensors. Elementwise binary operations
// accept equal shapes or one operand with a single element.

Var matmul(Tape& tape, Var a, Var b);
Var transpose(Tape& tape, Var a);

Var add(Tape& tape, Var a, Var b);
Var sub(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double factor);
Var sigmoid(Tape& tape, Var a);
Var silu(Tape& tape, Var a);
Var exp(Tape& tape, Var a);
Var log(Tape& tape, Var a);
Var power(Tape& tape, Var a, double exponent);

// x[n x d] + bias[d] broadcast over rows.
Var add_row(Tape& tape, Var x, Var bias);

Var sum(Tape& tape, Var a);
Var mean(Tape& tape, Var a);

// Normalizes each row of x[.. x d] to zero mean and unit variance, then
// applies gain and bias.
Var layer_norm(Tape& tape, Var x, Var gain, Var bias, double eps = 1e-5);

// Mean negative log-likelihood of `targets` under row-wise softmax(logits).
Var softmax_cross_entropy(Tape& tape, Var logits, std::span<const std::uint32_t> targets);

// out[i] = table[ids[i]]
Var gather_rows(Tape& tape, Var table, std::span<const std::uint32_t> ids);

// Rotary position embedding of x[n x (heads*head_dim)]; row r has position
// positions[r]. Pairs (2i, 2i+1) of each head rotate by pos * base^(-2i/head_dim).
Var rope(Tape& tape, Var x, std::span<const std::size_t> positions, std::size_t heads,
         double base = 10000.0);

// Causal multi-head scaled dot-product attention. q, k, v are
// [batch*seq x heads*head_dim] with rows ordered batch-major.
Var causal_attention(Tape& tape, Var q, Var k, Var v, std::size_t batch, std::size_t seq,
                     std::size_t heads);

// Plain value-level helpers used outside the tape.
Tensor matmul_values(const Tensor& a, const Tensor& b, Precision precision = Precision::double_precision);

}  // namespace leviathan
