#include "leviathan/autodiff.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "kernels.hpp"
#include "leviathan/errors.hpp"

namespace leviathan {

// --- tape ------------------------------------------------------------------

const Tape::Node& Tape::node(Var v) const
{
    if (v.id >= nodes_.size())
        throw IndexError("variable does not belong to this tape");
    return nodes_[v.id];
}

Tape::Node& Tape::node(Var v)
{
    if (v.id >= nodes_.size())
        throw IndexError("variable does not belong to this tape");
    return nodes_[v.id];
}

Var Tape::leaf(Tensor value, bool requires_grad)
{
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const
{
    return node(v).value;
}

bool Tape::requires_grad(Var v) const
{
    return node(v).requires_grad;
}

Tensor Tape::grad(Var v) const
{
    const Node& n = node(v);
    if (n.has_grad)
        return n.grad;
    return Tensor(n.value.shape(), 0.0);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward)
{
    bool needs = false;
    for (auto in : inputs)
        needs = needs || node(in).requires_grad;
    Node n;
    n.value = std::move(value);
    n.requires_grad = needs;
    if (needs)
        n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(Var v)
{
    Node& n = node(v);
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape(), 0.0);
        n.has_grad = true;
    }
    return n.grad;
}

void Tape::accumulate(Var v, const Tensor& g)
{
    if (!node(v).requires_grad)
        return;
    Tensor& buf = grad_buffer(v);
    if (buf.numel() != g.numel())
        throw DimensionError("gradient shape " + shape_string(g.shape()) +
                             " does not match value shape " + shape_string(buf.shape()));
    double* dst = buf.ptr();
    const double* src = g.ptr();
    for (std::size_t i = 0; i < buf.numel(); ++i)
        dst[i] += src[i];
}

void Tape::backward(Var loss)
{
    Node& root = node(loss);
    if (root.value.numel() != 1)
        throw DimensionError("backward() requires a single-element loss, got shape " +
                             shape_string(root.value.shape()));
    if (!root.requires_grad)
        return;
    grad_buffer(loss)[0] += 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.has_grad || !n.backward)
            continue;
        // The closure may only touch the gradients of earlier nodes.
        n.backward(*this, n.grad);
    }
}

// --- helpers ----------------------------------------------------------------

namespace {

void require_rank2(const Tensor& t, const char* op)
{
    if (t.rank() != 2)
        throw DimensionError(std::string(op) + " expects a rank-2 tensor, got " +
                             shape_string(t.shape()));
}

template <typename T>
std::vector<T> to_precision(const Tensor& t)
{
    return std::vector<T>(t.data().begin(), t.data().end());
}

// c (+)= a * b with shapes [m x k] * [k x n]
void gemm_nn(Precision p, std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c, bool accumulate)
{
    if (p == Precision::double_precision) {
        kernels::gemm_nn(m, k, n, a, k, b, n, c, n, accumulate);
        return;
    }
    std::vector<float> af(a, a + m * k), bf(b, b + k * n), cf(m * n, 0.0f);
    kernels::gemm_nn(m, k, n, af.data(), k, bf.data(), n, cf.data(), n, false);
    for (std::size_t i = 0; i < m * n; ++i)
        c[i] = accumulate ? c[i] + double(cf[i]) : double(cf[i]);
}

// c (+)= a * b^T with shapes [m x k] * [n x k]^T
void gemm_nt(Precision p, std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c, bool accumulate)
{
    if (p == Precision::double_precision) {
        kernels::gemm_nt(m, k, n, a, k, b, k, c, n, accumulate);
        return;
    }
    std::vector<float> af(a, a + m * k), bf(b, b + n * k), cf(m * n, 0.0f);
    kernels::gemm_nt(m, k, n, af.data(), k, bf.data(), k, cf.data(), n, false);
    for (std::size_t i = 0; i < m * n; ++i)
        c[i] = accumulate ? c[i] + double(cf[i]) : double(cf[i]);
}

// c (+)= a^T * b with shapes [m x k]^T * [m x n]
void gemm_tn(Precision p, std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c, bool accumulate)
{
    if (p == Precision::double_precision) {
        kernels::gemm_tn(m, k, n, a, k, b, n, c, n, accumulate);
        return;
    }
    std::vector<float> af(a, a + m * k), bf(b, b + m * n), cf(k * n, 0.0f);
    kernels::gemm_tn(m, k, n, af.data(), k, bf.data(), n, cf.data(), n, false);
    for (std::size_t i = 0; i < k * n; ++i)
        c[i] = accumulate ? c[i] + double(cf[i]) : double(cf[i]);
}

template <typename F, typename G>
Var unary(Tape& tape, Var a, F forward, G derivative)
{
    const Tensor& x = tape.value(a);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
        y[i] = forward(x[i]);
    Var in[] = {a};
    return tape.record(std::move(y), in, [a, derivative](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < x.numel(); ++i)
            ga[i] += g[i] * derivative(x[i]);
    });
}

enum class BinaryKind { add, sub, mul };

Var binary(Tape& tape, Var a, Var b, BinaryKind kind)
{
    const Tensor& x = tape.value(a);
    const Tensor& y = tape.value(b);
    const bool equal = x.same_shape(y);
    const bool a_scalar = x.numel() == 1 && !equal;
    const bool b_scalar = y.numel() == 1 && !equal;
    if (!equal && !a_scalar && !b_scalar)
        throw DimensionError("elementwise shapes " + shape_string(x.shape()) + " and " +
                             shape_string(y.shape()) + " are not broadcast-compatible");

    Tensor out(a_scalar ? y.shape() : x.shape());
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) {
        const double u = a_scalar ? x[0] : x[i];
        const double v = b_scalar ? y[0] : y[i];
        switch (kind) {
        case BinaryKind::add: out[i] = u + v; break;
        case BinaryKind::sub: out[i] = u - v; break;
        case BinaryKind::mul: out[i] = u * v; break;
        }
    }

    Var in[] = {a, b};
    return tape.record(std::move(out), in, [=](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        const Tensor& y = t.value(b);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_buffer(a);
            for (std::size_t i = 0; i < n; ++i) {
                double d = g[i];
                if (kind == BinaryKind::mul)
                    d *= b_scalar ? y[0] : y[i];
                ga[a_scalar ? 0 : i] += d;
            }
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_buffer(b);
            for (std::size_t i = 0; i < n; ++i) {
                double d = g[i];
                if (kind == BinaryKind::sub)
                    d = -d;
                else if (kind == BinaryKind::mul)
                    d *= a_scalar ? x[0] : x[i];
                gb[b_scalar ? 0 : i] += d;
            }
        }
    });
}

double sigmoid_value(double x)
{
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

// --- primitives -------------------------------------------------------------

Tensor matmul_values(const Tensor& a, const Tensor& b, Precision precision)
{
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.extent(1) != b.extent(0))
        throw DimensionError("matmul inner extents differ: " + shape_string(a.shape()) + " * " +
                             shape_string(b.shape()));
    Tensor c({a.extent(0), b.extent(1)});
    gemm_nn(precision, a.extent(0), a.extent(1), b.extent(1), a.ptr(), b.ptr(), c.ptr(), false);
    return c;
}

Var matmul(Tape& tape, Var a, Var b)
{
    Tensor c = matmul_values(tape.value(a), tape.value(b), tape.precision());
    Var in[] = {a, b};
    return tape.record(std::move(c), in, [a, b](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        const Tensor& y = t.value(b);
        const std::size_t m = x.extent(0), k = x.extent(1), n = y.extent(1);
        if (t.requires_grad(a))
            gemm_nt(t.precision(), m, n, k, g.ptr(), y.ptr(), t.grad_buffer(a).ptr(), true);
        if (t.requires_grad(b))
            gemm_tn(t.precision(), m, k, n, x.ptr(), g.ptr(), t.grad_buffer(b).ptr(), true);
    });
}

Var transpose(Tape& tape, Var a)
{
    const Tensor& x = tape.value(a);
    require_rank2(x, "transpose");
    const std::size_t m = x.extent(0), n = x.extent(1);
    Tensor y({n, m});
    kernels::transpose(m, n, x.ptr(), n, y.ptr(), m);
    Var in[] = {a};
    return tape.record(std::move(y), in, [a, m, n](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                ga[i * n + j] += g[j * m + i];
    });
}

Var add(Tape& tape, Var a, Var b) { return binary(tape, a, b, BinaryKind::add); }
Var sub(Tape& tape, Var a, Var b) { return binary(tape, a, b, BinaryKind::sub); }
Var mul(Tape& tape, Var a, Var b) { return binary(tape, a, b, BinaryKind::mul); }

Var scale(Tape& tape, Var a, double factor)
{
    return unary(tape, a, [factor](double x) { return factor * x; },
                 [factor](double) { return factor; });
}

Var sigmoid(Tape& tape, Var a)
{
    return unary(tape, a, sigmoid_value, [](double x) {
        const double s = sigmoid_value(x);
        return s * (1.0 - s);
    });
}

Var silu(Tape& tape, Var a)
{
    return unary(tape, a, [](double x) { return x * sigmoid_value(x); },
                 [](double x) {
                     const double s = sigmoid_value(x);
                     return s * (1.0 + x * (1.0 - s));
                 });
}

Var exp(Tape& tape, Var a)
{
    return unary(tape, a, [](double x) { return std::exp(x); },
                 [](double x) { return std::exp(x); });
}

Var log(Tape& tape, Var a)
{
    for (double x : tape.value(a).data())
        if (!(x > 0.0))
            throw NumericDomainError("log of non-positive value " + std::to_string(x));
    return unary(tape, a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var power(Tape& tape, Var a, double exponent)
{
    const bool integral = std::floor(exponent) == exponent;
    for (double x : tape.value(a).data()) {
        if (x < 0.0 && !integral)
            throw NumericDomainError("non-integral power of negative value " + std::to_string(x));
        if (x == 0.0 && exponent < 1.0 && exponent != 0.0)
            throw NumericDomainError("power " + std::to_string(exponent) +
                                     " is not differentiable at zero");
    }
    return unary(tape, a, [exponent](double x) { return std::pow(x, exponent); },
                 [exponent](double x) {
                     return exponent == 0.0 ? 0.0 : exponent * std::pow(x, exponent - 1.0);
                 });
}

Var add_row(Tape& tape, Var x, Var bias)
{
    const Tensor& v = tape.value(x);
    const Tensor& b = tape.value(bias);
    if (b.numel() != v.cols())
        throw DimensionError("row bias of length " + std::to_string(b.numel()) +
                             " does not match width " + std::to_string(v.cols()));
    Tensor out = v;
    const std::size_t rows = v.rows(), cols = v.cols();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out[r * cols + c] += b[c];
    Var in[] = {x, bias};
    return tape.record(std::move(out), in, [x, bias, rows, cols](Tape& t, const Tensor& g) {
        t.accumulate(x, g);
        if (t.requires_grad(bias)) {
            Tensor& gb = t.grad_buffer(bias);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    gb[c] += g[r * cols + c];
        }
    });
}

Var sum(Tape& tape, Var a)
{
    double s = 0.0;
    for (double x : tape.value(a).data())
        s += x;
    Var in[] = {a};
    return tape.record(Tensor::scalar(s), in, [a](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < ga.numel(); ++i)
            ga[i] += g[0];
    });
}

Var mean(Tape& tape, Var a)
{
    const double n = static_cast<double>(tape.value(a).numel());
    return scale(tape, sum(tape, a), 1.0 / n);
}

Var layer_norm(Tape& tape, Var x, Var gain, Var bias, double eps)
{
    const Tensor& v = tape.value(x);
    const std::size_t rows = v.rows(), d = v.cols();
    if (tape.value(gain).numel() != d || tape.value(bias).numel() != d)
        throw DimensionError("layer_norm gain/bias must have length " + std::to_string(d));
    if (!(eps > 0.0))
        throw NumericDomainError("layer_norm eps must be positive");

    const Tensor& gv = tape.value(gain);
    const Tensor& bv = tape.value(bias);
    auto xhat = std::make_shared<Tensor>(v.shape());
    auto rstd = std::make_shared<std::vector<double>>(rows);
    Tensor out(v.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = v.ptr() + r * d;
        double mu = 0.0;
        for (std::size_t c = 0; c < d; ++c)
            mu += row[c];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c)
            var += (row[c] - mu) * (row[c] - mu);
        var /= static_cast<double>(d);
        const double rs = 1.0 / std::sqrt(var + eps);
        (*rstd)[r] = rs;
        for (std::size_t c = 0; c < d; ++c) {
            const double h = (row[c] - mu) * rs;
            (*xhat)[r * d + c] = h;
            out[r * d + c] = h * gv[c] + bv[c];
        }
    }

    Var in[] = {x, gain, bias};
    return tape.record(std::move(out), in, [=](Tape& t, const Tensor& g) {
        const Tensor& gv = t.value(gain);
        if (t.requires_grad(gain)) {
            Tensor& gg = t.grad_buffer(gain);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < d; ++c)
                    gg[c] += g[r * d + c] * (*xhat)[r * d + c];
        }
        if (t.requires_grad(bias)) {
            Tensor& gb = t.grad_buffer(bias);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < d; ++c)
                    gb[c] += g[r * d + c];
        }
        if (t.requires_grad(x)) {
            Tensor& gx = t.grad_buffer(x);
            const double inv_d = 1.0 / static_cast<double>(d);
            for (std::size_t r = 0; r < rows; ++r) {
                double mean_dh = 0.0, mean_dh_h = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double dh = g[r * d + c] * gv[c];
                    mean_dh += dh;
                    mean_dh_h += dh * (*xhat)[r * d + c];
                }
                mean_dh *= inv_d;
                mean_dh_h *= inv_d;
                for (std::size_t c = 0; c < d; ++c) {
                    const double dh = g[r * d + c] * gv[c];
                    gx[r * d + c] +=
                        (*rstd)[r] * (dh - mean_dh - (*xhat)[r * d + c] * mean_dh_h);
                }
            }
        }
    });
}

Var softmax_cross_entropy(Tape& tape, Var logits, std::span<const std::uint32_t> targets)
{
    const Tensor& z = tape.value(logits);
    require_rank2(z, "softmax_cross_entropy");
    const std::size_t rows = z.extent(0), v = z.extent(1);
    if (targets.size() != rows)
        throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                             " targets for " + std::to_string(rows) + " rows");
    for (auto id : targets)
        if (id >= v)
            throw IndexError("target id " + std::to_string(id) + " outside [0, " +
                             std::to_string(v) + ")");

    auto probs = std::make_shared<Tensor>(z.shape());
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = z.ptr() + r * v;
        double* p = probs->ptr() + r * v;
        double mx = row[0];
        for (std::size_t c = 1; c < v; ++c)
            mx = std::max(mx, row[c]);
        double s = 0.0;
        for (std::size_t c = 0; c < v; ++c) {
            p[c] = std::exp(row[c] - mx);
            s += p[c];
        }
        const double inv = 1.0 / s;
        for (std::size_t c = 0; c < v; ++c)
            p[c] *= inv;
        total += (mx + std::log(s)) - row[targets[r]];
    }
    const double loss = total / static_cast<double>(rows);

    std::vector<std::uint32_t> tgt(targets.begin(), targets.end());
    Var in[] = {logits};
    return tape.record(Tensor::scalar(loss), in,
                       [logits, probs, tgt = std::move(tgt), rows, v](Tape& t, const Tensor& g) {
                           Tensor& gz = t.grad_buffer(logits);
                           const double s = g[0] / static_cast<double>(rows);
                           for (std::size_t r = 0; r < rows; ++r) {
                               const double* p = probs->ptr() + r * v;
                               double* out = gz.ptr() + r * v;
                               for (std::size_t c = 0; c < v; ++c)
                                   out[c] += s * p[c];
                               out[tgt[r]] -= s;
                           }
                       });
}

Var gather_rows(Tape& tape, Var table, std::span<const std::uint32_t> ids)
{
    const Tensor& w = tape.value(table);
    require_rank2(w, "gather_rows");
    const std::size_t n_rows = w.extent(0), d = w.extent(1);
    if (ids.empty())
        throw DimensionError("gather_rows needs at least one id");
    Tensor out({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= n_rows)
            throw IndexError("row id " + std::to_string(ids[i]) + " outside table of " +
                             std::to_string(n_rows) + " rows");
        std::copy_n(w.ptr() + std::size_t(ids[i]) * d, d, out.ptr() + i * d);
    }
    std::vector<std::uint32_t> idx(ids.begin(), ids.end());
    Var in[] = {table};
    return tape.record(std::move(out), in, [table, idx = std::move(idx), d](Tape& t, const Tensor& g) {
        Tensor& gw = t.grad_buffer(table);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            double* dst = gw.ptr() + std::size_t(idx[i]) * d;
            const double* src = g.ptr() + i * d;
            for (std::size_t c = 0; c < d; ++c)
                dst[c] += src[c];
        }
    });
}

namespace {

struct RopeTable {
    std::vector<double> cos, sin;  // [rows x half] per head-local pair index
    std::size_t half = 0;
};

RopeTable build_rope_table(std::span<const std::size_t> positions, std::size_t head_dim, double base)
{
    RopeTable tab;
    tab.half = head_dim / 2;
    tab.cos.resize(positions.size() * tab.half);
    tab.sin.resize(positions.size() * tab.half);
    std::vector<double> inv_freq(tab.half);
    for (std::size_t i = 0; i < tab.half; ++i)
        inv_freq[i] = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
    for (std::size_t r = 0; r < positions.size(); ++r)
        for (std::size_t i = 0; i < tab.half; ++i) {
            const double angle = static_cast<double>(positions[r]) * inv_freq[i];
            tab.cos[r * tab.half + i] = std::cos(angle);
            tab.sin[r * tab.half + i] = std::sin(angle);
        }
    return tab;
}

// Rotates every (2i, 2i+1) pair of each head; `direction` -1 applies the
// inverse rotation (used for the adjoint).
void apply_rope(const RopeTable& tab, std::size_t rows, std::size_t heads, const double* in,
                double* out, double direction, bool accumulate)
{
    const std::size_t head_dim = 2 * tab.half;
    const std::size_t width = heads * head_dim;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < tab.half; ++i) {
                const std::size_t c = r * width + h * head_dim + 2 * i;
                const double cs = tab.cos[r * tab.half + i];
                const double sn = direction * tab.sin[r * tab.half + i];
                const double x0 = in[c], x1 = in[c + 1];
                const double y0 = x0 * cs - x1 * sn;
                const double y1 = x0 * sn + x1 * cs;
                if (accumulate) {
                    out[c] += y0;
                    out[c + 1] += y1;
                } else {
                    out[c] = y0;
                    out[c + 1] = y1;
                }
            }
}

}  // namespace

Var rope(Tape& tape, Var x, std::span<const std::size_t> positions, std::size_t heads, double base)
{
    const Tensor& v = tape.value(x);
    require_rank2(v, "rope");
    if (heads == 0 || v.cols() % heads != 0)
        throw ConfigError("rope: width " + std::to_string(v.cols()) + " not divisible into " +
                          std::to_string(heads) + " heads");
    const std::size_t head_dim = v.cols() / heads;
    if (head_dim % 2 != 0)
        throw ConfigError("rope requires an even head dimension, got " + std::to_string(head_dim));
    if (positions.size() != v.rows())
        throw DimensionError("rope: one position per row required");

    auto tab = std::make_shared<RopeTable>(build_rope_table(positions, head_dim, base));
    Tensor out(v.shape());
    apply_rope(*tab, v.rows(), heads, v.ptr(), out.ptr(), 1.0, false);
    Var in[] = {x};
    const std::size_t rows = v.rows();
    return tape.record(std::move(out), in, [x, tab, rows, heads](Tape& t, const Tensor& g) {
        apply_rope(*tab, rows, heads, g.ptr(), t.grad_buffer(x).ptr(), -1.0, true);
    });
}

namespace {

// Copies the [seq x head_dim] block of head h, batch b into dst.
void extract_head(const Tensor& src, std::size_t b, std::size_t h, std::size_t seq,
                  std::size_t head_dim, double* dst)
{
    const std::size_t width = src.cols();
    for (std::size_t t = 0; t < seq; ++t)
        std::copy_n(src.ptr() + (b * seq + t) * width + h * head_dim, head_dim, dst + t * head_dim);
}

void add_head(double* dst_tensor, std::size_t width, std::size_t b, std::size_t h, std::size_t seq,
              std::size_t head_dim, const double* src)
{
    for (std::size_t t = 0; t < seq; ++t) {
        double* out = dst_tensor + (b * seq + t) * width + h * head_dim;
        for (std::size_t c = 0; c < head_dim; ++c)
            out[c] += src[t * head_dim + c];
    }
}

}  // namespace

namespace {

// Lower-triangular pieces of the attention products, computed in row blocks.
// Entries above the diagonal are either never read or exactly zero, so
// trimming them leaves every needed value bitwise unchanged.
constexpr std::size_t causal_block = 32;

// s[i, j] = a_i . b_j for j <= i (plus some j > i inside the diagonal block).
void causal_scores(std::size_t seq, std::size_t hd, const double* a, const double* b, double* s)
{
    for (std::size_t i0 = 0; i0 < seq; i0 += causal_block) {
        const std::size_t rows = std::min(causal_block, seq - i0);
        kernels::gemm_nt(rows, hd, i0 + rows, a + i0 * hd, hd, b, hd, s + i0 * seq, seq, false);
    }
}

// out[i] = sum_{j <= i} w[i, j] x[j]; w is zero above the diagonal.
void causal_apply(std::size_t seq, std::size_t hd, const double* w, const double* x, double* out)
{
    for (std::size_t i0 = 0; i0 < seq; i0 += causal_block) {
        const std::size_t rows = std::min(causal_block, seq - i0);
        kernels::gemm_nn(rows, i0 + rows, hd, w + i0 * seq, seq, x, hd, out + i0 * hd, hd, false);
    }
}

// out[j] = sum_{i >= j} w[i, j] x[i]; w is zero above the diagonal.
void causal_apply_transposed(std::size_t seq, std::size_t hd, const double* w, const double* x, double* out)
{
    for (std::size_t j0 = 0; j0 < seq; j0 += causal_block) {
        const std::size_t cols = std::min(causal_block, seq - j0);
        kernels::gemm_tn(seq - j0, cols, hd, w + j0 * seq + j0, seq, x + j0 * hd, hd, out + j0 * hd, hd, false);
    }
}

}  // namespace

Var causal_attention(Tape& tape, Var q, Var k, Var v, std::size_t batch, std::size_t seq,
                     std::size_t heads)
{
    const Tensor& qv = tape.value(q);
    const Tensor& kv = tape.value(k);
    const Tensor& vv = tape.value(v);
    require_rank2(qv, "causal_attention");
    if (!qv.same_shape(kv) || !qv.same_shape(vv))
        throw DimensionError("causal_attention: q, k, v shapes differ");
    if (qv.rows() != batch * seq)
        throw DimensionError("causal_attention: rows " + std::to_string(qv.rows()) +
                             " != batch * seq");
    if (heads == 0 || qv.cols() % heads != 0)
        throw ConfigError("causal_attention: width not divisible by heads");

    const std::size_t width = qv.cols();
    const std::size_t hd = width / heads;
    const double scale_factor = 1.0 / std::sqrt(static_cast<double>(hd));
    auto probs = std::make_shared<std::vector<double>>(batch * heads * seq * seq, 0.0);

    Tensor out(qv.shape(), 0.0);
    std::vector<double> qh(seq * hd), kh(seq * hd), vh(seq * hd), oh(seq * hd), s(seq * seq);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t h = 0; h < heads; ++h) {
            extract_head(qv, b, h, seq, hd, qh.data());
            extract_head(kv, b, h, seq, hd, kh.data());
            extract_head(vv, b, h, seq, hd, vh.data());
            causal_scores(seq, hd, qh.data(), kh.data(), s.data());
            double* p = probs->data() + (b * heads + h) * seq * seq;
            for (std::size_t i = 0; i < seq; ++i) {
                double mx = s[i * seq] * scale_factor;
                for (std::size_t j = 1; j <= i; ++j)
                    mx = std::max(mx, s[i * seq + j] * scale_factor);
                double z = 0.0;
                for (std::size_t j = 0; j <= i; ++j) {
                    p[i * seq + j] = std::exp(s[i * seq + j] * scale_factor - mx);
                    z += p[i * seq + j];
                }
                const double inv = 1.0 / z;
                for (std::size_t j = 0; j <= i; ++j)
                    p[i * seq + j] *= inv;
            }
            causal_apply(seq, hd, p, vh.data(), oh.data());
            add_head(out.ptr(), width, b, h, seq, hd, oh.data());
        }

    Var in[] = {q, k, v};
    return tape.record(std::move(out), in, [=](Tape& t, const Tensor& g) {
        const Tensor& qv = t.value(q);
        const Tensor& kv = t.value(k);
        const Tensor& vv = t.value(v);
        std::vector<double> qh(seq * hd), kh(seq * hd), vh(seq * hd), gh(seq * hd);
        std::vector<double> dp(seq * seq), dq(seq * hd), dk(seq * hd), dv(seq * hd);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t h = 0; h < heads; ++h) {
                extract_head(qv, b, h, seq, hd, qh.data());
                extract_head(kv, b, h, seq, hd, kh.data());
                extract_head(vv, b, h, seq, hd, vh.data());
                extract_head(g, b, h, seq, hd, gh.data());
                const double* p = probs->data() + (b * heads + h) * seq * seq;
                // dV = P^T dO ; dP = dO V^T
                causal_apply_transposed(seq, hd, p, gh.data(), dv.data());
                causal_scores(seq, hd, gh.data(), vh.data(), dp.data());
                // dS = P * (dP - rowsum(dP * P)), folded with the score scale
                for (std::size_t i = 0; i < seq; ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j <= i; ++j)
                        dot += dp[i * seq + j] * p[i * seq + j];
                    for (std::size_t j = 0; j <= i; ++j)
                        dp[i * seq + j] = p[i * seq + j] * (dp[i * seq + j] - dot) * scale_factor;
                    for (std::size_t j = i + 1; j < seq; ++j)
                        dp[i * seq + j] = 0.0;
                }
                causal_apply(seq, hd, dp.data(), kh.data(), dq.data());
                causal_apply_transposed(seq, hd, dp.data(), qh.data(), dk.data());
                if (t.requires_grad(q))
                    add_head(t.grad_buffer(q).ptr(), width, b, h, seq, hd, dq.data());
                if (t.requires_grad(k))
                    add_head(t.grad_buffer(k).ptr(), width, b, h, seq, hd, dk.data());
                if (t.requires_grad(v))
                    add_head(t.grad_buffer(v).ptr(), width, b, h, seq, hd, dv.data());
            }
    });
}

}  // namespace leviathan
