#pragma once

// Dense matrix kernels with a fixed reduction order.
//
// Every output element is accumulated over the inner index in ascending order,
// independent of how many rows are processed together, so a row of a product
// is bitwise identical whether it is computed alone or as part of a larger
// batch. The build disables floating-point contraction to keep that property
// across vectorized and scalar code paths.

#include <cstddef>
#include <algorithm>
#include <vector>

namespace leviathan::kernels {

namespace detail {

inline constexpr std::size_t tile_rows = 4;
inline constexpr std::size_t tile_cols = 8;

// Per-thread reusable buffers for packed operands; slot distinguishes
// buffers that are alive at the same time.
template <typename T>
T* scratch(std::size_t size, int slot)
{
    thread_local std::vector<T> buffers[2];
    auto& buf = buffers[slot];
    if (buf.size() < size)
        buf.resize(size);
    return buf.data();
}

// One tile of c held in registers across the whole reduction. Element (r, j)
// sees the terms in step order 0, 1, 2, ..., so tiling never changes the
// result. ap is the packed a panel: ap[step * R + r].
template <typename T, std::size_t R, std::size_t W, typename BRow>
inline void tile(std::size_t steps, const T* __restrict ap, BRow b_row, std::size_t j0, T* c, std::size_t ldc)
{
    T acc[R][W];
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t j = 0; j < W; ++j)
            acc[r][j] = c[r * ldc + j];
    for (std::size_t p = 0; p < steps; ++p) {
        const T* __restrict bp = b_row(p) + j0;
        for (std::size_t r = 0; r < R; ++r) {
            const T av = ap[p * R + r];
#pragma GCC unroll 16
            for (std::size_t j = 0; j < W; ++j)
                acc[r][j] += av * bp[j];
        }
    }
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t j = 0; j < W; ++j)
            c[r * ldc + j] = acc[r][j];
}

// Leftover columns, one element at a time in the same step order.
template <typename T, typename BRow>
inline void edge(std::size_t steps, std::size_t R, std::size_t r, const T* ap, BRow b_row, std::size_t j, T* c)
{
    T acc = *c;
    for (std::size_t p = 0; p < steps; ++p)
        acc += ap[p * R + r] * b_row(p)[j];
    *c = acc;
}

// c[rows x n] += A * B where A(row, step) is gathered by pack(row0, R, dst)
// into dst[step * R + r] and B's step-th row is b_row(step).
template <typename T, typename Pack, typename BRow>
void blocked(std::size_t rows, std::size_t steps, std::size_t n, Pack pack, BRow b_row, T* c, std::size_t ldc)
{
    T* ap = scratch<T>(steps * tile_rows, 0);
    std::size_t i = 0;
    for (; i + tile_rows <= rows; i += tile_rows) {
        pack(i, tile_rows, ap);
        std::size_t j = 0;
        for (; j + tile_cols <= n; j += tile_cols)
            tile<T, tile_rows, tile_cols>(steps, ap, b_row, j, c + i * ldc + j, ldc);
        for (; j < n; ++j)
            for (std::size_t r = 0; r < tile_rows; ++r)
                edge(steps, tile_rows, r, ap, b_row, j, c + (i + r) * ldc + j);
    }
    for (; i < rows; ++i) {
        pack(i, 1, ap);
        std::size_t j = 0;
        for (; j + tile_cols <= n; j += tile_cols)
            tile<T, 1, tile_cols>(steps, ap, b_row, j, c + i * ldc + j, ldc);
        for (; j < n; ++j)
            edge(steps, 1, 0, ap, b_row, j, c + i * ldc + j);
    }
}

}  // namespace detail

// c[k x n] (+)= a[m x k]^T * b[m x n]; reduction over m in ascending order.
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n,
             const T* a, std::size_t lda,
             const T* b, std::size_t ldb,
             T* c, std::size_t ldc, bool accumulate)
{
    if (!accumulate)
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j)
                c[p * ldc + j] = T(0);
    // Chunking the reduction keeps the b panel in cache; partial sums go back
    // through c, so the order of additions is unchanged.
    constexpr std::size_t chunk = 256;
    for (std::size_t i0 = 0; i0 < m; i0 += chunk) {
        const std::size_t steps = std::min(chunk, m - i0);
        const T* a0 = a + i0 * lda;
        const T* b0 = b + i0 * ldb;
        auto pack = [a0, lda, steps](std::size_t row0, std::size_t R, T* dst) {
            for (std::size_t s = 0; s < steps; ++s)
                for (std::size_t r = 0; r < R; ++r)
                    dst[s * R + r] = a0[s * lda + row0 + r];
        };
        detail::blocked<T>(k, steps, n, pack, [b0, ldb](std::size_t s) { return b0 + s * ldb; }, c, ldc);
    }
}

// c[m x n] (+)= a[m x k] * b[k x n]; all row-major with leading dimensions.
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n,
             const T* a, std::size_t lda,
             const T* b, std::size_t ldb,
             T* c, std::size_t ldc, bool accumulate)
{
    if (!accumulate)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                c[i * ldc + j] = T(0);
    auto pack = [a, lda, k](std::size_t row0, std::size_t R, T* dst) {
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t s = 0; s < k; ++s)
                dst[s * R + r] = a[(row0 + r) * lda + s];
    };
    detail::blocked<T>(m, k, n, pack, [b, ldb](std::size_t s) { return b + s * ldb; }, c, ldc);
}

// out[n x m] = in[m x n]^T
template <typename T>
void transpose(std::size_t m, std::size_t n, const T* in, std::size_t ldi, T* out, std::size_t ldo)
{
    constexpr std::size_t block = 16;
    for (std::size_t i0 = 0; i0 < m; i0 += block)
        for (std::size_t j0 = 0; j0 < n; j0 += block)
            for (std::size_t i = i0; i < i0 + block && i < m; ++i)
                for (std::size_t j = j0; j < j0 + block && j < n; ++j)
                    out[j * ldo + i] = in[i * ldi + j];
}

// c[m x n] (+)= a[m x k] * b[n x k]^T, via an explicit transpose of b.
template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n,
             const T* a, std::size_t lda,
             const T* b, std::size_t ldb,
             T* c, std::size_t ldc, bool accumulate)
{
    T* bt = detail::scratch<T>(k * n, 1);
    transpose(n, k, b, ldb, bt, n);
    gemm_nn(m, k, n, a, lda, bt, n, c, ldc, accumulate);
}

}  // namespace leviathan::kernels
