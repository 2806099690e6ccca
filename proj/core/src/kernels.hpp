#pragma once

#include <cstdint>
#include <cstring>

// Dense row-major kernels used by the differentiable ops. Every output element
// is accumulated in the same order (start value, then the reduction index in
// ascending order) no matter how rows are blocked, so results for a row never
// depend on how many other rows are processed with it.
namespace sgma::kernels {

typedef double v8d __attribute__((vector_size(64)));

inline v8d load8(const double* p) {
    v8d v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline void store8(double* p, v8d v) { std::memcpy(p, &v, sizeof v); }

template <int R, int V>
inline void micro(const double* a, int64_t lda, const double* b, int64_t ldb, double* c, int64_t ldc, int64_t k,
                  const double* bias, bool accumulate) {
    v8d acc[R][V];
    for (int r = 0; r < R; ++r)
        for (int v = 0; v < V; ++v) acc[r][v] = bias ? load8(bias + 8 * v) : v8d{};
    for (int64_t p = 0; p < k; ++p) {
        v8d bv[V];
        for (int v = 0; v < V; ++v) bv[v] = load8(b + p * ldb + 8 * v);
        for (int r = 0; r < R; ++r) {
            const double s = a[r * lda + p];
            for (int v = 0; v < V; ++v) acc[r][v] += s * bv[v];
        }
    }
    for (int r = 0; r < R; ++r)
        for (int v = 0; v < V; ++v) {
            double* dst = c + r * ldc + 8 * v;
            store8(dst, accumulate ? load8(dst) + acc[r][v] : acc[r][v]);
        }
}

template <int R>
inline void row_block(const double* a, int64_t lda, const double* b, int64_t n, double* c, int64_t k,
                      const double* bias, bool accumulate) {
    int64_t j = 0;
    for (; j + 16 <= n; j += 16) micro<R, 2>(a, lda, b + j, n, c + j, n, k, bias ? bias + j : nullptr, accumulate);
    for (; j + 8 <= n; j += 8) micro<R, 1>(a, lda, b + j, n, c + j, n, k, bias ? bias + j : nullptr, accumulate);
    for (; j < n; ++j)
        for (int r = 0; r < R; ++r) {
            double s = bias ? bias[j] : 0.0;
            for (int64_t p = 0; p < k; ++p) s += a[r * lda + p] * b[p * n + j];
            c[r * n + j] = accumulate ? c[r * n + j] + s : s;
        }
}

/// c[m, n] = bias + a[m, k] * b[k, n]   (accumulate == false; bias may be null)
/// c[m, n] += a[m, k] * b[k, n]         (accumulate == true; bias ignored)
inline void gemm(const double* a, int64_t m, int64_t k, const double* b, int64_t n, double* c, const double* bias,
                 bool accumulate) {
    if (accumulate) bias = nullptr;
    int64_t r = 0;
    for (; r + 4 <= m; r += 4) row_block<4>(a + r * k, k, b, n, c + r * n, k, bias, accumulate);
    switch (m - r) {
        case 3: row_block<3>(a + r * k, k, b, n, c + r * n, k, bias, accumulate); break;
        case 2: row_block<2>(a + r * k, k, b, n, c + r * n, k, bias, accumulate); break;
        case 1: row_block<1>(a + r * k, k, b, n, c + r * n, k, bias, accumulate); break;
        default: break;
    }
}

/// at[cols, rows] = a[rows, cols]^T
inline void transpose(const double* a, int64_t rows, int64_t cols, double* at) {
    constexpr int64_t kBlock = 32;
    for (int64_t r0 = 0; r0 < rows; r0 += kBlock)
        for (int64_t c0 = 0; c0 < cols; c0 += kBlock)
            for (int64_t r = r0; r < r0 + kBlock && r < rows; ++r)
                for (int64_t c = c0; c < c0 + kBlock && c < cols; ++c) at[c * rows + r] = a[r * cols + c];
}

/// Sums the rows of g[rows, n] into out[n].
inline void column_sums(const double* g, int64_t rows, int64_t n, double* out) {
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < n; ++j) out[j] += g[r * n + j];
}

}  // namespace sgma::kernels
