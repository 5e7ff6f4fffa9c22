#pragma once

// Small dense kernels for the network passes. Every output element is summed
// in a fixed order that depends only on the shapes, never on buffer alignment,
// so training is bitwise reproducible.

#include <cstddef>

namespace cnncausal::nn::kernels {

// Four doubles; GCC/Clang vector extension so the register tile does not
// depend on the auto-vectorizer.
typedef double v4d __attribute__((vector_size(32)));

inline v4d load4(const double* p) {
    v4d v;
    __builtin_memcpy(&v, p, sizeof v);
    return v;
}
inline void store4(double* p, v4d v) { __builtin_memcpy(p, &v, sizeof v); }

/// C (m x n) += A (m x k) · B (k x n). Row-major, leading dimensions lda, ldb, ldc.
inline void gemm_nn(const double* A, std::size_t lda, const double* B, std::size_t ldb, double* C,
                    std::size_t ldc, std::size_t m, std::size_t k, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const double* a0 = A + i * lda;
        const double* a1 = a0 + lda;
        const double* a2 = a1 + lda;
        const double* a3 = a2 + lda;
        double* c0 = C + i * ldc;
        double* c1 = c0 + ldc;
        double* c2 = c1 + ldc;
        double* c3 = c2 + ldc;
        std::size_t j = 0;
        for (; j + 8 <= n; j += 8) {
            v4d x0 = load4(c0 + j), y0 = load4(c0 + j + 4);
            v4d x1 = load4(c1 + j), y1 = load4(c1 + j + 4);
            v4d x2 = load4(c2 + j), y2 = load4(c2 + j + 4);
            v4d x3 = load4(c3 + j), y3 = load4(c3 + j + 4);
            for (std::size_t p = 0; p < k; ++p) {
                const v4d b0 = load4(B + p * ldb + j), b1 = load4(B + p * ldb + j + 4);
                const double s0 = a0[p], s1 = a1[p], s2 = a2[p], s3 = a3[p];
                x0 += s0 * b0;
                y0 += s0 * b1;
                x1 += s1 * b0;
                y1 += s1 * b1;
                x2 += s2 * b0;
                y2 += s2 * b1;
                x3 += s3 * b0;
                y3 += s3 * b1;
            }
            store4(c0 + j, x0), store4(c0 + j + 4, y0);
            store4(c1 + j, x1), store4(c1 + j + 4, y1);
            store4(c2 + j, x2), store4(c2 + j + 4, y2);
            store4(c3 + j, x3), store4(c3 + j + 4, y3);
        }
        for (; j < n; ++j) {
            double s0 = c0[j], s1 = c1[j], s2 = c2[j], s3 = c3[j];
            for (std::size_t p = 0; p < k; ++p) {
                const double b = B[p * ldb + j];
                s0 += a0[p] * b;
                s1 += a1[p] * b;
                s2 += a2[p] * b;
                s3 += a3[p] * b;
            }
            c0[j] = s0, c1[j] = s1, c2[j] = s2, c3[j] = s3;
        }
    }
    for (; i < m; ++i) {
        const double* a = A + i * lda;
        double* c = C + i * ldc;
        for (std::size_t p = 0; p < k; ++p) {
            const double ap = a[p];
            const double* b = B + p * ldb;
            for (std::size_t j = 0; j < n; ++j) c[j] += ap * b[j];
        }
    }
}

/// C (m x k) += A (m x n) · B (k x n)ᵀ, i.e. row-by-row dot products.
inline void gemm_nt(const double* A, std::size_t lda, const double* B, std::size_t ldb, double* C,
                    std::size_t ldc, std::size_t m, std::size_t k, std::size_t n) {
    // Lane sums in a fixed order, then the tail.
    auto finish = [n](v4d acc, const double* a, const double* b, std::size_t j0) {
        double s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
        for (std::size_t j = j0; j < n; ++j) s += a[j] * b[j];
        return s;
    };
    const std::size_t n4 = n - n % 4;
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
        const double* a0 = A + i * lda;
        const double* a1 = a0 + lda;
        std::size_t q = 0;
        for (; q + 4 <= k; q += 4) {
            const double* b0 = B + q * ldb;
            const double* b1 = b0 + ldb;
            const double* b2 = b1 + ldb;
            const double* b3 = b2 + ldb;
            v4d s00{}, s01{}, s02{}, s03{}, s10{}, s11{}, s12{}, s13{};
            for (std::size_t j = 0; j < n4; j += 4) {
                const v4d x0 = load4(a0 + j), x1 = load4(a1 + j);
                const v4d y0 = load4(b0 + j), y1 = load4(b1 + j), y2 = load4(b2 + j), y3 = load4(b3 + j);
                s00 += x0 * y0, s01 += x0 * y1, s02 += x0 * y2, s03 += x0 * y3;
                s10 += x1 * y0, s11 += x1 * y1, s12 += x1 * y2, s13 += x1 * y3;
            }
            double* c0 = C + i * ldc + q;
            double* c1 = c0 + ldc;
            c0[0] += finish(s00, a0, b0, n4), c0[1] += finish(s01, a0, b1, n4);
            c0[2] += finish(s02, a0, b2, n4), c0[3] += finish(s03, a0, b3, n4);
            c1[0] += finish(s10, a1, b0, n4), c1[1] += finish(s11, a1, b1, n4);
            c1[2] += finish(s12, a1, b2, n4), c1[3] += finish(s13, a1, b3, n4);
        }
        for (; q < k; ++q) {
            const double* b = B + q * ldb;
            v4d s0{}, s1{};
            for (std::size_t j = 0; j < n4; j += 4) {
                const v4d y = load4(b + j);
                s0 += load4(a0 + j) * y, s1 += load4(a1 + j) * y;
            }
            C[i * ldc + q] += finish(s0, a0, b, n4);
            C[(i + 1) * ldc + q] += finish(s1, a1, b, n4);
        }
    }
    for (; i < m; ++i) {
        const double* a = A + i * lda;
        for (std::size_t q = 0; q < k; ++q) {
            const double* b = B + q * ldb;
            v4d s{};
            for (std::size_t j = 0; j < n4; j += 4) s += load4(a + j) * load4(b + j);
            C[i * ldc + q] += finish(s, a, b, n4);
        }
    }
}

/// y[r] += Σ_j A[r][j] over each of m rows of length n.
inline void row_sums(const double* A, std::size_t lda, double* y, std::size_t m, std::size_t n) {
    const std::size_t n4 = n - n % 4;
    for (std::size_t r = 0; r < m; ++r) {
        const double* a = A + r * lda;
        v4d acc{};
        for (std::size_t j = 0; j < n4; j += 4) acc += load4(a + j);
        double s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
        for (std::size_t j = n4; j < n; ++j) s += a[j];
        y[r] += s;
    }
}

}  // namespace cnncausal::nn::kernels
