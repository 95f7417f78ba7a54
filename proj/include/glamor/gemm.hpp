#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <vector>

namespace glamor {

// C[M,N] (+)= A[M,K] * B[K,N], all row-major with the given leading strides.
// Blocked so that the active C rows and one B row tile stay cache-resident;
// the contiguous j loop is what the compiler vectorizes.
template <class T>
void gemm_nn(int64_t m, int64_t n, int64_t k, const T* a, int64_t lda, const T* b, int64_t ldb,
             T* c, int64_t ldc, bool accumulate) {
    if (!accumulate)
        for (int64_t i = 0; i < m; ++i)
            std::fill(c + i * ldc, c + i * ldc + n, T(0));

    constexpr int64_t JT = 1024; // j tile, floats: 4KB per C row
    constexpr int64_t IU = 4;    // C rows updated per pass over a B tile

    for (int64_t j0 = 0; j0 < n; j0 += JT) {
        const int64_t j1 = std::min(j0 + JT, n);
        int64_t i = 0;
        for (; i + IU <= m; i += IU) {
            T* c0 = c + (i + 0) * ldc;
            T* c1 = c + (i + 1) * ldc;
            T* c2 = c + (i + 2) * ldc;
            T* c3 = c + (i + 3) * ldc;
            for (int64_t kk = 0; kk < k; ++kk) {
                const T a0 = a[(i + 0) * lda + kk];
                const T a1 = a[(i + 1) * lda + kk];
                const T a2 = a[(i + 2) * lda + kk];
                const T a3 = a[(i + 3) * lda + kk];
                const T* br = b + kk * ldb;
                for (int64_t j = j0; j < j1; ++j) {
                    const T bv = br[j];
                    c0[j] += a0 * bv;
                    c1[j] += a1 * bv;
                    c2[j] += a2 * bv;
                    c3[j] += a3 * bv;
                }
            }
        }
        for (; i < m; ++i) {
            T* cr = c + i * ldc;
            for (int64_t kk = 0; kk < k; ++kk) {
                const T av = a[i * lda + kk];
                const T* br = b + kk * ldb;
                for (int64_t j = j0; j < j1; ++j)
                    cr[j] += av * br[j];
            }
        }
    }
}

template <class T>
void gemm_nn(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c, bool accumulate) {
    gemm_nn(m, n, k, a, k, b, n, c, n, accumulate);
}

// out[N,M] = transpose of a[M,N].
template <class T>
void transpose(int64_t m, int64_t n, const T* a, T* out) {
    constexpr int64_t BT = 32;
    for (int64_t i0 = 0; i0 < m; i0 += BT)
        for (int64_t j0 = 0; j0 < n; j0 += BT) {
            const int64_t i1 = std::min(i0 + BT, m);
            const int64_t j1 = std::min(j0 + BT, n);
            for (int64_t i = i0; i < i1; ++i)
                for (int64_t j = j0; j < j1; ++j)
                    out[j * m + i] = a[i * n + j];
        }
}

} // namespace glamor
