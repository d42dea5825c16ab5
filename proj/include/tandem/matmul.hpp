#pragma once

#include <algorithm>
#include <cstddef>

namespace tandem::detail {

/// C (m x n) = A (m x k) * B (k x n), all row-major. With accumulate, adds
/// into C instead of overwriting. Output rows are processed four at a time so
/// each B row read from L1 feeds four independent FMA chains; the j-loops over
/// contiguous rows are the vectorization target.
template <typename T>
void gemm(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b,
          T* c, bool accumulate = false) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    T* __restrict c0 = c + (i + 0) * n;
    T* __restrict c1 = c + (i + 1) * n;
    T* __restrict c2 = c + (i + 2) * n;
    T* __restrict c3 = c + (i + 3) * n;
    const T* a0 = a + (i + 0) * k;
    const T* a1 = a + (i + 1) * k;
    const T* a2 = a + (i + 2) * k;
    const T* a3 = a + (i + 3) * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
      const T* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T bj = brow[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
  }
  for (; i < m; ++i) {
    T* __restrict crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// C (m x n) = A^T * B where A is (k x m) and B is (k x n), row-major.
/// The four A values per step are contiguous in A's row p.
template <typename T>
void gemm_at_b(std::size_t m, std::size_t k, std::size_t n, const T* a,
               const T* b, T* c, bool accumulate = false) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* __restrict brow = b + p * n;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      const T v0 = arow[i + 0], v1 = arow[i + 1], v2 = arow[i + 2],
              v3 = arow[i + 3];
      T* __restrict c0 = c + (i + 0) * n;
      T* __restrict c1 = c + (i + 1) * n;
      T* __restrict c2 = c + (i + 2) * n;
      T* __restrict c3 = c + (i + 3) * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T bj = brow[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
    for (; i < m; ++i) {
      const T av = arow[i];
      T* __restrict crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// dst (n x m) = src (m x n) transposed.
template <typename T>
void transpose(std::size_t m, std::size_t n, const T* src, T* dst) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  }
}

}  // namespace tandem::detail
