#pragma once

// Dense row-major matrix kernels. Every output element is reduced over the
// inner dimension in ascending order, whatever the row blocking or thread
// split, so results are bitwise reproducible.

#include <cstdint>
#include <vector>

#include "mkdm/parallel.hpp"

namespace mkdm::kernels {

/// C[m×n] (+)= A[m×k] · B[k×n]
template <typename T>
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const T* __restrict a, const T* __restrict b,
             T* __restrict c, bool accumulate) {
  parallel_rows(m, n * k, [=](std::int64_t begin, std::int64_t end) {
    std::int64_t i = begin;
    for (; i + 4 <= end; i += 4) {
      T* __restrict c0 = c + (i + 0) * n;
      T* __restrict c1 = c + (i + 1) * n;
      T* __restrict c2 = c + (i + 2) * n;
      T* __restrict c3 = c + (i + 3) * n;
      if (!accumulate) {
        for (std::int64_t j = 0; j < n; ++j) c0[j] = c1[j] = c2[j] = c3[j] = T{0};
      }
      for (std::int64_t p = 0; p < k; ++p) {
        const T a0 = a[(i + 0) * k + p];
        const T a1 = a[(i + 1) * k + p];
        const T a2 = a[(i + 2) * k + p];
        const T a3 = a[(i + 3) * k + p];
        const T* __restrict bp = b + p * n;
        for (std::int64_t j = 0; j < n; ++j) {
          const T bv = bp[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    }
    for (; i < end; ++i) {
      T* __restrict ci = c + i * n;
      if (!accumulate) {
        for (std::int64_t j = 0; j < n; ++j) ci[j] = T{0};
      }
      for (std::int64_t p = 0; p < k; ++p) {
        const T av = a[i * k + p];
        const T* __restrict bp = b + p * n;
        for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  });
}

template <typename T>
void transpose(std::int64_t rows, std::int64_t cols, const T* __restrict src, T* __restrict dst) {
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
}

/// C[m×n] (+)= A[m×k] · B[n×k]ᵀ
template <typename T>
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c, bool accumulate) {
  std::vector<T> bt(static_cast<std::size_t>(n * k));
  transpose(n, k, b, bt.data());
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

/// C[m×n] (+)= A[k×m]ᵀ · B[k×n]
template <typename T>
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const T* __restrict a, const T* __restrict b,
             T* __restrict c, bool accumulate) {
  parallel_rows(m, n * k, [=](std::int64_t begin, std::int64_t end) {
    if (!accumulate) {
      for (std::int64_t i = begin; i < end; ++i) {
        for (std::int64_t j = 0; j < n; ++j) c[i * n + j] = T{0};
      }
    }
    for (std::int64_t p = 0; p < k; ++p) {
      const T* __restrict bp = b + p * n;
      for (std::int64_t i = begin; i < end; ++i) {
        const T av = a[p * m + i];
        T* __restrict ci = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  });
}

}  // namespace mkdm::kernels
