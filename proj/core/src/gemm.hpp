#pragma once

#include <algorithm>
#include <cstddef>

namespace clci::detail {

// C[m x n] += A[m x k] * B[k x n], all row-major and densely packed.
//
// Every C element accumulates its k products in ascending k order regardless
// of blocking, which keeps results bit-identical across block sizes.
template <typename T>
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k, const T* a,
                     const T* b, T* c) {
  constexpr std::size_t kColBlock = 512;
  for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
    const std::size_t j1 = std::min(n, j0 + kColBlock);
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      T* c0 = c + (i + 0) * n;
      T* c1 = c + (i + 1) * n;
      T* c2 = c + (i + 2) * n;
      T* c3 = c + (i + 3) * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T a0 = a[(i + 0) * k + p];
        const T a1 = a[(i + 1) * k + p];
        const T a2 = a[(i + 2) * k + p];
        const T a3 = a[(i + 3) * k + p];
        const T* brow = b + p * n;
        for (std::size_t j = j0; j < j1; ++j) {
          const T bv = brow[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    }
    for (; i < m; ++i) {
      T* ci = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a[i * k + p];
        const T* brow = b + p * n;
        for (std::size_t j = j0; j < j1; ++j) ci[j] += av * brow[j];
      }
    }
  }
}

// dst[cols x rows] = transpose(src[rows x cols]).
template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    const std::size_t r1 = std::min(rows, r0 + kTile);
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t cc = c0; cc < c1; ++cc) {
          dst[cc * rows + r] = src[r * cols + cc];
        }
      }
    }
  }
}

}  // namespace clci::detail
