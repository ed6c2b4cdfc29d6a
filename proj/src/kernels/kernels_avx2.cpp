#include <immintrin.h>

#include "backends.hpp"

namespace netmix::kernels::avx2 {

void weighted_gram_upper(const double* rows, std::size_t n_rows, std::size_t n_cols,
                         std::size_t stride, const double* w, double* gram) {
  for (std::size_t r = 0; r < n_rows; ++r) {
    const double* a = rows + r * stride;
    const double wr = w[r];
    if (wr == 0.0) continue;
    for (std::size_t i = 0; i < n_cols; ++i) {
      const double s = wr * a[i];
      if (s == 0.0) continue;
      double* g = gram + i * n_cols;
      const __m256d vs = _mm256_set1_pd(s);
      std::size_t j = i;
      for (; j + 4 <= n_cols; j += 4) {
        const __m256d prod = _mm256_mul_pd(vs, _mm256_loadu_pd(a + j));
        _mm256_storeu_pd(g + j, _mm256_add_pd(_mm256_loadu_pd(g + j), prod));
      }
      for (; j < n_cols; ++j) g[j] = g[j] + s * a[j];
    }
  }
}

void min_plus_relax(double* dst, const double* src, double offset, std::size_t n) {
  const __m256d voff = _mm256_set1_pd(offset);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const __m256d cand = _mm256_add_pd(voff, _mm256_loadu_pd(src + j));
    const __m256d cur = _mm256_loadu_pd(dst + j);
    // cand < cur ? cand : cur, matching the scalar select (NaN keeps cur)
    const __m256d lt = _mm256_cmp_pd(cand, cur, _CMP_LT_OQ);
    _mm256_storeu_pd(dst + j, _mm256_blendv_pd(cur, cand, lt));
  }
  for (; j < n; ++j) {
    const double cand = offset + src[j];
    dst[j] = cand < dst[j] ? cand : dst[j];
  }
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + j));
    _mm256_storeu_pd(y + j, _mm256_add_pd(_mm256_loadu_pd(y + j), prod));
  }
  for (; j < n; ++j) y[j] = y[j] + a * x[j];
}

}  // namespace netmix::kernels::avx2
