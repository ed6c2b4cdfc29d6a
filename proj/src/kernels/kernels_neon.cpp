#include <arm_neon.h>

#include "backends.hpp"

namespace netmix::kernels::neon {

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
      const float64x2_t vs = vdupq_n_f64(s);
      std::size_t j = i;
      for (; j + 2 <= n_cols; j += 2) {
        // separate mul and add; vfmaq would round differently from the scalar path
        const float64x2_t prod = vmulq_f64(vs, vld1q_f64(a + j));
        vst1q_f64(g + j, vaddq_f64(vld1q_f64(g + j), prod));
      }
      for (; j < n_cols; ++j) g[j] = g[j] + s * a[j];
    }
  }
}

void min_plus_relax(double* dst, const double* src, double offset, std::size_t n) {
  const float64x2_t voff = vdupq_n_f64(offset);
  std::size_t j = 0;
  for (; j + 2 <= n; j += 2) {
    const float64x2_t cand = vaddq_f64(voff, vld1q_f64(src + j));
    const float64x2_t cur = vld1q_f64(dst + j);
    const uint64x2_t lt = vcltq_f64(cand, cur);
    vst1q_f64(dst + j, vbslq_f64(lt, cand, cur));
  }
  for (; j < n; ++j) {
    const double cand = offset + src[j];
    dst[j] = cand < dst[j] ? cand : dst[j];
  }
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t j = 0;
  for (; j + 2 <= n; j += 2) {
    const float64x2_t prod = vmulq_f64(va, vld1q_f64(x + j));
    vst1q_f64(y + j, vaddq_f64(vld1q_f64(y + j), prod));
  }
  for (; j < n; ++j) y[j] = y[j] + a * x[j];
}

}  // namespace netmix::kernels::neon
