#include "backends.hpp"

namespace netmix::kernels::scalar {

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
      for (std::size_t j = i; j < n_cols; ++j) g[j] = g[j] + s * a[j];
    }
  }
}

void min_plus_relax(double* dst, const double* src, double offset, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    const double cand = offset + src[j];
    dst[j] = cand < dst[j] ? cand : dst[j];
  }
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) y[j] = y[j] + a * x[j];
}

}  // namespace netmix::kernels::scalar
