#pragma once

#include <cstddef>

namespace netmix::kernels {

#define NETMIX_DECLARE_BACKEND(ns)                                                              \
  namespace ns {                                                                                \
  void weighted_gram_upper(const double* rows, std::size_t n_rows, std::size_t n_cols,          \
                           std::size_t stride, const double* w, double* gram);                  \
  void min_plus_relax(double* dst, const double* src, double offset, std::size_t n);            \
  void axpy(double a, const double* x, double* y, std::size_t n);                               \
  }

NETMIX_DECLARE_BACKEND(scalar)
NETMIX_DECLARE_BACKEND(avx2)
NETMIX_DECLARE_BACKEND(neon)

#undef NETMIX_DECLARE_BACKEND

}  // namespace netmix::kernels
