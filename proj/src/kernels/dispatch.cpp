#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "netmix/kernels.hpp"

#include "backends.hpp"

namespace netmix::kernels {

namespace {

Backend detect_best() {
#if defined(NETMIX_HAVE_AVX2)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2")) return Backend::avx2;
#endif
#if defined(NETMIX_HAVE_NEON)
  return Backend::neon;
#endif
  return Backend::scalar;
}

Backend initial_backend() {
  if (const char* env = std::getenv("NETMIX_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Backend::scalar;
    if (v == "avx2" && backend_available(Backend::avx2)) return Backend::avx2;
    if (v == "neon" && backend_available(Backend::neon)) return Backend::neon;
  }
  return detect_best();
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> b{initial_backend()};
  return b;
}

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "unknown";
}

bool backend_available(Backend b) {
  switch (b) {
    case Backend::scalar: return true;
    case Backend::avx2:
#if defined(NETMIX_HAVE_AVX2)
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Backend::neon:
#if defined(NETMIX_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void select_backend(std::string_view name) {
  Backend b;
  if (name == "auto") {
    b = detect_best();
  } else if (name == "scalar") {
    b = Backend::scalar;
  } else if (name == "avx2") {
    b = Backend::avx2;
  } else if (name == "neon") {
    b = Backend::neon;
  } else {
    throw std::invalid_argument("unknown SIMD backend '" + std::string(name) + "'");
  }
  if (!backend_available(b))
    throw std::invalid_argument("SIMD backend '" + std::string(name) + "' is not available on this machine");
  current().store(b, std::memory_order_relaxed);
}

const KernelTable& table(Backend b) {
  static const KernelTable scalar_table{scalar::weighted_gram_upper, scalar::min_plus_relax, scalar::axpy};
#if defined(NETMIX_HAVE_AVX2)
  static const KernelTable avx2_table{avx2::weighted_gram_upper, avx2::min_plus_relax, avx2::axpy};
#endif
#if defined(NETMIX_HAVE_NEON)
  static const KernelTable neon_table{neon::weighted_gram_upper, neon::min_plus_relax, neon::axpy};
#endif
  if (!backend_available(b))
    throw std::invalid_argument("SIMD backend '" + std::string(backend_name(b)) + "' is not available");
  switch (b) {
#if defined(NETMIX_HAVE_AVX2)
    case Backend::avx2: return avx2_table;
#endif
#if defined(NETMIX_HAVE_NEON)
    case Backend::neon: return neon_table;
#endif
    default: return scalar_table;
  }
}

namespace {
const KernelTable& active_table() { return table(active_backend()); }
}  // namespace

void weighted_gram_upper(std::span<const double> rows, std::size_t n_rows,
                         std::size_t n_cols, std::size_t stride,
                         std::span<const double> w, std::span<double> gram) {
  if (n_rows == 0 || n_cols == 0) return;
  if (w.size() < n_rows || gram.size() < n_cols * n_cols ||
      rows.size() < (n_rows - 1) * stride + n_cols)
    throw std::invalid_argument("weighted_gram_upper: buffer too small");
  active_table().weighted_gram_upper(rows.data(), n_rows, n_cols, stride, w.data(), gram.data());
}

void min_plus_relax(std::span<double> dst, std::span<const double> src, double offset) {
  if (src.size() < dst.size()) throw std::invalid_argument("min_plus_relax: size mismatch");
  active_table().min_plus_relax(dst.data(), src.data(), offset, dst.size());
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  if (x.size() < y.size()) throw std::invalid_argument("axpy: size mismatch");
  active_table().axpy(a, x.data(), y.data(), y.size());
}

}  // namespace netmix::kernels
