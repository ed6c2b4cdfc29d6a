#pragma once

// Data-parallel inner loops with a scalar reference and SIMD variants.
//
// Every SIMD variant vectorizes across independent output elements and keeps
// the scalar accumulation order, so all backends produce identical bits.

#include <cstddef>
#include <span>
#include <string_view>

namespace netmix::kernels {

enum class Backend { scalar, avx2, neon };

std::string_view backend_name(Backend b);
bool backend_available(Backend b);

/// Backend used by the dispatching entry points below. Defaults to the best
/// available one; NETMIX_SIMD=scalar in the environment forces the reference.
Backend active_backend();

/// Accepts "auto", "scalar", "avx2" or "neon". Throws std::invalid_argument
/// for unknown or unavailable backends.
void select_backend(std::string_view name);

// gram(i, j) += sum_r w[r] * a(r, i) * a(r, j) for j >= i.
// rows: n_rows rows of n_cols values, row r starting at r * stride.
// gram: n_cols x n_cols row-major; only the upper triangle is touched.
void weighted_gram_upper(std::span<const double> rows, std::size_t n_rows,
                         std::size_t n_cols, std::size_t stride,
                         std::span<const double> w, std::span<double> gram);

// dst[j] = min(dst[j], offset + src[j])
void min_plus_relax(std::span<double> dst, std::span<const double> src, double offset);

// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);

/// Raw entry points of one backend, for equivalence testing and benchmarks.
struct KernelTable {
  void (*weighted_gram_upper)(const double* rows, std::size_t n_rows, std::size_t n_cols,
                              std::size_t stride, const double* w, double* gram);
  void (*min_plus_relax)(double* dst, const double* src, double offset, std::size_t n);
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
};

/// Throws std::invalid_argument if the backend is not available here.
const KernelTable& table(Backend b);

}  // namespace netmix::kernels
