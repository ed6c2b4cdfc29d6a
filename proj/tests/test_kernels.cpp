#include <cstring>
#include <limits>
#include <stdexcept>
#include <random>
#include <vector>

#include "doctest.h"
#include "netmix/kernels.hpp"

using namespace netmix::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("scalar gram matches a naive triple loop") {
  std::mt19937_64 rng(3);
  const std::size_t rows = 13, cols = 7, stride = 9;
  auto a = random_vec(rows * stride, rng);
  auto w = random_vec(rows, rng);
  std::vector<double> g(cols * cols, 0.0);
  table(Backend::scalar).weighted_gram_upper(a.data(), rows, cols, stride, w.data(), g.data());
  for (std::size_t i = 0; i < cols; ++i)
    for (std::size_t j = i; j < cols; ++j) {
      double s = 0;
      for (std::size_t r = 0; r < rows; ++r) s += w[r] * a[r * stride + i] * a[r * stride + j];
      CHECK(g[i * cols + j] == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("SIMD kernels are bitwise identical to the scalar reference") {
  const auto& ref_k = table(Backend::scalar);
  int checked = 0;
  for (Backend b : {Backend::avx2, Backend::neon}) {
    if (!backend_available(b)) continue;
    ++checked;
    const auto& k = table(b);
    std::mt19937_64 rng(11);
    for (std::size_t cols : {1u, 3u, 4u, 5u, 8u, 17u, 38u, 99u}) {
      const std::size_t rows = 37, stride = cols + 2;
      auto a = random_vec(rows * stride, rng);
      auto w = random_vec(rows, rng);
      w[3] = 0.0;
      a[5] = 0.0;
      std::vector<double> ref(cols * cols, 0.25), simd(cols * cols, 0.25);
      ref_k.weighted_gram_upper(a.data(), rows, cols, stride, w.data(), ref.data());
      k.weighted_gram_upper(a.data(), rows, cols, stride, w.data(), simd.data());
      CHECK(same_bits(ref, simd));

      auto d_ref = random_vec(cols, rng);
      d_ref[0] = std::numeric_limits<double>::infinity();
      auto d_simd = d_ref;
      auto src = random_vec(cols, rng);
      if (cols > 2) src[2] = std::numeric_limits<double>::infinity();
      ref_k.min_plus_relax(d_ref.data(), src.data(), 0.3, cols);
      k.min_plus_relax(d_simd.data(), src.data(), 0.3, cols);
      CHECK(same_bits(d_ref, d_simd));

      auto y_ref = random_vec(cols, rng);
      auto y_simd = y_ref;
      ref_k.axpy(-1.7, src.data(), y_ref.data(), cols);
      k.axpy(-1.7, src.data(), y_simd.data(), cols);
      CHECK(same_bits(y_ref, y_simd));
    }
  }
  if (checked == 0) MESSAGE("no SIMD backend on this machine; equivalence not exercised");
}

TEST_CASE("backend selection") {
  const Backend before = active_backend();
  select_backend("scalar");
  CHECK(active_backend() == Backend::scalar);
  CHECK_THROWS_AS(select_backend("sse9"), std::invalid_argument);
  select_backend("auto");
  CHECK(backend_available(active_backend()));
  select_backend(backend_name(before));
}

TEST_CASE("dispatching entry points reject short buffers") {
  std::vector<double> a(4), w(1), g(3);
  CHECK_THROWS_AS(weighted_gram_upper(a, 1, 2, 2, w, g), std::invalid_argument);
}
