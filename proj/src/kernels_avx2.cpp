#include "ozcal/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__)
#include <immintrin.h>

namespace ozcal::kernels {

namespace {

// 4-wide lanes, k-inner accumulation in the same order as the scalar
// reference. _mm256_mul_pd + _mm256_add_pd (never FMA) keeps each lane's
// rounding identical to the scalar loop.
void weighted_sum_avx2(double* out, const double* base, std::size_t n,
                       const double* const* terms, const double* weights,
                       std::size_t n_terms) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d acc = _mm256_loadu_pd(base + i);
    for (std::size_t k = 0; k < n_terms; ++k) {
      const __m256d w = _mm256_set1_pd(weights[k]);
      const __m256d t = _mm256_loadu_pd(terms[k] + i);
      acc = _mm256_add_pd(acc, _mm256_mul_pd(w, t));
    }
    _mm256_storeu_pd(out + i, acc);
  }
  for (; i < n; ++i) {
    double acc = base[i];
    for (std::size_t k = 0; k < n_terms; ++k) {
      acc += weights[k] * terms[k][i];
    }
    out[i] = acc;
  }
}

}  // namespace

WeightedSumFn avx2_kernel() {
  if (__builtin_cpu_supports("avx2")) return weighted_sum_avx2;
  return nullptr;
}

}  // namespace ozcal::kernels

#else

namespace ozcal::kernels {

WeightedSumFn avx2_kernel() { return nullptr; }

}  // namespace ozcal::kernels

#endif
