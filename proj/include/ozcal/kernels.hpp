#pragma once

#include <cstddef>

namespace ozcal::kernels {

// Weighted-term accumulation, the arithmetic inner loop of the surrogate
// model evaluation:
//
//   out[i] = base[i] + sum_k weights[k] * terms[k][i]
//
// Every variant walks the k terms in the same order per element and keeps
// multiply and add separate (no FMA), so scalar and SIMD results are
// bit-identical. out may alias base.
using WeightedSumFn = void (*)(double* out, const double* base, std::size_t n,
                               const double* const* terms,
                               const double* weights, std::size_t n_terms);

/// Portable reference implementation.
void weighted_sum_scalar(double* out, const double* base, std::size_t n,
                         const double* const* terms, const double* weights,
                         std::size_t n_terms);

/// Best available variant, selected once at first use. Honors the
/// OZCAL_KERNEL environment variable ("scalar" or "avx2") as an override.
void weighted_sum(double* out, const double* base, std::size_t n,
                  const double* const* terms, const double* weights,
                  std::size_t n_terms);

/// Name of the variant weighted_sum dispatches to ("scalar" or "avx2").
const char* active_kernel();

/// AVX2 variant, or nullptr when unsupported by the build or the CPU.
WeightedSumFn avx2_kernel();

}  // namespace ozcal::kernels
