#include "ozcal/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace ozcal::kernels {

void weighted_sum_scalar(double* out, const double* base, std::size_t n,
                         const double* const* terms, const double* weights,
                         std::size_t n_terms) {
  for (std::size_t i = 0; i < n; ++i) {
    double acc = base[i];
    for (std::size_t k = 0; k < n_terms; ++k) {
      acc += weights[k] * terms[k][i];
    }
    out[i] = acc;
  }
}

namespace {

struct Dispatch {
  WeightedSumFn fn;
  const char* name;
};

Dispatch select() {
  const char* want = std::getenv("OZCAL_KERNEL");
  const WeightedSumFn avx2 = avx2_kernel();
  if (want != nullptr) {
    if (std::strcmp(want, "scalar") == 0) return {weighted_sum_scalar, "scalar"};
    if (std::strcmp(want, "avx2") == 0 && avx2 != nullptr) return {avx2, "avx2"};
  }
  if (avx2 != nullptr) return {avx2, "avx2"};
  return {weighted_sum_scalar, "scalar"};
}

const Dispatch& dispatch() {
  static const Dispatch d = select();
  return d;
}

}  // namespace

void weighted_sum(double* out, const double* base, std::size_t n,
                  const double* const* terms, const double* weights,
                  std::size_t n_terms) {
  dispatch().fn(out, base, n, terms, weights, n_terms);
}

const char* active_kernel() { return dispatch().name; }

}  // namespace ozcal::kernels
