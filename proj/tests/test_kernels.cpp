#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "ozcal/kernels.hpp"
#include "ozcal/rng.hpp"

using namespace ozcal;

namespace {

std::vector<double> random_array(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = 200.0 * rng.uniform01() - 100.0;
  return v;
}

}  // namespace

TEST_CASE("scalar kernel matches a straightforward loop") {
  Rng rng(11);
  const std::size_t n = 37;
  const auto base = random_array(n, rng);
  const std::size_t k = 5;
  std::vector<std::vector<double>> terms;
  std::vector<const double*> ptrs;
  std::vector<double> weights;
  for (std::size_t i = 0; i < k; ++i) {
    terms.push_back(random_array(n, rng));
    weights.push_back(2.0 * rng.uniform01() - 1.0);
  }
  for (const auto& t : terms) ptrs.push_back(t.data());

  std::vector<double> out(n);
  kernels::weighted_sum_scalar(out.data(), base.data(), n, ptrs.data(),
                               weights.data(), k);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = base[i];
    for (std::size_t j = 0; j < k; ++j) acc += weights[j] * terms[j][i];
    CHECK(out[i] == acc);
  }
}

TEST_CASE("dispatched kernel is bit-identical to the scalar reference") {
  Rng rng(42);
  // Lengths cover every AVX2 remainder; term counts cover tiny to wide.
  for (const std::size_t n : {0u, 1u, 2u, 3u, 4u, 5u, 7u, 8u, 31u, 64u, 1001u}) {
    for (const std::size_t k : {0u, 1u, 2u, 3u, 9u, 27u}) {
      const auto base = random_array(n, rng);
      std::vector<std::vector<double>> terms;
      std::vector<const double*> ptrs;
      std::vector<double> weights;
      for (std::size_t i = 0; i < k; ++i) {
        terms.push_back(random_array(n, rng));
        weights.push_back(4.0 * rng.uniform01() - 2.0);
      }
      for (const auto& t : terms) ptrs.push_back(t.data());

      std::vector<double> ref(n), got(n);
      kernels::weighted_sum_scalar(ref.data(), base.data(), n, ptrs.data(),
                                   weights.data(), k);
      kernels::weighted_sum(got.data(), base.data(), n, ptrs.data(),
                            weights.data(), k);
      CHECK(got == ref);
    }
  }
}

TEST_CASE("avx2 variant, when present, is bit-identical to scalar") {
  const auto avx2 = kernels::avx2_kernel();
  if (avx2 == nullptr) {
    MESSAGE("AVX2 kernel unavailable on this build/CPU; dispatch is scalar");
    CHECK(std::string(kernels::active_kernel()) == "scalar");
    return;
  }
  Rng rng(7);
  for (const std::size_t n : {1u, 4u, 5u, 8u, 12u, 255u, 4096u}) {
    const auto base = random_array(n, rng);
    const std::size_t k = 27;
    std::vector<std::vector<double>> terms;
    std::vector<const double*> ptrs;
    std::vector<double> weights;
    for (std::size_t i = 0; i < k; ++i) {
      terms.push_back(random_array(n, rng));
      weights.push_back(rng.uniform01());
    }
    for (const auto& t : terms) ptrs.push_back(t.data());

    std::vector<double> ref(n), got(n);
    kernels::weighted_sum_scalar(ref.data(), base.data(), n, ptrs.data(),
                                 weights.data(), k);
    avx2(got.data(), base.data(), n, ptrs.data(), weights.data(), k);
    CHECK(got == ref);
  }
}

TEST_CASE("kernel works in place (out aliases base)") {
  Rng rng(3);
  const std::size_t n = 29;
  auto data = random_array(n, rng);
  const auto base_copy = data;
  const auto term = random_array(n, rng);
  const double* ptr = term.data();
  const double w = 0.75;
  std::vector<double> expect(n);
  kernels::weighted_sum_scalar(expect.data(), base_copy.data(), n, &ptr, &w, 1);
  kernels::weighted_sum(data.data(), data.data(), n, &ptr, &w, 1);
  CHECK(data == expect);
}
