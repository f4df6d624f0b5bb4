#include "ozcal/rng.hpp"

#include <bit>

#include "ozcal/errors.hpp"

namespace ozcal {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw input_error("uniform_index: n must be positive");
  const std::uint64_t mask = std::bit_ceil(static_cast<std::uint64_t>(n)) - 1;
  for (;;) {
    const std::uint64_t v = next_u64() & mask;
    if (v < n) return static_cast<std::size_t>(v);
  }
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                          std::uint64_t i0, std::uint64_t i1,
                          std::uint64_t i2) {
  std::uint64_t h = splitmix64(master ^ 0x6f7a63616c2d7631ULL);
  for (const char c : stream) {
    h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
  }
  h = splitmix64(h ^ i0);
  h = splitmix64(h ^ i1);
  h = splitmix64(h ^ i2);
  return h;
}

}  // namespace ozcal
