#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace synlab {

using Rng = std::mt19937_64;

/// Stream tags used to carve independent substreams out of one experiment seed.
enum class Stream : std::uint64_t {
  identity = 1,
  nuisance = 2,
  mixup = 3,
  perturb = 4,
  pairs = 5,
  init = 6,
  shuffle = 7,
  domain_mix = 8,
  mapper = 9,
  render = 10,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based derivation: the result depends only on (base, path), never on
/// how many draws other streams have consumed.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t base, Stream s, std::initializer_list<std::uint64_t> path = {}) {
  std::uint64_t h = derive_seed(base, {static_cast<std::uint64_t>(s)});
  for (std::uint64_t p : path) h = derive_seed(h, {p});
  return Rng(h);
}

}  // namespace synlab
