#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace fedrg {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// Sub-seed for one (component, client, round) stream of a run. All randomness
// in a run is derived from the manifest's master seed through this function.
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view component,
                          std::uint64_t client_id = 0, std::uint64_t round = 0);

inline Rng make_rng(std::uint64_t master_seed, std::string_view component,
                    std::uint64_t client_id = 0, std::uint64_t round = 0) {
  return Rng(derive_seed(master_seed, component, client_id, round));
}

// Uniform double in [0, 1) from the top 53 bits; identical across platforms,
// unlike std::uniform_real_distribution.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Fisher-Yates driven by uniform01, so orderings do not depend on the
// standard library's shuffle implementation.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    if (j >= i) j = i - 1;
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace fedrg
