#include "fedrg/rng.hpp"

namespace fedrg {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view component,
                          std::uint64_t client_id, std::uint64_t round) {
  // FNV-1a over the component name, then splitmix chaining of each field.
  std::uint64_t name_hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : component) {
    name_hash ^= c;
    name_hash *= 0x100000001b3ULL;
  }
  std::uint64_t h = splitmix64(master_seed);
  h = splitmix64(h ^ name_hash);
  h = splitmix64(h ^ client_id);
  h = splitmix64(h ^ round);
  return h;
}

}  // namespace fedrg
