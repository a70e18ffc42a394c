#include "prednext/rng.hpp"

namespace prednext {

namespace {
uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

uint64_t hash_name(std::string_view name) {
  // FNV-1a
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= (uint64_t)(unsigned char)c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RngStream substream(uint64_t seed, std::string_view name) {
  return RngStream(splitmix64(splitmix64(seed) ^ hash_name(name)));
}

}  // namespace prednext
