#include "beergame/rng.hpp"

namespace beergame {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view label,
                          std::initializer_list<std::uint64_t> indices) {
  std::uint64_t h = mix64(base);
  for (unsigned char c : label) h = mix64(h ^ c);
  for (std::uint64_t i : indices) h = mix64(h ^ (i + 0x9e3779b97f4a7c15ULL));
  return h;
}

}  // namespace beergame
