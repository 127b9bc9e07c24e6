#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace beergame {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Derives a child seed from a base seed, a purpose label and a list of
/// indices. The derivation is: h = mix64(base); for each byte c of label,
/// h = mix64(h ^ c); for each index i, h = mix64(h ^ (i + 0x9e3779b97f4a7c15)).
/// External tools can reproduce any stream from this recipe.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label,
                          std::initializer_list<std::uint64_t> indices = {});

inline Rng make_rng(std::uint64_t base, std::string_view label,
                    std::initializer_list<std::uint64_t> indices = {}) {
  return Rng(derive_seed(base, label, indices));
}

}  // namespace beergame
