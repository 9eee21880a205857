#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dagan {

using Rng = std::mt19937_64;

// Independent seed for a named stream ("simulate", "init", "shuffle", ...)
// derived from the experiment's root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);

inline Rng make_rng(std::uint64_t root, std::string_view stream) {
  return Rng(derive_seed(root, stream));
}

// Uniform double in [0, 1) built from 53 random bits, independent of the
// standard library's distribution implementations.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace dagan
