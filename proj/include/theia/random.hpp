#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace theia {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// FNV-1a over the bytes of `text`.
std::uint64_t fnv1a64(std::string_view text) noexcept;

/// Stable 64-bit hash of (text, salt); identical on every platform.
std::uint64_t hash64(std::string_view text, std::uint64_t salt) noexcept;

/// Maps a 64-bit value to [0, 1) using its top 53 bits.
double unit_fraction(std::uint64_t h) noexcept;

/// Unbiased index in [0, n). Only depends on the raw engine output, so results
/// do not vary between standard library implementations.
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Uniform real in [0, 1), engine-output based for the same reason.
double uniform_real(Rng& rng);

/// Derives a child seed; used to give every component its own stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

}  // namespace theia
