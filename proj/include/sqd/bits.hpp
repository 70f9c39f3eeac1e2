// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Occupation bitstrings for Slater determinants.
 *
 * A determinant is stored as two 64-bit masks, one per spin sector; bit p of
 * a mask is the occupancy of spatial orbital p. Creation operators are ordered
 * with all alpha operators before all beta operators, ascending orbital index
 * within each sector. Every fermionic sign in the project follows from that.
 */

#include <algorithm>
#include <bit>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "sqd/error.hpp"

namespace sqd {

using Mask = std::uint64_t;

inline constexpr int kMaxOrbitals = 64;

struct SystemSpec {
  int n_orb = 0;
  int n_alpha = 0;
  int n_beta = 0;

  constexpr bool valid() const {
    return n_orb >= 0 && n_alpha >= 0 && n_beta >= 0 && n_alpha <= n_orb && n_beta <= n_orb;
  }
  constexpr int n_electrons() const { return n_alpha + n_beta; }
  constexpr auto operator<=>(const SystemSpec&) const = default;
};

inline void validate(const SystemSpec& spec) {
  require(spec.valid(), "invalid system: n_orb=" + std::to_string(spec.n_orb) +
                            " n_alpha=" + std::to_string(spec.n_alpha) +
                            " n_beta=" + std::to_string(spec.n_beta));
}

struct HalfConfiguration {
  Mask bits = 0;

  constexpr int popcount() const { return std::popcount(bits); }
  constexpr bool occupied(int p) const { return (bits >> p) & 1U; }
  constexpr auto operator<=>(const HalfConfiguration&) const = default;
};

struct Configuration {
  HalfConfiguration alpha;
  HalfConfiguration beta;

  constexpr auto operator<=>(const Configuration&) const = default;
};

constexpr Mask low_mask(int n) { return n >= 64 ? ~Mask{0} : (Mask{1} << n) - 1; }

/// Number of set bits strictly between orbitals a and b (order irrelevant).
constexpr int bits_between(Mask m, int a, int b) {
  if (a > b) std::swap(a, b);
  if (b - a <= 1) return 0;
  return std::popcount(m & low_mask(b) & ~low_mask(a + 1));
}

/// Fermionic sign of a^dagger_p a_r acting on a mask with r occupied.
constexpr double single_excitation_sign(Mask m, int r, int p) {
  return (bits_between(m, r, p) & 1) ? -1.0 : 1.0;
}

/// Occupied orbital indices of a mask, ascending.
inline std::vector<int> occupied_orbitals(Mask m) {
  std::vector<int> out;
  out.reserve(std::popcount(m));
  while (m) {
    out.push_back(std::countr_zero(m));
    m &= m - 1;
  }
  return out;
}

inline Configuration hf_configuration(const SystemSpec& spec) {
  validate(spec);
  require(spec.n_orb <= kMaxOrbitals, "bitstring width limited to 64 orbitals");
  return {{low_mask(spec.n_alpha)}, {low_mask(spec.n_beta)}};
}

// Text form: orbital 0 leftmost.
inline std::string to_bitstring(Mask m, int n_orb) {
  std::string s(static_cast<std::size_t>(n_orb), '0');
  for (int p = 0; p < n_orb; ++p)
    if ((m >> p) & 1U) s[static_cast<std::size_t>(p)] = '1';
  return s;
}

inline std::string to_bitstring(const Configuration& c, int n_orb) {
  return to_bitstring(c.alpha.bits, n_orb) + to_bitstring(c.beta.bits, n_orb);
}

inline Mask mask_from_bitstring(std::string_view s) {
  if (s.size() > kMaxOrbitals) throw ParseError("bitstring longer than 64 orbitals: " + std::string(s));
  Mask m = 0;
  for (std::size_t p = 0; p < s.size(); ++p) {
    if (s[p] == '1')
      m |= Mask{1} << p;
    else if (s[p] != '0')
      throw ParseError("invalid bitstring character in '" + std::string(s) + "'");
  }
  return m;
}

inline Configuration configuration_from_bitstring(std::string_view s, int n_orb) {
  if (s.size() != static_cast<std::size_t>(2 * n_orb))
    throw ParseError("expected " + std::to_string(2 * n_orb) + " bits, got '" + std::string(s) + "'");
  return {{mask_from_bitstring(s.substr(0, n_orb))}, {mask_from_bitstring(s.substr(n_orb))}};
}

}  // namespace sqd

template <>
struct std::hash<sqd::Configuration> {
  std::size_t operator()(const sqd::Configuration& c) const noexcept {
    std::uint64_t h = c.alpha.bits * 0x9E3779B97F4A7C15ULL;
    h ^= c.beta.bits + 0x7F4A7C159E3779B9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};
