// SPDX-License-Identifier: Apache-2.0
#pragma once

// Exact determinant-space sizes and the combinatorial number system used to
// address half-configurations in dense vectors.

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "sqd/bits.hpp"
#include "sqd/error.hpp"

namespace sqd {

using u128 = unsigned __int128;

/// Exact non-negative count; wraps a 128-bit integer with checked arithmetic.
class ExactCount {
 public:
  constexpr ExactCount() = default;
  constexpr explicit ExactCount(u128 v) : value_(v) {}

  constexpr u128 value() const { return value_; }

  friend ExactCount checked_mul(ExactCount a, ExactCount b) {
    if (a.value_ != 0 && b.value_ > ~u128{0} / a.value_)
      throw OverflowError("exact count exceeds 128 bits");
    return ExactCount(a.value_ * b.value_);
  }

  std::string str() const {
    if (value_ == 0) return "0";
    std::string s;
    for (u128 v = value_; v != 0; v /= 10) s.insert(s.begin(), static_cast<char>('0' + static_cast<int>(v % 10)));
    return s;
  }

  double to_double() const { return static_cast<double>(value_); }

  /// Fits into size_t (for allocation decisions).
  bool fits_size() const { return value_ <= static_cast<u128>(SIZE_MAX); }

  constexpr auto operator<=>(const ExactCount&) const = default;

 private:
  u128 value_ = 0;
};

inline ExactCount binomial(int n, int k) {
  if (k < 0 || k > n) return ExactCount(0);
  if (k > n - k) k = n - k;
  u128 r = 1;
  for (int i = 0; i < k; ++i) {
    // r * (n - i) is divisible by (i + 1); guard the intermediate product.
    const u128 f = static_cast<u128>(n - i);
    if (r > ~u128{0} / f) throw OverflowError("binomial(" + std::to_string(n) + "," + std::to_string(k) + ") overflows");
    r = r * f / static_cast<u128>(i + 1);
  }
  return ExactCount(r);
}

inline ExactCount hilbert_dimension(const SystemSpec& spec) {
  validate(spec);
  return checked_mul(binomial(spec.n_orb, spec.n_alpha), binomial(spec.n_orb, spec.n_beta));
}

/// Table of binomial coefficients C(n, k) for n <= 64, used by rank/unrank.
class BinomialTable {
 public:
  BinomialTable() {
    for (int n = 0; n <= kMaxOrbitals; ++n) {
      table_[n][0] = 1;
      for (int k = 1; k <= n; ++k)
        table_[n][k] = table_[n - 1][k - 1] + (k <= n - 1 ? table_[n - 1][k] : 0);
    }
  }
  std::uint64_t operator()(int n, int k) const {
    if (k < 0 || n < 0 || k > n) return 0;
    return table_[n][k];
  }

 private:
  std::uint64_t table_[kMaxOrbitals + 1][kMaxOrbitals + 1] = {};
};

inline const BinomialTable& binomials() {
  static const BinomialTable t;
  return t;
}

/// Rank of a mask among all masks of n_orb bits with n_elec bits set,
/// ordered by numeric value (lexicographic on the bitmask).
inline std::uint64_t rank_half(HalfConfiguration h, int n_orb, int n_elec) {
  require(n_orb <= kMaxOrbitals && (n_orb == 64 || (h.bits >> n_orb) == 0), "half-configuration exceeds n_orb bits");
  require(h.popcount() == n_elec, "rank_half: popcount " + std::to_string(h.popcount()) +
                                      " does not match electron count " + std::to_string(n_elec));
  const auto& c = binomials();
  std::uint64_t r = 0;
  int i = 0;
  for (Mask m = h.bits; m; m &= m - 1, ++i) r += c(std::countr_zero(m), i + 1);
  return r;
}

inline HalfConfiguration unrank_half(std::uint64_t index, int n_orb, int n_elec) {
  require(n_elec >= 0 && n_elec <= n_orb && n_orb <= kMaxOrbitals, "unrank_half: invalid sector");
  const auto& c = binomials();
  require(index < c(n_orb, n_elec), "unrank_half: index out of range");
  Mask m = 0;
  int pos = n_orb - 1;
  for (int k = n_elec; k >= 1; --k) {
    while (c(pos, k) > index) --pos;
    index -= c(pos, k);
    m |= Mask{1} << pos;
    --pos;
  }
  return {m};
}

/// All masks of the sector in rank order.
inline std::vector<Mask> all_halves(int n_orb, int n_elec) {
  const auto count = binomials()(n_orb, n_elec);
  std::vector<Mask> out;
  out.reserve(count);
  if (n_elec == 0) {
    out.push_back(0);
    return out;
  }
  // Gosper's hack enumerates fixed-popcount masks in increasing order.
  Mask m = low_mask(n_elec);
  for (std::uint64_t i = 0; i < count; ++i) {
    out.push_back(m);
    const Mask lo = m & (~m + 1);
    const Mask r = m + lo;
    m = r == 0 ? 0 : (((r ^ m) >> 2) / lo) | r;
  }
  return out;
}

}  // namespace sqd
