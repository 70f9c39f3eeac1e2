// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Slater–Condon matrix elements between determinants and the per-sector
 * excitation tables that drive the product-space Hamiltonian kernels.
 *
 * Within one spin sector every contribution depends only on that sector's
 * strings, except the single-excitation term, which picks up a Coulomb
 * piece sum_{q in other sector} (pr|qq). Tables store the sector-internal
 * part; the cross-sector piece is added by the caller.
 */

#include <algorithm>
#include <bit>
#include <cstdint>
#include <vector>

#include "sqd/bits.hpp"
#include "sqd/integrals.hpp"

namespace sqd {

namespace detail {

/// Phase of a_r on m (r occupied): (-1)^(occupied orbitals below r).
inline int annihilate(Mask& m, int r) {
  const int parity = std::popcount(m & low_mask(r)) & 1;
  m &= ~(Mask{1} << r);
  return parity;
}

inline int create(Mask& m, int p) {
  const int parity = std::popcount(m & low_mask(p)) & 1;
  m |= Mask{1} << p;
  return parity;
}

}  // namespace detail

/// Sign of a^dag_p a^dag_q a_s a_r |m> (r, s occupied; p, q free afterwards).
inline double double_excitation_sign(Mask m, int r, int s, int p, int q) {
  int parity = detail::annihilate(m, r);
  parity += detail::annihilate(m, s);
  parity += detail::create(m, q);
  parity += detail::create(m, p);
  return (parity & 1) ? -1.0 : 1.0;
}

/// One-sector part of a diagonal element: sum h_pp + 1/2 sum [(pp|qq) - (pq|qp)].
inline double sector_diagonal(Mask m, const MolecularIntegrals& ints) {
  double e = 0.0;
  for (Mask a = m; a; a &= a - 1) {
    const int p = std::countr_zero(a);
    e += ints.h(p, p);
    for (Mask b = m; b; b &= b - 1) {
      const int q = std::countr_zero(b);
      e += 0.5 * (ints.eri(p, p, q, q) - ints.eri(p, q, q, p));
    }
  }
  return e;
}

/// Coulomb coupling between sectors: sum_{p in a, q in b} (pp|qq).
inline double cross_diagonal(Mask a, Mask b, const MolecularIntegrals& ints) {
  double e = 0.0;
  for (Mask x = a; x; x &= x - 1) {
    const int p = std::countr_zero(x);
    for (Mask y = b; y; y &= y - 1) e += ints.eri(p, p, std::countr_zero(y), std::countr_zero(y));
  }
  return e;
}

/// Sector-internal part of a single excitation r -> p from ket mask m, unsigned:
/// h_pr + sum_{q in m, q != r} [(pr|qq) - (pq|qr)].
inline double sector_single(Mask m, int r, int p, const MolecularIntegrals& ints) {
  double v = ints.h(p, r);
  for (Mask a = m & ~(Mask{1} << r); a; a &= a - 1) {
    const int q = std::countr_zero(a);
    v += ints.eri(p, r, q, q) - ints.eri(p, q, q, r);
  }
  return v;
}

/// Coulomb piece of a single excitation r -> p felt from the other sector.
inline double other_sector_single(Mask other, int r, int p, const MolecularIntegrals& ints) {
  double v = 0.0;
  for (Mask a = other; a; a &= a - 1) {
    const int q = std::countr_zero(a);
    v += ints.eri(p, r, q, q);
  }
  return v;
}

inline double diagonal_element(const Configuration& x, const MolecularIntegrals& ints) {
  return ints.core_energy() + sector_diagonal(x.alpha.bits, ints) + sector_diagonal(x.beta.bits, ints) +
         cross_diagonal(x.alpha.bits, x.beta.bits, ints);
}

/// <y|H|x> by the Slater–Condon rules, including the core constant on the diagonal.
inline double slater_condon_element(const Configuration& y, const Configuration& x, const MolecularIntegrals& ints) {
  require(x.alpha.popcount() == y.alpha.popcount() && x.beta.popcount() == y.beta.popcount(),
          "slater_condon_element: particle numbers differ");
  const Mask da = x.alpha.bits ^ y.alpha.bits;
  const Mask db = x.beta.bits ^ y.beta.bits;
  const int na = std::popcount(da) / 2;
  const int nb = std::popcount(db) / 2;
  if (na + nb > 2) return 0.0;
  if (na + nb == 0) return diagonal_element(x, ints);

  auto holes = [](Mask ket, Mask diff) { return occupied_orbitals(ket & diff); };
  auto parts = [](Mask bra, Mask diff) { return occupied_orbitals(bra & diff); };

  if (na == 1 && nb == 0) {
    const int r = holes(x.alpha.bits, da)[0], p = parts(y.alpha.bits, da)[0];
    return single_excitation_sign(x.alpha.bits, r, p) *
           (sector_single(x.alpha.bits, r, p, ints) + other_sector_single(x.beta.bits, r, p, ints));
  }
  if (na == 0 && nb == 1) {
    const int r = holes(x.beta.bits, db)[0], p = parts(y.beta.bits, db)[0];
    return single_excitation_sign(x.beta.bits, r, p) *
           (sector_single(x.beta.bits, r, p, ints) + other_sector_single(x.alpha.bits, r, p, ints));
  }
  if (na == 1 && nb == 1) {
    const int r = holes(x.alpha.bits, da)[0], p = parts(y.alpha.bits, da)[0];
    const int s = holes(x.beta.bits, db)[0], q = parts(y.beta.bits, db)[0];
    return single_excitation_sign(x.alpha.bits, r, p) * single_excitation_sign(x.beta.bits, s, q) *
           ints.eri(p, r, q, s);
  }
  const Mask ket = na == 2 ? x.alpha.bits : x.beta.bits;
  const Mask bra = na == 2 ? y.alpha.bits : y.beta.bits;
  const Mask d = na == 2 ? da : db;
  const auto h = holes(ket, d);
  const auto pp = parts(bra, d);
  const int r = h[0], s = h[1], p = pp[0], q = pp[1];
  return double_excitation_sign(ket, r, s, p, q) * (ints.eri(p, r, q, s) - ints.eri(p, s, q, r));
}

/**
 * Excitations internal to one sorted list of half-configurations, in CSR form.
 *
 * Row b holds every single excitation b -> b' (r -> p) whose target is also
 * in the list, sorted by b'. `base` is the unsigned sector_single value seen
 * from ket b. Same-spin doubles are stored with their full signed element.
 */
struct ExcitationTable {
  struct Single {
    std::uint32_t target;
    std::int8_t from;
    std::int8_t to;
    double sign;
    double base;
  };
  struct Double {
    std::uint32_t target;
    double value;
  };

  std::vector<std::size_t> single_offsets;
  std::vector<Single> singles;
  std::vector<std::size_t> double_offsets;
  std::vector<Double> doubles;

  std::size_t size() const { return single_offsets.empty() ? 0 : single_offsets.size() - 1; }
  std::size_t singles_of(std::size_t b) const { return single_offsets[b + 1] - single_offsets[b]; }
  std::size_t doubles_of(std::size_t b) const { return double_offsets[b + 1] - double_offsets[b]; }
  const Single* singles_begin(std::size_t b) const { return singles.data() + single_offsets[b]; }
  const Single* singles_end(std::size_t b) const { return singles.data() + single_offsets[b + 1]; }
  const Double* doubles_begin(std::size_t b) const { return doubles.data() + double_offsets[b]; }
  const Double* doubles_end(std::size_t b) const { return doubles.data() + double_offsets[b + 1]; }
};

inline std::int64_t find_half(const std::vector<Mask>& sorted, Mask m) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), m);
  if (it == sorted.end() || *it != m) return -1;
  return it - sorted.begin();
}

inline ExcitationTable build_excitation_tables(const std::vector<Mask>& halves, int n_orb,
                                               const MolecularIntegrals& ints) {
  require(std::is_sorted(halves.begin(), halves.end()) &&
              std::adjacent_find(halves.begin(), halves.end()) == halves.end(),
          "build_excitation_tables: list must be sorted and unique");
  ExcitationTable t;
  t.single_offsets.reserve(halves.size() + 1);
  t.double_offsets.reserve(halves.size() + 1);
  t.single_offsets.push_back(0);
  t.double_offsets.push_back(0);
  const Mask full = low_mask(n_orb);
  std::vector<ExcitationTable::Single> row_s;
  std::vector<ExcitationTable::Double> row_d;
  for (Mask m : halves) {
    row_s.clear();
    row_d.clear();
    const auto occ = occupied_orbitals(m);
    const auto vir = occupied_orbitals(~m & full);
    for (int r : occ)
      for (int p : vir) {
        const Mask t_mask = m ^ (Mask{1} << r) ^ (Mask{1} << p);
        const auto idx = find_half(halves, t_mask);
        if (idx < 0) continue;
        row_s.push_back({static_cast<std::uint32_t>(idx), static_cast<std::int8_t>(r), static_cast<std::int8_t>(p),
                         single_excitation_sign(m, r, p), sector_single(m, r, p, ints)});
      }
    for (std::size_t i = 0; i < occ.size(); ++i)
      for (std::size_t j = i + 1; j < occ.size(); ++j)
        for (std::size_t k = 0; k < vir.size(); ++k)
          for (std::size_t l = k + 1; l < vir.size(); ++l) {
            const int r = occ[i], s = occ[j], p = vir[k], q = vir[l];
            const Mask t_mask = m ^ (Mask{1} << r) ^ (Mask{1} << s) ^ (Mask{1} << p) ^ (Mask{1} << q);
            const auto idx = find_half(halves, t_mask);
            if (idx < 0) continue;
            const double v = double_excitation_sign(m, r, s, p, q) * (ints.eri(p, r, q, s) - ints.eri(p, s, q, r));
            row_d.push_back({static_cast<std::uint32_t>(idx), v});
          }
    std::sort(row_s.begin(), row_s.end(), [](const auto& a, const auto& b) { return a.target < b.target; });
    std::sort(row_d.begin(), row_d.end(), [](const auto& a, const auto& b) { return a.target < b.target; });
    t.singles.insert(t.singles.end(), row_s.begin(), row_s.end());
    t.doubles.insert(t.doubles.end(), row_d.begin(), row_d.end());
    t.single_offsets.push_back(t.singles.size());
    t.double_offsets.push_back(t.doubles.size());
  }
  return t;
}

}  // namespace sqd
