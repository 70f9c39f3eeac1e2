// SPDX-License-Identifier: Apache-2.0
#pragma once

// Energy variance <H^2> - <H>^2 of a subspace state, with H|psi> evaluated in
// the full determinant space (not projected back onto the subspace).

#include <cmath>
#include <cstddef>
#include <unordered_map>
#include <vector>

#include "sqd/bits.hpp"
#include "sqd/error.hpp"
#include "sqd/integrals.hpp"
#include "sqd/slater_condon.hpp"
#include "sqd/subspace.hpp"

namespace sqd {

struct VarianceResult {
  double variance = 0.0;
  double energy = 0.0;
  /// Norm of the input vector; the state is normalised before evaluation.
  double norm = 1.0;
  std::size_t connected_size = 0;
};

/// Adds every <y|H|x> c to sigma for y connected to x by at most a double excitation.
inline void accumulate_connected(const Configuration& x, double c, const MolecularIntegrals& ints, int n_orb,
                                 std::unordered_map<Configuration, double>& sigma) {
  const Mask full = low_mask(n_orb);
  sigma[x] += diagonal_element(x, ints) * c;
  const Mask xa = x.alpha.bits, xb = x.beta.bits;
  const auto occ_a = occupied_orbitals(xa), vir_a = occupied_orbitals(~xa & full);
  const auto occ_b = occupied_orbitals(xb), vir_b = occupied_orbitals(~xb & full);
  auto flip = [](Mask m, int r, int p) { return m ^ (Mask{1} << r) ^ (Mask{1} << p); };

  for (int r : occ_a)
    for (int p : vir_a)
      sigma[{{flip(xa, r, p)}, {xb}}] +=
          single_excitation_sign(xa, r, p) * (sector_single(xa, r, p, ints) + other_sector_single(xb, r, p, ints)) * c;
  for (int r : occ_b)
    for (int p : vir_b)
      sigma[{{xa}, {flip(xb, r, p)}}] +=
          single_excitation_sign(xb, r, p) * (sector_single(xb, r, p, ints) + other_sector_single(xa, r, p, ints)) * c;
  for (int r : occ_a)
    for (int p : vir_a) {
      const double sa = single_excitation_sign(xa, r, p);
      const Mask ya = flip(xa, r, p);
      for (int s : occ_b)
        for (int q : vir_b)
          sigma[{{ya}, {flip(xb, s, q)}}] += sa * single_excitation_sign(xb, s, q) * ints.eri(p, r, q, s) * c;
    }
  auto same_spin = [&](Mask m, const std::vector<int>& occ, const std::vector<int>& vir, bool alpha) {
    for (std::size_t i = 0; i < occ.size(); ++i)
      for (std::size_t j = i + 1; j < occ.size(); ++j)
        for (std::size_t k = 0; k < vir.size(); ++k)
          for (std::size_t l = k + 1; l < vir.size(); ++l) {
            const int r = occ[i], s = occ[j], p = vir[k], q = vir[l];
            const Mask y = m ^ (Mask{1} << r) ^ (Mask{1} << s) ^ (Mask{1} << p) ^ (Mask{1} << q);
            const double v = double_excitation_sign(m, r, s, p, q) * (ints.eri(p, r, q, s) - ints.eri(p, s, q, r));
            if (alpha)
              sigma[{{y}, {xb}}] += v * c;
            else
              sigma[{{xa}, {y}}] += v * c;
          }
  };
  same_spin(xa, occ_a, vir_a, true);
  same_spin(xb, occ_b, vir_b, false);
}

/// `max_connected` bounds the number of distinct configurations in H|psi>.
inline VarianceResult energy_variance(const SubspaceBasis& basis, const CIVector& psi, const MolecularIntegrals& ints,
                                      std::size_t max_connected = 20'000'000) {
  require(psi.matches(basis), "energy_variance: vector does not match basis");
  require(ints.n_orb() == basis.spec().n_orb, "energy_variance: integrals and basis disagree on n_orb");
  VarianceResult res;
  res.norm = psi.norm();
  require(res.norm > 0.0, "energy_variance: zero vector");
  const int n = basis.spec().n_orb;
  std::unordered_map<Configuration, double> sigma;
  for (std::size_t i = 0; i < basis.dimension(); ++i) {
    const double c = psi.values[static_cast<Eigen::Index>(i)] / res.norm;
    if (c == 0.0) continue;
    accumulate_connected(basis.configuration(i), c, ints, n, sigma);
    if (sigma.size() > max_connected)
      throw CapacityError("energy_variance: connected space exceeds " + std::to_string(max_connected) + " configurations");
  }
  double h2 = 0.0;
  for (const auto& [cfg, v] : sigma) h2 += v * v;
  double e = 0.0;
  for (std::size_t i = 0; i < basis.dimension(); ++i) {
    const double c = psi.values[static_cast<Eigen::Index>(i)] / res.norm;
    if (c == 0.0) continue;
    auto it = sigma.find(basis.configuration(i));
    if (it != sigma.end()) e += c * it->second;
  }
  res.energy = e;
  res.variance = h2 - e * e;
  res.connected_size = sigma.size();
  return res;
}

}  // namespace sqd
