// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Orbital rotations Phi = exp(kappa) of a fixed subspace state.
 *
 * With the state psi held fixed, the energy depends on kappa only through
 * the rotated integrals
 *
 *   h'_pr = sum_ab h_ab Phi_ap Phi_br,
 *   (pr|qs)' = sum_abcd (ac|bd) Phi_ap Phi_cr Phi_bq Phi_ds,
 *
 * so E(kappa) = sum h' gamma + 1/2 sum (pr|qs)' Gamma_prqs + core, with the
 * reduced density matrices of psi computed once. The gradient is the
 * antisymmetrised generalized Fock matrix chained through the Frechet
 * derivative of the matrix exponential.
 */

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <memory>
#include <vector>

#include "sqd/hamiltonian.hpp"
#include "sqd/integrals.hpp"
#include "sqd/lbfgs.hpp"
#include "sqd/subspace.hpp"

namespace sqd {

/// Antisymmetric kappa built from its strict upper triangle (row-major).
struct OrbitalRotation {
  Eigen::MatrixXd kappa;

  OrbitalRotation() = default;
  explicit OrbitalRotation(int n) : kappa(Eigen::MatrixXd::Zero(n, n)) {}
  explicit OrbitalRotation(Eigen::MatrixXd k) : kappa(std::move(k)) {
    require(kappa.rows() == kappa.cols(), "OrbitalRotation: kappa must be square");
    require((kappa + kappa.transpose()).cwiseAbs().maxCoeff() <= 1e-12, "OrbitalRotation: kappa is not antisymmetric");
  }

  int n_orb() const { return static_cast<int>(kappa.rows()); }
  static std::size_t parameter_count(int n) { return static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2; }

  Eigen::MatrixXd phi() const { return kappa.exp(); }

  Eigen::VectorXd to_vector() const {
    const int n = n_orb();
    Eigen::VectorXd v(static_cast<Eigen::Index>(parameter_count(n)));
    Eigen::Index k = 0;
    for (int p = 0; p < n; ++p)
      for (int r = p + 1; r < n; ++r) v[k++] = kappa(p, r);
    return v;
  }

  static OrbitalRotation from_vector(int n, const Eigen::VectorXd& v) {
    require(static_cast<std::size_t>(v.size()) == parameter_count(n), "OrbitalRotation: wrong parameter count");
    OrbitalRotation rot(n);
    Eigen::Index k = 0;
    for (int p = 0; p < n; ++p)
      for (int r = p + 1; r < n; ++r) {
        rot.kappa(p, r) = v[k++];
        rot.kappa(r, p) = -rot.kappa(p, r);
      }
    return rot;
  }
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Integrals in the rotated orbital basis; Phi must be orthogonal.
inline MolecularIntegrals transform_integrals(const MolecularIntegrals& ints, const Eigen::MatrixXd& phi) {
  const int n = ints.n_orb();
  require(phi.rows() == n && phi.cols() == n, "transform_integrals: rotation size does not match n_orb");
  const double defect = (phi.transpose() * phi - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
  require(defect <= 1e-8, "transform_integrals: rotation is not orthogonal (defect " + std::to_string(defect) + ")");
  MolecularIntegrals out(n);
  out.set_core_energy(ints.core_energy());
  const Eigen::MatrixXd h = phi.transpose() * ints.h() * phi;
  for (int p = 0; p < n; ++p)
    for (int r = 0; r <= p; ++r) out.set_h(p, r, 0.5 * (h(p, r) + h(r, p)));
  const Eigen::Index n2 = static_cast<Eigen::Index>(n) * n;
  const Eigen::MatrixXd kron = Eigen::kroneckerProduct(phi, phi);
  Eigen::Map<const RowMatrix> v(ints.eri_data().data(), n2, n2);
  const RowMatrix w = kron.transpose() * v * kron;
  Eigen::Map<RowMatrix>(out.eri_data().data(), n2, n2) = w;
  return out;
}

inline MolecularIntegrals transform_integrals(const MolecularIntegrals& ints, const OrbitalRotation& rot) {
  return transform_integrals(ints, rot.phi());
}

/// Spin-summed reduced density matrices of a normalised subspace state.
/// gamma(p, r) = sum_s <a+_ps a_rs>; Gamma(p, r, q, s) = sum_{st} <a+_ps a+_qt a_st a_rs>,
/// stored like the integral tensor.
struct ReducedDensityMatrices {
  int n_orb = 0;
  Eigen::MatrixXd gamma;
  std::vector<double> Gamma;

  double G(int p, int r, int q, int s) const {
    const auto n = static_cast<std::size_t>(n_orb);
    return Gamma[((static_cast<std::size_t>(p) * n + r) * n + q) * n + s];
  }
};

namespace detail {

// Spin orbitals are ordered alpha 0..n-1, then beta 0..n-1.
struct Det {
  Mask a, b;
};

/// Applies a_{orbital, spin}; returns false when the orbital is empty.
inline bool annihilate(Det& d, int p, int spin, int& sign) {
  Mask& m = spin == 0 ? d.a : d.b;
  if (!((m >> p) & 1U)) return false;
  int below = std::popcount(m & low_mask(p));
  if (spin == 1) below += std::popcount(d.a);
  if (below & 1) sign = -sign;
  m ^= Mask{1} << p;
  return true;
}

inline bool create(Det& d, int p, int spin, int& sign) {
  Mask& m = spin == 0 ? d.a : d.b;
  if ((m >> p) & 1U) return false;
  int below = std::popcount(m & low_mask(p));
  if (spin == 1) below += std::popcount(d.a);
  if (below & 1) sign = -sign;
  m |= Mask{1} << p;
  return true;
}

}  // namespace detail

inline ReducedDensityMatrices compute_rdms(const SubspaceBasis& basis, const CIVector& psi) {
  require(psi.matches(basis), "compute_rdms: vector does not match basis");
  const int n = basis.spec().n_orb;
  const double norm2 = psi.values.squaredNorm();
  require(norm2 > 0.0, "compute_rdms: zero vector");
  ReducedDensityMatrices r;
  r.n_orb = n;
  r.gamma = Eigen::MatrixXd::Zero(n, n);
  const auto nn = static_cast<std::size_t>(n);
  r.Gamma.assign(nn * nn * nn * nn, 0.0);
  auto coeff = [&](const detail::Det& d) -> double {
    const auto i = basis.find({{d.a}, {d.b}});
    return i < 0 ? 0.0 : psi.values[static_cast<Eigen::Index>(i)];
  };
  for (std::size_t x = 0; x < basis.dimension(); ++x) {
    const double cx = psi.values[static_cast<Eigen::Index>(x)] / norm2;
    if (cx == 0.0) continue;
    const auto cfg = basis.configuration(x);
    const detail::Det d0{cfg.alpha.bits, cfg.beta.bits};
    for (int sr = 0; sr < 2; ++sr)
      for (int rr = 0; rr < n; ++rr) {
        detail::Det d1 = d0;
        int s1 = 1;
        if (!detail::annihilate(d1, rr, sr, s1)) continue;
        for (int pp = 0; pp < n; ++pp) {
          detail::Det d2 = d1;
          int s2 = s1;
          if (!detail::create(d2, pp, sr, s2)) continue;
          r.gamma(pp, rr) += s2 * coeff(d2) * cx;
        }
        // a+_{p sr} a+_{q st} a_{s st} a_{r sr}
        for (int st = 0; st < 2; ++st)
          for (int ss = 0; ss < n; ++ss) {
            detail::Det d2 = d1;
            int s2 = s1;
            if (!detail::annihilate(d2, ss, st, s2)) continue;
            for (int qq = 0; qq < n; ++qq) {
              detail::Det d3 = d2;
              int s3 = s2;
              if (!detail::create(d3, qq, st, s3)) continue;
              for (int pp = 0; pp < n; ++pp) {
                detail::Det d4 = d3;
                int s4 = s3;
                if (!detail::create(d4, pp, sr, s4)) continue;
                const double c = coeff(d4);
                if (c != 0.0)
                  r.Gamma[((static_cast<std::size_t>(pp) * nn + rr) * nn + qq) * nn + ss] += s4 * c * cx;
              }
            }
          }
      }
  }
  return r;
}

/// sum h gamma + 1/2 sum (pr|qs) Gamma + core.
inline double rdm_energy(const MolecularIntegrals& ints, const ReducedDensityMatrices& r) {
  double e = ints.core_energy() + (ints.h().array() * r.gamma.array()).sum();
  double two = 0.0;
  for (std::size_t i = 0; i < r.Gamma.size(); ++i) two += ints.eri_data()[i] * r.Gamma[i];
  return e + 0.5 * two;
}

/// <psi|H'(kappa)|psi> / <psi|psi> evaluated through the sigma kernel.
inline double rayleigh_energy(const SubspaceBasis& basis, const CIVector& psi, const MolecularIntegrals& ints,
                              const OrbitalRotation& rot) {
  require(ints.n_orb() == basis.spec().n_orb, "rayleigh_energy: integrals and basis disagree on n_orb");
  require(psi.matches(basis), "rayleigh_energy: vector does not match basis");
  const double n2 = psi.values.squaredNorm();
  require(n2 > 0.0, "rayleigh_energy: zero vector");
  auto rotated = std::make_shared<const MolecularIntegrals>(transform_integrals(ints, rot));
  const ProjectedHamiltonian ham(basis, rotated);
  return psi.values.dot(apply_hamiltonian(ham, psi).values) / n2;
}

/// Generalized Fock matrix F_mp = (h gamma)_mp + sum_rqs (mr|qs) Gamma~_prqs, with
/// Gamma~ the average over the 8 index permutations that leave the energy unchanged.
inline Eigen::MatrixXd generalized_fock(const MolecularIntegrals& ints, const ReducedDensityMatrices& r) {
  const int n = ints.n_orb();
  const auto nn = static_cast<std::size_t>(n);
  std::vector<double> sym(r.Gamma.size());
  for (int p = 0; p < n; ++p)
    for (int q1 = 0; q1 < n; ++q1)
      for (int q2 = 0; q2 < n; ++q2)
        for (int q3 = 0; q3 < n; ++q3) {
          double acc = 0.0;
          for (auto [a, b, c, d] : MolecularIntegrals::permutations(p, q1, q2, q3)) acc += r.G(a, b, c, d);
          sym[((static_cast<std::size_t>(p) * nn + q1) * nn + q2) * nn + q3] = acc / 8.0;
        }
  const Eigen::Index n2 = static_cast<Eigen::Index>(n) * n;
  // F_mp = sum_{r,(qs)} V[(m r),(q s)] Gamma~[(p r),(q s)]
  Eigen::Map<const RowMatrix> v(ints.eri_data().data(), n2, n2);
  Eigen::Map<const RowMatrix> g(sym.data(), n2, n2);
  const RowMatrix vg = v * g.transpose();  // [(m r),(p r')]
  Eigen::MatrixXd f = ints.h() * r.gamma;
  for (int m = 0; m < n; ++m)
    for (int p = 0; p < n; ++p) {
      double acc = 0.0;
      for (int rr = 0; rr < n; ++rr) acc += vg(m * n + rr, p * n + rr);
      f(m, p) += acc;
    }
  return f;
}

/// Energy of fixed RDMs under exp(kappa), with the gradient w.r.t. the strict upper triangle.
struct KappaObjective {
  std::shared_ptr<const MolecularIntegrals> ints;
  ReducedDensityMatrices rdms;

  double energy(const OrbitalRotation& rot) const { return rdm_energy(transform_integrals(*ints, rot), rdms); }

  /// dE/dkappa_pr for p < r (kappa_rp = -kappa_pr moves with it).
  Eigen::MatrixXd gradient_matrix(const OrbitalRotation& rot) const {
    const int n = rot.n_orb();
    const Eigen::MatrixXd phi = rot.phi();
    const auto rotated = transform_integrals(*ints, phi);
    // dE/dPhi = 2 Phi F(rotated)
    const Eigen::MatrixXd g = 2.0 * phi * generalized_fock(rotated, rdms);
    // adjoint of the Frechet derivative of exp at kappa: L(kappa^T, G)
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    block.topLeftCorner(n, n) = rot.kappa.transpose();
    block.bottomRightCorner(n, n) = rot.kappa.transpose();
    block.topRightCorner(n, n) = g;
    const Eigen::MatrixXd m = block.exp().topRightCorner(n, n);
    return m - m.transpose();
  }

  double evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
    const int n = ints->n_orb();
    const auto rot = OrbitalRotation::from_vector(n, x);
    const Eigen::MatrixXd gm = gradient_matrix(rot);
    grad.resize(x.size());
    Eigen::Index k = 0;
    for (int p = 0; p < n; ++p)
      for (int r = p + 1; r < n; ++r) grad[k++] = gm(p, r);
    return energy(rot);
  }
};

inline Eigen::MatrixXd kappa_gradient(const SubspaceBasis& basis, const CIVector& psi,
                                      std::shared_ptr<const MolecularIntegrals> ints, const OrbitalRotation& rot) {
  KappaObjective obj{std::move(ints), compute_rdms(basis, psi)};
  return obj.gradient_matrix(rot);
}

struct OrbitalOptimization {
  OrbitalRotation rotation;
  double initial_energy = 0.0;
  double energy = 0.0;
  LbfgsResult lbfgs;
};

/// Minimises E(kappa) with psi fixed, starting from `start`; never returns a higher energy.
inline OrbitalOptimization optimize_orbitals(const SubspaceBasis& basis, const CIVector& psi,
                                             std::shared_ptr<const MolecularIntegrals> ints,
                                             const OrbitalRotation& start, const LbfgsOptions& opts = {}) {
  const int n = ints->n_orb();
  require(start.n_orb() == n, "optimize_orbitals: rotation size does not match n_orb");
  KappaObjective obj{std::move(ints), compute_rdms(basis, psi)};
  OrbitalOptimization out;
  const Eigen::VectorXd x0 = start.to_vector();
  out.lbfgs = lbfgs_minimize([&](const Eigen::VectorXd& x, Eigen::VectorXd& g) { return obj.evaluate(x, g); }, x0, opts);
  out.initial_energy = obj.energy(start);
  out.rotation = OrbitalRotation::from_vector(n, out.lbfgs.x);
  out.energy = out.lbfgs.value;
  if (out.energy > out.initial_energy) {
    out.rotation = start;
    out.energy = out.initial_energy;
  }
  return out;
}

}  // namespace sqd
