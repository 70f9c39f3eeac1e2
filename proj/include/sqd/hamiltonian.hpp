// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * The Hamiltonian projected onto a product subspace.
 *
 * Because the basis is a full tensor product of the alpha and beta lists,
 * every excitation found inside one list is valid for every string of the
 * other list. The action therefore splits into
 *
 *   diagonal + alpha singles/doubles + beta singles/doubles + mixed (one single per sector),
 *
 * each of which is a loop over one table (or a pair of tables) without any
 * membership lookups at apply time.
 */

#include <Eigen/Dense>
#include <limits>
#include <memory>
#include <utility>

#include "sqd/integrals.hpp"
#include "sqd/slater_condon.hpp"
#include "sqd/subspace.hpp"

namespace sqd {

class ProjectedHamiltonian {
 public:
  ProjectedHamiltonian(SubspaceBasis basis, std::shared_ptr<const MolecularIntegrals> ints)
      : basis_(std::move(basis)), ints_(std::move(ints)) {
    require(ints_ != nullptr, "ProjectedHamiltonian: null integrals");
    require(ints_->n_orb() == basis_.spec().n_orb, "ProjectedHamiltonian: integrals and basis disagree on n_orb");
    const int n = ints_->n_orb();
    alpha_table_ = build_excitation_tables(basis_.alpha(), n, *ints_);
    shared_tables_ = basis_.spin_symmetric();
    if (!shared_tables_) beta_table_ = build_excitation_tables(basis_.beta(), n, *ints_);
    w_alpha_ = coulomb_table(basis_.alpha());
    w_beta_ = shared_tables_ ? w_alpha_ : coulomb_table(basis_.beta());
    build_diagonal();
  }

  const SubspaceBasis& basis() const { return basis_; }
  const MolecularIntegrals& integrals() const { return *ints_; }
  std::shared_ptr<const MolecularIntegrals> integrals_ptr() const { return ints_; }
  const ExcitationTable& alpha_table() const { return alpha_table_; }
  const ExcitationTable& beta_table() const { return shared_tables_ ? alpha_table_ : beta_table_; }
  const Eigen::VectorXd& diagonal() const { return diagonal_; }
  std::size_t dimension() const { return basis_.dimension(); }

  /// sum_{q in string} (pr|qq) for the string at index i of a sector, entry p * n + r.
  double alpha_coulomb(std::size_t a, int p, int r) const { return w_alpha_(static_cast<Eigen::Index>(a), p * n() + r); }
  double beta_coulomb(std::size_t b, int p, int r) const { return w_beta_(static_cast<Eigen::Index>(b), p * n() + r); }

 private:
  int n() const { return ints_->n_orb(); }

  Eigen::MatrixXd coulomb_table(const std::vector<Mask>& list) const {
    const int n = ints_->n_orb();
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(list.size()), n * n);
    for (std::size_t i = 0; i < list.size(); ++i)
      for (int p = 0; p < n; ++p)
        for (int r = 0; r < n; ++r) w(static_cast<Eigen::Index>(i), p * n + r) = other_sector_single(list[i], r, p, *ints_);
    return w;
  }

  void build_diagonal() {
    const auto& ints = *ints_;
    const int n = ints.n_orb();
    const auto da = basis_.alpha_size(), db = basis_.beta_size();
    Eigen::VectorXd ea(static_cast<Eigen::Index>(da)), eb(static_cast<Eigen::Index>(db));
    Eigen::MatrixXd jb = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(db), n);
    for (std::size_t a = 0; a < da; ++a) ea[static_cast<Eigen::Index>(a)] = sector_diagonal(basis_.alpha()[a], ints);
    for (std::size_t b = 0; b < db; ++b) {
      eb[static_cast<Eigen::Index>(b)] = sector_diagonal(basis_.beta()[b], ints);
      for (int p = 0; p < n; ++p)
        for (Mask m = basis_.beta()[b]; m; m &= m - 1)
          jb(static_cast<Eigen::Index>(b), p) += ints.eri(p, p, std::countr_zero(m), std::countr_zero(m));
    }
    diagonal_.resize(static_cast<Eigen::Index>(da * db));
    for (std::size_t a = 0; a < da; ++a) {
      const auto occ = occupied_orbitals(basis_.alpha()[a]);
      for (std::size_t b = 0; b < db; ++b) {
        double cross = 0.0;
        for (int p : occ) cross += jb(static_cast<Eigen::Index>(b), p);
        diagonal_[static_cast<Eigen::Index>(a * db + b)] =
            ints.core_energy() + ea[static_cast<Eigen::Index>(a)] + eb[static_cast<Eigen::Index>(b)] + cross;
      }
    }
  }

  SubspaceBasis basis_;
  std::shared_ptr<const MolecularIntegrals> ints_;
  ExcitationTable alpha_table_;
  ExcitationTable beta_table_;
  bool shared_tables_ = false;
  Eigen::MatrixXd w_alpha_;
  Eigen::MatrixXd w_beta_;
  Eigen::VectorXd diagonal_;
};

/// Serial sigma = H psi on the projected subspace, organised row by row.
inline CIVector apply_hamiltonian(const ProjectedHamiltonian& ham, const CIVector& psi) {
  const auto& basis = ham.basis();
  require(psi.matches(basis), "apply_hamiltonian: vector does not match basis");
  const auto& ints = ham.integrals();
  const auto& ta = ham.alpha_table();
  const auto& tb = ham.beta_table();
  const auto& diag = ham.diagonal();
  const std::size_t da = basis.alpha_size(), db = basis.beta_size();
  CIVector out(basis);
  for (std::size_t a = 0; a < da; ++a) {
    for (std::size_t b = 0; b < db; ++b) {
      double acc = diag[static_cast<Eigen::Index>(a * db + b)] * psi.at(a, b);
      for (auto e = ta.singles_begin(a); e != ta.singles_end(a); ++e)
        acc += e->sign * (e->base + ham.beta_coulomb(b, e->to, e->from)) * psi.at(e->target, b);
      for (auto e = ta.doubles_begin(a); e != ta.doubles_end(a); ++e) acc += e->value * psi.at(e->target, b);
      for (auto e = tb.singles_begin(b); e != tb.singles_end(b); ++e)
        acc += e->sign * (e->base + ham.alpha_coulomb(a, e->to, e->from)) * psi.at(a, e->target);
      for (auto e = tb.doubles_begin(b); e != tb.doubles_end(b); ++e) acc += e->value * psi.at(a, e->target);
      for (auto ea = ta.singles_begin(a); ea != ta.singles_end(a); ++ea)
        for (auto eb = tb.singles_begin(b); eb != tb.singles_end(b); ++eb)
          acc += ea->sign * eb->sign * ints.eri(ea->to, ea->from, eb->to, eb->from) * psi.at(ea->target, eb->target);
      out.at(a, b) = acc;
    }
  }
  return out;
}

/// Unit vector on the basis element with the lowest diagonal; ties go to the lowest (a, b).
inline CIVector lowest_diagonal_start(const ProjectedHamiltonian& ham) {
  require(ham.dimension() > 0, "lowest_diagonal_start: empty basis");
  const auto& d = ham.diagonal();
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < d.size(); ++i)
    if (d[i] < d[best]) best = i;
  CIVector v(ham.basis());
  v.values[best] = 1.0;
  return v;
}

}  // namespace sqd
