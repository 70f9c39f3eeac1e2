// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "sqd/bits.hpp"
#include "sqd/combinatorics.hpp"
#include "sqd/error.hpp"
#include "sqd/slater_condon.hpp"

namespace sqd {

/// The product space alpha_list (x) beta_list. Element (a, b) has flat index a * D_beta + b.
class SubspaceBasis {
 public:
  SubspaceBasis() = default;
  SubspaceBasis(SystemSpec spec, std::vector<Mask> alpha, std::vector<Mask> beta)
      : spec_(spec), alpha_(std::move(alpha)), beta_(std::move(beta)) {
    validate(spec_);
    check_list(alpha_, spec_.n_alpha, "alpha");
    check_list(beta_, spec_.n_beta, "beta");
  }

  /// Spin-symmetric basis: the same list for both sectors.
  static SubspaceBasis symmetric(SystemSpec spec, std::vector<Mask> halves) {
    require(spec.n_alpha == spec.n_beta, "spin-symmetric basis needs n_alpha == n_beta");
    auto copy = halves;
    return SubspaceBasis(spec, std::move(halves), std::move(copy));
  }

  static SubspaceBasis full(SystemSpec spec) {
    return SubspaceBasis(spec, all_halves(spec.n_orb, spec.n_alpha), all_halves(spec.n_orb, spec.n_beta));
  }

  const SystemSpec& spec() const { return spec_; }
  const std::vector<Mask>& alpha() const { return alpha_; }
  const std::vector<Mask>& beta() const { return beta_; }
  std::size_t alpha_size() const { return alpha_.size(); }
  std::size_t beta_size() const { return beta_.size(); }
  std::size_t dimension() const { return alpha_.size() * beta_.size(); }
  bool spin_symmetric() const { return alpha_ == beta_; }

  Configuration configuration(std::size_t a, std::size_t b) const { return {{alpha_[a]}, {beta_[b]}}; }
  Configuration configuration(std::size_t flat) const {
    return configuration(flat / beta_.size(), flat % beta_.size());
  }

  /// Flat index of a configuration, or -1 when it lies outside the subspace.
  std::int64_t find(const Configuration& c) const {
    const auto a = find_half(alpha_, c.alpha.bits);
    const auto b = find_half(beta_, c.beta.bits);
    if (a < 0 || b < 0) return -1;
    return a * static_cast<std::int64_t>(beta_.size()) + b;
  }

  bool operator==(const SubspaceBasis&) const = default;

 private:
  static void check_list(const std::vector<Mask>& list, int n_e, const char* sector) {
    require(std::is_sorted(list.begin(), list.end()) && std::adjacent_find(list.begin(), list.end()) == list.end(),
            std::string(sector) + " list must be sorted ascending without duplicates");
    for (Mask m : list)
      require(std::popcount(m) == n_e, std::string(sector) + " half-configuration with wrong popcount");
  }

  SystemSpec spec_;
  std::vector<Mask> alpha_;
  std::vector<Mask> beta_;
};

/// Amplitudes psi_{ab} of a state in a product subspace, row-major (a, b).
struct CIVector {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Eigen::VectorXd values;

  CIVector() = default;
  CIVector(std::size_t r, std::size_t c) : rows(r), cols(c), values(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(r * c))) {}
  CIVector(const SubspaceBasis& basis, Eigen::VectorXd v) : rows(basis.alpha_size()), cols(basis.beta_size()), values(std::move(v)) {
    require(static_cast<std::size_t>(values.size()) == rows * cols, "CIVector size does not match basis");
  }
  explicit CIVector(const SubspaceBasis& basis) : CIVector(basis.alpha_size(), basis.beta_size()) {}

  double& at(std::size_t a, std::size_t b) { return values[static_cast<Eigen::Index>(a * cols + b)]; }
  double at(std::size_t a, std::size_t b) const { return values[static_cast<Eigen::Index>(a * cols + b)]; }

  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajor> matrix() const {
    return {values.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
  }

  bool matches(const SubspaceBasis& basis) const { return rows == basis.alpha_size() && cols == basis.beta_size(); }
  double norm() const { return values.norm(); }
};

/// Copies the components of `psi` (on `from`) that also exist in `to`.
inline CIVector project_onto(const SubspaceBasis& from, const CIVector& psi, const SubspaceBasis& to) {
  require(psi.matches(from), "project_onto: vector does not match source basis");
  CIVector out(to);
  std::vector<std::int64_t> amap(to.alpha_size()), bmap(to.beta_size());
  for (std::size_t a = 0; a < to.alpha_size(); ++a) amap[a] = find_half(from.alpha(), to.alpha()[a]);
  for (std::size_t b = 0; b < to.beta_size(); ++b) bmap[b] = find_half(from.beta(), to.beta()[b]);
  for (std::size_t a = 0; a < to.alpha_size(); ++a) {
    if (amap[a] < 0) continue;
    for (std::size_t b = 0; b < to.beta_size(); ++b)
      if (bmap[b] >= 0) out.at(a, b) = psi.at(static_cast<std::size_t>(amap[a]), static_cast<std::size_t>(bmap[b]));
  }
  return out;
}

}  // namespace sqd
