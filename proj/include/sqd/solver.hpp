// SPDX-License-Identifier: Apache-2.0
#pragma once

// Convenience entry point: project, start from the lowest diagonal element,
// optionally warm-start from a previous vector, and run Davidson.

#include <memory>
#include <json.hpp>
#include <optional>

#include "sqd/davidson.hpp"
#include "sqd/hamiltonian.hpp"

namespace sqd {

inline LinearOperator hamiltonian_operator(const ProjectedHamiltonian& ham) {
  return [&ham](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    CIVector v(ham.basis(), in);
    out = apply_hamiltonian(ham, v).values;
  };
}

struct SubspaceSolution {
  DavidsonReport report;
  CIVector vector;
};

/// `guess`, when given, must already live on `basis` (see project_onto).
inline SubspaceSolution solve_subspace(const ProjectedHamiltonian& ham, const DavidsonOptions& opts = {},
                                       const std::optional<CIVector>& guess = std::nullopt,
                                       const LinearOperator& op = {}) {
  const auto v0 = lowest_diagonal_start(ham);
  std::optional<Eigen::VectorXd> g;
  if (guess && guess->matches(ham.basis()) && guess->norm() > 0.0) g = guess->values;
  auto report = davidson(op ? op : hamiltonian_operator(ham), ham.diagonal(), v0.values, opts, g);
  CIVector vec(ham.basis(), report.eigenvector);
  return {std::move(report), std::move(vec)};
}

inline SubspaceSolution solve_subspace(const SubspaceBasis& basis, std::shared_ptr<const MolecularIntegrals> ints,
                                       const DavidsonOptions& opts = {},
                                       const std::optional<CIVector>& guess = std::nullopt) {
  const ProjectedHamiltonian ham(basis, std::move(ints));
  return solve_subspace(ham, opts, guess);
}

inline nlohmann::json to_json(const DavidsonReport& r, std::size_t dimension) {
  return {{"energy", r.energy},
          {"residual_norm", r.residual_norm},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"termination_reason", to_string(r.termination_reason)},
          {"wall_seconds", r.wall_seconds},
          {"operator_applications", r.operator_applications},
          {"dimension", dimension}};
}

}  // namespace sqd
