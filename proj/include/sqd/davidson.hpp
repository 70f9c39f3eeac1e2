// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Davidson iteration for the lowest eigenpair of a real symmetric operator.
 *
 * Each iteration performs one Rayleigh–Ritz step on the search space,
 * measures the raw residual r = H w - E w and, if the run continues,
 * expands the space with the diagonally preconditioned residual. A run
 * stops on the first of: residual norm below tolerance, iteration budget
 * spent, wall-clock budget spent.
 */

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sqd/error.hpp"

namespace sqd {

using LinearOperator = std::function<void(const Eigen::VectorXd& in, Eigen::VectorXd& out)>;

enum class TerminationReason { residual, max_iterations, wall_clock };

inline const char* to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::residual: return "residual";
    case TerminationReason::max_iterations: return "max_iterations";
    case TerminationReason::wall_clock: return "wall_clock";
  }
  return "unknown";
}

struct DavidsonOptions {
  double tolerance = 1e-3;
  int max_iterations = 10;
  std::chrono::duration<double> wall_clock_limit{std::numeric_limits<double>::infinity()};
  /// Trial-space cap; 0 selects max(2 * max_iterations, 25).
  int max_subspace = 0;
  /// Seed the search space with the unit vector on the lowest diagonal entry.
  bool include_lowest_diagonal = true;
};

struct DavidsonReport {
  double energy = 0.0;
  Eigen::VectorXd eigenvector;
  double residual_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  TerminationReason termination_reason = TerminationReason::max_iterations;
  double wall_seconds = 0.0;
  int operator_applications = 0;
};

namespace detail {

/// Orthogonalises v against the columns of V in place (modified Gram–Schmidt,
/// repeated while the norm drops below 1/sqrt(2)). Returns the final norm.
inline double orthogonalize(const Eigen::MatrixXd& V, Eigen::Index cols, Eigen::VectorXd& v) {
  double before = v.norm();
  for (int pass = 0; pass < 3; ++pass) {
    for (Eigen::Index k = 0; k < cols; ++k) v -= V.col(k).dot(v) * V.col(k);
    const double after = v.norm();
    if (after >= before / std::sqrt(2.0)) return after;
    before = after;
  }
  return v.norm();
}

}  // namespace detail

inline DavidsonReport davidson(const LinearOperator& apply, const Eigen::VectorXd& diag, const Eigen::VectorXd& v0,
                               const DavidsonOptions& opts = {}, const std::optional<Eigen::VectorXd>& guess = std::nullopt) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const Eigen::Index n = diag.size();
  require(v0.size() == n, "davidson: start vector size mismatch");
  require(v0.norm() > 0.0, "davidson: zero starting vector");
  require(opts.max_iterations >= 1, "davidson: max_iterations must be positive");
  const int cap = std::max<int>(2, opts.max_subspace > 0 ? opts.max_subspace : std::max(2 * opts.max_iterations, 25));

  Eigen::MatrixXd V(n, std::min<Eigen::Index>(cap, n));
  Eigen::MatrixXd AV(n, V.cols());
  Eigen::Index m = 0;
  DavidsonReport report;
  Eigen::VectorXd tmp(n);

  auto push = [&](Eigen::VectorXd v) {
    if (m >= V.cols()) return false;
    const double norm_in = v.norm();
    if (norm_in == 0.0) return false;
    v /= norm_in;
    const double nv = detail::orthogonalize(V, m, v);
    if (nv < 1e-10) return false;
    V.col(m) = v / nv;
    apply(V.col(m), tmp);
    ++report.operator_applications;
    AV.col(m) = tmp;
    ++m;
    return true;
  };

  push(v0);
  if (guess && guess->size() == n) push(*guess);
  if (opts.include_lowest_diagonal && n > 0) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      if (diag[i] < diag[best]) best = i;
    push(Eigen::VectorXd::Unit(n, best));
  }

  Eigen::VectorXd w(n), aw(n), r(n);
  for (int it = 1;; ++it) {
    const Eigen::MatrixXd Hs = V.leftCols(m).transpose() * AV.leftCols(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (Hs + Hs.transpose()));
    const Eigen::VectorXd y = es.eigenvectors().col(0);
    const double theta = es.eigenvalues()[0];
    w = V.leftCols(m) * y;
    aw = AV.leftCols(m) * y;
    r = aw - theta * w;
    report.energy = theta;
    report.residual_norm = r.norm();
    report.iterations = it;
    report.eigenvector = w;
    const double elapsed = std::chrono::duration<double>(clock::now() - start).count();
    report.wall_seconds = elapsed;
    if (report.residual_norm < opts.tolerance) {
      report.converged = true;
      report.termination_reason = TerminationReason::residual;
      break;
    }
    if (it >= opts.max_iterations) {
      report.termination_reason = TerminationReason::max_iterations;
      break;
    }
    if (elapsed >= opts.wall_clock_limit.count()) {
      report.termination_reason = TerminationReason::wall_clock;
      break;
    }

    Eigen::VectorXd t(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double denom = theta - diag[i];
      if (std::abs(denom) < 1e-8) denom = denom < 0.0 ? -1e-8 : 1e-8;
      t[i] = r[i] / denom;
    }
    if (m >= V.cols()) {
      // restart from the current Ritz vector
      V.col(0) = w / w.norm();
      AV.col(0) = aw / w.norm();
      m = 1;
    }
    if (!push(t) && !push(r)) {
      // invariant subspace: the Ritz pair cannot improve further
      report.termination_reason = TerminationReason::max_iterations;
      break;
    }
  }
  report.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
  return report;
}

}  // namespace sqd
