// SPDX-License-Identifier: Apache-2.0
#pragma once

// Differential evolution, best/2/bin trial generation.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sqd/error.hpp"
#include "sqd/random.hpp"

namespace sqd {

/// strict: r1..r4 distinct and different from the target; replacement: drawn
/// independently, only excluding the target.
enum class IndexMode { strict, replacement };

inline IndexMode index_mode_from_string(const std::string& s) {
  if (s == "strict") return IndexMode::strict;
  if (s == "replacement") return IndexMode::replacement;
  throw ContractViolation("unknown DE index mode '" + s + "' (expected strict or replacement)");
}

inline const char* to_string(IndexMode m) { return m == IndexMode::strict ? "strict" : "replacement"; }

struct DEConfig {
  int populations = 2;
  int walkers = 4;
  double F = 0.25;
  double CR = 0.7;
  IndexMode index_mode = IndexMode::replacement;
  std::optional<std::pair<double, double>> bounds;

  void validate() const {
    require(populations >= 1, "DEConfig: populations must be positive");
    require(walkers >= 1, "DEConfig: walkers must be positive");
    require(F >= 0.0, "DEConfig: F must be non-negative");
    require(CR >= 0.0 && CR <= 1.0, "DEConfig: CR must lie in [0, 1]");
    if (bounds) require(bounds->first < bounds->second, "DEConfig: empty bounds");
  }
};

/// One trial vector per walker; `energies` selects x_best (lowest, ties to the lower index).
inline std::vector<Eigen::VectorXd> de_step(const std::vector<Eigen::VectorXd>& population,
                                            const std::vector<double>& energies, const DEConfig& cfg,
                                            std::uint64_t seed) {
  cfg.validate();
  const std::size_t np = population.size();
  require(np >= 2, "de_step: population needs at least two walkers");
  require(energies.size() == np, "de_step: one energy per walker required");
  const auto dim = population.front().size();
  for (const auto& x : population) require(x.size() == dim, "de_step: walkers differ in dimension");
  require(dim > 0, "de_step: empty parameter vector");
  if (cfg.index_mode == IndexMode::strict)
    require(np >= 5, "de_step: strict index mode needs at least five walkers");
  const std::size_t best =
      static_cast<std::size_t>(std::min_element(energies.begin(), energies.end()) - energies.begin());

  Rng rng(seed);
  std::vector<Eigen::VectorXd> trials;
  trials.reserve(np);
  for (std::size_t i = 0; i < np; ++i) {
    std::size_t r[4];
    for (int k = 0; k < 4; ++k) {
      for (;;) {
        r[k] = static_cast<std::size_t>(rng.below(np));
        if (r[k] == i) continue;
        if (cfg.index_mode == IndexMode::strict && std::find(r, r + k, r[k]) != r + k) continue;
        break;
      }
    }
    const Eigen::VectorXd mutant =
        population[best] + cfg.F * (population[r[0]] - population[r[1]]) + cfg.F * (population[r[2]] - population[r[3]]);
    Eigen::VectorXd trial = population[i];
    const auto forced = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(dim)));
    for (Eigen::Index j = 0; j < dim; ++j)
      if (j == forced || rng.uniform() < cfg.CR) trial[j] = mutant[j];
    if (cfg.bounds) trial = trial.cwiseMax(cfg.bounds->first).cwiseMin(cfg.bounds->second);
    trials.push_back(std::move(trial));
  }
  return trials;
}

}  // namespace sqd
