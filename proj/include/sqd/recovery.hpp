// SPDX-License-Identifier: Apache-2.0
#pragma once

// Classical pre-processing between sampling and diagonalization:
// occupancy-guided configuration recovery, subsampling, subspace
// construction and carryover selection.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sqd/bits.hpp"
#include "sqd/error.hpp"
#include "sqd/random.hpp"
#include "sqd/sampling.hpp"
#include "sqd/subspace.hpp"

namespace sqd {

/// Spatial-orbital occupancies n_{p,sigma} in [0, 1].
struct OccupancyVector {
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;

  int n_orb() const { return static_cast<int>(alpha.size()); }
};

inline OccupancyVector hf_occupancies(const SystemSpec& spec) {
  OccupancyVector o{Eigen::VectorXd::Zero(spec.n_orb), Eigen::VectorXd::Zero(spec.n_orb)};
  o.alpha.head(spec.n_alpha).setOnes();
  o.beta.head(spec.n_beta).setOnes();
  return o;
}

/// One line per spatial orbital: `<n_alpha> <n_beta>`.
inline OccupancyVector read_occupancies(std::istream& in, const std::string& name = "<occupancies>") {
  std::vector<double> a, b;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::istringstream ls(line);
    double x, y;
    if (!(ls >> x >> y)) throw ParseError(name + ":" + std::to_string(lineno) + ": expected two occupancies");
    if (x < 0 || x > 1 || y < 0 || y > 1)
      throw ParseError(name + ":" + std::to_string(lineno) + ": occupancy outside [0, 1]");
    a.push_back(x);
    b.push_back(y);
  }
  OccupancyVector o{Eigen::Map<Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size())),
                    Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()))};
  return o;
}

inline OccupancyVector read_occupancies(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open occupancy file " + path.string());
  return read_occupancies(in, path.string());
}

inline void write_occupancies(std::ostream& os, const OccupancyVector& o) {
  os << std::setprecision(17);
  for (int p = 0; p < o.n_orb(); ++p) os << o.alpha[p] << ' ' << o.beta[p] << '\n';
}

inline constexpr double kRecoveryFloor = 1e-6;

namespace detail {

/// Index drawn from non-negative weights.
inline int weighted_choice(const std::vector<std::pair<int, double>>& w, Rng& rng) {
  double total = 0.0;
  for (const auto& [p, x] : w) total += x;
  double u = rng.uniform() * total;
  for (const auto& [p, x] : w) {
    if (u < x) return p;
    u -= x;
  }
  return w.back().first;
}

/// Adds or removes electrons until the popcount is `target`.
inline Mask repair_half(Mask m, int target, const Eigen::VectorXd& occ, int n_orb, double eta, Rng& rng) {
  std::vector<std::pair<int, double>> w;
  while (std::popcount(m) != target) {
    w.clear();
    const bool remove = std::popcount(m) > target;
    for (int p = 0; p < n_orb; ++p) {
      const bool set = (m >> p) & 1U;
      if (remove && set) w.emplace_back(p, (1.0 - occ[p]) + eta);
      if (!remove && !set) w.emplace_back(p, occ[p] + eta);
    }
    m ^= Mask{1} << weighted_choice(w, rng);
  }
  return m;
}

}  // namespace detail

/// Repairs every shot with wrong electron counts; correct shots pass through.
inline SampleBatch recover_configurations(const SampleBatch& noisy, const OccupancyVector& occ, const SystemSpec& spec,
                                          std::uint64_t seed, double eta = kRecoveryFloor) {
  require(occ.n_orb() == spec.n_orb && occ.beta.size() == spec.n_orb,
          "recover_configurations: occupancy vector has " + std::to_string(occ.n_orb()) + " orbitals, system has " +
              std::to_string(spec.n_orb));
  require(noisy.n_orb == spec.n_orb, "recover_configurations: batch width does not match the system");
  Rng rng(seed);
  SampleBatch out;
  out.n_orb = spec.n_orb;
  out.provenance = Provenance::recovered;
  out.start = noisy.start;
  out.end = noisy.end;
  for (const auto& [c, k] : noisy.counts) {
    if (c.alpha.popcount() == spec.n_alpha && c.beta.popcount() == spec.n_beta) {
      out.add(c, k);
      continue;
    }
    for (std::uint64_t s = 0; s < k; ++s) {
      const Mask a = detail::repair_half(c.alpha.bits, spec.n_alpha, occ.alpha, spec.n_orb, eta, rng);
      const Mask b = detail::repair_half(c.beta.bits, spec.n_beta, occ.beta, spec.n_orb, eta, rng);
      out.add({{a}, {b}});
    }
  }
  return out;
}

/// Keeps only shots with the right electron counts (no repair).
inline SampleBatch postselect(const SampleBatch& batch, const SystemSpec& spec) {
  SampleBatch out;
  out.n_orb = batch.n_orb;
  out.provenance = batch.provenance;
  for (const auto& [c, k] : batch.counts)
    if (c.alpha.popcount() == spec.n_alpha && c.beta.popcount() == spec.n_beta) out.add(c, k);
  return out;
}

/// D draws with replacement, proportional to counts.
inline std::vector<Configuration> subsample(const SampleBatch& batch, std::size_t d, std::uint64_t seed) {
  require(d > 0, "subsample: D must be positive");
  require(batch.shots > 0, "subsample: empty batch");
  std::vector<Configuration> keys;
  std::vector<double> cdf;
  double acc = 0.0;
  for (const auto& [c, k] : batch.counts) {
    keys.push_back(c);
    cdf.push_back(acc += static_cast<double>(k));
  }
  Rng rng(seed);
  std::vector<Configuration> out;
  out.reserve(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double u = rng.uniform() * acc;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    out.push_back(keys[static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(keys.size()) - 1))]);
  }
  return out;
}

struct CarryoverEntry {
  Mask half = 0;
  double weight = 0.0;
  bool operator==(const CarryoverEntry&) const = default;
};

/// Top-weighted half-configurations of a previous solution.
struct CarryoverSet {
  std::vector<CarryoverEntry> alpha;
  std::vector<CarryoverEntry> beta;
  int iteration = -1;

  bool empty() const { return alpha.empty() && beta.empty(); }
  std::vector<Mask> alpha_halves() const {
    std::vector<Mask> v;
    for (const auto& e : alpha) v.push_back(e.half);
    return v;
  }
  std::vector<Mask> beta_halves() const {
    std::vector<Mask> v;
    for (const auto& e : beta) v.push_back(e.half);
    return v;
  }
};

/// Text checkpoint: `iteration <i>` then one `alpha|beta <bits> <weight>` line per entry.
inline void write_carryover(std::ostream& os, const CarryoverSet& c, int n_orb) {
  os << "iteration " << c.iteration << '\n' << std::setprecision(17);
  for (const auto& e : c.alpha) os << "alpha " << to_bitstring(e.half, n_orb) << ' ' << e.weight << '\n';
  for (const auto& e : c.beta) os << "beta " << to_bitstring(e.half, n_orb) << ' ' << e.weight << '\n';
}

inline CarryoverSet read_carryover(std::istream& in, const std::string& name = "<carryover>") {
  CarryoverSet c;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind, bits;
    ls >> kind;
    if (kind == "iteration") {
      if (!(ls >> c.iteration)) throw ParseError(name + ":" + std::to_string(lineno) + ": bad iteration line");
      continue;
    }
    double w;
    if (!(ls >> bits >> w) || (kind != "alpha" && kind != "beta"))
      throw ParseError(name + ":" + std::to_string(lineno) + ": expected 'alpha|beta <bits> <weight>'");
    (kind == "alpha" ? c.alpha : c.beta).push_back({mask_from_bitstring(bits), w});
  }
  return c;
}

/// Half list = unique sampled halves, carryover halves and the HF half.
/// In spin-symmetric mode both sectors share the union of all of them.
inline SubspaceBasis build_subspace(const std::vector<Configuration>& selected, const CarryoverSet& carryover,
                                    const SystemSpec& spec, bool spin_symmetric = true) {
  validate(spec);
  require(!spin_symmetric || spec.n_alpha == spec.n_beta,
          "build_subspace: spin-symmetric mode needs n_alpha == n_beta");
  std::set<Mask> a, b;
  for (const auto& c : selected) {
    require(c.alpha.popcount() == spec.n_alpha && c.beta.popcount() == spec.n_beta,
            "build_subspace: configuration " + to_bitstring(c, spec.n_orb) + " has wrong electron counts");
    a.insert(c.alpha.bits);
    b.insert(c.beta.bits);
  }
  for (const auto& e : carryover.alpha) a.insert(e.half);
  for (const auto& e : carryover.beta) b.insert(e.half);
  const auto hf = hf_configuration(spec);
  a.insert(hf.alpha.bits);
  b.insert(hf.beta.bits);
  for (Mask m : a) require(std::popcount(m) == spec.n_alpha, "build_subspace: carryover alpha half has wrong popcount");
  for (Mask m : b) require(std::popcount(m) == spec.n_beta, "build_subspace: carryover beta half has wrong popcount");
  if (spin_symmetric) {
    a.insert(b.begin(), b.end());
    std::vector<Mask> halves(a.begin(), a.end());
    return SubspaceBasis(spec, halves, halves);
  }
  return SubspaceBasis(spec, std::vector<Mask>(a.begin(), a.end()), std::vector<Mask>(b.begin(), b.end()));
}

/// n_{p,sigma} = sum_x |psi_x|^2 x_{p,sigma} / |psi|^2.
inline OccupancyVector update_occupancies(const SubspaceBasis& basis, const CIVector& psi) {
  require(psi.matches(basis), "update_occupancies: vector does not match basis");
  const double norm2 = psi.values.squaredNorm();
  require(norm2 > 0.0, "update_occupancies: zero vector");
  const int n = basis.spec().n_orb;
  OccupancyVector o{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  const auto m = psi.matrix();
  const Eigen::VectorXd rows = m.array().square().rowwise().sum();
  const Eigen::VectorXd cols = m.array().square().colwise().sum().transpose();
  for (std::size_t a = 0; a < basis.alpha_size(); ++a)
    for (int p : occupied_orbitals(basis.alpha()[a])) o.alpha[p] += rows[static_cast<Eigen::Index>(a)];
  for (std::size_t b = 0; b < basis.beta_size(); ++b)
    for (int p : occupied_orbitals(basis.beta()[b])) o.beta[p] += cols[static_cast<Eigen::Index>(b)];
  o.alpha = (o.alpha / norm2).cwiseMax(0.0).cwiseMin(1.0);
  o.beta = (o.beta / norm2).cwiseMax(0.0).cwiseMin(1.0);
  return o;
}

namespace detail {

inline std::vector<CarryoverEntry> top_weighted(const std::vector<Mask>& halves, const Eigen::VectorXd& w, double c) {
  std::vector<CarryoverEntry> all;
  for (std::size_t i = 0; i < halves.size(); ++i) all.push_back({halves[i], w[static_cast<Eigen::Index>(i)]});
  std::stable_sort(all.begin(), all.end(), [](const CarryoverEntry& x, const CarryoverEntry& y) {
    return x.weight > y.weight || (x.weight == y.weight && x.half < y.half);
  });
  // the small slack keeps e.g. 0.7 * 10 from rounding up to 8
  auto keep = static_cast<std::size_t>(std::ceil(c * static_cast<double>(all.size()) - 1e-9));
  keep = std::clamp<std::size_t>(keep, std::min<std::size_t>(1, all.size()), all.size());
  all.resize(keep);
  return all;
}

}  // namespace detail

/// Keeps the ceil(c D_h) halves of largest weight r_b = sum_b' |psi_bb'|^2 (at least one).
inline CarryoverSet select_carryover(const SubspaceBasis& basis, const CIVector& psi, double c, int iteration = -1) {
  require(c >= 0.0 && c <= 1.0, "select_carryover: ratio must lie in [0, 1]");
  require(psi.matches(basis), "select_carryover: vector does not match basis");
  const auto m = psi.matrix();
  CarryoverSet out;
  out.iteration = iteration;
  out.alpha = detail::top_weighted(basis.alpha(), m.array().square().rowwise().sum(), c);
  out.beta = detail::top_weighted(basis.beta(), m.array().square().colwise().sum().transpose(), c);
  return out;
}

}  // namespace sqd
