// SPDX-License-Identifier: Apache-2.0
#pragma once

// Strong-scaling harness for distributed_apply on a synthetic subspace.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "sqd/combinatorics.hpp"
#include "sqd/parallel/distributed.hpp"

namespace sqd::parallel {

struct ScalingProblem {
  int n_orb = 16;
  int n_alpha = 5;
  int n_beta = 5;
  std::size_t d_alpha = 300;
  std::size_t d_beta = 300;
  std::uint64_t seed = 7;
};

struct ScalingOptions {
  std::vector<int> rank_counts{1, 2, 4, 8};
  std::size_t plans_per_count = 3;
  int repetitions = 3;
  bool balance = true;
};

struct ScalingRecord {
  int rank_count = 1;
  PartitionPlan plan;
  double wall_ms_median = 0.0;
  double speedup = 1.0;
  double efficiency = 1.0;
  std::uint64_t max_rank_work = 0;
  std::string error;
};

/// Random integrals with 8-fold symmetry, weights decaying away from the diagonal.
inline std::shared_ptr<MolecularIntegrals> synthetic_integrals(int n, std::uint64_t seed) {
  auto ints = std::make_shared<MolecularIntegrals>(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int p = 0; p < n; ++p)
    for (int q = 0; q <= p; ++q) ints->set_h(p, q, p == q ? -2.0 + 0.1 * p : 0.1 * u(rng));
  for (int p = 0; p < n; ++p)
    for (int r = 0; r <= p; ++r)
      for (int q = 0; q < n; ++q)
        for (int s = 0; s <= q; ++s) {
          if (p * n + r < q * n + s) continue;
          const double w = (p == r && q == s) ? 0.5 : 0.05;
          ints->set_eri(p, r, q, s, w * (p == r && q == s ? 1.0 + 0.1 * std::abs(u(rng)) : u(rng)));
        }
  return ints;
}

/// Distinct random half strings, sorted by mask.
inline std::vector<Mask> random_halves(int n_orb, int n_elec, std::size_t count, std::mt19937_64& rng) {
  const auto total = binomial(n_orb, n_elec);
  require(total.fits_size() && count <= static_cast<std::size_t>(total.value()),
          "random_halves: requested more strings than exist");
  std::vector<std::uint64_t> idx(static_cast<std::size_t>(total.value()));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Mask> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(unrank_half(idx[i], n_orb, n_elec).bits);
  std::sort(out.begin(), out.end());
  return out;
}

inline SubspaceBasis synthetic_basis(const ScalingProblem& p) {
  std::mt19937_64 rng(p.seed);
  auto alpha = random_halves(p.n_orb, p.n_alpha, p.d_alpha, rng);
  auto beta = random_halves(p.n_orb, p.n_beta, p.d_beta, rng);
  return SubspaceBasis({p.n_orb, p.n_alpha, p.n_beta}, std::move(alpha), std::move(beta));
}

/// Every (b_alpha, b_beta, t, m) with the given product that fits the dimensions.
inline std::vector<PartitionPlan> enumerate_plans(std::size_t d_alpha, std::size_t d_beta, int rank_count) {
  std::vector<PartitionPlan> out;
  for (int ba = 1; ba <= rank_count; ++ba) {
    if (rank_count % ba) continue;
    for (int bb = 1; bb <= rank_count / ba; ++bb) {
      if ((rank_count / ba) % bb) continue;
      const int rest = rank_count / ba / bb;
      for (int t = 1; t <= rest; ++t) {
        if (rest % t) continue;
        const int m = rest / t;
        if (static_cast<std::size_t>(ba) > d_alpha || static_cast<std::size_t>(bb) > d_beta) continue;
        if (static_cast<std::size_t>(m) > d_alpha / static_cast<std::size_t>(ba)) continue;
        out.push_back(plan_partition(d_alpha, d_beta, ba, bb, t, m));
      }
    }
  }
  return out;
}

/// Picks up to `limit` plans, spreading over the enumeration (pure basis split first).
inline std::vector<PartitionPlan> select_plans(std::vector<PartitionPlan> all, std::size_t limit) {
  if (all.size() <= limit || limit == 0) return all;
  std::vector<PartitionPlan> out;
  for (std::size_t k = 0; k < limit; ++k) out.push_back(all[k * (all.size() - 1) / std::max<std::size_t>(limit - 1, 1)]);
  return out;
}

inline std::vector<ScalingRecord> scaling_benchmark(const ScalingProblem& problem, const ScalingOptions& opts) {
  const auto basis = synthetic_basis(problem);
  const auto ints = synthetic_integrals(problem.n_orb, problem.seed + 1);
  const ProjectedHamiltonian ham(basis, ints);
  std::mt19937_64 rng(problem.seed + 2);
  std::normal_distribution<double> g;
  CIVector psi(basis);
  for (Eigen::Index i = 0; i < psi.values.size(); ++i) psi.values[i] = g(rng);
  psi.values.normalize();

  auto counts = opts.rank_counts;
  std::sort(counts.begin(), counts.end());
  std::vector<ScalingRecord> records;
  double base_ms = 0.0;
  int base_ranks = 0;
  DistributedOptions dopts;
  dopts.balance = opts.balance;
  for (int count : counts) {
    const auto plans = select_plans(enumerate_plans(basis.alpha_size(), basis.beta_size(), count), opts.plans_per_count);
    if (plans.empty()) {
      ScalingRecord r;
      r.rank_count = count;
      r.error = "no admissible plan";
      records.push_back(r);
      continue;
    }
    for (const auto& plan : plans) {
      ScalingRecord r;
      r.rank_count = count;
      r.plan = plan;
      try {
        std::vector<double> times;
        for (int rep = 0; rep < std::max(opts.repetitions, 1); ++rep) {
          const auto t0 = std::chrono::steady_clock::now();
          const auto res = distributed_apply(ham, psi, plan, dopts);
          times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
          r.max_rank_work = *std::max_element(res.rank_work.begin(), res.rank_work.end());
        }
        std::sort(times.begin(), times.end());
        const std::size_t n = times.size();
        r.wall_ms_median = n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
        if (base_ranks == 0) {
          base_ms = r.wall_ms_median;
          base_ranks = count;
        }
        r.speedup = base_ms / r.wall_ms_median;
        r.efficiency = base_ms * base_ranks / (r.wall_ms_median * count);
      } catch (const std::exception& e) {
        r.error = e.what();
      }
      records.push_back(r);
    }
  }
  return records;
}

inline void write_scaling_csv(std::ostream& os, const std::vector<ScalingRecord>& records) {
  os << "# sqd-scaling v1\n";
  os << "rank_count,b_alpha,b_beta,t,m,wall_ms_median,speedup,efficiency\n";
  for (const auto& r : records) {
    if (!r.error.empty()) continue;
    os << r.rank_count << ',' << r.plan.b_alpha << ',' << r.plan.b_beta << ',' << r.plan.t << ',' << r.plan.m << ','
       << r.wall_ms_median << ',' << r.speedup << ',' << r.efficiency << '\n';
  }
}

}  // namespace sqd::parallel
