// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Decomposition of the distributed Hamiltonian product over
 * B = B_alpha * B_beta basis ranks, T task replicas and M row slices,
 * and the assignment of column tasks to task replicas.
 */

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "sqd/error.hpp"

namespace sqd::parallel {

struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  bool operator==(const Range&) const = default;
};

/// Contiguous balanced split of [0, n) into `parts` slices whose sizes differ by at most one.
inline std::vector<Range> split_range(std::size_t n, std::size_t parts) {
  require(parts >= 1, "split_range: need at least one part");
  std::vector<Range> out;
  out.reserve(parts);
  const std::size_t base = n / parts, extra = n % parts;
  std::size_t at = 0;
  for (std::size_t i = 0; i < parts; ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    out.push_back({at, at + len});
    at += len;
  }
  return out;
}

struct PartitionPlan {
  int b_alpha = 1;
  int b_beta = 1;
  int t = 1;
  int m = 1;
  std::vector<Range> alpha_slices;
  std::vector<Range> beta_slices;
  /// Row slices of each alpha slice (indexed [alpha_slice][m]).
  std::vector<std::vector<Range>> row_slices;

  int basis_ranks() const { return b_alpha * b_beta; }
  int rank_count() const { return b_alpha * b_beta * t * m; }

  struct Coordinates {
    int basis, task, row;
  };
  int rank_of(int basis, int task, int row) const { return (basis * t + task) * m + row; }
  Coordinates coordinates(int rank) const { return {rank / (t * m), (rank / m) % t, rank % m}; }
  int alpha_slice_of(int basis) const { return basis / b_beta; }
  int beta_slice_of(int basis) const { return basis % b_beta; }
};

inline PartitionPlan plan_partition(std::size_t d_alpha, std::size_t d_beta, int b_alpha, int b_beta, int t, int m) {
  if (b_alpha < 1 || b_beta < 1 || t < 1 || m < 1)
    throw ContractViolation("plan_partition: all communicator sizes must be >= 1");
  if (static_cast<std::size_t>(b_alpha) > d_alpha || static_cast<std::size_t>(b_beta) > d_beta)
    throw ContractViolation("plan_partition: more basis ranks than strings (" + std::to_string(b_alpha) + "x" +
                            std::to_string(b_beta) + " for " + std::to_string(d_alpha) + "x" + std::to_string(d_beta) + ")");
  PartitionPlan p;
  p.b_alpha = b_alpha;
  p.b_beta = b_beta;
  p.t = t;
  p.m = m;
  p.alpha_slices = split_range(d_alpha, static_cast<std::size_t>(b_alpha));
  p.beta_slices = split_range(d_beta, static_cast<std::size_t>(b_beta));
  for (const auto& s : p.alpha_slices) {
    if (static_cast<std::size_t>(m) > s.size())
      throw ContractViolation("plan_partition: " + std::to_string(m) + " row slices exceed an alpha slice of " +
                              std::to_string(s.size()) + " strings");
    auto rows = split_range(s.size(), static_cast<std::size_t>(m));
    for (auto& r : rows) {
      r.begin += s.begin;
      r.end += s.begin;
    }
    p.row_slices.push_back(std::move(rows));
  }
  return p;
}

struct TaskAssignment {
  std::vector<int> replica_of;
  std::vector<std::uint64_t> loads;

  std::uint64_t max_load() const { return loads.empty() ? 0 : *std::max_element(loads.begin(), loads.end()); }
};

namespace detail {

/// One improving move or swap between the heaviest replica and another one.
/// Returns false when no exchange lowers the pair's larger load.
inline bool improve_once(const std::vector<std::uint64_t>& sizes, TaskAssignment& a) {
  const auto t = a.loads.size();
  const std::size_t h = static_cast<std::size_t>(std::max_element(a.loads.begin(), a.loads.end()) - a.loads.begin());
  std::vector<std::vector<std::size_t>> members(t);
  for (std::size_t i = 0; i < sizes.size(); ++i) members[static_cast<std::size_t>(a.replica_of[i])].push_back(i);
  auto by_size = [&](std::size_t x, std::size_t y) { return sizes[x] < sizes[y] || (sizes[x] == sizes[y] && x < y); };
  for (auto& m : members) std::sort(m.begin(), m.end(), by_size);

  const std::uint64_t lh = a.loads[h];
  std::uint64_t best = lh;
  std::size_t best_r = t, best_i = 0, best_j = SIZE_MAX;
  for (std::size_t r = 0; r < t; ++r) {
    if (r == h || a.loads[r] >= lh) continue;
    const std::uint64_t gap = lh - a.loads[r];
    for (std::size_t i : members[h]) {
      // moving i alone
      if (sizes[i] < gap) {
        const auto m = std::max(lh - sizes[i], a.loads[r] + sizes[i]);
        if (m < best) best = m, best_r = r, best_i = i, best_j = SIZE_MAX;
      }
      // swapping i with the j whose size brings the pair closest to even
      const auto& mr = members[r];
      const auto want = static_cast<double>(sizes[i]) - static_cast<double>(gap) / 2.0;
      auto it = std::lower_bound(mr.begin(), mr.end(), want,
                                 [&](std::size_t j, double v) { return static_cast<double>(sizes[j]) < v; });
      for (auto c : {it, it == mr.begin() ? mr.end() : std::prev(it)}) {
        if (c == mr.end()) continue;
        const std::size_t j = *c;
        if (sizes[j] >= sizes[i] || sizes[i] - sizes[j] >= gap) continue;
        const auto d = sizes[i] - sizes[j];
        const auto m = std::max(lh - d, a.loads[r] + d);
        if (m < best) best = m, best_r = r, best_i = i, best_j = j;
      }
    }
  }
  if (best_r == t) return false;
  const std::uint64_t out = sizes[best_i], in = best_j == SIZE_MAX ? 0 : sizes[best_j];
  a.replica_of[best_i] = static_cast<int>(best_r);
  if (best_j != SIZE_MAX) a.replica_of[best_j] = static_cast<int>(h);
  a.loads[h] = a.loads[h] - out + in;
  a.loads[best_r] = a.loads[best_r] + out - in;
  return true;
}

}  // namespace detail

/// Longest-processing-time greedy: largest task first, onto the lightest
/// replica (ties to the lower task and replica index), followed by a bounded
/// number of move/swap exchanges off the heaviest replica. The exchanges
/// never raise the maximum load, so the LPT guarantees carry over.
inline TaskAssignment balance_tasks(const std::vector<std::uint64_t>& sizes, int t, int max_exchanges = 64) {
  require(t >= 1, "balance_tasks: need at least one replica");
  TaskAssignment a;
  a.replica_of.assign(sizes.size(), 0);
  a.loads.assign(static_cast<std::size_t>(t), 0);
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sizes[x] > sizes[y]; });
  for (std::size_t task : order) {
    const auto lightest = std::min_element(a.loads.begin(), a.loads.end()) - a.loads.begin();
    a.replica_of[task] = static_cast<int>(lightest);
    a.loads[static_cast<std::size_t>(lightest)] += sizes[task];
  }
  for (int k = 0; k < max_exchanges && t > 1 && detail::improve_once(sizes, a); ++k) {
  }
  return a;
}

/// Static assignment task i -> replica i mod t (the unbalanced reference).
inline TaskAssignment round_robin_tasks(const std::vector<std::uint64_t>& sizes, int t) {
  require(t >= 1, "round_robin_tasks: need at least one replica");
  TaskAssignment a;
  a.replica_of.resize(sizes.size());
  a.loads.assign(static_cast<std::size_t>(t), 0);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    a.replica_of[i] = static_cast<int>(i % static_cast<std::size_t>(t));
    a.loads[i % static_cast<std::size_t>(t)] += sizes[i];
  }
  return a;
}

}  // namespace sqd::parallel
