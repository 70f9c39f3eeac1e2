// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Distributed sigma = H phi over a group of worker ranks.
 *
 * Rank (basis, task, row) owns output rows `row` of basis block `basis`
 * (an alpha slice times a beta slice) and initially holds the input block
 * phi[basis]. The product proceeds in three communication phases:
 *
 *  1. ring: B - 1 neighbour shifts pass every input block once around the
 *     basis ring; after each arrival the rank applies the column tasks that
 *     the task assignment gives its replica;
 *  2. task-reduce: partial sums are combined over the T replicas along a
 *     fixed binary tree, so the floating-point order never changes;
 *  3. row-concat: row slices are collected on row 0, which hands the
 *     finished block to the caller.
 *
 * Column tasks are the alpha strings of the block being processed; a task's
 * size is the length of its alpha excitation-table row.
 */

#include <chrono>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "sqd/davidson.hpp"
#include "sqd/hamiltonian.hpp"
#include "sqd/parallel/mailbox.hpp"
#include "sqd/parallel/partition.hpp"

namespace sqd::parallel {

struct DistributedOptions {
  bool balance = true;
  std::chrono::milliseconds watchdog{10'000};
  /// Rank that never performs its ring sends; only for exercising the watchdog.
  int silent_rank = -1;
};

struct DistributedResult {
  CIVector sigma;
  /// Work units (task sizes) executed per rank, indexed by rank id.
  std::vector<std::uint64_t> rank_work;
  std::size_t ring_messages = 0;
  std::size_t reduce_messages = 0;
  std::size_t concat_messages = 0;
  std::size_t gather_messages = 0;
};

/// Message counts the communication pattern must produce for a plan.
struct ExpectedMessages {
  std::size_t ring, reduce, concat, gather;
};

inline ExpectedMessages expected_messages(const PartitionPlan& p) {
  const auto b = static_cast<std::size_t>(p.basis_ranks());
  const auto r = static_cast<std::size_t>(p.rank_count());
  return {r * (b - 1), b * static_cast<std::size_t>(p.m) * static_cast<std::size_t>(p.t - 1),
          b * static_cast<std::size_t>(p.m - 1), b};
}

/// Task sizes of the alpha strings in one alpha slice.
inline std::vector<std::uint64_t> column_task_sizes(const ProjectedHamiltonian& ham, Range alpha) {
  std::vector<std::uint64_t> sizes;
  sizes.reserve(alpha.size());
  const auto& ta = ham.alpha_table();
  for (std::size_t a = alpha.begin; a < alpha.end; ++a) sizes.push_back(ta.singles_of(a) + ta.doubles_of(a) + 1);
  return sizes;
}

namespace detail {

struct Block {
  Range alpha, beta;
  std::size_t index(std::size_t a, std::size_t b) const { return (a - alpha.begin) * beta.size() + (b - beta.begin); }
};

/// Adds the contribution of column alpha string `ac` of input block `src` to
/// the output rows (`rows` x `dst.beta`).
inline void apply_column_task(const ProjectedHamiltonian& ham, std::size_t ac, const Block& src,
                              const std::vector<double>& phi, Range rows, const Block& dst, std::vector<double>& out) {
  const auto& ints = ham.integrals();
  const auto& ta = ham.alpha_table();
  const auto& tb = ham.beta_table();
  const auto& diag = ham.diagonal();
  const std::size_t db = ham.basis().beta_size();
  const Range sb = src.beta, ob = dst.beta;
  const bool same_beta = sb == ob;
  auto o = [&](std::size_t a, std::size_t b) -> double& { return out[(a - rows.begin) * ob.size() + (b - ob.begin)]; };
  auto in = [&](std::size_t b) { return phi[src.index(ac, b)]; };

  if (rows.contains(ac)) {
    if (same_beta)
      for (std::size_t b = sb.begin; b < sb.end; ++b) o(ac, b) += diag[static_cast<Eigen::Index>(ac * db + b)] * in(b);
    for (std::size_t bc = sb.begin; bc < sb.end; ++bc) {
      const double x = in(bc);
      for (auto e = tb.singles_begin(bc); e != tb.singles_end(bc); ++e)
        if (ob.contains(e->target)) o(ac, e->target) += e->sign * (e->base + ham.alpha_coulomb(ac, e->to, e->from)) * x;
      for (auto e = tb.doubles_begin(bc); e != tb.doubles_end(bc); ++e)
        if (ob.contains(e->target)) o(ac, e->target) += e->value * x;
    }
  }
  for (auto ea = ta.singles_begin(ac); ea != ta.singles_end(ac); ++ea) {
    if (!rows.contains(ea->target)) continue;
    const std::size_t a = ea->target;
    if (same_beta)
      for (std::size_t b = sb.begin; b < sb.end; ++b)
        o(a, b) += ea->sign * (ea->base + ham.beta_coulomb(b, ea->to, ea->from)) * in(b);
    for (std::size_t bc = sb.begin; bc < sb.end; ++bc) {
      const double x = ea->sign * in(bc);
      for (auto eb = tb.singles_begin(bc); eb != tb.singles_end(bc); ++eb)
        if (ob.contains(eb->target)) o(a, eb->target) += eb->sign * ints.eri(ea->to, ea->from, eb->to, eb->from) * x;
    }
  }
  if (same_beta)
    for (auto ea = ta.doubles_begin(ac); ea != ta.doubles_end(ac); ++ea) {
      if (!rows.contains(ea->target)) continue;
      for (std::size_t b = sb.begin; b < sb.end; ++b) o(ea->target, b) += ea->value * in(b);
    }
}

}  // namespace detail

inline DistributedResult distributed_apply(const ProjectedHamiltonian& ham, const CIVector& psi, const PartitionPlan& plan,
                                           const DistributedOptions& opts = {}) {
  const auto& basis = ham.basis();
  require(psi.matches(basis), "distributed_apply: vector does not match basis");
  require(plan.alpha_slices.size() == static_cast<std::size_t>(plan.b_alpha) &&
              plan.beta_slices.size() == static_cast<std::size_t>(plan.b_beta) &&
              !plan.alpha_slices.empty() && plan.alpha_slices.back().end == basis.alpha_size() &&
              plan.beta_slices.back().end == basis.beta_size(),
          "distributed_apply: plan does not match basis dimensions");

  const int ranks = plan.rank_count();
  const int B = plan.basis_ranks();
  RankGroup group(ranks, opts.watchdog);
  DistributedResult result;
  result.sigma = CIVector(basis);
  result.rank_work.assign(static_cast<std::size_t>(ranks), 0);

  auto block_of = [&](int ib) {
    return detail::Block{plan.alpha_slices[static_cast<std::size_t>(plan.alpha_slice_of(ib))],
                         plan.beta_slices[static_cast<std::size_t>(plan.beta_slice_of(ib))]};
  };
  // Identical on every rank; computed once here instead of per rank.
  std::vector<TaskAssignment> assignment;
  for (int ib = 0; ib < B; ++ib) {
    const auto sizes = column_task_sizes(ham, block_of(ib).alpha);
    assignment.push_back(opts.balance ? balance_tasks(sizes, plan.t) : round_robin_tasks(sizes, plan.t));
  }

  std::mutex err_mu;
  std::exception_ptr first_error;

  auto worker = [&](int rank) {
    const auto [ib, it, im] = plan.coordinates(rank);
    const std::string who = "rank " + std::to_string(rank) + " (basis " + std::to_string(ib) + ", task " +
                            std::to_string(it) + ", row " + std::to_string(im) + ")";
    const auto own = block_of(ib);
    const Range rows = plan.row_slices[static_cast<std::size_t>(plan.alpha_slice_of(ib))][static_cast<std::size_t>(im)];
    std::vector<double> out(rows.size() * own.beta.size(), 0.0);

    std::vector<double> phi(own.alpha.size() * own.beta.size());
    for (std::size_t a = own.alpha.begin; a < own.alpha.end; ++a)
      for (std::size_t b = own.beta.begin; b < own.beta.end; ++b) phi[own.index(a, b)] = psi.at(a, b);

    const int next = plan.rank_of((ib + 1) % B, it, im);
    const int prev = plan.rank_of((ib + B - 1) % B, it, im);
    for (int step = 0; step < B; ++step) {
      const int src = (ib - step + B) % B;
      const auto sblock = block_of(src);
      const auto& asg = assignment[static_cast<std::size_t>(src)];
      for (std::size_t k = 0; k < sblock.alpha.size(); ++k) {
        if (asg.replica_of[k] != it) continue;
        detail::apply_column_task(ham, sblock.alpha.begin + k, sblock, phi, rows, own, out);
      }
      result.rank_work[static_cast<std::size_t>(rank)] += asg.loads[static_cast<std::size_t>(it)];
      if (step + 1 < B) {
        if (rank != opts.silent_rank) group.send(rank, next, Tag::ring, step, phi);
        phi = group.recv(rank, prev, Tag::ring, step, who);
      }
    }

    // binary-tree reduction over task replicas toward task 0
    for (int stride = 1; stride < plan.t; stride *= 2) {
      if (it % (2 * stride) == stride) {
        group.send(rank, plan.rank_of(ib, it - stride, im), Tag::reduce, stride, std::move(out));
        return;
      }
      if (it % (2 * stride) == 0 && it + stride < plan.t) {
        const auto part = group.recv(rank, plan.rank_of(ib, it + stride, im), Tag::reduce, stride, who);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += part[i];
      }
    }
    if (it != 0) return;

    if (im != 0) {
      group.send(rank, plan.rank_of(ib, 0, 0), Tag::concat, im, std::move(out));
      return;
    }
    std::vector<double> full(own.alpha.size() * own.beta.size());
    std::copy(out.begin(), out.end(), full.begin());
    const auto& slices = plan.row_slices[static_cast<std::size_t>(plan.alpha_slice_of(ib))];
    for (int r = 1; r < plan.m; ++r) {
      const auto part = group.recv(rank, plan.rank_of(ib, 0, r), Tag::concat, r, who);
      const auto offset = (slices[static_cast<std::size_t>(r)].begin - own.alpha.begin) * own.beta.size();
      std::copy(part.begin(), part.end(), full.begin() + static_cast<std::ptrdiff_t>(offset));
    }
    group.send(rank, group.caller(), Tag::gather, ib, std::move(full));
  };

  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(ranks));
  for (int r = 0; r < ranks; ++r)
    threads.emplace_back([&, r] {
      try {
        worker(r);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        group.abort();
      }
    });

  try {
    for (int ib = 0; ib < B; ++ib) {
      const int root = plan.rank_of(ib, 0, 0);
      const auto blk = group.recv(group.caller(), root, Tag::gather, ib, "caller", 2);
      const auto own = block_of(ib);
      for (std::size_t a = own.alpha.begin; a < own.alpha.end; ++a)
        for (std::size_t b = own.beta.begin; b < own.beta.end; ++b) result.sigma.at(a, b) = blk[own.index(a, b)];
    }
  } catch (...) {
    std::lock_guard lock(err_mu);
    if (!first_error) first_error = std::current_exception();
    group.abort();
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);

  result.ring_messages = group.stats().count(Tag::ring);
  result.reduce_messages = group.stats().count(Tag::reduce);
  result.concat_messages = group.stats().count(Tag::concat);
  result.gather_messages = group.stats().count(Tag::gather);
  return result;
}

/// Davidson-compatible operator running every product through the rank group.
inline LinearOperator distributed_operator(const ProjectedHamiltonian& ham, PartitionPlan plan, DistributedOptions opts = {}) {
  return [&ham, plan = std::move(plan), opts](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    out = distributed_apply(ham, CIVector(ham.basis(), in), plan, opts).sigma.values;
  };
}

}  // namespace sqd::parallel
