// SPDX-License-Identifier: Apache-2.0
#pragma once

// Measurement outcomes: multinomial sampling of |amplitude|^2 and an
// independent bit-flip noise channel.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sqd/bits.hpp"
#include "sqd/error.hpp"
#include "sqd/lucj.hpp"
#include "sqd/random.hpp"

namespace sqd {

enum class Provenance { ideal, noisy, recovered };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::ideal: return "ideal";
    case Provenance::noisy: return "noisy";
    case Provenance::recovered: return "recovered";
  }
  return "?";
}

struct SampleBatch {
  int n_orb = 0;
  std::uint64_t shots = 0;
  std::map<Configuration, std::uint64_t> counts;
  Provenance provenance = Provenance::ideal;
  /// Sampler activity interval, seconds on the run clock.
  double start = 0.0;
  double end = 0.0;

  void add(const Configuration& c, std::uint64_t k = 1) {
    counts[c] += k;
    shots += k;
  }
  bool consistent() const {
    std::uint64_t s = 0;
    for (const auto& [c, k] : counts) s += k;
    return s == shots;
  }
};

/// One line per unique bitstring, `<bits> <count>`, alpha half then beta half, orbital 0 leftmost.
inline void write_samples(std::ostream& os, const SampleBatch& b) {
  for (const auto& [c, k] : b.counts) os << to_bitstring(c, b.n_orb) << ' ' << k << '\n';
}

inline void write_samples(const std::filesystem::path& path, const SampleBatch& b) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot write " + path.string());
  write_samples(os, b);
}

inline SampleBatch read_samples(std::istream& in, int n_orb, const std::string& name = "<samples>") {
  SampleBatch b;
  b.n_orb = n_orb;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string bits;
    std::uint64_t k = 0;
    if (!(ls >> bits >> k)) throw ParseError(name + ":" + std::to_string(lineno) + ": expected '<bits> <count>'");
    try {
      b.add(configuration_from_bitstring(bits, n_orb), k);
    } catch (const ParseError& e) {
      throw ParseError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return b;
}

/// Multinomial draw of `shots` outcomes from |amplitude|^2.
/// `cancel`, when set, aborts the draw with CancelledError.
inline SampleBatch sample_counts(const LucjState& state, std::uint64_t shots, std::uint64_t seed,
                                 const std::atomic<bool>* cancel = nullptr) {
  const auto p = state.probabilities();
  std::vector<double> cdf(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) cdf[i] = acc += p[i];
  if (!(acc > 0.0)) throw ContractViolation("sample_counts: zero-norm state");
  require(std::abs(acc - 1.0) < 1e-8, "sample_counts: state is not normalised (norm^2 = " + std::to_string(acc) + ")");

  Rng rng(seed);
  std::vector<std::uint64_t> hits(p.size(), 0);
  for (std::uint64_t s = 0; s < shots; ++s) {
    if (cancel && (s & 0xfff) == 0 && cancel->load()) throw CancelledError("sampling cancelled");
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    // skip zero-probability tail entries that share the final cdf value
    std::size_t i = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(p.size()) - 1));
    while (p[i] == 0.0 && i > 0) --i;
    ++hits[i];
  }
  SampleBatch b;
  b.n_orb = state.spec().n_orb;
  for (std::size_t i = 0; i < hits.size(); ++i)
    if (hits[i]) b.add(state.configuration(i), hits[i]);
  return b;
}

/// Flips each of the 2 n_orb bits of every shot independently with probability eps.
inline SampleBatch apply_noise(const SampleBatch& in, double eps, std::uint64_t seed) {
  require(eps >= 0.0 && eps <= 1.0, "apply_noise: bit-flip rate must lie in [0, 1]");
  SampleBatch out;
  out.n_orb = in.n_orb;
  out.provenance = Provenance::noisy;
  out.start = in.start;
  out.end = in.end;
  if (eps == 0.0) {
    out.counts = in.counts;
    out.shots = in.shots;
    return out;
  }
  Rng rng(seed);
  for (const auto& [c, k] : in.counts)
    for (std::uint64_t s = 0; s < k; ++s) {
      Mask a = c.alpha.bits, b = c.beta.bits;
      for (int p = 0; p < in.n_orb; ++p)
        if (rng.bernoulli(eps)) a ^= Mask{1} << p;
      for (int p = 0; p < in.n_orb; ++p)
        if (rng.bernoulli(eps)) b ^= Mask{1} << p;
      out.add({{a}, {b}});
    }
  return out;
}

/// Total-variation distance between the empirical distribution of a batch and |amplitude|^2.
inline double total_variation(const SampleBatch& b, const LucjState& state) {
  const auto p = state.probabilities();
  double tv = 0.0;
  std::vector<double> seen(p.size(), 0.0);
  for (const auto& [c, k] : b.counts) {
    const auto i = rank_half(c.alpha, state.spec().n_orb, state.spec().n_alpha) * state.beta().size() +
                   rank_half(c.beta, state.spec().n_orb, state.spec().n_beta);
    seen[i] = static_cast<double>(k) / static_cast<double>(b.shots);
  }
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(seen[i] - p[i]);
  return 0.5 * tv;
}

}  // namespace sqd
