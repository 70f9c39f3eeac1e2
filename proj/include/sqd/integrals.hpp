// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Active-space Hamiltonian integrals and FCIDUMP ingestion.
 *
 * Integrals are real and kept in chemists' notation (pr|qs). The two-body
 * tensor is stored densely with every one of the eight permutationally
 * equivalent slots populated, which keeps the inner loops of the
 * Hamiltonian kernels free of index canonicalisation.
 */

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "sqd/bits.hpp"
#include "sqd/error.hpp"

namespace sqd {

class MolecularIntegrals {
 public:
  MolecularIntegrals() = default;
  explicit MolecularIntegrals(int n_orb)
      : n_orb_(n_orb),
        h_(Eigen::MatrixXd::Zero(n_orb, n_orb)),
        eri_(static_cast<std::size_t>(n_orb) * n_orb * n_orb * n_orb, 0.0) {
    require(n_orb >= 0, "negative orbital count");
  }

  int n_orb() const { return n_orb_; }
  double core_energy() const { return core_; }
  void set_core_energy(double e) { core_ = e; }

  const Eigen::MatrixXd& h() const { return h_; }
  double h(int p, int r) const { return h_(p, r); }
  void set_h(int p, int r, double v) {
    h_(p, r) = v;
    h_(r, p) = v;
  }

  /// (pr|qs)
  double eri(int p, int r, int q, int s) const { return eri_[index(p, r, q, s)]; }

  /// Writes v into all eight symmetry-equivalent slots of (pr|qs).
  void set_eri(int p, int r, int q, int s, double v) {
    for (auto [a, b, c, d] : permutations(p, r, q, s)) eri_[index(a, b, c, d)] = v;
  }

  /// Dense n^4 tensor, index ((p*n + r)*n + q)*n + s.
  const std::vector<double>& eri_data() const { return eri_; }
  std::vector<double>& eri_data() { return eri_; }

  std::size_t index(int p, int r, int q, int s) const {
    const auto n = static_cast<std::size_t>(n_orb_);
    return ((static_cast<std::size_t>(p) * n + r) * n + q) * n + s;
  }

  /// Largest deviation from h_pr = h_rp and the 8-fold (pr|qs) symmetries.
  double symmetry_defect() const {
    double worst = (h_ - h_.transpose()).cwiseAbs().maxCoeff();
    if (n_orb_ == 0) return 0.0;
    for (int p = 0; p < n_orb_; ++p)
      for (int r = 0; r < n_orb_; ++r)
        for (int q = 0; q < n_orb_; ++q)
          for (int s = 0; s < n_orb_; ++s) {
            const double v = eri(p, r, q, s);
            for (auto [a, b, c, d] : permutations(p, r, q, s))
              worst = std::max(worst, std::abs(v - eri(a, b, c, d)));
          }
    return worst;
  }

  struct Quad {
    int a, b, c, d;
  };
  static std::array<Quad, 8> permutations(int p, int r, int q, int s) {
    return {{{p, r, q, s}, {r, p, q, s}, {p, r, s, q}, {r, p, s, q},
             {q, s, p, r}, {s, q, p, r}, {q, s, r, p}, {s, q, r, p}}};
  }

 private:
  int n_orb_ = 0;
  double core_ = 0.0;
  Eigen::MatrixXd h_;
  std::vector<double> eri_;
};

struct FcidumpContents {
  MolecularIntegrals integrals;
  SystemSpec spec;
};

namespace detail {

inline int header_int(const std::string& header, const std::string& key, bool required, int fallback = 0) {
  const std::regex re("(?:^|[\\s,&])" + key + "\\s*=\\s*(-?\\d+)", std::regex::icase);
  std::smatch m;
  if (std::regex_search(header, m, re)) return std::stoi(m[1].str());
  if (required) throw ParseError("FCIDUMP header is missing " + key);
  return fallback;
}

}  // namespace detail

/// Reads an FCIDUMP stream (1-based indices, `0 0 0 0` carries the core energy).
inline FcidumpContents parse_fcidump(std::istream& in, const std::string& name = "<stream>") {
  std::string header;
  std::string line;
  int line_no = 0;
  bool closed = false;
  while (std::getline(in, line)) {
    ++line_no;
    header += line + "\n";
    std::string upper = line;
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char ch) { return std::toupper(ch); });
    if (upper.find("&END") != std::string::npos || upper.find('/') != std::string::npos) {
      closed = true;
      break;
    }
  }
  if (!closed || header.find("&") == std::string::npos)
    throw ParseError(name + ": malformed FCIDUMP header (no &FCI ... &END block)");

  const int norb = detail::header_int(header, "NORB", true);
  const int nelec = detail::header_int(header, "NELEC", true);
  const int ms2 = detail::header_int(header, "MS2", false, 0);
  if (norb <= 0 || norb > kMaxOrbitals) throw ParseError(name + ": NORB out of range");
  if (nelec < 0 || (nelec + ms2) % 2 != 0 || std::abs(ms2) > nelec)
    throw ParseError(name + ": inconsistent NELEC/MS2");
  SystemSpec spec{norb, (nelec + ms2) / 2, (nelec - ms2) / 2};
  if (!spec.valid()) throw ParseError(name + ": electron count exceeds orbitals");

  MolecularIntegrals ints(norb);
  std::vector<char> seen_eri(ints.eri_data().size(), 0);
  std::vector<char> seen_h(static_cast<std::size_t>(norb * norb), 0);
  bool seen_core = false;
  constexpr double kDupTol = 1e-10;

  auto fail = [&](const std::string& what) {
    throw ParseError(name + ":" + std::to_string(line_no) + ": " + what + ": '" + line + "'");
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    double v = 0.0;
    int i = 0, j = 0, k = 0, l = 0;
    if (!(ls >> v >> i >> j >> k >> l)) fail("expected 'value i j k l'");
    if (i < 0 || j < 0 || k < 0 || l < 0 || i > norb || j > norb || k > norb || l > norb)
      fail("index out of range");
    if (i > 0 && j > 0 && k > 0 && l > 0) {
      const auto idx = ints.index(i - 1, j - 1, k - 1, l - 1);
      if (seen_eri[idx] && std::abs(ints.eri_data()[idx] - v) > kDupTol) fail("inconsistent duplicate two-body entry");
      ints.set_eri(i - 1, j - 1, k - 1, l - 1, v);
      for (auto [a, b, c, d] : MolecularIntegrals::permutations(i - 1, j - 1, k - 1, l - 1))
        seen_eri[ints.index(a, b, c, d)] = 1;
    } else if (i > 0 && j > 0 && k == 0 && l == 0) {
      const auto idx = static_cast<std::size_t>((i - 1) * norb + (j - 1));
      if (seen_h[idx] && std::abs(ints.h(i - 1, j - 1) - v) > kDupTol) fail("inconsistent duplicate one-body entry");
      ints.set_h(i - 1, j - 1, v);
      seen_h[idx] = 1;
      seen_h[static_cast<std::size_t>((j - 1) * norb + (i - 1))] = 1;
    } else if (i == 0 && j == 0 && k == 0 && l == 0) {
      if (seen_core && std::abs(ints.core_energy() - v) > kDupTol) fail("inconsistent duplicate core energy");
      ints.set_core_energy(v);
      seen_core = true;
    } else if (i > 0 && j == 0 && k == 0 && l == 0) {
      // orbital energy line; not part of the Hamiltonian
    } else {
      fail("unrecognised index pattern");
    }
  }
  return {std::move(ints), spec};
}

inline FcidumpContents parse_fcidump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open FCIDUMP file " + path.string());
  return parse_fcidump(in, path.string());
}

/// Writes the canonical triangle of every tensor (p>=r, q>=s, pr>=qs) with
/// round-trip precision. Zero entries below `threshold` are skipped.
inline void write_fcidump(std::ostream& out, const MolecularIntegrals& ints, const SystemSpec& spec,
                          double threshold = 0.0) {
  const int n = ints.n_orb();
  out << " &FCI NORB=" << n << ",NELEC=" << spec.n_electrons() << ",MS2=" << (spec.n_alpha - spec.n_beta) << ",\n";
  out << "  ORBSYM=";
  for (int p = 0; p < n; ++p) out << "1,";
  out << "\n  ISYM=1,\n &END\n";
  out << std::setprecision(17) << std::scientific;
  auto emit = [&](double v, int i, int j, int k, int l) {
    if (std::abs(v) > threshold || (i == 0 && j == 0))
      out << std::setw(26) << v << ' ' << i << ' ' << j << ' ' << k << ' ' << l << '\n';
  };
  for (int p = 0; p < n; ++p)
    for (int r = 0; r <= p; ++r)
      for (int q = 0; q < n; ++q)
        for (int s = 0; s <= q; ++s)
          if (p * (p + 1) / 2 + r >= q * (q + 1) / 2 + s) emit(ints.eri(p, r, q, s), p + 1, r + 1, q + 1, s + 1);
  for (int p = 0; p < n; ++p)
    for (int r = 0; r <= p; ++r) emit(ints.h(p, r), p + 1, r + 1, 0, 0);
  emit(ints.core_energy(), 0, 0, 0, 0);
}

inline void write_fcidump(const std::filesystem::path& path, const MolecularIntegrals& ints,
                          const SystemSpec& spec) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write FCIDUMP file " + path.string());
  write_fcidump(out, ints, spec);
}

}  // namespace sqd
