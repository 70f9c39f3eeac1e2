// SPDX-License-Identifier: Apache-2.0
#pragma once

// Statevector simulation of a layered unitary cluster Jastrow ansatz:
//
//   |psi> = prod_k  exp(i sum_{p<=q} J_k[p,q] n_p n_q) U(exp(K_k))  |ref>
//
// U(Phi) is the orbital rotation a+_p -> sum_q Phi[q,p] a+_q, applied to both
// spin sectors; n_p counts both spins of spatial orbital p.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "sqd/bits.hpp"
#include "sqd/combinatorics.hpp"
#include "sqd/error.hpp"
#include "sqd/random.hpp"

namespace sqd {

struct LucjLayer {
  Eigen::MatrixXd K;  // antisymmetric
  Eigen::MatrixXd J;  // symmetric
};

struct LucjParameters {
  int n_orb = 0;
  std::vector<LucjLayer> layers;

  std::size_t layer_size() const {
    const auto n = static_cast<std::size_t>(n_orb);
    return n * (n - 1) / 2 + n * (n + 1) / 2;
  }
  std::size_t size() const { return layers.size() * layer_size(); }

  /// Flat vector: per layer, strict upper triangle of K then upper triangle of J, row-major.
  Eigen::VectorXd to_vector() const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(size()));
    Eigen::Index k = 0;
    for (const auto& l : layers) {
      for (int p = 0; p < n_orb; ++p)
        for (int q = p + 1; q < n_orb; ++q) v[k++] = l.K(p, q);
      for (int p = 0; p < n_orb; ++p)
        for (int q = p; q < n_orb; ++q) v[k++] = l.J(p, q);
    }
    return v;
  }

  static LucjParameters from_vector(int n_orb, const Eigen::VectorXd& v) {
    LucjParameters out;
    out.n_orb = n_orb;
    const auto per = LucjParameters{n_orb, {}}.layer_size();
    require(per > 0 && static_cast<std::size_t>(v.size()) % per == 0,
            "LUCJ parameter vector length " + std::to_string(v.size()) + " is not a multiple of " + std::to_string(per));
    Eigen::Index k = 0;
    for (std::size_t layer = 0; layer < static_cast<std::size_t>(v.size()) / per; ++layer) {
      LucjLayer l{Eigen::MatrixXd::Zero(n_orb, n_orb), Eigen::MatrixXd::Zero(n_orb, n_orb)};
      for (int p = 0; p < n_orb; ++p)
        for (int q = p + 1; q < n_orb; ++q) {
          l.K(p, q) = v[k++];
          l.K(q, p) = -l.K(p, q);
        }
      for (int p = 0; p < n_orb; ++p)
        for (int q = p; q < n_orb; ++q) l.J(p, q) = l.J(q, p) = v[k++];
      out.layers.push_back(std::move(l));
    }
    return out;
  }

  void validate() const {
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& l = layers[k];
      require(l.K.rows() == n_orb && l.K.cols() == n_orb && l.J.rows() == n_orb && l.J.cols() == n_orb,
              "LUCJ layer " + std::to_string(k) + " has wrong shape");
      require((l.K + l.K.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
              "LUCJ layer " + std::to_string(k) + ": K is not antisymmetric");
      require((l.J - l.J.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
              "LUCJ layer " + std::to_string(k) + ": J is not symmetric");
    }
  }
};

inline nlohmann::json to_json(const LucjParameters& p) {
  nlohmann::json k = nlohmann::json::array(), j = nlohmann::json::array();
  for (const auto& l : p.layers) {
    std::vector<double> ku, ju;
    for (int a = 0; a < p.n_orb; ++a)
      for (int b = a + 1; b < p.n_orb; ++b) ku.push_back(l.K(a, b));
    for (int a = 0; a < p.n_orb; ++a)
      for (int b = a; b < p.n_orb; ++b) ju.push_back(l.J(a, b));
    k.push_back(ku);
    j.push_back(ju);
  }
  return {{"n_orb", p.n_orb}, {"layers", p.layers.size()}, {"K", k}, {"J", j}};
}

inline LucjParameters lucj_from_json(const nlohmann::json& js) {
  try {
    const auto layers = js.at("layers").get<std::size_t>();
    const auto& k = js.at("K");
    const auto& j = js.at("J");
    if (k.size() != layers || j.size() != layers)
      throw ParseError("LUCJ parameters: K and J must each hold " + std::to_string(layers) + " layers");
    int n = js.value("n_orb", -1);
    if (n < 0) {
      if (layers == 0) throw ParseError("LUCJ parameters: n_orb required when layers = 0");
      const auto len = j[0].size();  // n (n + 1) / 2
      n = static_cast<int>(std::lround((std::sqrt(8.0 * static_cast<double>(len) + 1.0) - 1.0) / 2.0));
    }
    LucjParameters p;
    p.n_orb = n;
    const auto nk = static_cast<std::size_t>(n * (n - 1) / 2), nj = static_cast<std::size_t>(n * (n + 1) / 2);
    Eigen::VectorXd v(static_cast<Eigen::Index>(layers * (nk + nj)));
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < layers; ++l) {
      if (k[l].size() != nk || j[l].size() != nj)
        throw ParseError("LUCJ parameters: layer " + std::to_string(l) + " expects " + std::to_string(nk) +
                         " K and " + std::to_string(nj) + " J entries for n_orb=" + std::to_string(n));
      for (const auto& x : k[l]) v[at++] = x.get<double>();
      for (const auto& x : j[l]) v[at++] = x.get<double>();
    }
    return layers == 0 ? p : LucjParameters::from_vector(n, v);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("LUCJ parameters: ") + e.what());
  }
}

inline LucjParameters load_lucj_parameters(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open LUCJ parameter file " + path.string());
  nlohmann::json js;
  try {
    in >> js;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return lucj_from_json(js);
}

enum class InitMode { file, random, perturbed_file };

/// random: every free entry uniform in [-magnitude, magnitude].
/// perturbed_file: `base` plus uniform(+-magnitude) noise on every free entry.
inline LucjParameters init_parameters(InitMode mode, double magnitude, std::uint64_t seed,
                                      const LucjParameters& base = {}, int n_orb = 0, int layers = 1) {
  if (mode == InitMode::file) return base;
  Rng rng(seed);
  Eigen::VectorXd v;
  int n = n_orb;
  if (mode == InitMode::random) {
    require(n_orb > 0 && layers >= 0, "init_parameters: random mode needs n_orb and layers");
    v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layers * LucjParameters{n_orb, {}}.layer_size()));
  } else {
    v = base.to_vector();
    n = base.n_orb;
  }
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += rng.uniform(-magnitude, magnitude);
  if (v.size() == 0) return mode == InitMode::random ? LucjParameters{n, {}} : base;
  return LucjParameters::from_vector(n, v);
}

/// Adjacent two-orbital rotation: a+_p -> c a+_p + s a+_{p+1}, a+_{p+1} -> -s a+_p + c a+_{p+1}.
struct Givens {
  int p;
  double c, s;
};

/// Phi = G(g_0) G(g_1) ... G(g_k) diag(signs) with every G an adjacent rotation.
struct GivensDecomposition {
  std::vector<Givens> rotations;
  std::vector<double> signs;
};

inline GivensDecomposition givens_decomposition(const Eigen::MatrixXd& phi) {
  const int n = static_cast<int>(phi.rows());
  require(phi.cols() == n, "givens_decomposition: matrix must be square");
  require((phi.transpose() * phi - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10,
          "givens_decomposition: matrix is not orthogonal");
  Eigen::MatrixXd m = phi;
  GivensDecomposition out;
  // Zero the subdiagonal column by column with rotations on adjacent rows:
  // G_k ... G_1 Phi = D, hence Phi = G_1^T ... G_k^T D.
  for (int j = 0; j + 1 < n; ++j)
    for (int i = n - 1; i > j; --i) {
      const double a = m(i - 1, j), b = m(i, j);
      if (b == 0.0) continue;
      const double r = std::hypot(a, b), c = a / r, s = b / r;
      const Eigen::RowVectorXd ri = m.row(i - 1), rj = m.row(i);
      m.row(i - 1) = c * ri + s * rj;
      m.row(i) = -s * ri + c * rj;
      out.rotations.push_back({i - 1, c, s});
    }
  for (int p = 0; p < n; ++p) out.signs.push_back(m(p, p) < 0 ? -1.0 : 1.0);
  return out;
}

/// Dense amplitudes over alpha strings x beta strings, both in rank order.
class LucjState {
 public:
  using Matrix = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  LucjState(SystemSpec spec, Matrix amps)
      : spec_(spec), alpha_(all_halves(spec.n_orb, spec.n_alpha)), beta_(all_halves(spec.n_orb, spec.n_beta)),
        amps_(std::move(amps)) {}

  const SystemSpec& spec() const { return spec_; }
  const std::vector<Mask>& alpha() const { return alpha_; }
  const std::vector<Mask>& beta() const { return beta_; }
  const Matrix& amplitudes() const { return amps_; }
  Matrix& amplitudes() { return amps_; }
  std::size_t dimension() const { return alpha_.size() * beta_.size(); }

  std::complex<double> amplitude(const Configuration& c) const {
    return amps_(static_cast<Eigen::Index>(rank_half(c.alpha, spec_.n_orb, spec_.n_alpha)),
                 static_cast<Eigen::Index>(rank_half(c.beta, spec_.n_orb, spec_.n_beta)));
  }
  double norm() const { return amps_.norm(); }

  /// |amplitude|^2 in row-major order (alpha index major).
  std::vector<double> probabilities() const {
    std::vector<double> p(dimension());
    for (Eigen::Index i = 0; i < amps_.size(); ++i) p[static_cast<std::size_t>(i)] = std::norm(amps_.data()[i]);
    return p;
  }

  Configuration configuration(std::size_t flat) const {
    return {{alpha_[flat / beta_.size()]}, {beta_[flat % beta_.size()]}};
  }

 private:
  SystemSpec spec_;
  std::vector<Mask> alpha_, beta_;
  Matrix amps_;
};

namespace detail {

/// Index pairs (A, B) of strings that differ by moving one electron p <-> p + 1.
inline std::vector<std::pair<Eigen::Index, Eigen::Index>> givens_pairs(const std::vector<Mask>& strings, int n_orb,
                                                                       int n_elec, int p) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
  const Mask bp = Mask{1} << p, bq = Mask{1} << (p + 1);
  for (std::size_t i = 0; i < strings.size(); ++i) {
    const Mask m = strings[i];
    if ((m & bp) && !(m & bq))
      out.emplace_back(static_cast<Eigen::Index>(i),
                       static_cast<Eigen::Index>(rank_half({m ^ bp ^ bq}, n_orb, n_elec)));
  }
  return out;
}

}  // namespace detail

/// Applies U(Phi) to both spin sectors of the state.
inline void apply_orbital_rotation(LucjState& state, const Eigen::MatrixXd& phi) {
  const auto& spec = state.spec();
  require(phi.rows() == spec.n_orb, "apply_orbital_rotation: matrix size does not match n_orb");
  const auto dec = givens_decomposition(phi);
  auto& a = state.amplitudes();

  // diagonal factor first: orbital p with sign -1 contributes (-1)^{n_p}
  auto parity = [&](Mask m) {
    double f = 1.0;
    for (int p = 0; p < spec.n_orb; ++p)
      if (dec.signs[static_cast<std::size_t>(p)] < 0 && ((m >> p) & 1U)) f = -f;
    return f;
  };
  for (std::size_t i = 0; i < state.alpha().size(); ++i) {
    const double f = parity(state.alpha()[i]);
    if (f < 0) a.row(static_cast<Eigen::Index>(i)) *= -1.0;
  }
  for (std::size_t j = 0; j < state.beta().size(); ++j) {
    const double f = parity(state.beta()[j]);
    if (f < 0) a.col(static_cast<Eigen::Index>(j)) *= -1.0;
  }

  std::vector<std::vector<std::pair<Eigen::Index, Eigen::Index>>> alpha_pairs(static_cast<std::size_t>(spec.n_orb)),
      beta_pairs(static_cast<std::size_t>(spec.n_orb));
  for (int p = 0; p + 1 < spec.n_orb; ++p) {
    alpha_pairs[static_cast<std::size_t>(p)] = detail::givens_pairs(state.alpha(), spec.n_orb, spec.n_alpha, p);
    beta_pairs[static_cast<std::size_t>(p)] = detail::givens_pairs(state.beta(), spec.n_orb, spec.n_beta, p);
  }
  for (auto g = dec.rotations.rbegin(); g != dec.rotations.rend(); ++g) {
    for (const auto& [ia, ib] : alpha_pairs[static_cast<std::size_t>(g->p)]) {
      const auto ra = a.row(ia).eval(), rb = a.row(ib).eval();
      a.row(ia) = g->c * ra - g->s * rb;
      a.row(ib) = g->s * ra + g->c * rb;
    }
    for (const auto& [ia, ib] : beta_pairs[static_cast<std::size_t>(g->p)]) {
      const auto ca = a.col(ia).eval(), cb = a.col(ib).eval();
      a.col(ia) = g->c * ca - g->s * cb;
      a.col(ib) = g->s * ca + g->c * cb;
    }
  }
}

/// Multiplies each determinant by exp(i sum_{p<=q} J[p,q] n_p n_q).
inline void apply_jastrow(LucjState& state, const Eigen::MatrixXd& J) {
  const int n = state.spec().n_orb;
  auto& a = state.amplitudes();
  std::vector<double> occ(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < state.alpha().size(); ++i)
    for (std::size_t j = 0; j < state.beta().size(); ++j) {
      const Mask ma = state.alpha()[i], mb = state.beta()[j];
      for (int p = 0; p < n; ++p) occ[static_cast<std::size_t>(p)] = static_cast<double>(((ma >> p) & 1U) + ((mb >> p) & 1U));
      double phase = 0.0;
      for (int p = 0; p < n; ++p) {
        if (occ[static_cast<std::size_t>(p)] == 0.0) continue;
        for (int q = p; q < n; ++q) phase += J(p, q) * occ[static_cast<std::size_t>(p)] * occ[static_cast<std::size_t>(q)];
      }
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *= std::polar(1.0, phase);
    }
}

inline constexpr std::size_t kDefaultStateCap = 4'000'000;

inline LucjState lucj_state(const LucjParameters& params, const SystemSpec& spec, const Configuration& reference,
                            std::size_t cap = kDefaultStateCap) {
  validate(spec);
  require(params.n_orb == spec.n_orb || params.layers.empty(),
          "lucj_state: parameters are for " + std::to_string(params.n_orb) + " orbitals, system has " +
              std::to_string(spec.n_orb));
  require(reference.alpha.popcount() == spec.n_alpha && reference.beta.popcount() == spec.n_beta,
          "lucj_state: reference popcounts do not match the system");
  params.validate();
  const auto dim = hilbert_dimension(spec);
  if (dim > ExactCount(cap))
    throw CapacityError("lucj_state: determinant space of " + dim.str() + " exceeds the cap of " + std::to_string(cap));
  const auto da = binomials()(spec.n_orb, spec.n_alpha), db = binomials()(spec.n_orb, spec.n_beta);
  LucjState state(spec, LucjState::Matrix::Zero(static_cast<Eigen::Index>(da), static_cast<Eigen::Index>(db)));
  state.amplitudes()(static_cast<Eigen::Index>(rank_half(reference.alpha, spec.n_orb, spec.n_alpha)),
                     static_cast<Eigen::Index>(rank_half(reference.beta, spec.n_orb, spec.n_beta))) = 1.0;
  for (const auto& layer : params.layers) {
    apply_orbital_rotation(state, layer.K.exp());
    apply_jastrow(state, layer.J);
  }
  return state;
}

}  // namespace sqd
