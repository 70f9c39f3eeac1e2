// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sqd/lucj.hpp"
#include "sqd/sampling.hpp"

using namespace sqd;

namespace {

LucjParameters random_params(int n, int layers, std::uint64_t seed, double scale = 0.5) {
  return init_parameters(InitMode::random, scale, seed, {}, n, layers);
}

Eigen::MatrixXd random_antisymmetric(int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (int p = 0; p < n; ++p)
    for (int q = p + 1; q < n; ++q) {
      k(p, q) = rng.uniform(-1.0, 1.0);
      k(q, p) = -k(p, q);
    }
  return k;
}

/// <y|U(Phi)|x> for one spin sector: determinant of Phi restricted to (occ(y), occ(x)).
double rotated_overlap(const Eigen::MatrixXd& phi, Mask y, Mask x) {
  const auto oy = occupied_orbitals(y), ox = occupied_orbitals(x);
  const auto k = static_cast<Eigen::Index>(oy.size());
  if (k == 0) return 1.0;
  Eigen::MatrixXd m(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) m(i, j) = phi(oy[static_cast<std::size_t>(i)], ox[static_cast<std::size_t>(j)]);
  return m.determinant();
}

/// Spin-summed 1-RDM <a+_p a_q> from the amplitudes.
Eigen::MatrixXcd one_rdm(const LucjState& s) {
  const int n = s.spec().n_orb;
  Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(n, n);
  const auto& a = s.amplitudes();
  for (std::size_t i = 0; i < s.alpha().size(); ++i)
    for (std::size_t j = 0; j < s.beta().size(); ++j) {
      const Configuration x{{s.alpha()[i]}, {s.beta()[j]}};
      const auto cx = a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      for (int q = 0; q < n; ++q)
        for (int p = 0; p < n; ++p) {
          for (int spin = 0; spin < 2; ++spin) {
            const Mask m = spin == 0 ? x.alpha.bits : x.beta.bits;
            if (!((m >> q) & 1U)) continue;
            if (p != q && ((m >> p) & 1U)) continue;
            const Mask y = p == q ? m : (m ^ (Mask{1} << q) ^ (Mask{1} << p));
            Configuration cy = x;
            (spin == 0 ? cy.alpha.bits : cy.beta.bits) = y;
            const double sign = p == q ? 1.0 : single_excitation_sign(m, q, p);
            g(p, q) += std::conj(s.amplitude(cy)) * sign * cx;
          }
        }
    }
  return g;
}

}  // namespace

TEST(Lucj, EmptyCircuitIsReference) {
  const SystemSpec spec{4, 2, 1};
  const Configuration ref{{0b0101}, {0b0010}};
  const auto s = lucj_state(LucjParameters{4, {}}, spec, ref);
  EXPECT_EQ(s.dimension(), 24u);
  EXPECT_NEAR(std::abs(s.amplitude(ref)), 1.0, 1e-15);
  EXPECT_NEAR(s.norm(), 1.0, 1e-15);
}

TEST(Lucj, DiagonalLayerKeepsReference) {
  const SystemSpec spec{4, 2, 2};
  auto p = random_params(4, 1, 3);
  p.layers[0].K.setZero();
  const auto ref = hf_configuration(spec);
  const auto s = lucj_state(p, spec, ref);
  EXPECT_NEAR(std::abs(s.amplitude(ref)), 1.0, 1e-14);
  const auto b = sample_counts(s, 100, 1);
  ASSERT_EQ(b.counts.size(), 1u);
  EXPECT_EQ(b.counts.begin()->first, ref);
  EXPECT_EQ(b.counts.begin()->second, 100u);
}

TEST(Lucj, SingleGivensTwoLevel) {
  const SystemSpec spec{2, 1, 0};
  for (double theta : {0.0, 0.3, 1.1, -2.5}) {
    LucjParameters p{2, {{Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 2)}}};
    p.layers[0].K(1, 0) = theta;
    p.layers[0].K(0, 1) = -theta;
    const auto s = lucj_state(p, spec, {{0b01}, {0}});
    EXPECT_NEAR(s.amplitude({{0b01}, {0}}).real(), std::cos(theta), 1e-14);
    EXPECT_NEAR(s.amplitude({{0b10}, {0}}).real(), std::sin(theta), 1e-14);
  }
}

TEST(Lucj, GivensDecompositionReproducesMatrix) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const Eigen::MatrixXd phi = random_antisymmetric(6, seed).exp();
    const auto dec = givens_decomposition(phi);
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(6, 6);
    for (const auto& g : dec.rotations) {
      Eigen::MatrixXd gt = Eigen::MatrixXd::Identity(6, 6);
      gt(g.p, g.p) = g.c;
      gt(g.p + 1, g.p) = g.s;
      gt(g.p, g.p + 1) = -g.s;
      gt(g.p + 1, g.p + 1) = g.c;
      m = m * gt;
    }
    for (int p = 0; p < 6; ++p) m.col(p) *= dec.signs[static_cast<std::size_t>(p)];
    EXPECT_LT((m - phi).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Lucj, OrbitalRotationMatchesDeterminantOverlaps) {
  const SystemSpec spec{5, 2, 3};
  const auto K = random_antisymmetric(5, 9);
  const Eigen::MatrixXd phi = K.exp();
  LucjParameters p{5, {{K, Eigen::MatrixXd::Zero(5, 5)}}};
  const Configuration ref{{0b00110}, {0b10101}};
  const auto s = lucj_state(p, spec, ref);
  double worst = 0.0;
  for (Mask a : s.alpha())
    for (Mask b : s.beta()) {
      const double expect = rotated_overlap(phi, a, ref.alpha.bits) * rotated_overlap(phi, b, ref.beta.bits);
      worst = std::max(worst, std::abs(s.amplitude({{a}, {b}}) - expect));
    }
  EXPECT_LT(worst, 1e-12);
}

TEST(Lucj, JastrowPhaseFormula) {
  const SystemSpec spec{4, 2, 2};
  auto p = random_params(4, 1, 21);
  const Eigen::MatrixXd phi = p.layers[0].K.exp();
  const auto ref = hf_configuration(spec);
  const auto s = lucj_state(p, spec, ref);
  for (Mask a : s.alpha())
    for (Mask b : s.beta()) {
      double phase = 0.0;
      for (int x = 0; x < 4; ++x)
        for (int y = x; y < 4; ++y) {
          const double nx = ((a >> x) & 1U) + ((b >> x) & 1U), ny = ((a >> y) & 1U) + ((b >> y) & 1U);
          phase += p.layers[0].J(x, y) * nx * ny;
        }
      const auto expect = rotated_overlap(phi, a, ref.alpha.bits) * rotated_overlap(phi, b, ref.beta.bits) *
                          std::polar(1.0, phase);
      EXPECT_LT(std::abs(s.amplitude({{a}, {b}}) - expect), 1e-12);
    }
}

TEST(Lucj, NormPreservedForRandomParameters) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SystemSpec spec{6, 3, 2};
    const auto s = lucj_state(random_params(6, 3, seed, 1.0), spec, hf_configuration(spec));
    EXPECT_NEAR(s.norm(), 1.0, 1e-10);
  }
}

TEST(Lucj, ThoulessOneBodyDensity) {
  const SystemSpec spec{5, 2, 2};
  const auto K = random_antisymmetric(5, 4);
  const Eigen::MatrixXd phi = K.exp();
  const auto ref = hf_configuration(spec);
  const auto s = lucj_state(LucjParameters{5, {{K, Eigen::MatrixXd::Zero(5, 5)}}}, spec, ref);
  Eigen::MatrixXd gref = Eigen::MatrixXd::Zero(5, 5);
  gref(0, 0) = gref(1, 1) = 2.0;
  const Eigen::MatrixXd expect = phi * gref * phi.transpose();
  const auto g = one_rdm(s);
  EXPECT_LT((g.real() - expect).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(g.imag().cwiseAbs().maxCoeff(), 1e-12);

  // diagonal from samples, within five standard errors
  const std::uint64_t shots = 200'000;
  const auto b = sample_counts(s, shots, 17);
  Eigen::VectorXd occ = Eigen::VectorXd::Zero(5);
  for (const auto& [c, k] : b.counts)
    for (int p = 0; p < 5; ++p) occ[p] += static_cast<double>(k) * (((c.alpha.bits >> p) & 1U) + ((c.beta.bits >> p) & 1U));
  occ /= static_cast<double>(shots);
  for (int p = 0; p < 5; ++p) EXPECT_NEAR(occ[p], expect(p, p), 5.0 * std::sqrt(2.0 / shots));
}

TEST(Lucj, CapacityAndContractErrors) {
  EXPECT_THROW(lucj_state(LucjParameters{20, {}}, {20, 10, 10}, hf_configuration({20, 10, 10})), CapacityError);
  LucjParameters bad{3, {{Eigen::MatrixXd::Ones(3, 3), Eigen::MatrixXd::Zero(3, 3)}}};
  EXPECT_THROW(lucj_state(bad, {3, 1, 1}, hf_configuration({3, 1, 1})), ContractViolation);
  EXPECT_THROW(lucj_state(LucjParameters{3, {}}, {3, 1, 1}, {{0b011}, {0b001}}), ContractViolation);
}

TEST(LucjParameters, JsonRoundTripAndVector) {
  const auto p = random_params(4, 2, 5);
  const auto q = lucj_from_json(nlohmann::json::parse(to_json(p).dump()));
  EXPECT_EQ(q.layers.size(), 2u);
  EXPECT_LT((p.to_vector() - q.to_vector()).cwiseAbs().maxCoeff(), 1e-15);
  // n_orb inferred from the J triangle when absent
  auto js = to_json(p);
  js.erase("n_orb");
  EXPECT_EQ(lucj_from_json(js).n_orb, 4);
  js["K"][0] = std::vector<double>{1.0};
  EXPECT_THROW(lucj_from_json(js), ParseError);
  EXPECT_THROW(lucj_from_json(nlohmann::json{{"layers", 1}}), ParseError);
}

TEST(LucjParameters, InitModes) {
  const auto base = random_params(5, 2, 8);
  const auto same = init_parameters(InitMode::perturbed_file, 0.0, 1, base);
  EXPECT_EQ(same.to_vector(), base.to_vector());
  const auto pert = init_parameters(InitMode::perturbed_file, 0.05, 2, base);
  EXPECT_LE((pert.to_vector() - base.to_vector()).cwiseAbs().maxCoeff(), 0.05);
  EXPECT_GT((pert.to_vector() - base.to_vector()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_NO_THROW(pert.validate());
  for (const auto& l : pert.layers) EXPECT_EQ((l.K + l.K.transpose()).cwiseAbs().maxCoeff(), 0.0);
  const auto r = init_parameters(InitMode::random, 0.05, 3, {}, 5, 2);
  EXPECT_LE(r.to_vector().cwiseAbs().maxCoeff(), 0.05);
  EXPECT_EQ(r.layers.size(), 2u);
  EXPECT_EQ(init_parameters(InitMode::file, 0.05, 3, base).to_vector(), base.to_vector());
}

TEST(Sampling, UniformOverFourDeterminants) {
  LucjState s({2, 1, 1}, LucjState::Matrix::Constant(2, 2, 0.5));
  const std::uint64_t shots = 100'000;
  const auto b = sample_counts(s, shots, 3);
  EXPECT_EQ(b.shots, shots);
  EXPECT_TRUE(b.consistent());
  ASSERT_EQ(b.counts.size(), 4u);
  const double sigma = std::sqrt(shots * 0.25 * 0.75);
  for (const auto& [c, k] : b.counts) EXPECT_NEAR(static_cast<double>(k), shots / 4.0, 5.0 * sigma);
}

TEST(Sampling, DeterministicUnderSeed) {
  const SystemSpec spec{4, 2, 2};
  const auto s = lucj_state(random_params(4, 1, 6), spec, hf_configuration(spec));
  EXPECT_EQ(sample_counts(s, 5000, 42).counts, sample_counts(s, 5000, 42).counts);
  EXPECT_NE(sample_counts(s, 5000, 42).counts, sample_counts(s, 5000, 43).counts);
}

TEST(Sampling, ConvergesInTotalVariation) {
  const SystemSpec spec{4, 2, 2};
  const auto s = lucj_state(random_params(4, 2, 7, 1.0), spec, hf_configuration(spec));
  ASSERT_EQ(s.dimension(), 36u);
  EXPECT_LT(total_variation(sample_counts(s, 1'000'000, 8), s), 0.01);
}

TEST(Sampling, ZeroNormAndCancellation) {
  LucjState zero({2, 1, 1}, LucjState::Matrix::Zero(2, 2));
  EXPECT_THROW(sample_counts(zero, 10, 1), ContractViolation);
  LucjState s({2, 1, 1}, LucjState::Matrix::Constant(2, 2, 0.5));
  std::atomic<bool> cancel{true};
  EXPECT_THROW(sample_counts(s, 10, 1, &cancel), CancelledError);
}

TEST(Noise, IdentityAndFullInversion) {
  SampleBatch b;
  b.n_orb = 4;
  b.add({{0b0011}, {0b0101}}, 7);
  b.add({{0b1001}, {0b0011}}, 3);
  const auto same = apply_noise(b, 0.0, 1);
  EXPECT_EQ(same.counts, b.counts);
  EXPECT_EQ(same.provenance, Provenance::noisy);
  const auto inv = apply_noise(b, 1.0, 1);
  EXPECT_EQ(inv.shots, 10u);
  EXPECT_EQ(inv.counts.at({{0b1100}, {0b1010}}), 7u);
  EXPECT_EQ(inv.counts.at({{0b0110}, {0b1100}}), 3u);
}

TEST(Noise, WrongPopcountFractionMatchesBinomialOracle) {
  const int n = 36, na = 10, nb = 10;
  const double eps = 0.01;
  const std::uint64_t shots = 100'000;
  SampleBatch b;
  b.n_orb = n;
  b.add(hf_configuration({n, na, nb}), shots);
  const auto noisy = apply_noise(b, eps, 99);
  std::uint64_t wrong = 0;
  for (const auto& [c, k] : noisy.counts)
    if (c.alpha.popcount() != na || c.beta.popcount() != nb) wrong += k;

  // popcount survives iff as many occupied bits flip as empty ones
  auto binom = [](int m, int k, double p) {
    return std::exp(std::lgamma(m + 1.0) - std::lgamma(k + 1.0) - std::lgamma(m - k + 1.0)) * std::pow(p, k) *
           std::pow(1 - p, m - k);
  };
  auto keep = [&](int occ) {
    double s = 0.0;
    for (int k = 0; k <= occ; ++k) s += binom(occ, k, eps) * binom(n - occ, k, eps);
    return s;
  };
  const double p_wrong = 1.0 - keep(na) * keep(nb);
  const double frac = static_cast<double>(wrong) / shots;
  EXPECT_NEAR(frac, p_wrong, 5.0 * std::sqrt(p_wrong * (1 - p_wrong) / shots));
  // compensating flip pairs keep some corrupted strings in the right sector
  EXPECT_LT(p_wrong, 1.0 - std::pow(1 - eps, 2 * n));
}

TEST(SampleFile, RoundTrip) {
  SampleBatch b;
  b.n_orb = 3;
  b.add({{0b011}, {0b001}}, 5);
  b.add({{0b110}, {0b100}}, 2);
  std::stringstream ss;
  write_samples(ss, b);
  EXPECT_EQ(ss.str(), "110100 5\n011001 2\n");
  const auto back = read_samples(ss, 3);
  EXPECT_EQ(back.counts, b.counts);
  EXPECT_EQ(back.shots, 7u);
  std::istringstream bad("1101 3\n");
  EXPECT_THROW(read_samples(bad, 3, "x"), ParseError);
}
