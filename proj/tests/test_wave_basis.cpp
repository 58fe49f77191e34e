#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

#include "augscat/error.hpp"
#include "augscat/wave_basis.hpp"

using namespace augscat;

namespace {

const double kPi = std::acos(-1.0);
const Complex kI(0.0, 1.0);

std::shared_ptr<const CrossSectionSpectrum> neumann_strip(double width = 1.0, int count = 6) {
  CrossSectionSpec s;
  s.width = width;
  s.boundary_kind = BoundaryKind::Neumann;
  return std::make_shared<const CrossSectionSpectrum>(transverse_spectrum(s, count, width / 128));
}

const PencilPoint& point_with(const PencilSpectrum& ps, int index, double sign_re, double sign_im) {
  for (const auto& p : ps.points) {
    if (p.transverse_index == index && p.lambda.real() * sign_re >= 0 && p.lambda.imag() * sign_im >= 0) return p;
  }
  throw std::runtime_error("pencil point not found");
}

// One-line quadrature oracle: for u = c e^{i lambda t} phi and v = d e^{i mu t} phi
// with ||phi|| = 1, q(u, v) = i (lambda + conj(mu)) u conj(v).
Complex plane_pairing(Complex cu, Complex lu, Complex cv, Complex lv, double t) {
  const Complex u = cu * std::exp(kI * lu * t), v = cv * std::exp(kI * lv * t);
  return kI * (lu + std::conj(lv)) * u * std::conj(v);
}

}  // namespace

TEST(MakeWave, PlaneWaveAndResidual) {
  auto sec = neumann_strip();
  const auto ps = pencil_spectrum(*sec, 2.5, 4.0);
  const WaveSpec w = make_wave(sec, point_with(ps, 0, 1, 0), 0);
  EXPECT_EQ(w.poly_coeffs.size(), 1u);
  EXPECT_NEAR(std::abs(w.profile(0.7) - std::exp(kI * 2.5 * 0.7)), 0.0, 1e-12);
  EXPECT_LT(limit_residual(w, 2.5, 1.3), 1e-8);
}

TEST(MakeWave, DecayingEvanescentWave) {
  auto sec = neumann_strip();
  const auto ps = pencil_spectrum(*sec, 2.5, 4.0);
  const WaveSpec w = make_wave(sec, point_with(ps, 1, 1, 1), 0);
  const double kappa = std::sqrt(kPi * kPi - 6.25);
  EXPECT_NEAR(std::abs(w.profile(2.0) - std::exp(-kappa * 2.0)), 0.0, 1e-12);
  EXPECT_LT(limit_residual(w, 2.5, 2.0), 1e-8);
}

TEST(MakeWave, ThresholdChainIsLinearlyGrowing) {
  auto sec = neumann_strip();
  const auto ps = pencil_spectrum(*sec, kPi, 1.0);
  const auto& p = point_with(ps, 1, 1, 1);
  ASSERT_EQ(p.chain_length, 2);
  const WaveSpec w = make_wave(sec, p, 1);
  ASSERT_EQ(w.poly_coeffs.size(), 2u);
  EXPECT_NEAR(std::abs(w.profile(3.0) - kI * 3.0), 0.0, 1e-12);
  for (double t : {0.5, 2.0, 7.0}) EXPECT_LT(limit_residual(w, kPi, t), 1e-8);
  EXPECT_THROW(make_wave(sec, p, 2), InvalidArgument);
}

TEST(FluxPairing, PropagatingSelfPairing) {
  auto sec = neumann_strip();
  const auto ps = pencil_spectrum(*sec, 2.5, 4.0);
  WaveSpec w = make_wave(sec, point_with(ps, 0, 1, 0), 0);
  w.normalization = 1.0 / std::sqrt(5.0);
  const FluxPairing f = flux_pairing(w, w, 1.5);
  // e^{+ikt} carries q = +i under q(u, v) = int (u_t v* - u v*_t).
  EXPECT_NEAR(std::abs(f.value - kI), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(f.value - plane_pairing(w.normalization, 2.5, w.normalization, 2.5, 1.5)), 0.0, 1e-12);
  EXPECT_EQ(classify(w).direction, Direction::Outgoing);
  EXPECT_LT(f.quadrature_residual, 1e-12);
}

TEST(FluxPairing, DecayingPairHasNoFlux) {
  auto sec = neumann_strip();
  const auto ps = pencil_spectrum(*sec, 2.5, 4.0);
  const WaveSpec w = make_wave(sec, point_with(ps, 1, 1, 1), 0);
  EXPECT_NEAR(std::abs(flux_pairing(w, w, 1.0).value), 0.0, 1e-14);
  const auto c = classify(w);
  EXPECT_EQ(c.direction, Direction::Unclassified);
  EXPECT_FALSE(c.diagnostic.empty());
}

TEST(FluxPairing, IncomingPlaneWave) {
  auto sec = neumann_strip();
  const auto ps = pencil_spectrum(*sec, 2.5, 4.0);
  const WaveSpec w = make_wave(sec, point_with(ps, 0, -1, 0), 0);
  const auto c = classify(w);
  EXPECT_EQ(c.direction, Direction::Incoming);
  EXPECT_NEAR(c.iq, 5.0, 1e-12);
}

TEST(FluxPairing, AntisymmetryOnRandomGridFields) {
  auto sec = neumann_strip();
  std::mt19937 rng(3);
  std::normal_distribution<double> N;
  for (int trial = 0; trial < 20; ++trial) {
    GridField u, v;
    u.section = v.section = sec;
    u.dt = v.dt = 0.01;
    u.samples.resize(sec->points(), 9);
    v.samples.resize(sec->points(), 9);
    for (int i = 0; i < sec->points(); ++i) {
      for (int j = 0; j < 9; ++j) {
        u.samples(i, j) = Complex(N(rng), N(rng));
        v.samples(i, j) = Complex(N(rng), N(rng));
      }
    }
    const Complex a = flux_value(trace_at(u, 0.04), trace_at(v, 0.04));
    const Complex b = flux_value(trace_at(v, 0.04), trace_at(u, 0.04));
    EXPECT_LT(std::abs(a + std::conj(b)), 1e-12 * (1.0 + std::abs(a)));
  }
}

TEST(FluxPairing, GridFieldMatchesAnalyticWave) {
  auto sec = neumann_strip();
  const auto ps = pencil_spectrum(*sec, 2.5, 4.0);
  const WaveSpec w = make_wave(sec, point_with(ps, 0, 1, 0), 0);
  GridField g;
  g.section = sec;
  g.dt = 1e-3;
  g.samples.resize(sec->points(), 3001);
  for (int j = 0; j <= 3000; ++j) g.samples.col(j) = w.value(j * g.dt);
  const Complex a = flux_value(trace_at(g, 1.5), trace_at(w, 1.5));
  EXPECT_NEAR(std::abs(a - kI * 5.0), 0.0, 1e-8);
}

TEST(NormalizeBasis, SinglePropagatingPair) {
  auto sec = neumann_strip();
  const auto ps = pencil_spectrum(*sec, 2.5, 1.0);
  const auto waves = strip_waves(sec, ps, 1.0);
  const auto nb = normalize_basis(waves);
  ASSERT_EQ(nb.size(), 1);
  const auto& in = nb.incoming[0];
  ASSERT_EQ(in.terms.size(), 1u);
  EXPECT_NEAR(in.terms[0].second.lambda.real(), -2.5, 1e-14);
  const Complex amp = in.terms[0].first * in.terms[0].second.normalization;
  EXPECT_NEAR(std::abs(amp), 1.0 / std::sqrt(5.0), 1e-12);
  EXPECT_LT(nb.pairing_defect, 1e-8);
}

TEST(NormalizeBasis, EmptyStrip) {
  CrossSectionSpec s;
  s.boundary_kind = BoundaryKind::Dirichlet;
  auto sec = std::make_shared<const CrossSectionSpectrum>(transverse_spectrum(s, 4, 1.0 / 64));
  const auto ps = pencil_spectrum(*sec, 1.0, 0.5);
  const auto nb = normalize_basis(strip_waves(sec, ps, 0.5));
  EXPECT_EQ(nb.size(), 0);
}

TEST(NormalizeBasis, ThresholdChainSymplecticPair) {
  auto sec = neumann_strip();
  const auto ps = pencil_spectrum(*sec, kPi, 1.0);
  const auto waves = strip_waves(sec, ps, 1.0);
  const auto nb = normalize_basis(waves);
  ASSERT_EQ(nb.size(), 2);
  EXPECT_LT(nb.pairing_defect, 1e-8);
  // Brute force over combinations c0 phi + c1 (i t phi): the Gram form of the
  // pair is i q = [[0, -1], [-1, 0]] up to sign, so incoming/outgoing
  // combinations exist and q(in, in) = -i.
  const auto& a = waves[0].sigma == 0 ? waves[0] : waves[1];
  const auto& b = waves[0].sigma == 0 ? waves[1] : waves[0];
  if (a.transverse_index == 1 && b.transverse_index == 1) {
    const Complex q01 = flux_pairing(a, b, 2.0).value;
    EXPECT_NEAR(std::abs(q01), 1.0, 1e-12);
  }
  for (const auto& w : nb.incoming) {
    const Trace t = trace_at(w, 2.0);
    EXPECT_NEAR(std::abs(flux_value(t, t) + kI), 0.0, 1e-8);
  }
}

TEST(AugmentedPairs, FluxDualEvanescentPair) {
  auto sec = neumann_strip();
  const auto ps = pencil_spectrum(*sec, 2.5, 4.0);
  const auto waves = strip_waves(sec, ps, 4.0);
  const WaveSpec* dec = nullptr;
  const WaveSpec* grow = nullptr;
  for (const auto& w : waves) {
    if (w.transverse_index == 1 && w.rate > 0) dec = &w;
    if (w.transverse_index == 1 && w.rate < 0) grow = &w;
  }
  ASSERT_TRUE(dec && grow);
  EXPECT_NEAR(std::abs(flux_pairing(*dec, *grow, 2.0).value - kI), 0.0, 1e-12);
  const auto [in, out] = augmented_pairs(*dec, *grow);
  EXPECT_NEAR(classify(in).iq, 1.0, 1e-12);
  EXPECT_NEAR(classify(out).iq, -1.0, 1e-12);
  const Trace ti = trace_at(in, 1.7), to = trace_at(out, 1.7);
  EXPECT_NEAR(std::abs(flux_value(ti, to)), 0.0, 1e-12);
  // in + out = sqrt(2) * decaying wave.
  const Eigen::VectorXcd s = in.value(3.0) + out.value(3.0);
  EXPECT_LT((s - std::sqrt(2.0) * dec->value(3.0)).norm(), 1e-12);
  EXPECT_THROW(augmented_pairs(*dec, *dec), InvalidArgument);
}

TEST(AugmentedPairs, DistinctTransverseModesDecouple) {
  auto sec = neumann_strip(1.0, 6);
  const auto ps = pencil_spectrum(*sec, 2.5, 7.0);
  const auto waves = strip_waves(sec, ps, 7.0);
  std::vector<WaveCombination> combos;
  for (int n : {1, 2}) {
    const WaveSpec* dec = nullptr;
    const WaveSpec* grow = nullptr;
    for (const auto& w : waves) {
      if (w.transverse_index == n && w.rate > 0) dec = &w;
      if (w.transverse_index == n && w.rate < 0) grow = &w;
    }
    ASSERT_TRUE(dec && grow);
    const auto pr = augmented_pairs(*dec, *grow);
    combos.push_back(pr.first);
    combos.push_back(pr.second);
  }
  const Eigen::MatrixXcd P = pairing_matrix(combos);
  // Growing and decaying factors of different rates multiply the roundoff in
  // the discrete orthogonality of phi_1 and phi_2.
  for (int a = 0; a < 2; ++a) {
    for (int b = 2; b < 4; ++b) EXPECT_LT(std::abs(P(a, b)), 1e-9);
  }
}

TEST(Pairings, CutoffIndependence) {
  auto sec = neumann_strip();
  const auto ps = pencil_spectrum(*sec, 2.5, 4.0);
  const auto nb = normalize_basis(strip_waves(sec, ps, 4.0));
  std::vector<WaveCombination> all = nb.incoming;
  all.insert(all.end(), nb.outgoing.begin(), nb.outgoing.end());
  for (const auto& u : all) {
    for (const auto& v : all) {
      const Complex a = flux_pairing_volume(u, v, Cutoff{CutoffKind::Smoothstep5});
      const Complex b = flux_pairing_volume(u, v, Cutoff{CutoffKind::Exponential});
      const Complex c = flux_value(trace_at(u, 2.5), trace_at(v, 2.5));
      EXPECT_LT(std::abs(a - b), 1e-8);
      EXPECT_LT(std::abs(a - c), 1e-8);
    }
  }
}

TEST(Pairings, PositionIndependenceForSolutions) {
  auto sec = neumann_strip(1.4, 6);
  const auto ps = pencil_spectrum(*sec, 3.1, 6.0);
  const auto waves = strip_waves(sec, ps, 6.0);
  for (const auto& u : waves) {
    for (const auto& v : waves) {
      const FluxPairing f = flux_pairing(u, v, 1.0, 2.5);
      EXPECT_LT(f.quadrature_residual, 1e-6 * std::max(1.0, std::abs(f.value)));
    }
  }
}
