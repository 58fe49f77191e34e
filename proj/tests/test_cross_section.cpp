#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "augscat/cross_section.hpp"
#include "augscat/error.hpp"

using namespace augscat;

namespace {

const double kPi = std::acos(-1.0);

CrossSectionSpec strip(BoundaryKind kind, double width = 1.0) {
  CrossSectionSpec s;
  s.width = width;
  s.boundary_kind = kind;
  return s;
}

// Smallest eigenvalue of the unsymmetrized ghost-node FD matrix of
// -u'' - p u with Neumann ends, by a general dense eigensolver.
double dense_neumann_mu0(const std::vector<double>& p, double width, double h) {
  const int n = static_cast<int>(std::lround(width / h)) + 1;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  auto prof = [&](double y) {
    const double s = y / width * (p.size() - 1);
    const int i = std::min(static_cast<int>(s), static_cast<int>(p.size()) - 2);
    const double f = s - i;
    return (1 - f) * p[i] + f * p[i + 1];
  };
  for (int i = 0; i < n; ++i) {
    A(i, i) = 2.0 / (h * h) - prof(i * h);
    if (i == 0) {
      A(0, 1) = -2.0 / (h * h);
    } else if (i == n - 1) {
      A(i, i - 1) = -2.0 / (h * h);
    } else {
      A(i, i - 1) = A(i, i + 1) = -1.0 / (h * h);
    }
  }
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  double m = 1e300;
  for (int i = 0; i < n; ++i) m = std::min(m, es.eigenvalues()(i).real());
  return m;
}

}  // namespace

TEST(TransverseSpectrum, NeumannStripMatchesSeparationOfVariables) {
  const auto sp = transverse_spectrum(strip(BoundaryKind::Neumann), 3, 1.0 / 64);
  ASSERT_EQ(sp.entries.size(), 3u);
  EXPECT_DOUBLE_EQ(sp.entries[0].mu, 0.0);
  EXPECT_NEAR(sp.entries[1].mu, kPi * kPi, 1e-12);
  EXPECT_NEAR(sp.entries[2].mu, 4 * kPi * kPi, 1e-12);
  for (int n = 0; n < 3; ++n) {
    Eigen::VectorXd ref(sp.points());
    for (int i = 0; i < sp.points(); ++i) ref(i) = std::cos(n * kPi * sp.node(i));
    const double c = sp.inner(sp.entries[n].phi, ref) / std::sqrt(sp.inner(ref, ref));
    EXPECT_NEAR(std::abs(c), 1.0, 1e-12) << "mode " << n;
  }
}

TEST(TransverseSpectrum, DirichletStrip) {
  const auto sp = transverse_spectrum(strip(BoundaryKind::Dirichlet), 2, 1.0 / 64);
  EXPECT_NEAR(sp.entries[0].mu, kPi * kPi, 1e-12);
  EXPECT_NEAR(sp.entries[1].mu, 4 * kPi * kPi, 1e-12);
}

TEST(TransverseSpectrum, ModesAreOrthonormal) {
  for (auto kind : {BoundaryKind::Neumann, BoundaryKind::Dirichlet}) {
    const auto sp = transverse_spectrum(strip(kind, 1.5), 6, 1.5 / 120);
    for (int a = 0; a < 6; ++a) {
      for (int b = 0; b < 6; ++b) {
        EXPECT_NEAR(sp.inner(sp.entries[a].phi, sp.entries[b].phi), a == b ? 1.0 : 0.0,
                    10 * 2.2e-16 * sp.points() + 1e-13);
      }
    }
  }
}

TEST(TransverseSpectrum, ProfileMatchesDenseEigensolve) {
  const double h = 1.0 / 128;
  std::vector<double> p(129);
  for (int i = 0; i <= 128; ++i) p[i] = 0.1 * std::sin(kPi * i * h);
  CrossSectionSpec s = strip(BoundaryKind::Neumann);
  s.transverse_profile = p;
  const auto sp = transverse_spectrum(s, 1, h);
  const double ref = dense_neumann_mu0(p, 1.0, h);
  EXPECT_NEAR(sp.entries[0].mu, ref, 1e-8 * std::max(1.0, std::abs(ref)));
  EXPECT_LT(sp.entries[0].mu, 0.0);
}

TEST(TransverseSpectrum, ProfileEigenvaluesAscendAndSolveTheirEquation) {
  const double h = 1.0 / 100;
  std::vector<double> p(101);
  for (int i = 0; i <= 100; ++i) p[i] = 3.0 * std::exp(-20.0 * std::pow(i * h - 0.4, 2));
  CrossSectionSpec s = strip(BoundaryKind::Dirichlet);
  s.transverse_profile = p;
  const auto sp = transverse_spectrum(s, 4, h);
  for (int n = 1; n < 4; ++n) EXPECT_LT(sp.entries[n - 1].mu, sp.entries[n].mu);
  for (const auto& m : sp.entries) {
    double worst = 0.0;
    for (int i = 1; i + 1 < sp.points(); ++i) {
      const double lap = (-m.phi(i - 1) + 2 * m.phi(i) - m.phi(i + 1)) / (h * h);
      worst = std::max(worst, std::abs(lap - p[i] * m.phi(i) - m.mu * m.phi(i)));
    }
    EXPECT_LT(worst, 1e-8 * std::max(1.0, std::abs(m.mu)));
  }
}

TEST(TransverseSpectrum, RejectsUnderresolvedGrid) {
  EXPECT_THROW(transverse_spectrum(strip(BoundaryKind::Neumann), 12, 1.0 / 16), ResolutionError);
}

TEST(TransverseSpectrum, RejectsBadWidth) {
  EXPECT_THROW(transverse_spectrum(strip(BoundaryKind::Neumann, -1.0), 2, 0.1), InvalidArgument);
}

TEST(PencilSpectrum, NeumannStripAtTwoAndAHalf) {
  const auto sp = transverse_spectrum(strip(BoundaryKind::Neumann), 4, 1.0 / 64);
  const auto ps = pencil_spectrum(sp, 2.5, 4.0);
  ASSERT_EQ(ps.points.size(), 4u);
  int real = 0, imag = 0;
  for (const auto& p : ps.points) {
    if (p.is_real()) {
      EXPECT_NEAR(std::abs(p.lambda.real()), 2.5, 1e-14);
      ++real;
    } else {
      EXPECT_NEAR(std::abs(p.lambda.imag()), std::sqrt(kPi * kPi - 6.25), 1e-12);
      EXPECT_NEAR(std::abs(p.lambda.imag()), 1.9025, 1e-4);
      ++imag;
    }
    // exp(i lambda t) phi_n solves the limit equation: lambda^2 = k^2 - mu_n.
    const double mu = sp.entries[p.transverse_index].mu;
    EXPECT_LT(std::abs(p.lambda * p.lambda - (6.25 - mu)), 1e-10);
  }
  EXPECT_EQ(real, 2);
  EXPECT_EQ(imag, 2);
  EXPECT_EQ(ps.real_count(), 2);
  EXPECT_FALSE(ps.has_threshold());
}

TEST(PencilSpectrum, ThresholdGivesJordanChain) {
  const auto sp = transverse_spectrum(strip(BoundaryKind::Neumann), 3, 1.0 / 64);
  const auto ps = pencil_spectrum(sp, kPi, 1.0);
  ASSERT_TRUE(ps.has_threshold());
  bool found = false;
  for (const auto& p : ps.points) {
    if (p.transverse_index == 1) {
      EXPECT_EQ(p.chain_length, 2);
      EXPECT_EQ(std::abs(p.lambda), 0.0);
      found = true;
    } else {
      EXPECT_EQ(p.chain_length, 1);
    }
  }
  EXPECT_TRUE(found);
  EXPECT_TRUE(ps.threshold_flags[1]);
}

TEST(PencilSpectrum, DirichletBelowCutoffHasOnlyImaginaryPair) {
  const auto sp = transverse_spectrum(strip(BoundaryKind::Dirichlet), 3, 1.0 / 64);
  const auto ps = pencil_spectrum(sp, 2.0, 3.0);
  ASSERT_EQ(ps.points.size(), 2u);
  EXPECT_EQ(ps.real_count(), 0);
  for (const auto& p : ps.points) EXPECT_NEAR(std::abs(p.lambda.imag()), 2.4227, 1e-4);
}

TEST(PencilSpectrum, RateLineCollisionIsAnError) {
  const auto sp = transverse_spectrum(strip(BoundaryKind::Neumann), 3, 1.0 / 64);
  EXPECT_THROW(pencil_spectrum(sp, 2.5, std::sqrt(kPi * kPi - 6.25)), SpectrumCollision);
}

TEST(PencilSpectrum, ConjugationSymmetryAndEvenMultiplicity) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> U(0.2, 9.0);
  for (auto kind : {BoundaryKind::Neumann, BoundaryKind::Dirichlet}) {
    const auto sp = transverse_spectrum(strip(kind, 1.3), 8, 1.3 / 130);
    for (int trial = 0; trial < 40; ++trial) {
      const double k = U(rng), beta = U(rng);
      PencilSpectrum ps;
      try {
        ps = pencil_spectrum(sp, k, beta);
      } catch (const SpectrumCollision&) {
        continue;
      }
      for (const auto& p : ps.points) {
        bool partner = false;
        for (const auto& q : ps.points) {
          if (std::abs(q.lambda - std::conj(p.lambda)) < 1e-12 && q.multiplicity == p.multiplicity &&
              q.chain_length == p.chain_length) {
            partner = true;
          }
        }
        EXPECT_TRUE(partner);
      }
      EXPECT_EQ(ps.strip_multiplicity(beta) % 2, 0);
    }
  }
}

TEST(PencilSpectrum, RealCountNondecreasingInK) {
  const auto sp = transverse_spectrum(strip(BoundaryKind::Neumann), 8, 1.0 / 128);
  int prev = 0;
  for (double k = 0.1; k < 12.0; k += 0.07) {
    try {
      const auto ps = pencil_spectrum(sp, k, 0.5);
      EXPECT_GE(ps.real_count(), prev);
      prev = ps.real_count();
    } catch (const Error&) {
    }
  }
}

TEST(CellModes, DiscreteEigenvaluesApproachContinuous) {
  const auto c64 = cell_centered_modes(strip(BoundaryKind::Dirichlet), 1.0 / 64);
  const auto c128 = cell_centered_modes(strip(BoundaryKind::Dirichlet), 1.0 / 128);
  const double e1 = std::abs(c64.mu_h(0) - c64.mu(0));
  const double e2 = std::abs(c128.mu_h(0) - c128.mu(0));
  EXPECT_NEAR(e1 / e2, 4.0, 0.05);
  const Eigen::MatrixXd G = c64.h * c64.phi.transpose() * c64.phi;
  EXPECT_LT((G - Eigen::MatrixXd::Identity(G.rows(), G.cols())).norm(), 1e-12);
}

TEST(Thresholds, SectionThresholdList) {
  const auto t = section_thresholds(strip(BoundaryKind::Neumann), 7.0);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_NEAR(t[0], kPi, 1e-14);
  EXPECT_NEAR(t[1], 2 * kPi, 1e-14);
}
