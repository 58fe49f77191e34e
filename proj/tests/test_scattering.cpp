#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "augscat/error.hpp"
#include "augscat/scattering.hpp"

using namespace augscat;

namespace {

const double kPi = std::acos(-1.0);
const Complex kI(0.0, 1.0);

AssemblyOptions opts(double h, ScatteringMode mode = ScatteringMode::Classical, double beta = 0.0) {
  AssemblyOptions o;
  o.h = h;
  o.mode = mode;
  o.beta = beta;
  return o;
}

Eigen::MatrixXcd random_unitary(int n, std::mt19937& rng) {
  std::normal_distribution<double> N;
  Eigen::MatrixXcd A(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) A(i, j) = Complex(N(rng), N(rng));
  }
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(A);
  return qr.householderQ() * Eigen::MatrixXcd::Identity(n, n);
}

std::vector<Complex> sorted_eigenvalues(const Eigen::MatrixXcd& A) {
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(A, false);
  std::vector<Complex> v(es.eigenvalues().data(), es.eigenvalues().data() + A.rows());
  std::sort(v.begin(), v.end(), [](Complex a, Complex b) { return std::arg(a) < std::arg(b); });
  return v;
}

}  // namespace

TEST(UnitarityDefect, OfKnownMatrices) {
  EXPECT_EQ(unitarity_defect(Eigen::MatrixXcd::Identity(3, 3)), 0.0);
  EXPECT_NEAR(unitarity_defect(2.0 * Eigen::MatrixXcd::Identity(2, 2)), std::sqrt(18.0), 1e-14);
  EXPECT_EQ(unitarity_defect(Eigen::MatrixXcd(0, 0)), 0.0);
}

TEST(ClassicalMatrices, TJunctionIsUnitaryAndInverse) {
  for (double h : {1.0 / 16, 1.0 / 32}) {
    const ScatteringPair p = scattering_pair(t_junction(1.0, BoundaryKind::Neumann), 2.5, opts(h));
    EXPECT_EQ(p.T.M, 3);
    EXPECT_EQ(p.T.M_prime, 3);
    EXPECT_LT(p.T.unitarity_defect, 1e-10);
    EXPECT_LT(p.S.unitarity_defect, 1e-10);
    EXPECT_LT(p.S.inverse_defect, 1e-10);
    // T symmetric by reciprocity, so S = T^{-1} = T^*.
    EXPECT_LT((p.T.entries - p.T.entries.transpose()).norm(), 1e-10);
    EXPECT_LT((classical_S(p.T).entries - p.T.entries.adjoint()).norm(), 1e-10);
    EXPECT_LT((p.S.entries - classical_S(p.T).entries).norm(), 1e-10);
  }
}

TEST(ClassicalMatrices, DuctIsPurePhase) {
  const double h = 1.0 / 32, k = 2.5;
  DiscreteProblem prob = assemble(straight_duct(1.0, 1.0, BoundaryKind::Neumann), k, opts(h));
  const ScatteringMatrix T = classical_T(prob);
  const Complex t = std::exp(kI * 2.0 * std::asin(0.5 * k * h) / h);
  Eigen::Matrix2cd ref;
  ref << 0.0, t, t, 0.0;
  EXPECT_LT((T.entries - ref).norm(), 1e-10);
  EXPECT_EQ(T.kind, MatrixKind::TMatrix);
  EXPECT_EQ(classical_S(T).kind, MatrixKind::SMatrix);
}

TEST(ClassicalMatrices, NoPropagatingChannelsGivesEmptyMatrix) {
  DiscreteProblem prob = assemble(cross_junction(1.0, BoundaryKind::Dirichlet), 2.0, opts(1.0 / 16));
  const ScatteringMatrix T = classical_T(prob);
  EXPECT_EQ(T.entries.rows(), 0);
  EXPECT_EQ(T.M, 0);
  EXPECT_EQ(classical_S(T).entries.rows(), 0);
}

TEST(ClassicalMatrices, DirectSMatchesInverse) {
  const auto g = cross_junction(1.0, BoundaryKind::Neumann);
  DiscreteProblem prob = assemble(g, 2.2, opts(1.0 / 32));
  const ScatteringMatrix T = classical_T(prob);
  const ScatteringMatrix S = direct_S(g, 2.2, opts(1.0 / 32));
  EXPECT_LT((S.entries * T.entries - Eigen::MatrixXcd::Identity(4, 4)).norm(), 1e-10);
}

TEST(AugmentedMatrices, TJunctionUnitaryWithOneEvanescentPairPerArm) {
  const ScatteringPair p =
      scattering_pair(t_junction(1.0, BoundaryKind::Neumann), 2.5, opts(1.0 / 32, ScatteringMode::Augmented, 4.0));
  EXPECT_EQ(p.T.M, 3);
  EXPECT_EQ(p.T.M_prime, 6);
  EXPECT_LT(p.T.unitarity_defect, 1e-10);
  EXPECT_LT(p.S.unitarity_defect, 1e-10);
  EXPECT_LT(p.S.inverse_defect, 1e-10);
  EXPECT_EQ(p.S.block(1, 1).rows(), 3);
  EXPECT_EQ(p.S.block(2, 2).rows(), 3);
  EXPECT_EQ(p.S.block(1, 2).cols(), 3);
}

TEST(AugmentedMatrices, BetaBelowFirstRateReducesToClassical) {
  const auto g = t_junction(1.0, BoundaryKind::Neumann);
  const ScatteringMatrix A = augmented_S(g, 2.5, 1.0, opts(1.0 / 32));
  const ScatteringPair C = scattering_pair(g, 2.5, opts(1.0 / 32));
  EXPECT_EQ(A.M_prime, 3);
  EXPECT_LT((A.entries - C.S.entries).norm(), 1e-10);
}

TEST(AugmentedMatrices, DuctDecouplesPropagatingAndEvanescent) {
  const ScatteringMatrix S = augmented_S(straight_duct(1.0, 1.0, BoundaryKind::Neumann), 2.5, 4.0, opts(1.0 / 32));
  ASSERT_EQ(S.M, 2);
  ASSERT_EQ(S.M_prime, 4);
  EXPECT_LT(S.block(1, 2).norm(), 1e-10);
  EXPECT_LT(S.block(2, 1).norm(), 1e-10);
  EXPECT_LT(S.unitarity_defect, 1e-10);
}

TEST(AugmentedMatrices, S22SpectrumInvariantUnderUnitaryBasisChange) {
  std::mt19937 rng(5);
  const auto g = cross_junction(1.0, BoundaryKind::Dirichlet);
  for (double k : {3.6, 4.4}) {
    const ScatteringMatrix S = augmented_S(g, k, 7.0, opts(1.0 / 32));
    ASSERT_EQ(S.M, 4);
    const Eigen::MatrixXcd U = random_unitary(S.M, rng);
    const ScatteringMatrix Su = augmented_S_in_basis(g, k, 7.0, U, opts(1.0 / 32));
    EXPECT_LT(Su.unitarity_defect, 1e-10);
    const auto e1 = sorted_eigenvalues(S.block(2, 2)), e2 = sorted_eigenvalues(Su.block(2, 2));
    ASSERT_EQ(e1.size(), e2.size());
    for (std::size_t i = 0; i < e1.size(); ++i) EXPECT_LT(std::abs(e1[i] - e2[i]), 1e-9);
    // The propagating block transforms by conjugation with U.
    EXPECT_GT((S.block(1, 1) - Su.block(1, 1)).norm(), 1e-3);
  }
}

TEST(Thresholds, SplitNeumannDuctRange) {
  const auto g = straight_duct(1.0, 1.0, BoundaryKind::Neumann);
  const auto t = geometry_thresholds(g, 2.0, 4.0);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_NEAR(t[0], kPi, 1e-14);
  const auto seg = split_at_thresholds(g, 2.0, 4.0, 1e-3);
  ASSERT_EQ(seg.size(), 2u);
  EXPECT_DOUBLE_EQ(seg[0].first, 2.0);
  EXPECT_NEAR(seg[0].second, kPi * (1 - 1e-3), 1e-14);
  EXPECT_NEAR(seg[1].first, kPi * (1 + 1e-3), 1e-14);
  EXPECT_DOUBLE_EQ(seg[1].second, 4.0);
  EXPECT_EQ(split_at_thresholds(g, 2.0, 3.0, 1e-3).size(), 1u);
  EXPECT_THROW(split_at_thresholds(g, 3.0, 2.0, 1e-3), InvalidArgument);
}

TEST(Oracle, CrossHasOneTrappedModeBelowCutoff) {
  const auto g = cross_junction(1.0, BoundaryKind::Dirichlet);
  const double h = 1.0 / 32;
  EXPECT_EQ(negative_count(g, 1.7, h), 0);
  const auto modes = oracle_trapped_modes(g, 0.5 * kPi, 0.99 * kPi, h);
  ASSERT_EQ(modes.size(), 1u);
  EXPECT_NEAR(modes[0], 2.55, 0.02);
  EXPECT_EQ(negative_count(g, modes[0] + 1e-6, h) - negative_count(g, modes[0] - 1e-6, h), 1);
  EXPECT_TRUE(oracle_trapped_modes(straight_duct(1.0, 1.0, BoundaryKind::Dirichlet), 0.5 * kPi, 0.99 * kPi, h).empty());
}

TEST(Criterion, KernelCountAtTheTrappedMode) {
  const auto g = cross_junction(1.0, BoundaryKind::Dirichlet);
  const AssemblyOptions o = opts(1.0 / 32);
  const double ks = oracle_trapped_modes(g, 0.5 * kPi, 0.99 * kPi, o.h).at(0);
  const KernelCountReport at = kernel_count_report(g, ks, 4.0, 4.0, o);
  EXPECT_EQ(at.M, 0);
  EXPECT_EQ(at.kernel_S22, 1);
  EXPECT_EQ(at.oracle_count, 1);
  EXPECT_LT(at.min_dist, 1e-6);
  const KernelCountReport off = kernel_count_report(g, 2.1, 4.0, 4.0, o);
  EXPECT_EQ(off.kernel_S22, 0);
  EXPECT_EQ(off.oracle_count, 0);
  EXPECT_EQ(off.strip_multiplicity, 8);
}

TEST(Criterion, ScanFindsTheCrossModeAndNothingInTheDuct) {
  ScanOptions so;
  so.assembly = opts(1.0 / 32);
  const auto cross = trapped_mode_scan(cross_junction(1.0, BoundaryKind::Dirichlet), 0.5 * kPi, kPi, 40, 4.0, so);
  ASSERT_EQ(cross.brackets.size(), 1u);
  const Bracket& b = cross.brackets[0];
  EXPECT_TRUE(b.oracle_confirmed);
  EXPECT_LE(b.k_lo, b.k_star);
  EXPECT_LE(b.k_star, b.k_hi);
  EXPECT_NEAR(b.k_star, b.oracle_k, 1e-6);
  EXPECT_TRUE(cross.oracle_available);
  ASSERT_EQ(cross.oracle_modes.size(), 1u);

  const auto duct = trapped_mode_scan(straight_duct(1.0, 1.0, BoundaryKind::Dirichlet), 0.5 * kPi, kPi, 40, 4.0, so);
  EXPECT_TRUE(duct.brackets.empty());
  EXPECT_TRUE(duct.oracle_modes.empty());
  for (const auto& p : duct.points) {
    ASSERT_TRUE(p.ok) << p.note;
    EXPECT_GT(p.min_dist, 0.1);
    EXPECT_LT(p.unitarity_defect, 1e-10);
  }
}

TEST(Criterion, ParallelScanMatchesSerial) {
  ScanOptions so;
  so.assembly = opts(1.0 / 16);
  const auto g = t_junction(1.0, BoundaryKind::Neumann);
  const auto a = trapped_mode_scan(g, 2.0, 2.9, 12, 4.0, so);
  so.threads = 3;
  const auto b = trapped_mode_scan(g, 2.0, 2.9, 12, 4.0, so);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].k, b.points[i].k);
    EXPECT_EQ(a.points[i].min_dist, b.points[i].min_dist);
  }
}

TEST(RadiationBasis, IdentityTransformIsCompatible) {
  DiscreteProblem p = assemble(t_junction(1.0, BoundaryKind::Neumann), 2.5, opts(1.0 / 32));
  const RadiationBasis rb =
      radiation_basis_transform(p, Eigen::MatrixXcd::Identity(3, 3), Eigen::MatrixXcd::Zero(3, 3));
  EXPECT_LT(rb.residual, 1e-10);
  EXPECT_LT((rb.pairing - kI * Eigen::MatrixXcd::Identity(3, 3)).norm(), 1e-10);
}

TEST(RadiationBasis, RandomTransformsStayCompatible) {
  std::mt19937 rng(17);
  std::normal_distribution<double> N;
  DiscreteProblem p = assemble(cross_junction(1.0, BoundaryKind::Neumann), 2.2, opts(1.0 / 32));
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXcd S(4, 4), R(4, 4);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        S(i, j) = Complex(N(rng), N(rng));
        R(i, j) = Complex(N(rng), N(rng));
      }
    }
    S += 3.0 * Eigen::MatrixXcd::Identity(4, 4);
    const RadiationBasis rb = radiation_basis_transform(p, S, R);
    EXPECT_LT(rb.residual, 1e-8);
    // The u_j are not flux-orthogonal in general, only paired with V_k.
    for (int j = 0; j < 4; ++j) EXPECT_LT(std::abs(global_flux(p, rb.u[j], rb.V[j]) - kI), 1e-8);
  }
  EXPECT_THROW(radiation_basis_transform(p, Eigen::MatrixXcd::Zero(4, 4), Eigen::MatrixXcd::Zero(4, 4)),
               SingularSystem);
}
