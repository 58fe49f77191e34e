#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "augscat/error.hpp"
#include "augscat/junction.hpp"

using namespace augscat;

namespace {

const double kPi = std::acos(-1.0);
const Complex kI(0.0, 1.0);

Eigen::VectorXcd unit(int n, int k) {
  Eigen::VectorXcd e = Eigen::VectorXcd::Zero(n);
  e(k) = 1.0;
  return e;
}

AssemblyOptions with_h(double h) {
  AssemblyOptions o;
  o.h = h;
  return o;
}

// Cell centre of an unknown.
std::pair<double, double> centre(const DiscreteProblem& p, int c) {
  const auto [ix, iy] = p.cell_ij[static_cast<std::size_t>(c)];
  return {p.x_origin + (ix + 0.5) * p.h, p.y_origin + (iy + 0.5) * p.h};
}

Source bump_source(const DiscreteProblem& p, double x0, double y0) {
  Source s;
  s.f = Eigen::VectorXcd::Zero(p.cells());
  for (int c = 0; c < p.cells(); ++c) {
    const auto [x, y] = centre(p, c);
    const double r2 = (x - x0) * (x - x0) + (y - y0) * (y - y0);
    s.f(c) = Complex(1.0, 0.5) * std::exp(-r2 / 0.02);
  }
  return s;
}

double duct_transmission_error(double h) {
  DiscreteProblem p = assemble(straight_duct(1.0, 1.0, BoundaryKind::Neumann), 2.5, with_h(h));
  const SolveResult r = solve_with_incoming(p, unit(p.channel_count(), 0));
  return std::abs(r.amplitudes.b(1) - std::exp(kI * 2.5));
}

}  // namespace

TEST(StraightDuct, ReflectionlessWithDiscretePhase) {
  const double h = 1.0 / 128, k = 2.5;
  DiscreteProblem p = assemble(straight_duct(1.0, 1.0, BoundaryKind::Neumann), k, with_h(h));
  ASSERT_EQ(p.M, 2);
  ASSERT_EQ(p.channel_count(), 2);
  const SolveResult r = solve_with_incoming(p, unit(2, 0));
  EXPECT_LT(std::abs(r.amplitudes.b(0)), 1e-10);
  // Discrete wavenumber of the 5-point stencil: cos(lambda_h h) = 1 - (k h)^2 / 2.
  const double lambda_h = 2.0 * std::asin(0.5 * k * h) / h;
  EXPECT_LT(std::abs(r.amplitudes.b(1) - std::exp(kI * lambda_h)), 1e-10);
  EXPECT_LT(std::abs(r.amplitudes.b(1) - std::exp(kI * k)), 1e-4);
}

TEST(StraightDuct, PhaseErrorIsSecondOrder) {
  const double e1 = duct_transmission_error(1.0 / 64);
  const double e2 = duct_transmission_error(1.0 / 128);
  EXPECT_GT(e1 / e2, 3.2);
  EXPECT_LT(e1 / e2, 4.8);
}

TEST(StraightDuct, DirichletBelowCutoffHasNoChannels) {
  DiscreteProblem p = assemble(straight_duct(1.0, 1.0, BoundaryKind::Dirichlet), 2.0, with_h(1.0 / 32));
  EXPECT_EQ(p.M, 0);
  EXPECT_EQ(p.channel_count(), 0);
}

TEST(Assemble, TJunctionChannelCount) {
  const DiscreteProblem p = assemble(t_junction(1.0, BoundaryKind::Neumann), 2.5, with_h(1.0 / 32));
  EXPECT_EQ(p.M, 3);
  for (const auto& ch : p.channels) {
    EXPECT_EQ(ch.kind, ChannelKind::Propagating);
    EXPECT_EQ(ch.mode, 0);
  }
  AssemblyOptions o = with_h(1.0 / 32);
  o.mode = ScatteringMode::Augmented;
  o.beta = 4.0;
  const DiscreteProblem q = assemble(t_junction(1.0, BoundaryKind::Neumann), 2.5, o);
  EXPECT_EQ(q.M, 3);
  EXPECT_EQ(q.channel_count(), 6);
  for (int c = 3; c < 6; ++c) EXPECT_EQ(q.channels[c].kind, ChannelKind::Evanescent);
}

TEST(Assemble, ThresholdIsRejected) {
  EXPECT_THROW(assemble(t_junction(1.0, BoundaryKind::Neumann), kPi, with_h(1.0 / 32)), ThresholdError);
}

TEST(Assemble, RateLineCollisionIsRejected) {
  AssemblyOptions o = with_h(1.0 / 32);
  o.mode = ScatteringMode::Augmented;
  o.beta = std::sqrt(kPi * kPi - 6.25);
  EXPECT_THROW(assemble(t_junction(1.0, BoundaryKind::Neumann), 2.5, o), SpectrumCollision);
}

TEST(Geometry, Validation) {
  JunctionGeometry g = t_junction(1.0, BoundaryKind::Neumann);
  g.junction.clear();
  EXPECT_THROW(g.validate(), InvalidArgument);
  g = t_junction(1.0, BoundaryKind::Neumann);
  g.arms[1].width = 0.0;
  EXPECT_THROW(g.validate(), InvalidArgument);
  g = t_junction(1.0, BoundaryKind::Neumann);
  g.arms[2].length = -1.0;
  EXPECT_THROW(g.validate(), InvalidArgument);
  g = t_junction(1.0, BoundaryKind::Neumann);
  g.junction[0].x1 = g.junction[0].x0;
  EXPECT_THROW(g.validate(), InvalidArgument);
  EXPECT_THROW(preset_geometry("spiral", BoundaryKind::Neumann), InvalidArgument);
  EXPECT_NO_THROW(preset_geometry("l-bend", BoundaryKind::Dirichlet).validate());
}

TEST(ArmSides, NamesRoundTrip) {
  for (auto s : {ArmSide::East, ArmSide::North, ArmSide::West, ArmSide::South}) {
    EXPECT_EQ(arm_side_from_string(to_string(s)), s);
  }
  EXPECT_THROW(arm_side_from_string("up"), InvalidArgument);
}

TEST(Solve, ZeroDataGivesZeroField) {
  DiscreteProblem p = assemble(t_junction(1.0, BoundaryKind::Neumann), 2.5, with_h(1.0 / 32));
  const SolveResult r = solve_with_incoming(p, Eigen::VectorXcd::Zero(p.channel_count()));
  EXPECT_EQ(r.field.norm(), 0.0);
  EXPECT_EQ(r.amplitudes.b.norm(), 0.0);
}

TEST(Solve, SolutionSatisfiesTheDiscreteEquation) {
  DiscreteProblem p = assemble(t_junction(1.0, BoundaryKind::Neumann), 2.5, with_h(1.0 / 32));
  const Eigen::VectorXcd a = Eigen::Vector3cd(1.0, Complex(0.0, -0.5), 0.25);
  const SolveResult r = solve_with_incoming(p, a);
  const Eigen::VectorXcd res = apply_operator(p, r.field, a, r.amplitudes.b);
  EXPECT_LT(res.cwiseAbs().maxCoeff(), 1e-9 * (1.0 + r.field.cwiseAbs().maxCoeff()) / (p.h * p.h));
  // Energy balance of a lossless junction.
  EXPECT_NEAR(r.amplitudes.b.squaredNorm(), a.squaredNorm(), 1e-12);
}

TEST(Solve, ManyMatchesSingle) {
  DiscreteProblem p = assemble(t_junction(1.0, BoundaryKind::Neumann), 2.5, with_h(1.0 / 32));
  const auto all = solve_many(p, Eigen::MatrixXcd::Identity(3, 3));
  for (int k = 0; k < 3; ++k) {
    const SolveResult r = solve_with_incoming(p, unit(3, k));
    EXPECT_LT((r.field - all[k].field).norm(), 1e-12 * r.field.norm());
  }
}

TEST(Solve, MirrorSymmetricTJunction) {
  // West and East arms are mirror images under x -> 1 - x.
  DiscreteProblem p = assemble(t_junction(1.0, BoundaryKind::Neumann), 2.5, with_h(1.0 / 32));
  const auto r = solve_many(p, Eigen::MatrixXcd::Identity(3, 3));
  EXPECT_LT(std::abs(r[0].amplitudes.b(0) - r[1].amplitudes.b(1)), 1e-12);
  EXPECT_LT(std::abs(r[0].amplitudes.b(1) - r[1].amplitudes.b(0)), 1e-12);
  EXPECT_LT(std::abs(r[0].amplitudes.b(2) - r[1].amplitudes.b(2)), 1e-12);
  // Reciprocity of the symmetric operator.
  EXPECT_LT(std::abs(r[0].amplitudes.b(2) - r[2].amplitudes.b(0)), 1e-12);
}

TEST(Extraction, RecoversPrescribedWaveCombination) {
  AssemblyOptions o = with_h(1.0 / 32);
  o.mode = ScatteringMode::Augmented;
  o.beta = 4.0;
  const DiscreteProblem p = assemble(t_junction(1.0, BoundaryKind::Neumann), 2.5, o);
  const Eigen::VectorXcd u = 0.3 * arm_wave(p, 1, true) + Complex(0.0, 0.4) * arm_wave(p, 2, false) +
                             Complex(-0.2, 0.1) * arm_wave(p, 4, true);
  const Extraction ex = extract_amplitudes(p, u);
  Eigen::VectorXcd a = Eigen::VectorXcd::Zero(6), b = Eigen::VectorXcd::Zero(6);
  a(1) = 0.3;
  b(2) = Complex(0.0, 0.4);
  a(4) = Complex(-0.2, 0.1);
  EXPECT_LT((ex.amplitudes.a - a).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((ex.amplitudes.b - b).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(ex.face_residual, 1e-12);
  EXPECT_FALSE(ex.warning);
}

TEST(Extraction, IsLinear) {
  DiscreteProblem p = assemble(t_junction(1.0, BoundaryKind::Neumann), 2.5, with_h(1.0 / 32));
  const auto r = solve_many(p, Eigen::MatrixXcd::Identity(3, 3));
  const Complex c1(0.7, -0.2), c2(-1.1, 0.4);
  const Extraction e = extract_amplitudes(p, c1 * r[0].field + c2 * r[2].field);
  const Extraction e0 = extract_amplitudes(p, r[0].field), e2 = extract_amplitudes(p, r[2].field);
  EXPECT_LT((e.amplitudes.b - c1 * e0.amplitudes.b - c2 * e2.amplitudes.b).norm(), 1e-12);
  EXPECT_LT((e0.amplitudes.b - r[0].amplitudes.b).norm(), 1e-10);
  EXPECT_LT((e0.amplitudes.a - unit(3, 0)).norm(), 1e-10);
}

TEST(Extraction, HigherModesAreInvisible) {
  const DiscreteProblem p = assemble(t_junction(1.0, BoundaryKind::Neumann), 2.5, with_h(1.0 / 32));
  const auto& A = p.arms[0];
  Eigen::VectorXcd u = Eigen::VectorXcd::Zero(p.cells());
  for (int j = 0; j < A.rows; ++j) {
    for (int i = 0; i < A.cells_across; ++i) u(A.at(j, i)) = A.modes.phi(i, 1) * std::exp(-1.9 * j * p.h);
  }
  const Extraction ex = extract_amplitudes(p, u);
  EXPECT_LT(ex.amplitudes.a.norm() + ex.amplitudes.b.norm(), 1e-12);
  EXPECT_THROW(extract_amplitudes(p, Eigen::VectorXcd::Zero(3)), InvalidArgument);
}

TEST(Extraction, ArmFluxOfOutgoingWave) {
  const DiscreteProblem p = assemble(straight_duct(1.0, 1.0, BoundaryKind::Neumann), 2.5, with_h(1.0 / 32));
  const Eigen::VectorXcd v = arm_wave(p, 1, false);
  const int row = extraction_row(p, 1);
  EXPECT_LT(std::abs(arm_flux(p, 1, v, v, row) - kI), 1e-12);
  const Eigen::VectorXcd w = arm_wave(p, 1, true);
  EXPECT_LT(std::abs(arm_flux(p, 1, w, w, row) + kI), 1e-12);
  EXPECT_LT(std::abs(arm_flux(p, 1, v, w, row)), 1e-12);
}

TEST(Radiation, FluxAndInnerProductFormulasAgree) {
  for (auto kind : {BoundaryKind::Neumann, BoundaryKind::Dirichlet}) {
    AssemblyOptions o = with_h(1.0 / 32);
    o.mode = ScatteringMode::Augmented;
    o.beta = kind == BoundaryKind::Neumann ? 4.0 : 5.0;
    const double k = kind == BoundaryKind::Neumann ? 2.5 : 3.7;
    DiscreteProblem p = assemble(t_junction(1.0, kind), k, o);
    ASSERT_GT(p.channel_count(), 0);
    const Source s = bump_source(p, 0.4, 0.6);
    const RadiationSolution r = solve_radiation(p, s);
    EXPECT_LT(r.max_discrepancy, 1e-8 * (1.0 + r.b_flux.norm()));
    EXPECT_GT(r.b_flux.norm(), 1e-3);
    EXPECT_LT(r.solution.amplitudes.a.norm(), 1e-12);
  }
}

TEST(Radiation, BoundaryDataEntersTheInnerProduct) {
  DiscreteProblem p = assemble(t_junction(1.0, BoundaryKind::Neumann), 2.5, with_h(1.0 / 32));
  Source s;
  s.f = Eigen::VectorXcd::Zero(p.cells());
  // North wall of the junction square.
  for (int c = 0; c < p.cells(); ++c) {
    const auto [x, y] = centre(p, c);
    if (x > 0.0 && x < 1.0 && std::abs(y - (1.0 - 0.5 * p.h)) < 1e-12) {
      s.g.push_back({c, Face::North, std::sin(kPi * x)});
    }
  }
  ASSERT_EQ(s.g.size(), 32u);
  const RadiationSolution r = solve_radiation(p, s);
  EXPECT_GT(r.b_flux.norm(), 1e-3);
  EXPECT_LT(r.max_discrepancy, 1e-8 * (1.0 + r.b_flux.norm()));
}

TEST(Radiation, NeedsOutgoingUnknowns) {
  AssemblyOptions o = with_h(1.0 / 32);
  o.unknown = UnknownSide::Incoming;
  DiscreteProblem p = assemble(t_junction(1.0, BoundaryKind::Neumann), 2.5, o);
  EXPECT_THROW(solve_radiation(p, bump_source(p, 0.5, 0.5)), InvalidArgument);
}

TEST(ClosureOperator, SymmetricBelowCutoff) {
  const auto A = decaying_closure_operator(cross_junction(1.0, BoundaryKind::Dirichlet), 2.0, 1.0 / 32);
  const Eigen::SparseMatrix<double> At = A.transpose();
  EXPECT_LT((A - At).norm(), 1e-12 * A.norm());
  const DiscreteProblem p = assemble(cross_junction(1.0, BoundaryKind::Dirichlet), 2.0, with_h(1.0 / 32));
  EXPECT_EQ(A.rows(), p.cells());
}

TEST(WriteField, HeaderAndShape) {
  DiscreteProblem p = assemble(l_bend(1.0, BoundaryKind::Neumann), 2.5, with_h(1.0 / 16));
  const SolveResult r = solve_with_incoming(p, unit(p.channel_count(), 0));
  const auto path = std::filesystem::temp_directory_path() / "augscat_test_field.txt";
  write_field(p, r.field, path.string());
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "# augscat field");
  std::string tag;
  int nx = 0, ny = 0;
  is >> tag >> nx >> ny;
  EXPECT_EQ(tag, "dims");
  EXPECT_EQ(nx, p.nx);
  EXPECT_EQ(ny, p.ny);
  int rows = 0;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.rfind("h ", 0) == 0 || line.rfind("k ", 0) == 0 || line.rfind("origin", 0) == 0) continue;
    ++rows;
  }
  EXPECT_EQ(rows, p.ny);
  std::filesystem::remove(path);
}
