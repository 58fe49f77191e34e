#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "augscat/junction.hpp"

namespace augscat {

enum class MatrixKind { TMatrix, SMatrix };

struct ScatteringMatrix {
  Eigen::MatrixXcd entries;
  MatrixKind kind = MatrixKind::TMatrix;
  int M = 0;        // propagating channels
  int M_prime = 0;  // all channels (M' = M for classical matrices)
  double k = 0.0;
  double gamma = 0.0;
  double beta = 0.0;
  double h = 0.0;
  double unitarity_defect = 0.0;  // ||A A^* - I||_F
  double inverse_defect = 0.0;    // ||S T - I||_F when both are known

  // Blocks 1 (propagating) and 2 (evanescent pairs).
  Eigen::MatrixXcd block(int row, int col) const;
};

double unitarity_defect(const Eigen::MatrixXcd& A);

// Rows are outgoing amplitudes of the solutions with incoming data e_k.
ScatteringMatrix classical_T(DiscreteProblem& problem);
// S = T^{-1}.
ScatteringMatrix classical_S(const ScatteringMatrix& T);
// Rows are incoming amplitudes of the solutions X_k with outgoing part v_k^-.
ScatteringMatrix direct_S(const JunctionGeometry& geometry, double k, const AssemblyOptions& options);

struct ScatteringPair {
  ScatteringMatrix T;
  ScatteringMatrix S;
};

// Classical (options.mode Classical) or augmented pair at one wavenumber.
ScatteringPair scattering_pair(const JunctionGeometry& geometry, double k, const AssemblyOptions& options);
ScatteringMatrix augmented_S(const JunctionGeometry& geometry, double k, double beta,
                             AssemblyOptions options = {});

// Augmented S recomputed in the propagating basis v'^{\pm}_k = sum_m U_km v^{\pm}_m
// (incoming data are combinations of the original channels, outgoing amplitudes
// are re-expanded in the new basis).
ScatteringMatrix augmented_S_in_basis(const JunctionGeometry& geometry, double k, double beta,
                                      const Eigen::MatrixXcd& U, AssemblyOptions options = {});

struct SweepPoint {
  double k = 0.0;
  bool ok = false;
  std::string note;
  int M = 0;
  int M_prime = 0;
  double unitarity_defect = 0.0;
  double energy_defect = 0.0;  // max_k |sum_j |T_kj|^2 - 1| over propagating rows
  std::vector<Complex> eig22;
  double min_dist = 0.0;  // min |eig(S22) - 1|
};

struct Bracket {
  double k_lo = 0.0, k_hi = 0.0;
  double k_star = 0.0;     // refined minimizer
  double min_dist = 0.0;
  bool oracle_confirmed = false;
  double oracle_k = 0.0;
};

struct ScanOptions {
  AssemblyOptions assembly;
  double tolerance = 1e-2;
  double guard = 1e-3;  // relative gap kept around thresholds
  int threads = 1;
  bool oracle = true;
  std::optional<Eigen::MatrixXcd> basis_transform;  // unitary U on the propagating block
};

struct SweepReport {
  std::vector<SweepPoint> points;
  std::vector<Bracket> brackets;
  std::vector<std::pair<double, double>> segments;  // sub-ranges after threshold splitting
  std::vector<double> thresholds;
  bool oracle_available = false;
  std::vector<double> oracle_modes;
  double beta = 0.0;
};

// Threshold wavenumbers sqrt(mu_n) of all arms inside (k_lo, k_hi).
std::vector<double> geometry_thresholds(const JunctionGeometry& geometry, double k_lo, double k_hi);

// Splits (k_lo, k_hi) at thresholds with a guard gap guard * k.
std::vector<std::pair<double, double>> split_at_thresholds(const JunctionGeometry& geometry, double k_lo,
                                                           double k_hi, double guard);

SweepPoint sweep_point(const JunctionGeometry& geometry, double k, double beta, const ScanOptions& options);

SweepReport trapped_mode_scan(const JunctionGeometry& geometry, double k_lo, double k_hi, int points,
                              double beta, const ScanOptions& options = {});

// Number of negative eigenvalues of the real symmetric decaying-closure operator.
int negative_count(const JunctionGeometry& geometry, double k, double h);

// Wavenumbers in (k_lo, k_hi) with a decaying kernel, by inertia bisection; the
// range must lie below every discrete threshold.
std::vector<double> oracle_trapped_modes(const JunctionGeometry& geometry, double k_lo, double k_hi,
                                         double h, double tol = 1e-10);

struct KernelCountReport {
  int M = 0;
  int M_prime = 0;
  int strip_multiplicity = 0;  // over |Im lambda| < gamma, summed over arms
  int kernel_S22 = 0;          // eigenvalues of S22 within the tolerance of 1
  int oracle_count = -1;       // -1 when the oracle does not apply
  double tolerance = 0.0;
  double min_dist = 0.0;
};

KernelCountReport kernel_count_report(const JunctionGeometry& geometry, double k, double gamma, double beta,
                                      const AssemblyOptions& options = {}, double tolerance = 1e-2);

// Radiation-basis transform for a classical problem: new outgoing-type waves u_j
// and compatible solutions V_k as cell fields, with their flux pairing matrix.
struct RadiationBasis {
  std::vector<Eigen::VectorXcd> u;
  std::vector<Eigen::VectorXcd> V;
  Eigen::MatrixXcd pairing;  // q(u_j, V_k) summed over the arms
  double residual = 0.0;     // max |pairing - i delta|
};

RadiationBasis radiation_basis_transform(DiscreteProblem& problem, const Eigen::MatrixXcd& S_op,
                                         const Eigen::MatrixXcd& R_op);

// Flux form q(u, v) summed over all arms at their extraction rows.
Complex global_flux(const DiscreteProblem& problem, const Eigen::VectorXcd& u, const Eigen::VectorXcd& v);

}  // namespace augscat
