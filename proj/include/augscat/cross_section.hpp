#pragma once

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace augscat {

using Complex = std::complex<double>;

enum class BoundaryKind { Dirichlet, Neumann };

std::string to_string(BoundaryKind kind);
BoundaryKind boundary_kind_from_string(const std::string& name);

struct CrossSectionSpec {
  int arm_id = 0;
  double width = 1.0;
  BoundaryKind boundary_kind = BoundaryKind::Neumann;
  // Samples of p(y) on a uniform grid over [0, width]; the transverse operator
  // becomes -d^2/dy^2 - p(y).
  std::optional<std::vector<double>> transverse_profile;

  void validate() const;
  double profile_at(double y) const;
};

struct TransverseMode {
  double mu = 0.0;
  Eigen::VectorXd phi;  // nodal values at y_i = i * grid_step
};

struct CrossSectionSpectrum {
  CrossSectionSpec section;
  double grid_step = 0.0;
  std::vector<TransverseMode> entries;
  Eigen::VectorXd weights;  // trapezoid weights on the nodes

  int points() const { return static_cast<int>(weights.size()); }
  double node(int i) const { return i * grid_step; }
  double inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
  Complex inner(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) const;
  // Index of the mode a discretized function is (numerically) proportional to,
  // or -1.
  int mode_of(const Eigen::VectorXcd& f, double tol = 1e-8) const;
};

CrossSectionSpectrum transverse_spectrum(const CrossSectionSpec& section, int count,
                                         double grid_step);

// Symmetrized second-order FD matrix of -d^2/dy^2 - p(y) on the active nodes
// (interior nodes for Dirichlet, all nodes for Neumann). Eigenvectors x map to
// nodal values by phi = x / sqrt(trapezoid weight).
struct SymmetricTridiagonal {
  Eigen::VectorXd diag;
  Eigen::VectorXd off;
  int first_node = 0;
};

SymmetricTridiagonal profile_operator(const CrossSectionSpec& section, double grid_step);

// Smallest `count` eigenvalues by Sturm-sequence bisection, ascending.
std::vector<double> tridiagonal_eigenvalues(const SymmetricTridiagonal& m, int count);

// Solves (m - shift) x = rhs with partial pivoting.
Eigen::VectorXd tridiagonal_solve(const SymmetricTridiagonal& m, double shift,
                                  const Eigen::VectorXd& rhs);

double default_threshold_tol(double k);

struct PencilPoint {
  Complex lambda;
  int multiplicity = 1;
  int chain_length = 1;
  int transverse_index = 0;

  bool is_real(double tol = 0.0) const { return std::abs(lambda.imag()) <= tol; }
};

struct PencilSpectrum {
  double k = 0.0;
  double beta = 0.0;
  double threshold_tol = 0.0;
  std::vector<PencilPoint> points;
  std::vector<bool> threshold_flags;  // one per transverse mode

  int real_count() const;
  // Sum of multiplicity * chain_length over |Im lambda| < rate.
  int strip_multiplicity(double rate) const;
  // Number of incoming/outgoing pairs for a rate line (half the strip multiplicity).
  int pair_count(double rate) const { return strip_multiplicity(rate) / 2; }
  bool has_threshold() const;
};

// threshold_tol < 0 selects default_threshold_tol(k).
PencilSpectrum pencil_spectrum(const CrossSectionSpectrum& spectrum, double k, double beta,
                               double threshold_tol = -1.0);

// Cutoff wavenumbers sqrt(mu_n) of a profile-free section up to k_max.
std::vector<double> section_thresholds(const CrossSectionSpec& section, double k_max);

// Closed-form transverse eigenvalue of a profile-free section (n counts from 0
// for Neumann and from 1 for Dirichlet).
double analytic_mu(const CrossSectionSpec& section, int n);
int first_mode_index(BoundaryKind kind);

// Cell-centred transverse modes used by the junction discretization: N = width/h
// cells, exact eigenvectors of the 3-point operator with ghost-cell walls.
struct CellModes {
  double h = 0.0;
  int cells = 0;
  Eigen::VectorXd mu_h;     // discrete eigenvalues, ascending
  Eigen::VectorXd mu;       // matching continuous eigenvalues
  Eigen::MatrixXd phi;      // cells x cells, columns orthonormal under h * sum
};

CellModes cell_centered_modes(const CrossSectionSpec& section, double h);

}  // namespace augscat
