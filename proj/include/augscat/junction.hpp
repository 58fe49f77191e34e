#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "augscat/cross_section.hpp"
#include "augscat/model_problem.hpp"

namespace augscat {

// Arms leave the junction through one of the four edges. Arm frames are rotations
// of the East frame: t points away from the junction and the transverse coordinate
// runs counterclockwise around the junction.
enum class ArmSide { East, North, West, South };

std::string to_string(ArmSide side);
ArmSide arm_side_from_string(const std::string& name);

struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
};

struct ArmGeometry {
  int arm_id = 0;
  ArmSide side = ArmSide::East;
  // Attachment line (x for East/West, y for North/South) and the lower end of the
  // attachment segment along the edge (y for East/West, x for North/South).
  double edge = 0.0;
  double offset = 0.0;
  double width = 1.0;
  double length = 1.0;  // truncation position R_a
  // Slowly stabilizing arm: k^2(t) = k^2 + p(t); the limit coefficient is k^2.
  std::optional<ArmCoefficientProfile> profile;
  double T = 20.0;
};

struct JunctionGeometry {
  std::string name;
  std::vector<Rect> junction;
  std::vector<ArmGeometry> arms;
  BoundaryKind boundary_kind = BoundaryKind::Neumann;

  void validate() const;
  CrossSectionSpec section(int arm) const;
};

// Two collinear arms (West, East) on a junction [0, D] x [0, width].
JunctionGeometry straight_duct(double D, double width, BoundaryKind kind, double arm_length = 1.0);
// Unit junction square with arms West, East, South.
JunctionGeometry t_junction(double width, BoundaryKind kind, double arm_length = 1.0);
// Unit junction square with arms East, North, West, South.
JunctionGeometry cross_junction(double width, BoundaryKind kind, double arm_length = 1.0);
// Unit junction square with arms West and North.
JunctionGeometry l_bend(double width, BoundaryKind kind, double arm_length = 1.0);
JunctionGeometry preset_geometry(const std::string& name, BoundaryKind kind, double width = 1.0,
                                 double arm_length = 1.0);

enum class ScatteringMode { Classical, Augmented };
enum class UnknownSide { Outgoing, Incoming };

struct AssemblyOptions {
  double h = 1.0 / 64.0;
  ScatteringMode mode = ScatteringMode::Classical;
  double beta = 0.0;        // rate cutoff of the augmented channels
  int mode_cutoff = -1;     // transverse modes kept in each closure; -1 keeps all
  double threshold_tol = -1.0;
  UnknownSide unknown = UnknownSide::Outgoing;
};

enum class ChannelKind { Propagating, Evanescent };

struct Channel {
  int arm = 0;
  int mode = 0;  // transverse index into the arm's cell modes
  ChannelKind kind = ChannelKind::Propagating;
  double mu = 0.0;    // continuous transverse eigenvalue
  double mu_h = 0.0;  // discrete transverse eigenvalue
  Complex lambda;     // continuous pencil eigenvalue (Im >= 0)
  double theta = 0.0;  // discrete phase per row (propagating) or decay factor r (evanescent)
};

struct ModeClosure {
  enum class Kind { Channel, Tail, Cut };
  Kind kind = Kind::Cut;
  int channel = -1;
  double ratio = 0.0;        // tail: decaying ratio u_{N} / u_{N-1}
  Eigen::VectorXcd v_in;     // channel profiles on rows 0..rows (incoming)
  Eigen::VectorXcd v_out;    // outgoing
};

struct ArmDiscretization {
  ArmGeometry geometry;
  CellModes modes;
  int rows = 0;
  int cells_across = 0;
  std::vector<int> cell;  // row * cells_across + i -> unknown index
  std::vector<ModeClosure> closure;
  std::optional<BlendedOperator> blended;
  double tail_magnitude = 0.0;  // largest decaying ratio^rows among tail modes

  int at(int row, int i) const { return cell[static_cast<std::size_t>(row * cells_across + i)]; }
};

struct DiscreteProblem {
  JunctionGeometry geometry;
  double k = 0.0;
  AssemblyOptions options;
  double h = 0.0;
  int nx = 0, ny = 0;
  double x_origin = 0.0, y_origin = 0.0;
  std::vector<int> grid;                     // iy * nx + ix -> unknown index or -1
  std::vector<std::pair<int, int>> cell_ij;  // unknown index -> (ix, iy)
  Eigen::VectorXd k2;                        // coefficient per cell
  std::vector<ArmDiscretization> arms;
  std::vector<Channel> channels;  // global enumeration
  int M = 0;                      // propagating channels
  Eigen::SparseMatrix<Complex> matrix;
  Eigen::VectorXd column_scale;
  std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<Complex>, Eigen::COLAMDOrdering<int>>> lu;

  int cells() const { return static_cast<int>(cell_ij.size()); }
  int channel_count() const { return static_cast<int>(channels.size()); }
  int unknowns() const { return cells() + channel_count(); }
  // Channel profile on rows 0..rows of its arm.
  const Eigen::VectorXcd& profile(int channel, bool incoming) const;
};

DiscreteProblem assemble(const JunctionGeometry& geometry, double k, const AssemblyOptions& options);

enum class Face { East, North, West, South };

struct BoundaryDatum {
  int cell = 0;
  Face face = Face::East;
  Complex value;
};

// Volume data f per cell (L_h u = f) and boundary data g on wall faces
// (-du/dn = g for Neumann walls, u = g for Dirichlet walls).
struct Source {
  Eigen::VectorXcd f;
  std::vector<BoundaryDatum> g;
};

struct AmplitudeVector {
  Eigen::VectorXcd a;  // incoming
  Eigen::VectorXcd b;  // outgoing
  double remainder_decay_norm = 0.0;
};

struct SolveResult {
  Eigen::VectorXcd field;  // per cell
  AmplitudeVector amplitudes;
};

// Prescribes the known amplitudes (incoming, or outgoing when the problem was
// assembled with UnknownSide::Incoming) and solves for the rest.
SolveResult solve_with_incoming(DiscreteProblem& problem, const Eigen::VectorXcd& known,
                                const Source* source = nullptr);
std::vector<SolveResult> solve_many(DiscreteProblem& problem, const Eigen::MatrixXcd& known);

struct RadiationSolution {
  SolveResult solution;
  Eigen::VectorXcd b_flux;   // from flux extraction
  Eigen::VectorXcd b_inner;  // -i (f, X_j) - i (g, Q X_j)
  double max_discrepancy = 0.0;
};

// Outgoing solution (a = 0) of L_h u = f with boundary data g.
RadiationSolution solve_radiation(DiscreteProblem& problem, const Source& source);

struct Extraction {
  AmplitudeVector amplitudes;
  double face_residual = 0.0;  // amplitude variation between the two faces
  bool warning = false;        // face_residual > 1e-3
};

// a_j = i q(u, v_j^+), b_j = -i q(u, v_j^-) by discrete flux quadrature.
Extraction extract_amplitudes(const DiscreteProblem& problem, const Eigen::VectorXcd& field);

// Discrete flux through the extraction face of one arm.
Complex arm_flux(const DiscreteProblem& problem, int arm, const Eigen::VectorXcd& u,
                 const Eigen::VectorXcd& v, int row);
int extraction_row(const DiscreteProblem& problem, int arm);

// Pure arm wave of one channel on the cells of its arm (zero elsewhere).
Eigen::VectorXcd arm_wave(const DiscreteProblem& problem, int channel, bool incoming);

// L_h u per cell; the truncation ghost uses the closure with the given amplitudes.
Eigen::VectorXcd apply_operator(const DiscreteProblem& problem, const Eigen::VectorXcd& field,
                                const Eigen::VectorXcd& a, const Eigen::VectorXcd& b);

// h^2 sum f X* + boundary terms: the discrete (f, X) + (g, Q X).
Complex source_pairing(const DiscreteProblem& problem, const Source& source,
                       const Eigen::VectorXcd& X);

// Real symmetric -h^2 L_h with the exact decaying closure in every mode; requires
// every discrete transverse mode to be evanescent at k.
Eigen::SparseMatrix<double> decaying_closure_operator(const JunctionGeometry& geometry, double k,
                                                      double h);

void write_field(const DiscreteProblem& problem, const Eigen::VectorXcd& field,
                 const std::string& path);

}  // namespace augscat
