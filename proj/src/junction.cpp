#include "augscat/junction.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "augscat/error.hpp"

namespace augscat {

namespace {

const Complex kI(0.0, 1.0);
const int kDx[4] = {1, 0, -1, 0};
const int kDy[4] = {0, 1, 0, -1};

int steps(double length, double h, const char* what) {
  const double q = length / h;
  const long r = std::lround(q);
  if (r <= 0 || std::abs(q - static_cast<double>(r)) > 1e-9 * std::max(1.0, q)) {
    std::ostringstream os;
    os << "mesh step " << h << " does not divide " << what << " " << length;
    throw InvalidArgument(os.str());
  }
  return static_cast<int>(r);
}

int grid_index(double coord, double origin, double h) {
  return static_cast<int>(std::lround((coord - origin) / h));
}

Rect arm_rect(const ArmGeometry& a) {
  switch (a.side) {
    case ArmSide::East:
      return {a.edge, a.offset, a.edge + a.length, a.offset + a.width};
    case ArmSide::West:
      return {a.edge - a.length, a.offset, a.edge, a.offset + a.width};
    case ArmSide::North:
      return {a.offset, a.edge, a.offset + a.width, a.edge + a.length};
    case ArmSide::South:
      return {a.offset, a.edge - a.length, a.offset + a.width, a.edge};
  }
  return {};
}

// Grid cell of arm row j, transverse cell i.
std::pair<int, int> arm_cell(const ArmGeometry& a, int j, int i, int nw, double x0, double y0,
                             double h) {
  const int ie = grid_index(a.edge, a.side == ArmSide::East || a.side == ArmSide::West ? x0 : y0, h);
  const int io = grid_index(a.offset, a.side == ArmSide::East || a.side == ArmSide::West ? y0 : x0, h);
  switch (a.side) {
    case ArmSide::East:
      return {ie + j, io + i};
    case ArmSide::West:
      return {ie - 1 - j, io + nw - 1 - i};
    case ArmSide::North:
      return {io + nw - 1 - i, ie + j};
    case ArmSide::South:
      return {io + i, ie - 1 - j};
  }
  return {0, 0};
}

struct ModeData {
  double mu = 0.0, mu_h = 0.0;
  bool propagating = false;
  double theta = 0.0;  // propagating phase per row
  double r = 0.0;      // evanescent decay factor per row
};

ModeData classify_mode(double k, double mu, double mu_h, double h, double tol, int arm, int n) {
  ModeData m;
  m.mu = mu;
  m.mu_h = mu_h;
  const double d = k * k - mu;
  const double dh = k * k - mu_h;
  if (std::abs(d) < tol || std::abs(dh) < tol) {
    std::ostringstream os;
    os << "k = " << k << " is at the threshold sqrt(mu) = " << std::sqrt(mu) << " of arm " << arm
       << " (mode " << n << ")";
    throw ThresholdError(os.str());
  }
  if ((d > 0.0) != (dh > 0.0)) {
    std::ostringstream os;
    os << "k = " << k << " lies between the continuous and discrete thresholds of arm " << arm
       << " mode " << n << " (" << std::sqrt(mu) << " vs " << std::sqrt(mu_h)
       << "); refine the mesh";
    throw ThresholdError(os.str());
  }
  const double c = 2.0 - h * h * dh;
  if (dh > 0.0) {
    if (c <= -2.0) throw ResolutionError("mesh too coarse: discrete mode beyond the grid Nyquist limit");
    m.propagating = true;
    m.theta = std::acos(0.5 * c);
  } else {
    m.r = 0.5 * (c - std::sqrt(c * c - 4.0));
  }
  return m;
}

void propagating_profiles(double theta, double h, int rows, Eigen::VectorXcd& vin, Eigen::VectorXcd& vout) {
  const double norm = 1.0 / std::sqrt(2.0 * std::sin(theta) / h);
  vin.resize(rows + 1);
  vout.resize(rows + 1);
  for (int j = 0; j <= rows; ++j) {
    const double ph = theta * (j + 0.5);
    vout(j) = norm * std::exp(kI * ph);
    vin(j) = norm * std::exp(-kI * ph);
  }
}

void evanescent_profiles(double r, double h, int rows, Eigen::VectorXcd& vin, Eigen::VectorXcd& vout) {
  const double s = (1.0 / r - r) / h;
  const double lr = std::log(r);
  vin.resize(rows + 1);
  vout.resize(rows + 1);
  for (int j = 0; j <= rows; ++j) {
    const double D = std::exp(lr * (j + 0.5)) / std::sqrt(s);
    const Complex G = kI * std::exp(-lr * (j + 0.5)) / std::sqrt(s);
    vin(j) = (D - G) / std::sqrt(2.0);
    vout(j) = (D + G) / std::sqrt(2.0);
  }
}

struct Layout {
  double h = 0.0;
  int nx = 0, ny = 0;
  double x0 = 0.0, y0 = 0.0;
  std::vector<int> grid;
  std::vector<std::pair<int, int>> cell_ij;
  std::vector<int> arm_of, row_of, across_of;
  std::vector<ArmDiscretization> arms;
};

Layout build_layout(const JunctionGeometry& g, double h) {
  g.validate();
  Layout L;
  L.h = h;
  double xmin = 1e300, ymin = 1e300, xmax = -1e300, ymax = -1e300;
  auto grow = [&](const Rect& r) {
    xmin = std::min(xmin, r.x0);
    ymin = std::min(ymin, r.y0);
    xmax = std::max(xmax, r.x1);
    ymax = std::max(ymax, r.y1);
  };
  for (const auto& r : g.junction) grow(r);
  for (const auto& a : g.arms) grow(arm_rect(a));
  L.x0 = xmin;
  L.y0 = ymin;
  L.nx = steps(xmax - xmin, h, "domain extent");
  L.ny = steps(ymax - ymin, h, "domain extent");
  L.grid.assign(static_cast<std::size_t>(L.nx) * L.ny, -1);
  auto add_cell = [&](int ix, int iy, int arm, int row, int across) {
    if (ix < 0 || iy < 0 || ix >= L.nx || iy >= L.ny) throw InvalidArgument("cell outside the domain box");
    int& slot = L.grid[static_cast<std::size_t>(iy) * L.nx + ix];
    if (slot >= 0) {
      std::ostringstream os;
      os << "arm " << arm << " overlaps the junction or another arm";
      throw InvalidArgument(os.str());
    }
    slot = static_cast<int>(L.cell_ij.size());
    L.cell_ij.emplace_back(ix, iy);
    L.arm_of.push_back(arm);
    L.row_of.push_back(row);
    L.across_of.push_back(across);
    return slot;
  };
  for (const auto& r : g.junction) {
    steps(r.x1 - r.x0, h, "junction rectangle");
    steps(r.y1 - r.y0, h, "junction rectangle");
    const int ix0 = grid_index(r.x0, L.x0, h), ix1 = grid_index(r.x1, L.x0, h);
    const int iy0 = grid_index(r.y0, L.y0, h), iy1 = grid_index(r.y1, L.y0, h);
    for (int iy = iy0; iy < iy1; ++iy) {
      for (int ix = ix0; ix < ix1; ++ix) {
        if (L.grid[static_cast<std::size_t>(iy) * L.nx + ix] < 0) add_cell(ix, iy, -1, -1, -1);
      }
    }
  }
  for (std::size_t a = 0; a < g.arms.size(); ++a) {
    const auto& geo = g.arms[a];
    ArmDiscretization arm;
    arm.geometry = geo;
    arm.cells_across = steps(geo.width, h, "arm width");
    arm.rows = steps(geo.length, h, "arm length");
    if (arm.rows < 4) throw InvalidArgument("arm truncation must span at least four mesh rows");
    // Flush attachment: the cell across the attachment edge must be a junction cell.
    for (int i = 0; i < arm.cells_across; ++i) {
      auto [ix, iy] = arm_cell(geo, -1, i, arm.cells_across, L.x0, L.y0, h);
      const bool inside = ix >= 0 && iy >= 0 && ix < L.nx && iy < L.ny;
      const int c = inside ? L.grid[static_cast<std::size_t>(iy) * L.nx + ix] : -1;
      if (c < 0 || L.arm_of[static_cast<std::size_t>(c)] != -1) {
        std::ostringstream os;
        os << "arm " << geo.arm_id << " does not attach flush to the junction region";
        throw InvalidArgument(os.str());
      }
    }
    arm.cell.resize(static_cast<std::size_t>(arm.rows) * arm.cells_across);
    for (int j = 0; j < arm.rows; ++j) {
      for (int i = 0; i < arm.cells_across; ++i) {
        auto [ix, iy] = arm_cell(geo, j, i, arm.cells_across, L.x0, L.y0, h);
        arm.cell[static_cast<std::size_t>(j * arm.cells_across + i)] =
            add_cell(ix, iy, static_cast<int>(a), j, i);
      }
    }
    L.arms.push_back(std::move(arm));
  }
  return L;
}

double arm_k2(const ArmDiscretization& arm, double k, int row, double h) {
  if (!arm.geometry.profile) return k * k;
  return k * k + arm.geometry.profile->perturbation((row + 0.5) * h);
}

// Decides the closure of every mode of every arm.
void build_closures(const JunctionGeometry& g, double k, const AssemblyOptions& opt, Layout& L,
                    std::vector<Channel>& channels, int& M, bool all_tail) {
  const double h = L.h;
  const double tol = opt.threshold_tol < 0.0 ? default_threshold_tol(k) : opt.threshold_tol;
  const bool augmented = opt.mode == ScatteringMode::Augmented;
  std::vector<Channel> prop, evan;
  for (std::size_t a = 0; a < L.arms.size(); ++a) {
    auto& arm = L.arms[a];
    arm.modes = cell_centered_modes(g.section(static_cast<int>(a)), h);
    const int N = arm.cells_across;
    arm.closure.assign(static_cast<std::size_t>(N), {});
    if (arm.geometry.profile) {
      if (augmented) {
        throw InvalidArgument("augmented scattering is not available for arms with stabilizing coefficients");
      }
      ArmCoefficientProfile p = *arm.geometry.profile;
      p.k_infinity = k;
      arm.blended = blend(p, arm.geometry.T);
      if (!(arm.geometry.length > arm.geometry.T + 3.0)) {
        std::ostringstream os;
        os << "arm " << arm.geometry.arm_id << " truncation R = " << arm.geometry.length
           << " must exceed T + 3 = " << arm.geometry.T + 3.0;
        throw InvalidArgument(os.str());
      }
    }
    const int kept = opt.mode_cutoff < 0 ? N : std::min(N, opt.mode_cutoff);
    int arm_channels = 0;
    for (int n = 0; n < kept; ++n) {
      const ModeData md = classify_mode(k, arm.modes.mu(n), arm.modes.mu_h(n), h, tol,
                                        arm.geometry.arm_id, n);
      auto& cl = arm.closure[static_cast<std::size_t>(n)];
      Channel ch;
      ch.arm = static_cast<int>(a);
      ch.mode = n;
      ch.mu = md.mu;
      ch.mu_h = md.mu_h;
      ch.lambda = mode_lambda(k, md.mu);
      if (md.propagating) {
        if (all_tail) throw InvalidArgument("the decaying-closure operator needs every mode evanescent");
        ch.kind = ChannelKind::Propagating;
        ch.theta = md.theta;
        cl.kind = ModeClosure::Kind::Channel;
        if (arm.blended) {
          Eigen::VectorXcd vin0, vout0;
          propagating_profiles(md.theta, h, 1, vin0, vout0);
          cl.v_in = march_blended(*arm.blended, h, md.mu_h, vin0(0), vin0(1), arm.rows + 1);
          cl.v_out = march_blended(*arm.blended, h, md.mu_h, vout0(0), vout0(1), arm.rows + 1);
        } else {
          propagating_profiles(md.theta, h, arm.rows, cl.v_in, cl.v_out);
        }
        prop.push_back(ch);
        ++arm_channels;
        continue;
      }
      const double kappa = std::sqrt(md.mu - k * k);
      const double kappa_h = -std::log(md.r) / h;
      if (augmented && !all_tail) {
        const double rtol = 1e-9 * std::max(1.0, opt.beta);
        if (std::abs(kappa - opt.beta) < rtol) {
          std::ostringstream os;
          os << "rate line beta = " << opt.beta << " meets the pencil point i" << kappa
             << " of arm " << arm.geometry.arm_id << " (mu = " << md.mu << ")";
          throw SpectrumCollision(os.str());
        }
        if ((kappa < opt.beta) != (kappa_h < opt.beta)) {
          std::ostringstream os;
          os << "the mesh moves the rate " << kappa << " of arm " << arm.geometry.arm_id
             << " across beta = " << opt.beta << "; refine the mesh or move beta";
          throw SpectrumCollision(os.str());
        }
        if (kappa < opt.beta) {
          ch.kind = ChannelKind::Evanescent;
          ch.theta = md.r;
          cl.kind = ModeClosure::Kind::Channel;
          evanescent_profiles(md.r, h, arm.rows, cl.v_in, cl.v_out);
          evan.push_back(ch);
          ++arm_channels;
          continue;
        }
      }
      cl.kind = ModeClosure::Kind::Tail;
      cl.ratio = arm.blended ? decaying_ratio(*arm.blended, h, md.mu_h, arm.rows).real() : md.r;
      arm.tail_magnitude = std::max(arm.tail_magnitude, std::exp(-kappa_h * h * arm.rows));
    }
    if (opt.mode_cutoff >= 0) {
      int needed = 0;
      for (int n = 0; n < N; ++n) {
        if (k * k > arm.modes.mu(n)) ++needed;
      }
      if (opt.mode_cutoff < std::max(needed, arm_channels)) {
        std::ostringstream os;
        os << "mode_cutoff " << opt.mode_cutoff << " is below the " << std::max(needed, arm_channels)
           << " channel modes of arm " << arm.geometry.arm_id;
        throw InvalidArgument(os.str());
      }
    }
  }
  channels = prop;
  M = static_cast<int>(prop.size());
  channels.insert(channels.end(), evan.begin(), evan.end());
  for (std::size_t c = 0; c < channels.size(); ++c) {
    auto& cl = L.arms[static_cast<std::size_t>(channels[c].arm)].closure[static_cast<std::size_t>(channels[c].mode)];
    cl.channel = static_cast<int>(c);
  }
}

using Triplets = std::vector<Eigen::Triplet<Complex>>;

// h^2 L_h rows of all cells with homogeneous walls; the truncation ghost adds the
// tail closure and, via `channel_col`, the unknown channel amplitudes.
void cell_rows(const Layout& L, const Eigen::VectorXd& k2, BoundaryKind wall, Triplets& t,
               const std::vector<Channel>& channels, const Eigen::VectorXd& colscale,
               UnknownSide unknown) {
  const double h = L.h;
  const int ncell = static_cast<int>(L.cell_ij.size());
  for (int c = 0; c < ncell; ++c) {
    const auto [ix, iy] = L.cell_ij[static_cast<std::size_t>(c)];
    double diag = h * h * k2(c);
    const int arm = L.arm_of[static_cast<std::size_t>(c)];
    for (int d = 0; d < 4; ++d) {
      if (arm >= 0 && d == static_cast<int>(L.arms[static_cast<std::size_t>(arm)].geometry.side) &&
          L.row_of[static_cast<std::size_t>(c)] == L.arms[static_cast<std::size_t>(arm)].rows - 1) {
        // Truncation face: ghost - u_c.
        diag -= 1.0;
        const auto& A = L.arms[static_cast<std::size_t>(arm)];
        const int i = L.across_of[static_cast<std::size_t>(c)];
        for (int n = 0; n < A.cells_across; ++n) {
          const auto& cl = A.closure[static_cast<std::size_t>(n)];
          const double phi_i = A.modes.phi(i, n);
          if (cl.kind == ModeClosure::Kind::Tail) {
            for (int ip = 0; ip < A.cells_across; ++ip) {
              t.emplace_back(c, A.at(A.rows - 1, ip), phi_i * cl.ratio * h * A.modes.phi(ip, n));
            }
          } else if (cl.kind == ModeClosure::Kind::Channel && !channels.empty()) {
            const Complex v = unknown == UnknownSide::Outgoing ? cl.v_out(A.rows) : cl.v_in(A.rows);
            t.emplace_back(c, ncell + cl.channel, phi_i * v / colscale(cl.channel));
          }
        }
        continue;
      }
      const int jx = ix + kDx[d], jy = iy + kDy[d];
      const bool inside = jx >= 0 && jy >= 0 && jx < L.nx && jy < L.ny;
      const int nb = inside ? L.grid[static_cast<std::size_t>(jy) * L.nx + jx] : -1;
      if (nb >= 0) {
        t.emplace_back(c, nb, 1.0);
        diag -= 1.0;
      } else if (wall == BoundaryKind::Dirichlet) {
        diag -= 2.0;
      }
    }
    t.emplace_back(c, c, diag);
  }
}

Eigen::VectorXd cell_k2(const Layout& L, double k) {
  Eigen::VectorXd k2(static_cast<Eigen::Index>(L.cell_ij.size()));
  for (std::size_t c = 0; c < L.cell_ij.size(); ++c) {
    const int arm = L.arm_of[c];
    k2(static_cast<Eigen::Index>(c)) =
        arm < 0 ? k * k : arm_k2(L.arms[static_cast<std::size_t>(arm)], k, L.row_of[c], L.h);
  }
  return k2;
}

// Right-hand side contributions of the prescribed amplitudes.
Eigen::VectorXcd known_rhs(const DiscreteProblem& p, const Eigen::VectorXcd& known) {
  Eigen::VectorXcd r = Eigen::VectorXcd::Zero(p.unknowns());
  const bool out_unknown = p.options.unknown == UnknownSide::Outgoing;
  for (int ch = 0; ch < p.channel_count(); ++ch) {
    if (known(ch) == 0.0) continue;
    const auto& A = p.arms[static_cast<std::size_t>(p.channels[static_cast<std::size_t>(ch)].arm)];
    const int n = p.channels[static_cast<std::size_t>(ch)].mode;
    const auto& cl = A.closure[static_cast<std::size_t>(n)];
    const Eigen::VectorXcd& v = out_unknown ? cl.v_in : cl.v_out;
    for (int i = 0; i < A.cells_across; ++i) {
      r(A.at(A.rows - 1, i)) -= A.modes.phi(i, n) * known(ch) * v(A.rows);
    }
    r(p.cells() + ch) += known(ch) * v(A.rows - 1);
  }
  return r;
}

Eigen::VectorXcd effective_rhs(const DiscreteProblem& p, const Source& s) {
  Eigen::VectorXcd F = Eigen::VectorXcd::Zero(p.cells());
  if (s.f.size() != 0) {
    if (s.f.size() != p.cells()) throw InvalidArgument("source f must have one value per cell");
    F = s.f;
  }
  for (const auto& g : s.g) {
    if (g.cell < 0 || g.cell >= p.cells()) throw InvalidArgument("boundary datum names no cell");
    const auto [ix, iy] = p.cell_ij[static_cast<std::size_t>(g.cell)];
    const int d = static_cast<int>(g.face);
    const int jx = ix + kDx[d], jy = iy + kDy[d];
    const bool inside = jx >= 0 && jy >= 0 && jx < p.nx && jy < p.ny;
    if (inside && p.grid[static_cast<std::size_t>(jy) * p.nx + jx] >= 0) {
      throw InvalidArgument("boundary datum on an interior face");
    }
    if (p.geometry.boundary_kind == BoundaryKind::Neumann) {
      F(g.cell) += g.value / p.h;
    } else {
      F(g.cell) -= 2.0 * g.value / (p.h * p.h);
    }
  }
  return F;
}

void factorize(DiscreteProblem& p) {
  if (p.lu) return;
  auto lu = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<Complex>, Eigen::COLAMDOrdering<int>>>();
  lu->analyzePattern(p.matrix);
  lu->factorize(p.matrix);
  if (lu->info() != Eigen::Success) {
    std::ostringstream os;
    os << "junction system is singular at k = " << p.k << " (resonance/trapped-mode proximity)";
    throw SingularSystem(os.str());
  }
  p.lu = lu;
}

SolveResult unpack(const DiscreteProblem& p, const Eigen::VectorXcd& x, const Eigen::VectorXcd& known) {
  SolveResult r;
  r.field = x.head(p.cells());
  const int nc = p.channel_count();
  Eigen::VectorXcd unk(nc);
  for (int c = 0; c < nc; ++c) unk(c) = x(p.cells() + c) / p.column_scale(c);
  if (p.options.unknown == UnknownSide::Outgoing) {
    r.amplitudes.a = known;
    r.amplitudes.b = unk;
  } else {
    r.amplitudes.a = unk;
    r.amplitudes.b = known;
  }
  // Decaying remainder at the truncation row.
  double worst = 0.0;
  for (std::size_t a = 0; a < p.arms.size(); ++a) {
    const auto& A = p.arms[a];
    Eigen::VectorXcd rem(A.cells_across);
    for (int i = 0; i < A.cells_across; ++i) rem(i) = r.field(A.at(A.rows - 1, i));
    for (int n = 0; n < A.cells_across; ++n) {
      const auto& cl = A.closure[static_cast<std::size_t>(n)];
      if (cl.kind != ModeClosure::Kind::Channel) continue;
      const Complex c = r.amplitudes.a(cl.channel) * cl.v_in(A.rows - 1) +
                        r.amplitudes.b(cl.channel) * cl.v_out(A.rows - 1);
      rem -= c * A.modes.phi.col(n);
    }
    worst = std::max(worst, std::sqrt(p.h * rem.squaredNorm()));
  }
  r.amplitudes.remainder_decay_norm = worst;
  return r;
}

}  // namespace

std::string to_string(ArmSide side) {
  switch (side) {
    case ArmSide::East: return "east";
    case ArmSide::North: return "north";
    case ArmSide::West: return "west";
    case ArmSide::South: return "south";
  }
  return "?";
}

ArmSide arm_side_from_string(const std::string& name) {
  if (name == "east") return ArmSide::East;
  if (name == "north") return ArmSide::North;
  if (name == "west") return ArmSide::West;
  if (name == "south") return ArmSide::South;
  throw InvalidArgument("unknown arm side '" + name + "'");
}

void JunctionGeometry::validate() const {
  if (junction.empty()) throw InvalidArgument("junction region needs at least one rectangle");
  for (const auto& r : junction) {
    if (!(r.x1 > r.x0) || !(r.y1 > r.y0)) throw InvalidArgument("junction rectangle has no area");
  }
  if (arms.empty()) throw InvalidArgument("geometry needs at least one arm");
  for (const auto& a : arms) {
    if (!(a.width > 0.0)) throw InvalidArgument("arm width must be positive");
    if (!(a.length > 0.0)) throw InvalidArgument("arm length must be positive");
    if (a.profile) a.profile->validate();
  }
}

CrossSectionSpec JunctionGeometry::section(int arm) const {
  CrossSectionSpec s;
  s.arm_id = arms.at(static_cast<std::size_t>(arm)).arm_id;
  s.width = arms[static_cast<std::size_t>(arm)].width;
  s.boundary_kind = boundary_kind;
  return s;
}

JunctionGeometry straight_duct(double D, double width, BoundaryKind kind, double arm_length) {
  JunctionGeometry g;
  g.name = "duct";
  g.boundary_kind = kind;
  g.junction = {{0.0, 0.0, D, width}};
  g.arms.push_back({0, ArmSide::West, 0.0, 0.0, width, arm_length, std::nullopt, 20.0});
  g.arms.push_back({1, ArmSide::East, D, 0.0, width, arm_length, std::nullopt, 20.0});
  return g;
}

JunctionGeometry t_junction(double width, BoundaryKind kind, double arm_length) {
  JunctionGeometry g;
  g.name = "t-junction";
  g.boundary_kind = kind;
  g.junction = {{0.0, 0.0, width, width}};
  g.arms.push_back({0, ArmSide::West, 0.0, 0.0, width, arm_length, std::nullopt, 20.0});
  g.arms.push_back({1, ArmSide::East, width, 0.0, width, arm_length, std::nullopt, 20.0});
  g.arms.push_back({2, ArmSide::South, 0.0, 0.0, width, arm_length, std::nullopt, 20.0});
  return g;
}

JunctionGeometry cross_junction(double width, BoundaryKind kind, double arm_length) {
  JunctionGeometry g;
  g.name = "cross";
  g.boundary_kind = kind;
  g.junction = {{0.0, 0.0, width, width}};
  g.arms.push_back({0, ArmSide::East, width, 0.0, width, arm_length, std::nullopt, 20.0});
  g.arms.push_back({1, ArmSide::North, width, 0.0, width, arm_length, std::nullopt, 20.0});
  g.arms.push_back({2, ArmSide::West, 0.0, 0.0, width, arm_length, std::nullopt, 20.0});
  g.arms.push_back({3, ArmSide::South, 0.0, 0.0, width, arm_length, std::nullopt, 20.0});
  return g;
}

JunctionGeometry l_bend(double width, BoundaryKind kind, double arm_length) {
  JunctionGeometry g;
  g.name = "l-bend";
  g.boundary_kind = kind;
  g.junction = {{0.0, 0.0, width, width}};
  g.arms.push_back({0, ArmSide::West, 0.0, 0.0, width, arm_length, std::nullopt, 20.0});
  g.arms.push_back({1, ArmSide::North, width, 0.0, width, arm_length, std::nullopt, 20.0});
  return g;
}

JunctionGeometry preset_geometry(const std::string& name, BoundaryKind kind, double width,
                                 double arm_length) {
  if (name == "duct") return straight_duct(width, width, kind, arm_length);
  if (name == "t-junction") return t_junction(width, kind, arm_length);
  if (name == "cross") return cross_junction(width, kind, arm_length);
  if (name == "l-bend") return l_bend(width, kind, arm_length);
  throw InvalidArgument("unknown geometry preset '" + name + "'");
}

const Eigen::VectorXcd& DiscreteProblem::profile(int channel, bool incoming) const {
  const auto& ch = channels.at(static_cast<std::size_t>(channel));
  const auto& cl = arms[static_cast<std::size_t>(ch.arm)].closure[static_cast<std::size_t>(ch.mode)];
  return incoming ? cl.v_in : cl.v_out;
}

DiscreteProblem assemble(const JunctionGeometry& geometry, double k, const AssemblyOptions& options) {
  if (!(k > 0.0)) throw InvalidArgument("k must be positive");
  if (!(options.h > 0.0)) throw InvalidArgument("mesh step h must be positive");
  if (options.mode == ScatteringMode::Augmented && !(options.beta > 0.0)) {
    throw InvalidArgument("augmented scattering needs beta > 0");
  }
  Layout L = build_layout(geometry, options.h);
  DiscreteProblem p;
  p.geometry = geometry;
  p.k = k;
  p.options = options;
  p.h = options.h;
  build_closures(geometry, k, options, L, p.channels, p.M, false);
  p.nx = L.nx;
  p.ny = L.ny;
  p.x_origin = L.x0;
  p.y_origin = L.y0;
  p.k2 = cell_k2(L, k);

  const int nc = static_cast<int>(p.channels.size());
  p.column_scale = Eigen::VectorXd::Ones(nc);
  for (int c = 0; c < nc; ++c) {
    const auto& ch = p.channels[static_cast<std::size_t>(c)];
    const auto& A = L.arms[static_cast<std::size_t>(ch.arm)];
    const auto& cl = A.closure[static_cast<std::size_t>(ch.mode)];
    const Eigen::VectorXcd& v = options.unknown == UnknownSide::Outgoing ? cl.v_out : cl.v_in;
    p.column_scale(c) = std::max(std::abs(v(A.rows - 1)), std::abs(v(A.rows)));
  }
  Triplets t;
  cell_rows(L, p.k2, geometry.boundary_kind, t, p.channels, p.column_scale, options.unknown);
  const int ncell = static_cast<int>(L.cell_ij.size());
  for (int c = 0; c < nc; ++c) {
    const auto& ch = p.channels[static_cast<std::size_t>(c)];
    const auto& A = L.arms[static_cast<std::size_t>(ch.arm)];
    const auto& cl = A.closure[static_cast<std::size_t>(ch.mode)];
    for (int i = 0; i < A.cells_across; ++i) {
      t.emplace_back(ncell + c, A.at(A.rows - 1, i), p.h * A.modes.phi(i, ch.mode));
    }
    const Complex v = options.unknown == UnknownSide::Outgoing ? cl.v_out(A.rows - 1) : cl.v_in(A.rows - 1);
    t.emplace_back(ncell + c, ncell + c, -v / p.column_scale(c));
  }
  p.matrix.resize(ncell + nc, ncell + nc);
  p.matrix.setFromTriplets(t.begin(), t.end());
  p.matrix.makeCompressed();
  p.grid = std::move(L.grid);
  p.cell_ij = std::move(L.cell_ij);
  p.arms = std::move(L.arms);
  return p;
}

std::vector<SolveResult> solve_many(DiscreteProblem& problem, const Eigen::MatrixXcd& known) {
  if (known.rows() != problem.channel_count()) {
    std::ostringstream os;
    os << "expected " << problem.channel_count() << " prescribed amplitudes, got " << known.rows();
    throw InvalidArgument(os.str());
  }
  std::vector<SolveResult> out;
  if (known.cols() == 0) return out;
  factorize(problem);
  Eigen::MatrixXcd rhs(problem.unknowns(), known.cols());
  for (Eigen::Index j = 0; j < known.cols(); ++j) rhs.col(j) = known_rhs(problem, known.col(j));
  const Eigen::MatrixXcd x = problem.lu->solve(rhs);
  const double res = (problem.matrix * x - rhs).norm() / std::max(rhs.norm(), 1e-300);
  if (!std::isfinite(res) || res > 1e-6) {
    std::ostringstream os;
    os << "junction solve lost accuracy at k = " << problem.k << " (relative residual " << res
       << "): resonance/trapped-mode proximity";
    throw SingularSystem(os.str());
  }
  for (Eigen::Index j = 0; j < known.cols(); ++j) out.push_back(unpack(problem, x.col(j), known.col(j)));
  return out;
}

SolveResult solve_with_incoming(DiscreteProblem& problem, const Eigen::VectorXcd& known,
                                const Source* source) {
  if (known.size() != problem.channel_count()) {
    std::ostringstream os;
    os << "expected " << problem.channel_count() << " prescribed amplitudes, got " << known.size();
    throw InvalidArgument(os.str());
  }
  factorize(problem);
  Eigen::VectorXcd rhs = known_rhs(problem, known);
  if (source) rhs.head(problem.cells()) += problem.h * problem.h * effective_rhs(problem, *source);
  const Eigen::VectorXcd x = problem.lu->solve(rhs);
  const double scale = std::max(rhs.norm(), 1e-300);
  const double res = (problem.matrix * x - rhs).norm() / scale;
  if (rhs.norm() > 0.0 && (!std::isfinite(res) || res > 1e-6)) {
    std::ostringstream os;
    os << "junction solve lost accuracy at k = " << problem.k << " (relative residual " << res
       << "): resonance/trapped-mode proximity";
    throw SingularSystem(os.str());
  }
  return unpack(problem, x, known);
}

int extraction_row(const DiscreteProblem& problem, int arm) {
  const auto& A = problem.arms.at(static_cast<std::size_t>(arm));
  if (A.blended) {
    const double T3 = A.geometry.T + 3.0;
    const int J = static_cast<int>(std::ceil(T3 / problem.h));  // face at (J + 1) h > T + 3
    if (J > A.rows - 2) throw InvalidArgument("arm too short for extraction beyond T + 3");
    return J;
  }
  return std::max(0, A.rows / 2 - 1);
}

Complex arm_flux(const DiscreteProblem& problem, int arm, const Eigen::VectorXcd& u,
                 const Eigen::VectorXcd& v, int row) {
  const auto& A = problem.arms.at(static_cast<std::size_t>(arm));
  Complex acc = 0.0;
  for (int i = 0; i < A.cells_across; ++i) {
    acc += u(A.at(row + 1, i)) * std::conj(v(A.at(row, i))) - u(A.at(row, i)) * std::conj(v(A.at(row + 1, i)));
  }
  return acc;
}

Extraction extract_amplitudes(const DiscreteProblem& problem, const Eigen::VectorXcd& field) {
  if (field.size() != problem.cells()) throw InvalidArgument("field has the wrong size");
  const int nc = problem.channel_count();
  Extraction ex;
  ex.amplitudes.a = Eigen::VectorXcd::Zero(nc);
  ex.amplitudes.b = Eigen::VectorXcd::Zero(nc);
  const double h = problem.h;
  for (int c = 0; c < nc; ++c) {
    const auto& ch = problem.channels[static_cast<std::size_t>(c)];
    const auto& A = problem.arms[static_cast<std::size_t>(ch.arm)];
    const auto& cl = A.closure[static_cast<std::size_t>(ch.mode)];
    auto comp = [&](int row) {
      Complex s = 0.0;
      for (int i = 0; i < A.cells_across; ++i) s += A.modes.phi(i, ch.mode) * field(A.at(row, i));
      return h * s;
    };
    auto amps = [&](int J) {
      const Complex c0 = comp(J), c1 = comp(J + 1);
      const Complex qa = (c1 * std::conj(cl.v_in(J)) - c0 * std::conj(cl.v_in(J + 1))) / h;
      const Complex qb = (c1 * std::conj(cl.v_out(J)) - c0 * std::conj(cl.v_out(J + 1))) / h;
      return std::make_pair(kI * qa, -kI * qb);
    };
    const int J1 = extraction_row(problem, ch.arm);
    const int J2 = A.rows - 2;
    const auto p1 = amps(J1);
    const auto p2 = amps(J2);
    ex.amplitudes.a(c) = p1.first;
    ex.amplitudes.b(c) = p1.second;
    ex.face_residual = std::max({ex.face_residual, std::abs(p1.first - p2.first), std::abs(p1.second - p2.second)});
  }
  ex.warning = ex.face_residual > 1e-3;
  return ex;
}

Eigen::VectorXcd arm_wave(const DiscreteProblem& problem, int channel, bool incoming) {
  const auto& ch = problem.channels.at(static_cast<std::size_t>(channel));
  const auto& A = problem.arms[static_cast<std::size_t>(ch.arm)];
  const Eigen::VectorXcd& v = problem.profile(channel, incoming);
  Eigen::VectorXcd u = Eigen::VectorXcd::Zero(problem.cells());
  for (int j = 0; j < A.rows; ++j) {
    for (int i = 0; i < A.cells_across; ++i) u(A.at(j, i)) = A.modes.phi(i, ch.mode) * v(j);
  }
  return u;
}

Eigen::VectorXcd apply_operator(const DiscreteProblem& problem, const Eigen::VectorXcd& field,
                                const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  const bool out_unknown = problem.options.unknown == UnknownSide::Outgoing;
  const Eigen::VectorXcd& known = out_unknown ? a : b;
  const Eigen::VectorXcd& unknown = out_unknown ? b : a;
  Eigen::VectorXcd x(problem.unknowns());
  x.head(problem.cells()) = field;
  for (int c = 0; c < problem.channel_count(); ++c) x(problem.cells() + c) = unknown(c) * problem.column_scale(c);
  const Eigen::VectorXcd Ax = problem.matrix * x;
  const Eigen::VectorXcd r = known_rhs(problem, known);
  return (Ax.head(problem.cells()) - r.head(problem.cells())) / (problem.h * problem.h);
}

Complex source_pairing(const DiscreteProblem& problem, const Source& source, const Eigen::VectorXcd& X) {
  const Eigen::VectorXcd F = effective_rhs(problem, source);
  return problem.h * problem.h * X.conjugate().cwiseProduct(F).sum();
}

RadiationSolution solve_radiation(DiscreteProblem& problem, const Source& source) {
  if (problem.options.unknown != UnknownSide::Outgoing) {
    throw InvalidArgument("solve_radiation needs a problem with unknown outgoing amplitudes");
  }
  const int nc = problem.channel_count();
  RadiationSolution out;
  out.solution = solve_with_incoming(problem, Eigen::VectorXcd::Zero(nc), &source);
  out.b_flux = extract_amplitudes(problem, out.solution.field).amplitudes.b;
  // X_j: solutions with outgoing part v_j^- and unknown incoming part.
  AssemblyOptions opt = problem.options;
  opt.unknown = UnknownSide::Incoming;
  DiscreteProblem dual = assemble(problem.geometry, problem.k, opt);
  const auto X = solve_many(dual, Eigen::MatrixXcd::Identity(nc, nc));
  out.b_inner.resize(nc);
  for (int j = 0; j < nc; ++j) out.b_inner(j) = -kI * source_pairing(problem, source, X[static_cast<std::size_t>(j)].field);
  for (int j = 0; j < nc; ++j) {
    out.max_discrepancy = std::max(out.max_discrepancy, std::abs(out.b_flux(j) - out.b_inner(j)));
  }
  return out;
}

Eigen::SparseMatrix<double> decaying_closure_operator(const JunctionGeometry& geometry, double k, double h) {
  AssemblyOptions opt;
  opt.h = h;
  Layout L = build_layout(geometry, h);
  std::vector<Channel> channels;
  int M = 0;
  build_closures(geometry, k, opt, L, channels, M, true);
  Triplets t;
  cell_rows(L, cell_k2(L, k), geometry.boundary_kind, t, channels, Eigen::VectorXd(), UnknownSide::Outgoing);
  std::vector<Eigen::Triplet<double>> tr;
  tr.reserve(t.size());
  for (const auto& e : t) tr.emplace_back(e.row(), e.col(), -e.value().real());
  const auto n = static_cast<Eigen::Index>(L.cell_ij.size());
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(tr.begin(), tr.end());
  return A;
}

void write_field(const DiscreteProblem& problem, const Eigen::VectorXcd& field, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw InvalidArgument("cannot write field file " + path);
  os << "# augscat field\n";
  os << "dims " << problem.nx << " " << problem.ny << "\n";
  os << std::setprecision(17) << "h " << problem.h << "\nk " << problem.k << "\n";
  os << "origin " << problem.x_origin << " " << problem.y_origin << "\n";
  os << std::setprecision(12);
  for (int iy = 0; iy < problem.ny; ++iy) {
    for (int ix = 0; ix < problem.nx; ++ix) {
      const int c = problem.grid[static_cast<std::size_t>(iy) * problem.nx + ix];
      if (ix) os << ' ';
      if (c < 0) {
        os << "nan nan";
      } else {
        os << field(c).real() << ' ' << field(c).imag();
      }
    }
    os << '\n';
  }
}

}  // namespace augscat
