#include "augscat/scattering.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>

#include "augscat/error.hpp"

namespace augscat {

namespace {

const Complex kI(0.0, 1.0);

// Half the smallest evanescent rate over all arms: a rate line below every
// evanescent mode, so the strip holds exactly the propagating pairs.
double default_gamma(const JunctionGeometry& g, double k) {
  double kmin = std::numeric_limits<double>::infinity();
  for (int a = 0; a < static_cast<int>(g.arms.size()); ++a) {
    const CrossSectionSpec s = g.section(a);
    for (int n = first_mode_index(s.boundary_kind);; ++n) {
      const double mu = analytic_mu(s, n);
      if (mu > k * k) {
        kmin = std::min(kmin, std::sqrt(mu - k * k));
        break;
      }
    }
  }
  return 0.5 * kmin;
}

ScatteringMatrix make_matrix(const DiscreteProblem& p, Eigen::MatrixXcd entries, MatrixKind kind) {
  ScatteringMatrix m;
  m.entries = std::move(entries);
  m.kind = kind;
  m.M = p.M;
  m.M_prime = p.channel_count();
  m.k = p.k;
  m.gamma = default_gamma(p.geometry, p.k);
  m.beta = p.options.mode == ScatteringMode::Augmented ? p.options.beta : 0.0;
  m.h = p.h;
  m.unitarity_defect = unitarity_defect(m.entries);
  return m;
}

double inverse_defect(const Eigen::MatrixXcd& S, const Eigen::MatrixXcd& T) {
  if (S.size() == 0) return 0.0;
  return (S * T - Eigen::MatrixXcd::Identity(S.rows(), S.cols())).norm();
}

Eigen::MatrixXcd invert(const Eigen::MatrixXcd& T, double k) {
  if (T.size() == 0) return T;
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(T);
  const Eigen::VectorXd sv = T.jacobiSvd().singularValues();
  if (!lu.isInvertible() || sv(sv.size() - 1) < 1e-10 * sv(0)) {
    std::ostringstream os;
    os << "T matrix singular at k = " << k << " (smallest singular value " << sv(sv.size() - 1)
       << "): resonance";
    throw SingularSystem(os.str());
  }
  return lu.inverse();
}

// Rows: amplitude vectors (incoming or outgoing) of the given solutions.
Eigen::MatrixXcd rows_of(const std::vector<SolveResult>& sols, bool incoming, int n) {
  Eigen::MatrixXcd A(n, n);
  for (int r = 0; r < n; ++r) {
    const auto& amp = sols[static_cast<std::size_t>(r)].amplitudes;
    A.row(r) = (incoming ? amp.a : amp.b).transpose();
  }
  return A;
}

Eigen::MatrixXcd extend_identity(const Eigen::MatrixXcd& U, int M, int Mp) {
  if (U.rows() != M || U.cols() != M) {
    std::ostringstream os;
    os << "basis transform must be " << M << " x " << M << ", got " << U.rows() << " x " << U.cols();
    throw InvalidArgument(os.str());
  }
  Eigen::MatrixXcd E = Eigen::MatrixXcd::Identity(Mp, Mp);
  E.topLeftCorner(M, M) = U;
  return E;
}

AssemblyOptions augmented_options(AssemblyOptions o, double beta) {
  o.mode = ScatteringMode::Augmented;
  o.beta = beta;
  o.unknown = UnknownSide::Outgoing;
  return o;
}

double golden_minimize(const std::function<double(double)>& f, double a, double b, double tol, double& fmin) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  if (fc < fd) {
    fmin = fc;
    return c;
  }
  fmin = fd;
  return d;
}

// Smallest discrete transverse eigenvalue over the arms.
double lowest_discrete_threshold(const JunctionGeometry& g, double h) {
  double m = std::numeric_limits<double>::infinity();
  for (int a = 0; a < static_cast<int>(g.arms.size()); ++a) {
    const CellModes cm = cell_centered_modes(g.section(a), h);
    m = std::min(m, std::sqrt(cm.mu_h(0)));
  }
  return m;
}

template <class F>
void parallel_for(int n, int threads, F&& body) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

Eigen::MatrixXcd ScatteringMatrix::block(int row, int col) const {
  auto range = [&](int b) { return b == 1 ? std::make_pair(0, M) : std::make_pair(M, M_prime - M); };
  if (row < 1 || row > 2 || col < 1 || col > 2) throw InvalidArgument("block index must be 1 or 2");
  const auto r = range(row), c = range(col);
  return entries.block(r.first, c.first, r.second, c.second);
}

double unitarity_defect(const Eigen::MatrixXcd& A) {
  if (A.size() == 0) return 0.0;
  return (A * A.adjoint() - Eigen::MatrixXcd::Identity(A.rows(), A.rows())).norm();
}

ScatteringMatrix classical_T(DiscreteProblem& problem) {
  if (problem.options.unknown != UnknownSide::Outgoing) {
    throw InvalidArgument("classical_T needs a problem with unknown outgoing amplitudes");
  }
  const int n = problem.channel_count();
  const auto sols = solve_many(problem, Eigen::MatrixXcd::Identity(n, n));
  return make_matrix(problem, rows_of(sols, false, n), MatrixKind::TMatrix);
}

ScatteringMatrix classical_S(const ScatteringMatrix& T) {
  if (T.kind != MatrixKind::TMatrix) throw InvalidArgument("classical_S expects a T matrix");
  ScatteringMatrix S = T;
  S.kind = MatrixKind::SMatrix;
  S.entries = invert(T.entries, T.k);
  S.unitarity_defect = unitarity_defect(S.entries);
  S.inverse_defect = inverse_defect(S.entries, T.entries);
  return S;
}

ScatteringMatrix direct_S(const JunctionGeometry& geometry, double k, const AssemblyOptions& options) {
  AssemblyOptions o = options;
  o.unknown = UnknownSide::Incoming;
  DiscreteProblem dual = assemble(geometry, k, o);
  const int n = dual.channel_count();
  const auto X = solve_many(dual, Eigen::MatrixXcd::Identity(n, n));
  return make_matrix(dual, rows_of(X, true, n), MatrixKind::SMatrix);
}

ScatteringPair scattering_pair(const JunctionGeometry& geometry, double k, const AssemblyOptions& options) {
  AssemblyOptions o = options;
  o.unknown = UnknownSide::Outgoing;
  DiscreteProblem p = assemble(geometry, k, o);
  ScatteringPair out;
  out.T = classical_T(p);
  out.S = direct_S(geometry, k, o);
  out.S.inverse_defect = inverse_defect(out.S.entries, out.T.entries);
  out.T.inverse_defect = out.S.inverse_defect;
  return out;
}

ScatteringMatrix augmented_S(const JunctionGeometry& geometry, double k, double beta, AssemblyOptions options) {
  DiscreteProblem p = assemble(geometry, k, augmented_options(options, beta));
  return classical_S(classical_T(p));
}

ScatteringMatrix augmented_S_in_basis(const JunctionGeometry& geometry, double k, double beta,
                                      const Eigen::MatrixXcd& U, AssemblyOptions options) {
  DiscreteProblem p = assemble(geometry, k, augmented_options(options, beta));
  const int n = p.channel_count();
  const Eigen::MatrixXcd E = extend_identity(U, p.M, n);
  // Incoming data e_k in the new basis is sum_m U_km v_m^+ in the old one.
  const auto sols = solve_many(p, E.transpose());
  const Eigen::MatrixXcd B = rows_of(sols, false, n);
  // Outgoing part sum_j b_j v_j^- = sum_l b'_l v'^-_l, so b'^T = b^T E^{-1}.
  const Eigen::MatrixXcd Tn = B * invert(E, k);
  ScatteringMatrix T = make_matrix(p, Tn, MatrixKind::TMatrix);
  return classical_S(T);
}

std::vector<double> geometry_thresholds(const JunctionGeometry& geometry, double k_lo, double k_hi) {
  std::vector<double> out;
  for (int a = 0; a < static_cast<int>(geometry.arms.size()); ++a) {
    for (double t : section_thresholds(geometry.section(a), k_hi)) {
      if (t > k_lo && t < k_hi) out.push_back(t);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end(), [](double x, double y) { return std::abs(x - y) < 1e-12 * y; }),
            out.end());
  return out;
}

std::vector<std::pair<double, double>> split_at_thresholds(const JunctionGeometry& geometry, double k_lo,
                                                           double k_hi, double guard) {
  if (!(k_lo > 0.0) || !(k_hi > k_lo)) throw InvalidArgument("k range must be positive and increasing");
  std::vector<std::pair<double, double>> seg;
  double a = k_lo;
  for (double t : geometry_thresholds(geometry, k_lo * (1.0 - 2.0 * guard), k_hi * (1.0 + 2.0 * guard))) {
    const double b = std::min(k_hi, t * (1.0 - guard));
    if (b > a) seg.emplace_back(a, b);
    a = std::max(a, t * (1.0 + guard));
  }
  if (k_hi > a) seg.emplace_back(a, k_hi);
  return seg;
}

SweepPoint sweep_point(const JunctionGeometry& geometry, double k, double beta, const ScanOptions& options) {
  SweepPoint pt;
  pt.k = k;
  try {
    const AssemblyOptions o = augmented_options(options.assembly, beta);
    ScatteringMatrix T, S;
    if (options.basis_transform) {
      S = augmented_S_in_basis(geometry, k, beta, *options.basis_transform, o);
      T = S;
      T.entries = invert(S.entries, k);
      T.kind = MatrixKind::TMatrix;
    } else {
      DiscreteProblem p = assemble(geometry, k, o);
      T = classical_T(p);
      S = classical_S(T);
    }
    pt.M = S.M;
    pt.M_prime = S.M_prime;
    pt.unitarity_defect = S.unitarity_defect;
    for (Eigen::Index r = 0; r < T.entries.rows(); ++r) {
      pt.energy_defect = std::max(pt.energy_defect, std::abs(T.entries.row(r).squaredNorm() - 1.0));
    }
    const Eigen::MatrixXcd S22 = S.block(2, 2);
    pt.min_dist = std::numeric_limits<double>::infinity();
    if (S22.size() > 0) {
      Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(S22, false);
      for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const Complex e = es.eigenvalues()(i);
        pt.eig22.push_back(e);
        pt.min_dist = std::min(pt.min_dist, std::abs(e - 1.0));
      }
      std::sort(pt.eig22.begin(), pt.eig22.end(),
                [](Complex x, Complex y) { return std::arg(x) < std::arg(y); });
    } else {
      pt.note = "empty evanescent block";
    }
    pt.ok = true;
  } catch (const Error& e) {
    pt.ok = false;
    pt.note = e.what();
    pt.min_dist = std::numeric_limits<double>::quiet_NaN();
  }
  return pt;
}

int negative_count(const JunctionGeometry& geometry, double k, double h) {
  const Eigen::SparseMatrix<double> A = decaying_closure_operator(geometry, k, h);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
  if (ldlt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "LDL^T factorization failed at k = " << k;
    throw SingularSystem(os.str());
  }
  const Eigen::VectorXd d = ldlt.vectorD();
  int neg = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d(i) < 0.0) ++neg;
  }
  return neg;
}

std::vector<double> oracle_trapped_modes(const JunctionGeometry& geometry, double k_lo, double k_hi, double h,
                                         double tol) {
  if (!(k_hi > k_lo)) throw InvalidArgument("oracle range must be increasing");
  if (!(k_hi < lowest_discrete_threshold(geometry, h))) {
    throw InvalidArgument("the decaying-closure oracle needs k below every discrete threshold");
  }
  // -h^2 L_h decreases with k (the closure ratios grow), so the negative count is
  // nondecreasing and each jump marks a decaying kernel element.
  std::vector<double> out;
  std::function<void(double, double, int, int)> rec = [&](double a, double b, int na, int nb) {
    if (nb <= na) return;
    if (b - a < tol) {
      for (int i = na; i < nb; ++i) out.push_back(0.5 * (a + b));
      return;
    }
    const double m = 0.5 * (a + b);
    const int nm = negative_count(geometry, m, h);
    rec(a, m, na, nm);
    rec(m, b, nm, nb);
  };
  rec(k_lo, k_hi, negative_count(geometry, k_lo, h), negative_count(geometry, k_hi, h));
  return out;
}

SweepReport trapped_mode_scan(const JunctionGeometry& geometry, double k_lo, double k_hi, int points,
                              double beta, const ScanOptions& options) {
  if (points < 3) throw InvalidArgument("a sweep needs at least 3 points");
  if (!(options.tolerance > 0.0)) throw InvalidArgument("tolerance must be positive");
  SweepReport rep;
  rep.beta = beta;
  rep.thresholds = geometry_thresholds(geometry, k_lo, k_hi);
  rep.segments = split_at_thresholds(geometry, k_lo, k_hi, options.guard);
  double total = 0.0;
  for (const auto& s : rep.segments) total += s.second - s.first;
  std::vector<std::vector<double>> grids;
  int assigned = 0;
  for (std::size_t i = 0; i < rep.segments.size(); ++i) {
    const auto& s = rep.segments[i];
    int n = i + 1 == rep.segments.size()
                ? points - assigned
                : std::max(3, static_cast<int>(std::lround(points * (s.second - s.first) / total)));
    n = std::max(n, 3);
    assigned += n;
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) g[static_cast<std::size_t>(j)] = s.first + (s.second - s.first) * j / (n - 1);
    grids.push_back(std::move(g));
  }
  std::vector<double> ks;
  for (const auto& g : grids) ks.insert(ks.end(), g.begin(), g.end());
  rep.points.resize(ks.size());
  parallel_for(static_cast<int>(ks.size()), options.threads, [&](int i) {
    rep.points[static_cast<std::size_t>(i)] = sweep_point(geometry, ks[static_cast<std::size_t>(i)], beta, options);
  });

  const double h = options.assembly.h;
  const double kc = lowest_discrete_threshold(geometry, h);
  std::size_t base = 0;
  for (std::size_t s = 0; s < grids.size(); ++s) {
    const auto& g = grids[s];
    const double step = g.size() > 1 ? g[1] - g[0] : 0.0;
    std::vector<double> oracle;
    bool have_oracle = false;
    if (options.oracle && rep.segments[s].second < kc) {
      oracle = oracle_trapped_modes(geometry, rep.segments[s].first, rep.segments[s].second, h);
      have_oracle = true;
      rep.oracle_available = true;
      rep.oracle_modes.insert(rep.oracle_modes.end(), oracle.begin(), oracle.end());
    }
    std::vector<std::size_t> minima;
    for (std::size_t j = 0; j < g.size(); ++j) {
      const auto& pj = rep.points[base + j];
      if (!pj.ok || !std::isfinite(pj.min_dist)) continue;
      auto val = [&](std::size_t q) {
        const auto& pq = rep.points[base + q];
        return pq.ok ? pq.min_dist : std::numeric_limits<double>::infinity();
      };
      const double left = j > 0 ? val(j - 1) : std::numeric_limits<double>::infinity();
      const double right = j + 1 < g.size() ? val(j + 1) : std::numeric_limits<double>::infinity();
      if (pj.min_dist <= left && pj.min_dist <= right && pj.min_dist < 0.25) minima.push_back(j);
    }
    std::vector<Bracket> found(minima.size());
    std::vector<char> keep(minima.size(), 0);
    parallel_for(static_cast<int>(minima.size()), options.threads, [&](int m) {
      const std::size_t j = minima[static_cast<std::size_t>(m)];
      Bracket br;
      br.k_lo = g[j > 0 ? j - 1 : j];
      br.k_hi = g[j + 1 < g.size() ? j + 1 : j];
      auto f = [&](double k) {
        const SweepPoint p = sweep_point(geometry, k, beta, options);
        return p.ok ? p.min_dist : std::numeric_limits<double>::infinity();
      };
      double fmin = rep.points[base + j].min_dist;
      br.k_star = g[j];
      if (br.k_hi > br.k_lo) {
        double fg = 0.0;
        const double kg = golden_minimize(f, br.k_lo, br.k_hi, 1e-9 * br.k_hi, fg);
        if (fg < fmin) {
          fmin = fg;
          br.k_star = kg;
        }
      }
      br.min_dist = fmin;
      if (fmin <= options.tolerance) {
        keep[static_cast<std::size_t>(m)] = 1;
        if (have_oracle) {
          for (double ko : oracle) {
            if (std::abs(ko - br.k_star) <= step) {
              br.oracle_confirmed = true;
              br.oracle_k = ko;
            }
          }
        }
      }
      found[static_cast<std::size_t>(m)] = br;
    });
    for (std::size_t m = 0; m < found.size(); ++m) {
      if (keep[m]) rep.brackets.push_back(found[m]);
    }
    base += g.size();
  }
  return rep;
}

KernelCountReport kernel_count_report(const JunctionGeometry& geometry, double k, double gamma, double beta,
                                      const AssemblyOptions& options, double tolerance) {
  KernelCountReport r;
  r.tolerance = tolerance;
  for (int a = 0; a < static_cast<int>(geometry.arms.size()); ++a) {
    const CrossSectionSpec s = geometry.section(a);
    for (int n = first_mode_index(s.boundary_kind);; ++n) {
      const double d = k * k - analytic_mu(s, n);
      if (d > 0.0) {
        r.strip_multiplicity += 2;
      } else if (std::sqrt(-d) < gamma) {
        r.strip_multiplicity += 2;
      } else {
        break;
      }
    }
  }
  ScanOptions so;
  so.assembly = options;
  so.tolerance = tolerance;
  const SweepPoint pt = sweep_point(geometry, k, beta, so);
  if (!pt.ok) throw Error("kernel count failed at k = " + std::to_string(k) + ": " + pt.note);
  r.M = pt.M;
  r.M_prime = pt.M_prime;
  r.min_dist = pt.min_dist;
  for (const Complex& e : pt.eig22) {
    if (std::abs(e - 1.0) <= tolerance) ++r.kernel_S22;
  }
  const double h = options.h;
  if (k < lowest_discrete_threshold(geometry, h)) {
    // Decaying kernel at k: a jump of the negative count across a small window.
    const double w = std::max(1e-6 * k, 10.0 * tolerance * tolerance * k);
    const double hi = std::min(k + w, 0.5 * (k + lowest_discrete_threshold(geometry, h)));
    r.oracle_count = negative_count(geometry, hi, h) - negative_count(geometry, k - w, h);
  }
  return r;
}

Complex global_flux(const DiscreteProblem& problem, const Eigen::VectorXcd& u, const Eigen::VectorXcd& v) {
  Complex q = 0.0;
  for (int a = 0; a < static_cast<int>(problem.arms.size()); ++a) {
    q += arm_flux(problem, a, u, v, extraction_row(problem, a));
  }
  return q;
}

RadiationBasis radiation_basis_transform(DiscreteProblem& problem, const Eigen::MatrixXcd& S_op,
                                         const Eigen::MatrixXcd& R_op) {
  if (problem.options.mode != ScatteringMode::Classical) {
    throw InvalidArgument("radiation-basis transforms act on classical problems");
  }
  const int M = problem.M;
  if (S_op.rows() != M || S_op.cols() != M || R_op.rows() != M || R_op.cols() != M) {
    std::ostringstream os;
    os << "S_op and R_op must be " << M << " x " << M;
    throw InvalidArgument(os.str());
  }
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(S_op);
  if (M > 0 && !lu.isInvertible()) throw SingularSystem("S_op is singular");
  const Eigen::MatrixXcd Sinv = M > 0 ? Eigen::MatrixXcd(lu.inverse()) : Eigen::MatrixXcd(0, 0);

  AssemblyOptions o = problem.options;
  o.unknown = UnknownSide::Incoming;
  DiscreteProblem dual = assemble(problem.geometry, problem.k, o);
  const auto X = solve_many(dual, Eigen::MatrixXcd::Identity(M, M));
  const Eigen::MatrixXcd S = rows_of(X, true, M);

  std::vector<Eigen::VectorXcd> up(static_cast<std::size_t>(M)), um(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    up[static_cast<std::size_t>(m)] = arm_wave(problem, m, true);
    um[static_cast<std::size_t>(m)] = arm_wave(problem, m, false);
  }
  RadiationBasis out;
  const int n = problem.cells();
  for (int j = 0; j < M; ++j) {
    Eigen::VectorXcd u = Eigen::VectorXcd::Zero(n);
    for (int m = 0; m < M; ++m) u += S_op(j, m) * um[static_cast<std::size_t>(m)];
    for (int p = 0; p < M; ++p) {
      if (R_op(j, p) == Complex(0.0)) continue;
      Eigen::VectorXcd w = up[static_cast<std::size_t>(p)];
      for (int i = 0; i < M; ++i) w += std::conj(S(i, p)) * um[static_cast<std::size_t>(i)];
      u += R_op(j, p) * w;
    }
    out.u.push_back(std::move(u));
  }
  for (int k = 0; k < M; ++k) {
    Eigen::VectorXcd V = Eigen::VectorXcd::Zero(n);
    for (int m = 0; m < M; ++m) V += std::conj(Sinv(m, k)) * X[static_cast<std::size_t>(m)].field;
    out.V.push_back(std::move(V));
  }
  out.pairing.resize(M, M);
  for (int j = 0; j < M; ++j) {
    for (int k = 0; k < M; ++k) {
      out.pairing(j, k) = global_flux(problem, out.u[static_cast<std::size_t>(j)], out.V[static_cast<std::size_t>(k)]);
      const Complex target = j == k ? kI : Complex(0.0);
      out.residual = std::max(out.residual, std::abs(out.pairing(j, k) - target));
    }
  }
  return out;
}

}  // namespace augscat
