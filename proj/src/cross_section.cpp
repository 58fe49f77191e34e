#include "augscat/cross_section.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "augscat/error.hpp"

namespace augscat {

namespace {

constexpr double kPi = std::numbers::pi;

int cells_across(double width, double step, const char* what) {
  const double ratio = width / step;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
    std::ostringstream os;
    os << what << " " << step << " does not divide width " << width;
    throw InvalidArgument(os.str());
  }
  return static_cast<int>(rounded);
}

void check_resolution(const CrossSectionSpec& section, int highest_index, double step) {
  if (highest_index <= 0) return;
  const double per_wavelength = 2.0 * section.width / (highest_index * step);
  if (per_wavelength < 8.0) {
    std::ostringstream os;
    os << "grid step " << step << " resolves mode " << highest_index << " of arm "
       << section.arm_id << " with only " << per_wavelength
       << " points per oscillation (need 8)";
    throw ResolutionError(os.str());
  }
}

Eigen::VectorXd trapezoid_weights(int intervals, double h) {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(intervals + 1, h);
  w(0) = 0.5 * h;
  w(intervals) = 0.5 * h;
  return w;
}

void fix_sign(Eigen::VectorXd& v) {
  const double scale = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-8 * scale) {
      if (v(i) < 0.0) v = -v;
      return;
    }
  }
}

}  // namespace

std::string to_string(BoundaryKind kind) {
  return kind == BoundaryKind::Dirichlet ? "dirichlet" : "neumann";
}

BoundaryKind boundary_kind_from_string(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "dirichlet") return BoundaryKind::Dirichlet;
  if (lower == "neumann") return BoundaryKind::Neumann;
  throw InvalidArgument("unknown boundary kind '" + name + "'");
}

void CrossSectionSpec::validate() const {
  if (!(width > 0.0) || !std::isfinite(width)) {
    throw InvalidArgument("width must be positive (arm " + std::to_string(arm_id) + ")");
  }
  if (transverse_profile) {
    if (transverse_profile->size() < 2) {
      throw InvalidArgument("transverse_profile needs at least two samples covering [0, width]");
    }
    for (double v : *transverse_profile) {
      if (!std::isfinite(v)) throw InvalidArgument("transverse_profile has non-finite samples");
    }
  }
}

double CrossSectionSpec::profile_at(double y) const {
  if (!transverse_profile) return 0.0;
  const auto& p = *transverse_profile;
  const double pos = std::clamp(y / width, 0.0, 1.0) * static_cast<double>(p.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(pos), p.size() - 2);
  const double frac = pos - static_cast<double>(i);
  return (1.0 - frac) * p[i] + frac * p[i + 1];
}

double CrossSectionSpectrum::inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
  return (weights.array() * a.array() * b.array()).sum();
}

Complex CrossSectionSpectrum::inner(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) const {
  return (weights.cast<Complex>().array() * a.array() * b.conjugate().array()).sum();
}

int CrossSectionSpectrum::mode_of(const Eigen::VectorXcd& f, double tol) const {
  const double norm = std::sqrt(std::abs(inner(f, f)));
  if (norm == 0.0) return -1;
  for (std::size_t n = 0; n < entries.size(); ++n) {
    const Eigen::VectorXcd phi = entries[n].phi.cast<Complex>();
    const Complex c = inner(f, phi);
    const Eigen::VectorXcd rest = f - c * phi;
    if (std::sqrt(std::abs(inner(rest, rest))) <= tol * norm) return static_cast<int>(n);
  }
  return -1;
}

int first_mode_index(BoundaryKind kind) { return kind == BoundaryKind::Dirichlet ? 1 : 0; }

double analytic_mu(const CrossSectionSpec& section, int n) {
  const double q = n * kPi / section.width;
  return q * q;
}

SymmetricTridiagonal profile_operator(const CrossSectionSpec& section, double grid_step) {
  section.validate();
  const int intervals = cells_across(section.width, grid_step, "grid_step");
  const double h2 = grid_step * grid_step;
  SymmetricTridiagonal m;
  if (section.boundary_kind == BoundaryKind::Dirichlet) {
    const int n = intervals - 1;
    if (n < 1) throw ResolutionError("grid has no interior nodes");
    m.first_node = 1;
    m.diag.resize(n);
    m.off = Eigen::VectorXd::Constant(std::max(n - 1, 0), -1.0 / h2);
    for (int i = 0; i < n; ++i) {
      m.diag(i) = 2.0 / h2 - section.profile_at((i + 1) * grid_step);
    }
  } else {
    const int n = intervals + 1;
    m.first_node = 0;
    m.diag.resize(n);
    m.off = Eigen::VectorXd::Constant(n - 1, -1.0 / h2);
    for (int i = 0; i < n; ++i) m.diag(i) = 2.0 / h2 - section.profile_at(i * grid_step);
    m.off(0) = -std::sqrt(2.0) / h2;
    m.off(n - 2) = -std::sqrt(2.0) / h2;
  }
  return m;
}

namespace {

int sturm_count_below(const SymmetricTridiagonal& m, double x) {
  const Eigen::Index n = m.diag.size();
  const double tiny = std::numeric_limits<double>::min() * 1e4;
  int count = 0;
  double q = m.diag(0) - x;
  for (Eigen::Index i = 0;; ++i) {
    if (q == 0.0) q = -tiny;
    if (q < 0.0) ++count;
    if (i + 1 >= n) break;
    q = m.diag(i + 1) - x - m.off(i) * m.off(i) / q;
  }
  return count;
}

}  // namespace

std::vector<double> tridiagonal_eigenvalues(const SymmetricTridiagonal& m, int count) {
  const Eigen::Index n = m.diag.size();
  if (count > n) throw ResolutionError("more eigenvalues requested than grid unknowns");
  double lo = std::numeric_limits<double>::max(), hi = -lo;
  for (Eigen::Index i = 0; i < n; ++i) {
    double r = 0.0;
    if (i > 0) r += std::abs(m.off(i - 1));
    if (i + 1 < n) r += std::abs(m.off(i));
    lo = std::min(lo, m.diag(i) - r);
    hi = std::max(hi, m.diag(i) + r);
  }
  const double scale = std::max(std::abs(lo), std::abs(hi));
  std::vector<double> out;
  out.reserve(count);
  for (int j = 0; j < count; ++j) {
    // Smallest x with sturm_count_below(x) > j.
    double a = lo - 1e-12 * scale, b = hi + 1e-12 * scale;
    while (b - a > 2.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(a), std::abs(b)) +
                       std::numeric_limits<double>::min()) {
      const double mid = 0.5 * (a + b);
      if (mid <= a || mid >= b) break;
      if (sturm_count_below(m, mid) > j) {
        b = mid;
      } else {
        a = mid;
      }
    }
    out.push_back(0.5 * (a + b));
  }
  return out;
}

Eigen::VectorXd tridiagonal_solve(const SymmetricTridiagonal& m, double shift,
                                  const Eigen::VectorXd& rhs) {
  const Eigen::Index n = m.diag.size();
  Eigen::VectorXd d = m.diag.array() - shift;
  Eigen::VectorXd dl = m.off, du = m.off;
  Eigen::VectorXd du2 = Eigen::VectorXd::Zero(std::max<Eigen::Index>(n - 2, 0));
  Eigen::VectorXd b = rhs;
  const double tiny = std::numeric_limits<double>::epsilon() *
                      std::max(1.0, m.diag.cwiseAbs().maxCoeff());
  auto guard = [tiny](double v) { return std::abs(v) < tiny ? (v < 0.0 ? -tiny : tiny) : v; };
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    if (std::abs(d(i)) >= std::abs(dl(i))) {
      const double fact = dl(i) / guard(d(i));
      d(i + 1) -= fact * du(i);
      b(i + 1) -= fact * b(i);
    } else {
      const double fact = d(i) / dl(i);
      d(i) = dl(i);
      const double temp = d(i + 1);
      d(i + 1) = du(i) - fact * temp;
      if (i + 2 < n) {
        du2(i) = du(i + 1);
        du(i + 1) = -fact * du2(i);
      }
      du(i) = temp;
      const double tb = b(i);
      b(i) = b(i + 1);
      b(i + 1) = tb - fact * b(i + 1);
    }
  }
  b(n - 1) /= guard(d(n - 1));
  if (n > 1) b(n - 2) = (b(n - 2) - du(n - 2) * b(n - 1)) / guard(d(n - 2));
  for (Eigen::Index i = n - 3; i >= 0; --i) {
    b(i) = (b(i) - du(i) * b(i + 1) - du2(i) * b(i + 2)) / guard(d(i));
  }
  return b;
}

CrossSectionSpectrum transverse_spectrum(const CrossSectionSpec& section, int count,
                                         double grid_step) {
  section.validate();
  if (count < 1) throw InvalidArgument("transverse_spectrum: count must be at least 1");
  if (!(grid_step > 0.0)) throw InvalidArgument("transverse_spectrum: grid_step must be positive");
  const int intervals = cells_across(section.width, grid_step, "grid_step");
  const int first = first_mode_index(section.boundary_kind);
  check_resolution(section, first + count - 1, grid_step);

  CrossSectionSpectrum out;
  out.section = section;
  out.grid_step = grid_step;
  out.weights = trapezoid_weights(intervals, grid_step);
  const int nodes = intervals + 1;

  if (!section.transverse_profile) {
    for (int j = 0; j < count; ++j) {
      const int n = first + j;
      TransverseMode mode;
      mode.mu = analytic_mu(section, n);
      mode.phi.resize(nodes);
      const double w = section.width;
      for (int i = 0; i < nodes; ++i) {
        const double arg = n * kPi * i * grid_step / w;
        if (section.boundary_kind == BoundaryKind::Dirichlet) {
          mode.phi(i) = std::sqrt(2.0 / w) * std::sin(arg);
        } else {
          mode.phi(i) = n == 0 ? 1.0 / std::sqrt(w) : std::sqrt(2.0 / w) * std::cos(arg);
        }
      }
      if (section.boundary_kind == BoundaryKind::Dirichlet) {
        mode.phi(0) = 0.0;
        mode.phi(nodes - 1) = 0.0;
      }
      out.entries.push_back(std::move(mode));
    }
    return out;
  }

  const SymmetricTridiagonal m = profile_operator(section, grid_step);
  const std::vector<double> mus = tridiagonal_eigenvalues(m, count);
  std::vector<Eigen::VectorXd> xs;
  const Eigen::Index n = m.diag.size();
  for (int j = 0; j < count; ++j) {
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = 1.0 + 0.1 * std::sin(0.7 * static_cast<double>(i) + j);
    for (int it = 0; it < 4; ++it) {
      x = tridiagonal_solve(m, mus[j], x);
      for (const auto& prev : xs) x -= prev.dot(x) * prev;
      x.normalize();
    }
    xs.push_back(x);
    TransverseMode mode;
    mode.mu = mus[j];
    mode.phi = Eigen::VectorXd::Zero(nodes);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int node = m.first_node + static_cast<int>(i);
      mode.phi(node) = x(i) / std::sqrt(out.weights(node));
    }
    fix_sign(mode.phi);
    out.entries.push_back(std::move(mode));
  }
  return out;
}

double default_threshold_tol(double k) { return 1e-9 * k * k; }

int PencilSpectrum::real_count() const {
  int c = 0;
  for (const auto& p : points) {
    if (p.lambda.imag() == 0.0) c += p.multiplicity * p.chain_length;
  }
  return c;
}

int PencilSpectrum::strip_multiplicity(double rate) const {
  int c = 0;
  for (const auto& p : points) {
    if (std::abs(p.lambda.imag()) < rate || p.lambda.imag() == 0.0) {
      c += p.multiplicity * p.chain_length;
    }
  }
  return c;
}

bool PencilSpectrum::has_threshold() const {
  return std::any_of(threshold_flags.begin(), threshold_flags.end(), [](bool b) { return b; });
}

PencilSpectrum pencil_spectrum(const CrossSectionSpectrum& spectrum, double k, double beta,
                               double threshold_tol) {
  if (!(k > 0.0)) throw InvalidArgument("pencil_spectrum: k must be positive");
  if (!(beta > 0.0)) throw InvalidArgument("pencil_spectrum: beta must be positive");
  if (threshold_tol < 0.0) threshold_tol = default_threshold_tol(k);
  PencilSpectrum out;
  out.k = k;
  out.beta = beta;
  out.threshold_tol = threshold_tol;
  const double k2 = k * k;
  bool covered = false;
  for (std::size_t n = 0; n < spectrum.entries.size(); ++n) {
    const double mu = spectrum.entries[n].mu;
    const int idx = static_cast<int>(n);
    if (std::abs(k2 - mu) < threshold_tol) {
      out.threshold_flags.push_back(true);
      out.points.push_back({Complex(0.0, 0.0), 1, 2, idx});
      continue;
    }
    out.threshold_flags.push_back(false);
    if (mu < k2) {
      const double lam = std::sqrt(k2 - mu);
      out.points.push_back({Complex(lam, 0.0), 1, 1, idx});
      out.points.push_back({Complex(-lam, 0.0), 1, 1, idx});
      continue;
    }
    const double kappa = std::sqrt(mu - k2);
    if (std::abs(kappa - beta) < threshold_tol) {
      std::ostringstream os;
      os << "rate line Im lambda = " << beta << " passes through the pencil point from mu_" << n
         << " = " << mu;
      throw SpectrumCollision(os.str());
    }
    if (kappa > beta) {
      covered = true;
      break;
    }
    out.points.push_back({Complex(0.0, kappa), 1, 1, idx});
    out.points.push_back({Complex(0.0, -kappa), 1, 1, idx});
  }
  if (!covered) {
    throw InvalidArgument(
        "pencil_spectrum: transverse spectrum too short to cover the strip |Im lambda| <= beta; "
        "request more modes");
  }
  return out;
}

std::vector<double> section_thresholds(const CrossSectionSpec& section, double k_max) {
  std::vector<double> out;
  for (int n = first_mode_index(section.boundary_kind);; ++n) {
    const double t = n * kPi / section.width;
    if (t > k_max) break;
    if (t > 0.0) out.push_back(t);
  }
  return out;
}

CellModes cell_centered_modes(const CrossSectionSpec& section, double h) {
  section.validate();
  if (section.transverse_profile) {
    throw InvalidArgument("junction arms with a transverse profile are not supported");
  }
  const int N = cells_across(section.width, h, "mesh step");
  CellModes out;
  out.h = h;
  out.cells = N;
  out.mu_h.resize(N);
  out.mu.resize(N);
  out.phi.resize(N, N);
  const int first = first_mode_index(section.boundary_kind);
  const double w = section.width;
  for (int j = 0; j < N; ++j) {
    const int n = first + j;
    const double s = std::sin(n * kPi / (2.0 * N));
    out.mu_h(j) = 4.0 / (h * h) * s * s;
    out.mu(j) = analytic_mu(section, n);
    for (int i = 0; i < N; ++i) {
      const double arg = n * kPi * (i + 0.5) / N;
      if (section.boundary_kind == BoundaryKind::Dirichlet) {
        out.phi(i, j) = (n == N ? 1.0 : std::sqrt(2.0)) * std::sin(arg) / std::sqrt(w);
      } else {
        out.phi(i, j) = (n == 0 ? 1.0 : std::sqrt(2.0)) * std::cos(arg) / std::sqrt(w);
      }
    }
  }
  return out;
}

}  // namespace augscat
