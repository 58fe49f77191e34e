#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "augscat/cross_section.hpp"
#include "augscat/cutoff.hpp"

namespace augscat {

enum class Direction { Incoming, Outgoing, Unclassified };

std::string to_string(Direction d);

// u(y, t) = normalization * exp(i lambda t) * sum_l t^l poly_coeffs[l](y), with
// poly_coeffs[l] = i^l / l! * phi^{(sigma - l)}.
struct WaveSpec {
  int arm_id = 0;
  Complex lambda;
  int sigma = 0;
  int chain = 1;
  int transverse_index = 0;
  int chain_length = 1;
  std::vector<Eigen::VectorXcd> poly_coeffs;
  Direction direction = Direction::Unclassified;
  Complex normalization = 1.0;
  double rate = 0.0;  // decay exponent Im(lambda): |u| ~ exp(-rate t)
  std::shared_ptr<const CrossSectionSpectrum> section;

  Eigen::VectorXcd value(double t) const;
  Eigen::VectorXcd dt(double t) const;
  // Scalar t-profile f with u = f(t) * phi_n(y) (all chain vectors are
  // multiples of phi_n for a scalar cross-section problem).
  Complex profile(double t) const;
  Complex profile_dt(double t) const;
  Complex profile_dtt(double t) const;
};

// Finite linear combination of waves of one arm.
struct WaveCombination {
  std::vector<std::pair<Complex, WaveSpec>> terms;
  Direction direction = Direction::Unclassified;
  std::string label;

  int arm_id() const;
  const CrossSectionSpectrum& section() const;
  Eigen::VectorXcd value(double t) const;
  Eigen::VectorXcd dt(double t) const;
};

WaveCombination as_combination(const WaveSpec& w);

// Samples of a field on rows t = t0 + m * dt of one arm (columns are rows in t).
struct GridField {
  int arm_id = 0;
  std::shared_ptr<const CrossSectionSpectrum> section;
  double t0 = 0.0;
  double dt = 0.0;
  Eigen::MatrixXcd samples;  // points x rows
};

struct Trace {
  int arm_id = 0;
  const CrossSectionSpectrum* section = nullptr;
  Eigen::VectorXcd value;
  Eigen::VectorXcd dt;
};

Trace trace_at(const WaveSpec& u, double R);
Trace trace_at(const WaveCombination& u, double R);
// Value at the nearest grid row, t-derivative by 4th-order differences
// (central when possible, one-sided at the ends).
Trace trace_at(const GridField& u, double R);

// Raw cross-section quadrature of  int (u_t conj(v) - u conj(v_t)) dy.
Complex flux_value(const Trace& u, const Trace& v);

struct FluxPairing {
  Complex value;
  double R = 0.0;
  double quadrature_residual = 0.0;
};

template <class U, class V>
FluxPairing flux_pairing(const U& u, const V& v, double R,
                         double R_second = std::numeric_limits<double>::quiet_NaN()) {
  FluxPairing p;
  p.R = R;
  p.value = flux_value(trace_at(u, R), trace_at(v, R));
  if (std::isnan(R_second)) R_second = R + 1.0;
  const Complex other = flux_value(trace_at(u, R_second), trace_at(v, R_second));
  p.quadrature_residual = std::abs(other - p.value);
  return p;
}

// Pairing of chi*u and chi*v through the volume form over the cutoff region
// 1 <= t <= 2; equal to the flux pairing for solutions of the limit problem.
Complex flux_pairing_volume(const WaveCombination& u, const WaveCombination& v,
                            const Cutoff& chi);

WaveSpec make_wave(std::shared_ptr<const CrossSectionSpectrum> section, const PencilPoint& point,
                   int sigma, int chain = 1);

// Residual max_y |L u| at position t of the limit operator d_t^2 + (Delta_y + k^2)
// applied to u, using the eigenrelation of the transverse mode.
double limit_residual(const WaveSpec& u, double k, double t);

// Power-exponential waves of the strip |Im lambda| < rate normalized as in the
// canonical pairing relations: propagating 1/sqrt(2|lambda|), decaying
// exp(-kappa t)/sqrt(2 kappa) with growing partner i exp(kappa t)/sqrt(2 kappa),
// threshold chains {phi, i t phi}.
std::vector<WaveSpec> strip_waves(std::shared_ptr<const CrossSectionSpectrum> section,
                                  const PencilSpectrum& pencil, double rate);

struct NormalizedBasis {
  std::vector<WaveCombination> incoming;
  std::vector<WaveCombination> outgoing;
  // For each real pencil point (and threshold chain), the sign s with
  // q(u^(sigma), u^(kappa-1-sigma)) = s * i for the canonical chain waves.
  std::vector<std::pair<Complex, int>> chain_signs;
  double pairing_defect = 0.0;

  int size() const { return static_cast<int>(incoming.size()); }
};

// Symplectic normalization of waves spanning the strip: pairing Gram matrix
// H = i Q is diagonalized per transverse mode; positive eigenvalues give
// incoming combinations.
NormalizedBasis normalize_basis(const std::vector<WaveSpec>& waves, double R = 2.0);

// (w_nu -/+ w_{-nu}) / sqrt(2): returns (incoming, outgoing).
std::pair<WaveCombination, WaveCombination> augmented_pairs(const WaveSpec& w_nu,
                                                            const WaveSpec& w_minus_nu);

struct Classification {
  Direction direction = Direction::Unclassified;
  double iq = 0.0;
  std::string diagnostic;
};

Classification classify(const WaveCombination& wave, double R = 2.0);
Classification classify(const WaveSpec& wave, double R = 2.0);

// Canonical pairing matrix of a list of waves (entry (a, b) = q(w_a, w_b) at R).
Eigen::MatrixXcd pairing_matrix(const std::vector<WaveCombination>& waves, double R = 2.0);

}  // namespace augscat
