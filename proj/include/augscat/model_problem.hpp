#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <vector>

#include "augscat/cross_section.hpp"
#include "augscat/cutoff.hpp"
#include "augscat/wave_basis.hpp"

namespace augscat {

// k^2(t) = k_infinity^2 + p(t) along one arm, with p(t) = amplitude * (1 + t)^(-decay_exponent)
// unless explicit samples are supplied.
struct ArmCoefficientProfile {
  double k_infinity = 1.0;
  double amplitude = 0.0;
  double decay_exponent = 1.0;
  std::vector<double> samples;  // p on t = i * sample_step; constant extension past the end
  double sample_step = 0.0;

  double perturbation(double t) const;
  void validate() const;
};

struct BlendedOperator {
  ArmCoefficientProfile profile;
  double T = 1.0;
  Cutoff psi;
  double delta_norm_estimate = 0.0;

  double ramp(double t) const { return psi.value(t - T); }
  // k_T^2(t) = k_inf^2 + psi(t - T)^2 p(t)
  double k2(double t) const;
  double k2_true(double t) const { return profile.k_infinity * profile.k_infinity + profile.perturbation(t); }
  // Multiplier of the perturbation: (L - L_T) u = delta(t) u.
  double delta(double t) const { return -ramp(t) * ramp(t) * profile.perturbation(t); }
};

BlendedOperator blend(const ArmCoefficientProfile& profile, double T);

// 1-D profile of a limit-problem wave in one transverse mode:
// f(t) = sum coeff * t^power * exp(i lambda t).
struct ScalarWave {
  struct Term {
    Complex coeff;
    Complex lambda;
    int power = 0;
  };
  int transverse_index = 0;
  double mu = 0.0;
  std::vector<Term> terms;

  Complex value(double t) const;
  Complex dt(double t) const;
};

ScalarWave scalar_wave(const WaveSpec& w);
ScalarWave scalar_wave(const WaveCombination& w);

enum class GreenKind { Retarded, TwoSided, Advanced };

// Which limit-problem Green function realizes the inverse on e^{-rate t} L^2 for a
// mode with pencil eigenvalue lambda (Im lambda >= 0).
GreenKind green_kind(Complex lambda, double rate);

// Principal root lambda = sqrt(k^2 - mu) with Im lambda >= 0 (and lambda >= 0 if real).
Complex mode_lambda(double k, double mu);

// Cumulative exponential-kernel integrals on a uniform grid t_n = n h with cubic
// interpolation of f: out_n = int_0^{t_n} exp(c (t_n - s)) f(s) ds.
Eigen::VectorXcd cumulative_forward(const Eigen::VectorXcd& f, Complex c, double h);
// out_n = int_{t_n}^{t_N} exp(c (t_n - s)) f(s) ds.
Eigen::VectorXcd cumulative_backward(const Eigen::VectorXcd& f, Complex c, double h);

struct ModalSolve {
  Eigen::VectorXcd w;   // e^{rate t} * solution
  Eigen::VectorXcd wd;  // derivative of the weighted solution
};

// Solves w'' + lambda^2 w = F in the class e^{rate t} L^2, given
// F_weighted = e^{rate t} F on t_n = n h; returns weighted quantities.
ModalSolve limit_inverse(const Eigen::VectorXcd& F_weighted, Complex lambda, double rate, double h);

struct WaveLabel {
  enum class Kind { BasisIncoming, BasisOutgoing, Chain, Other };
  Kind kind = Kind::Other;
  int index = 0;
  Complex lambda;
  int sigma = 0;
  int chain_length = 1;
  int sign = 1;
};

struct SeriesOptions {
  double L = -1.0;  // negative: T + 3 + 40 / gap
  double tol = 1e-8;
  double dt = 1e-3;
  int max_iterations = 200;
};

struct NeumannSeriesWave {
  ScalarWave base;
  WaveLabel label;
  double rate = 0.0;  // stored fields carry the weight e^{rate t}
  double k_infinity = 0.0;
  double T = 0.0;
  double dt = 0.0;
  Eigen::VectorXcd weighted;     // e^{rate t} z
  Eigen::VectorXcd weighted_dt;  // derivative of the weighted field
  Eigen::VectorXcd correction;   // e^{rate t} (z - base)
  int iterations = 0;
  double contraction_ratio = 0.0;
  double residual = 0.0;    // max |e^{rate t} L_T z| / max |e^{rate t} z|
  double tail_ratio = 0.0;  // correction norm on the far half of [T+3, L] over its full norm

  int transverse_index() const { return base.transverse_index; }
  double length() const { return dt * static_cast<double>(weighted.size() - 1); }
  Complex value(double t) const;
  Complex derivative(double t) const;
};

NeumannSeriesWave neumann_series_wave(const BlendedOperator& op, const ScalarWave& base,
                                      double rate, const SeriesOptions& options = {},
                                      const WaveLabel& label = {});

// z_j^+ (incoming) then z_j^- (outgoing) built from the normalized strip basis at rate -gamma.
std::vector<NeumannSeriesWave> model_basis(const BlendedOperator& op,
                                           std::shared_ptr<const CrossSectionSpectrum> section,
                                           double gamma, const SeriesOptions& options = {});

// Chain waves w_nu for all pencil points with |Im lambda| < gamma, each built at the
// rate alpha_nu halfway between Im lambda_nu and the next lower pencil point.
std::vector<NeumannSeriesWave> chain_basis(const BlendedOperator& op,
                                           std::shared_ptr<const CrossSectionSpectrum> section,
                                           double gamma, const SeriesOptions& options = {});

// Pairing q(z_a, z_b) of two model-problem waves at cross-section R.
Complex model_pairing(const NeumannSeriesWave& a, const NeumannSeriesWave& b, double R);

struct PairingReport {
  Eigen::MatrixXcd values;
  Eigen::MatrixXcd expected;  // NaN where no canonical value applies
  double R = 0.0;
  double max_deviation = 0.0;
  double far_R = 0.0;
  double far_max_deviation = 0.0;
  int far_pairs_checked = 0;
};

// far_R <= 0 selects T + 4.
PairingReport verify_pairings(const std::vector<NeumannSeriesWave>& waves, double R = 2.0,
                              double far_R = -1.0);

struct ExpansionTable {
  Eigen::MatrixXcd a;  // rows: chain waves, columns: z^+ index
  Eigen::MatrixXcd b;  // rows: chain waves, columns: z^- index
  Eigen::VectorXd residual;
  double max_residual = 0.0;
};

ExpansionTable expand_in_chain_waves(const std::vector<NeumannSeriesWave>& z_basis,
                                     const std::vector<NeumannSeriesWave>& w_basis,
                                     double R = 2.0);

struct ModalComponent {
  int transverse_index = 0;
  double mu = 0.0;
  Eigen::VectorXcd values;  // on t_n = n * dt
};

struct ModalField {
  double dt = 0.0;
  std::vector<ModalComponent> components;
};

// Source L_T((1 - chi) z) for a model-problem wave z. The default cutoff is the
// C-infinity ramp: the solver interpolates F by cubics, and the kinks of a C^2
// ramp cost about 1e-6 relative accuracy.
ModalField localized_source(const NeumannSeriesWave& z,
                            const Cutoff& chi = Cutoff{CutoffKind::Exponential});

struct ModelDecomposition {
  Eigen::VectorXcd a;
  Eigen::VectorXcd b;
  ModalField u;  // solution in the class e^{gamma t} growth allowed (rate -gamma)
  ModalField v;  // decaying solution (rate +gamma)
  double remainder_norm = 0.0;
  double representation_residual = 0.0;
  int iterations = 0;
};

ModelDecomposition decompose_model_solution(const BlendedOperator& op, const ModalField& rhs,
                                            double gamma,
                                            const std::vector<NeumannSeriesWave>& z_basis,
                                            const SeriesOptions& options = {});

struct ChainDecomposition {
  Eigen::VectorXcd d;
  double representation_residual = 0.0;
};

// d_nu = -i (F, w_{-nu}^{(kappa - sigma - 1)}) for non-real lambda_nu and
// d_nu = -sign * i (F, w_nu^{(kappa - sigma - 1)}) for real lambda_nu, where
// q(w_nu, w_nu^{(kappa - sigma - 1)}) = sign * i.
ChainDecomposition decompose_in_chain_waves(const ModalField& rhs,
                                            const std::vector<NeumannSeriesWave>& w_basis,
                                            const ModelDecomposition& model);

// Volume inner product (F, z) = sum over modes of int F conj(z) dt.
Complex volume_inner(const ModalField& F, const NeumannSeriesWave& z);

// Discrete (mesh step h, rows t_j = (j + 1/2) h) continuation of a mode-n solution
// of the blended recurrence from its first two rows.
Eigen::VectorXcd march_blended(const BlendedOperator& op, double h, double mu_h, Complex f0,
                               Complex f1, int rows);

// Ratio f_J / f_{J-1} of the decaying discrete solution of the blended recurrence.
Complex decaying_ratio(const BlendedOperator& op, double h, double mu_h, int J);

}  // namespace augscat
