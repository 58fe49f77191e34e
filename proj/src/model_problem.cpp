#include "augscat/model_problem.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "augscat/error.hpp"

namespace augscat {

namespace {

const Complex kI(0.0, 1.0);

double l2_norm(const Eigen::VectorXcd& f, double h, Eigen::Index from = 0, Eigen::Index to = -1) {
  if (to < 0) to = f.size();
  double acc = 0.0;
  for (Eigen::Index n = from; n < to; ++n) {
    const double w = (n == from || n == to - 1) ? 0.5 : 1.0;
    acc += w * std::norm(f(n));
  }
  return std::sqrt(acc * h);
}

// m_p(z) = int_0^1 exp(z (1 - s)) s^p ds, p = 0..3.
std::array<Complex, 4> kernel_moments(Complex z) {
  std::array<Complex, 4> m{};
  if (std::abs(z) < 0.5) {
    for (int p = 0; p < 4; ++p) {
      Complex term = 1.0 / (p + 1.0);
      Complex acc = term;
      for (int k = 0; k < 40; ++k) {
        term *= z / (k + p + 2.0);
        acc += term;
        if (std::abs(term) < 1e-18 * std::abs(acc)) break;
      }
      m[p] = acc;
    }
    return m;
  }
  m[0] = (std::exp(z) - 1.0) / z;
  for (int p = 1; p < 4; ++p) m[p] = (static_cast<double>(p) * m[p - 1] - 1.0) / z;
  return m;
}

// Lagrange basis coefficients beta[m][p] for nodes s = a, a+1, a+2, a+3.
std::array<std::array<double, 4>, 4> lagrange_coeffs(int a) {
  Eigen::Matrix4d V;
  for (int r = 0; r < 4; ++r) {
    const double s = a + r;
    for (int p = 0; p < 4; ++p) V(r, p) = std::pow(s, p);
  }
  const Eigen::Matrix4d Vi = V.inverse();
  std::array<std::array<double, 4>, 4> beta{};
  for (int m = 0; m < 4; ++m) {
    for (int p = 0; p < 4; ++p) beta[m][p] = Vi(p, m);
  }
  return beta;
}

const std::array<std::array<std::array<double, 4>, 4>, 3>& all_lagrange() {
  static const std::array<std::array<std::array<double, 4>, 4>, 3> table = {
      lagrange_coeffs(0), lagrange_coeffs(-1), lagrange_coeffs(-2)};
  return table;
}

Complex weighted_base(const ScalarWave& w, double t, double rate) {
  Complex acc = 0.0;
  for (const auto& term : w.terms) {
    acc += term.coeff * std::pow(t, term.power) * std::exp((rate + kI * term.lambda) * t);
  }
  return acc;
}

Complex weighted_base_dt(const ScalarWave& w, double t, double rate) {
  Complex acc = 0.0;
  for (const auto& term : w.terms) {
    const Complex e = std::exp((rate + kI * term.lambda) * t);
    acc += term.coeff * (rate + kI * term.lambda) * std::pow(t, term.power) * e;
    if (term.power > 0) {
      acc += term.coeff * static_cast<double>(term.power) * std::pow(t, term.power - 1) * e;
    }
  }
  return acc;
}

double rate_gap(Complex lambda, double rate) {
  const double kappa = lambda.imag();
  return std::min(std::abs(rate - kappa), std::abs(rate + kappa));
}

Complex simpson(const Eigen::VectorXcd& f, double h) {
  const Eigen::Index n = f.size();
  if (n < 2) return 0.0;
  Complex acc = 0.0;
  Eigen::Index last = n - 1;
  if (last % 2 == 1) {
    acc += 0.5 * h * (f(last - 1) + f(last));
    --last;
  }
  for (Eigen::Index i = 0; i + 2 <= last; i += 2) {
    acc += h / 3.0 * (f(i) + 4.0 * f(i + 1) + f(i + 2));
  }
  return acc;
}

double lower_neighbour_im(const CrossSectionSpectrum& sec, double k, double im) {
  std::set<double> ims;
  bool real = false;
  for (const auto& e : sec.entries) {
    if (e.mu < k * k) {
      real = true;
    } else {
      const double kappa = std::sqrt(e.mu - k * k);
      ims.insert(kappa);
      ims.insert(-kappa);
    }
  }
  if (real) ims.insert(0.0);
  double best = -std::numeric_limits<double>::infinity();
  for (double v : ims) {
    if (v < im - 1e-12) best = std::max(best, v);
  }
  if (!std::isfinite(best)) {
    throw InvalidArgument(
        "chain_basis: transverse spectrum too short to bound the weight strip from below");
  }
  return best;
}

}  // namespace

double ArmCoefficientProfile::perturbation(double t) const {
  if (!samples.empty()) {
    if (t <= 0.0) return samples.front();
    const double pos = t / sample_step;
    if (pos >= static_cast<double>(samples.size() - 1)) return samples.back();
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return (1.0 - frac) * samples[i] + frac * samples[i + 1];
  }
  if (amplitude == 0.0) return 0.0;
  return amplitude * std::pow(1.0 + std::max(t, 0.0), -decay_exponent);
}

void ArmCoefficientProfile::validate() const {
  if (!(k_infinity > 0.0)) throw InvalidArgument("k_infinity must be positive");
  if (!samples.empty()) {
    if (!(sample_step > 0.0)) throw InvalidArgument("sampled perturbation needs sample_step > 0");
    // The tail must decay: the sup over the last half must not exceed the sup
    // over the first half.
    const std::size_t half = samples.size() / 2;
    double head = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      (i < half ? head : tail) = std::max(i < half ? head : tail, std::abs(samples[i]));
    }
    if (tail > head && tail > 0.0) {
      throw InvalidArgument("sampled perturbation does not decay along the arm");
    }
    return;
  }
  if (amplitude != 0.0 && !(decay_exponent > 0.0)) {
    throw InvalidArgument("decay_exponent must be positive");
  }
}

double BlendedOperator::k2(double t) const {
  const double r = ramp(t);
  return profile.k_infinity * profile.k_infinity + r * r * profile.perturbation(t);
}

BlendedOperator blend(const ArmCoefficientProfile& profile, double T) {
  profile.validate();
  if (!(T >= 1.0)) throw InvalidArgument("blend: T must be at least 1");
  BlendedOperator op;
  op.profile = profile;
  op.T = T;
  double sup = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const double t = T + 1.0 + 2.0 * i / 2000.0;
    sup = std::max(sup, std::abs(op.delta(t)));
  }
  for (int i = 0; i <= 2000; ++i) {
    const double t = T + 3.0 + 0.05 * i;
    sup = std::max(sup, std::abs(op.delta(t)));
  }
  op.delta_norm_estimate = sup;
  return op;
}

Complex ScalarWave::value(double t) const { return weighted_base(*this, t, 0.0); }
Complex ScalarWave::dt(double t) const { return weighted_base_dt(*this, t, 0.0); }

ScalarWave scalar_wave(const WaveSpec& w) {
  ScalarWave s;
  s.transverse_index = w.transverse_index;
  s.mu = w.section->entries.at(w.transverse_index).mu;
  const Eigen::VectorXcd phi = w.section->entries[w.transverse_index].phi.cast<Complex>();
  for (std::size_t l = 0; l < w.poly_coeffs.size(); ++l) {
    const Complex c = w.section->inner(w.poly_coeffs[l], phi);
    if (c != 0.0) s.terms.push_back({w.normalization * c, w.lambda, static_cast<int>(l)});
  }
  return s;
}

ScalarWave scalar_wave(const WaveCombination& w) {
  ScalarWave s;
  bool first = true;
  for (const auto& [c, wave] : w.terms) {
    ScalarWave part = scalar_wave(wave);
    if (first) {
      s.transverse_index = part.transverse_index;
      s.mu = part.mu;
      first = false;
    } else if (part.transverse_index != s.transverse_index) {
      throw InvalidArgument("scalar_wave: combination mixes transverse modes");
    }
    for (auto t : part.terms) {
      t.coeff *= c;
      s.terms.push_back(t);
    }
  }
  return s;
}

GreenKind green_kind(Complex lambda, double rate) {
  const double kappa = lambda.imag();
  if (std::abs(std::abs(rate) - kappa) <= 1e-12 * std::max(1.0, kappa)) {
    std::ostringstream os;
    os << "weight line " << rate << " meets the pencil point " << lambda.real() << "+"
       << lambda.imag() << "i";
    throw SpectrumCollision(os.str());
  }
  if (rate < -kappa) return GreenKind::Retarded;
  if (rate > kappa) return GreenKind::Advanced;
  return GreenKind::TwoSided;
}

Complex mode_lambda(double k, double mu) {
  const double d = k * k - mu;
  if (d >= 0.0) return Complex(std::sqrt(d), 0.0);
  return Complex(0.0, std::sqrt(-d));
}

Eigen::VectorXcd cumulative_forward(const Eigen::VectorXcd& f, Complex c, double h) {
  const Eigen::Index N = f.size();
  if (N < 4) throw InvalidArgument("cumulative integral needs at least four grid points");
  const Complex z = c * h;
  const Complex E = std::exp(z);
  const auto m = kernel_moments(z);
  const auto& beta = all_lagrange();
  std::array<std::array<Complex, 4>, 3> W{};
  for (int a = 0; a < 3; ++a) {
    for (int q = 0; q < 4; ++q) {
      Complex acc = 0.0;
      for (int p = 0; p < 4; ++p) acc += beta[a][q][p] * m[p];
      W[a][q] = h * acc;
    }
  }
  Eigen::VectorXcd out(N);
  out(0) = 0.0;
  for (Eigen::Index n = 0; n + 1 < N; ++n) {
    int which = 1, offset = -1;
    if (n == 0) {
      which = 0;
      offset = 0;
    } else if (n == N - 2) {
      which = 2;
      offset = -2;
    }
    Complex local = 0.0;
    for (int q = 0; q < 4; ++q) local += W[which][q] * f(n + offset + q);
    out(n + 1) = E * out(n) + local;
  }
  return out;
}

Eigen::VectorXcd cumulative_backward(const Eigen::VectorXcd& f, Complex c, double h) {
  const Eigen::VectorXcd rev = f.reverse();
  return cumulative_forward(rev, -c, h).reverse();
}

ModalSolve limit_inverse(const Eigen::VectorXcd& F, Complex lambda, double rate, double h) {
  const GreenKind kind = green_kind(lambda, rate);
  const Eigen::Index N = F.size();
  ModalSolve out;
  if (std::abs(lambda) < 1e-12) {
    Eigen::VectorXcd t(N), tF(N);
    for (Eigen::Index n = 0; n < N; ++n) {
      t(n) = static_cast<double>(n) * h;
      tF(n) = t(n) * F(n);
    }
    if (kind == GreenKind::Retarded) {
      const Eigen::VectorXcd I = cumulative_forward(F, rate, h);
      const Eigen::VectorXcd J = cumulative_forward(tF, rate, h);
      out.w = t.cwiseProduct(I) - J;
      out.wd = I + rate * out.w;
    } else {
      const Eigen::VectorXcd I = cumulative_backward(F, rate, h);
      const Eigen::VectorXcd J = cumulative_backward(tF, rate, h);
      out.w = J - t.cwiseProduct(I);
      out.wd = rate * out.w - I;
    }
    return out;
  }
  const Complex c1 = rate + kI * lambda;
  const Complex c2 = rate - kI * lambda;
  const Complex s = 1.0 / (2.0 * kI * lambda);
  switch (kind) {
    case GreenKind::Retarded: {
      const Eigen::VectorXcd I1 = cumulative_forward(F, c1, h);
      const Eigen::VectorXcd I2 = cumulative_forward(F, c2, h);
      out.w = s * (I1 - I2);
      out.wd = s * (c1 * I1 - c2 * I2);
      break;
    }
    case GreenKind::TwoSided: {
      const Eigen::VectorXcd I1 = cumulative_forward(F, c1, h);
      const Eigen::VectorXcd I2 = cumulative_backward(F, c2, h);
      out.w = s * (I1 + I2);
      out.wd = s * (c1 * I1 + c2 * I2);
      break;
    }
    case GreenKind::Advanced: {
      const Eigen::VectorXcd I1 = cumulative_backward(F, c1, h);
      const Eigen::VectorXcd I2 = cumulative_backward(F, c2, h);
      out.w = s * (I2 - I1);
      out.wd = s * (c2 * I2 - c1 * I1);
      break;
    }
  }
  return out;
}

Complex NeumannSeriesWave::value(double t) const {
  const double pos = t / dt;
  const auto last = weighted.size() - 1;
  if (pos < -1e-9 || pos > static_cast<double>(last) + 1e-9) {
    throw InvalidArgument("model wave evaluated outside its grid");
  }
  auto n = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(pos)), last - 1);
  n = std::max<Eigen::Index>(n, 0);
  const double s = pos - static_cast<double>(n);
  const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
  const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
  const Complex zw = h00 * weighted(n) + h10 * dt * weighted_dt(n) + h01 * weighted(n + 1) +
                     h11 * dt * weighted_dt(n + 1);
  return std::exp(-rate * t) * zw;
}

Complex NeumannSeriesWave::derivative(double t) const {
  const double pos = t / dt;
  const auto last = weighted.size() - 1;
  if (pos < -1e-9 || pos > static_cast<double>(last) + 1e-9) {
    throw InvalidArgument("model wave evaluated outside its grid");
  }
  auto n = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(pos)), last - 1);
  n = std::max<Eigen::Index>(n, 0);
  const double s = pos - static_cast<double>(n);
  const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
  const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
  const double d00 = 6 * s * s - 6 * s, d10 = 3 * s * s - 4 * s + 1;
  const double d01 = -6 * s * s + 6 * s, d11 = 3 * s * s - 2 * s;
  const Complex zw = h00 * weighted(n) + h10 * dt * weighted_dt(n) + h01 * weighted(n + 1) +
                     h11 * dt * weighted_dt(n + 1);
  const Complex zwd = (d00 * weighted(n) + d01 * weighted(n + 1)) / dt + d10 * weighted_dt(n) +
                      d11 * weighted_dt(n + 1);
  return std::exp(-rate * t) * (zwd - rate * zw);
}

NeumannSeriesWave neumann_series_wave(const BlendedOperator& op, const ScalarWave& base,
                                      double rate, const SeriesOptions& options,
                                      const WaveLabel& label) {
  const double kinf = op.profile.k_infinity;
  const Complex lambda = mode_lambda(kinf, base.mu);
  green_kind(lambda, rate);  // rejects rate-line collisions
  const double gap = rate_gap(lambda, rate);
  const double L = options.L > 0.0 ? options.L : op.T + 3.0 + 40.0 / gap;
  const double h = options.dt;
  if (!(h > 0.0) || L < op.T + 3.0) {
    throw InvalidArgument("neumann_series_wave: truncation must extend past T + 3");
  }
  const auto N = static_cast<Eigen::Index>(std::ceil(L / h)) + 1;

  NeumannSeriesWave z;
  z.base = base;
  z.label = label;
  z.rate = rate;
  z.k_infinity = kinf;
  z.T = op.T;
  z.dt = h;
  Eigen::VectorXcd u(N), ud(N);
  Eigen::VectorXd delta(N);
  for (Eigen::Index n = 0; n < N; ++n) {
    const double t = static_cast<double>(n) * h;
    u(n) = weighted_base(base, t, rate);
    ud(n) = weighted_base_dt(base, t, rate);
    delta(n) = op.delta(t);
  }
  // Norms over the support of the perturbation; the head of the grid carries the
  // unperturbed wave, which would otherwise swamp the corrections.
  const auto win = std::min<Eigen::Index>(static_cast<Eigen::Index>((op.T + 1.0) / h), N - 2);
  Eigen::VectorXcd cur = u, cur_d = ud;
  double prev_diff = -1.0;
  double max_ratio = 0.0;
  int iterations = 0;
  bool converged = false;
  for (int q = 1; q <= options.max_iterations; ++q) {
    const Eigen::VectorXcd F = delta.cast<Complex>().cwiseProduct(cur);
    const ModalSolve corr = limit_inverse(F, lambda, rate, h);
    const Eigen::VectorXcd next = u + corr.w;
    const double diff = l2_norm(next - cur, h, win);
    cur = next;
    cur_d = ud + corr.wd;
    if (diff == 0.0) {
      converged = true;
      break;
    }
    iterations = q;
    if (prev_diff > 0.0) {
      const double ratio = diff / prev_diff;
      max_ratio = std::max(max_ratio, ratio);
      if (q >= 3 && ratio >= 1.0) {
        std::ostringstream os;
        os << "Neumann series does not contract at T = " << op.T << " (ratio " << ratio
           << " after " << q << " iterations); increase T";
        throw ContractionError(os.str());
      }
    }
    if (diff <= options.tol * l2_norm(cur, h, win)) {
      converged = true;
      break;
    }
    prev_diff = diff;
  }
  if (!converged) throw ContractionError("Neumann series did not converge within the iteration limit");
  z.weighted = cur;
  z.weighted_dt = cur_d;
  z.correction = cur - u;
  z.iterations = iterations;
  z.contraction_ratio = max_ratio;

  // Residual of the conjugated blended operator by 6th-order differences.
  static const double d1c[7] = {-1.0 / 60, 3.0 / 20, -3.0 / 4, 0.0, 3.0 / 4, -3.0 / 20, 1.0 / 60};
  static const double d2c[7] = {1.0 / 90, -3.0 / 20, 1.5, -49.0 / 18, 1.5, -3.0 / 20, 1.0 / 90};
  double rmax = 0.0;
  for (Eigen::Index n = 3; n + 3 < N; ++n) {
    Complex d1 = 0.0, d2 = 0.0;
    for (int j = 0; j < 7; ++j) {
      d1 += d1c[j] * cur(n - 3 + j);
      d2 += d2c[j] * cur(n - 3 + j);
    }
    d1 /= h;
    d2 /= h * h;
    const double t = static_cast<double>(n) * h;
    const Complex r = d2 - 2.0 * rate * d1 + (rate * rate + op.k2(t) - base.mu) * cur(n);
    rmax = std::max(rmax, std::abs(r));
  }
  const double zmax = cur.cwiseAbs().maxCoeff();
  z.residual = zmax > 0.0 ? rmax / (zmax * std::max(1.0, kinf * kinf)) : 0.0;

  const double corr_norm = l2_norm(z.correction, h);
  if (corr_norm > 0.0) {
    const auto mid = static_cast<Eigen::Index>(std::ceil((op.T + 3.0 + L) / 2.0 / h));
    z.tail_ratio = l2_norm(z.correction, h, std::min(mid, N - 1), N) / corr_norm;
  }
  return z;
}

std::vector<NeumannSeriesWave> model_basis(const BlendedOperator& op,
                                           std::shared_ptr<const CrossSectionSpectrum> section,
                                           double gamma, const SeriesOptions& options) {
  const double kinf = op.profile.k_infinity;
  const PencilSpectrum pencil = pencil_spectrum(*section, kinf, gamma);
  const NormalizedBasis basis = normalize_basis(strip_waves(section, pencil, gamma));
  std::vector<NeumannSeriesWave> out;
  for (int j = 0; j < basis.size(); ++j) {
    WaveLabel label;
    label.kind = WaveLabel::Kind::BasisIncoming;
    label.index = j;
    out.push_back(neumann_series_wave(op, scalar_wave(basis.incoming[j]), -gamma, options, label));
  }
  for (int j = 0; j < basis.size(); ++j) {
    WaveLabel label;
    label.kind = WaveLabel::Kind::BasisOutgoing;
    label.index = j;
    out.push_back(neumann_series_wave(op, scalar_wave(basis.outgoing[j]), -gamma, options, label));
  }
  return out;
}

std::vector<NeumannSeriesWave> chain_basis(const BlendedOperator& op,
                                           std::shared_ptr<const CrossSectionSpectrum> section,
                                           double gamma, const SeriesOptions& options) {
  const double kinf = op.profile.k_infinity;
  const PencilSpectrum pencil = pencil_spectrum(*section, kinf, gamma);
  const std::vector<WaveSpec> waves = strip_waves(section, pencil, gamma);
  std::vector<NeumannSeriesWave> out;
  int index = 0;
  for (const auto& w : waves) {
    const double im = w.lambda.imag();
    const double alpha = 0.5 * (im + lower_neighbour_im(*section, kinf, im));
    WaveLabel label;
    label.kind = WaveLabel::Kind::Chain;
    label.index = index++;
    label.lambda = w.lambda;
    label.sigma = w.sigma;
    label.chain_length = w.chain_length;
    label.sign = (im == 0.0 && w.lambda.real() < 0.0) ? -1 : 1;
    out.push_back(neumann_series_wave(op, scalar_wave(w), alpha, options, label));
  }
  return out;
}

Complex model_pairing(const NeumannSeriesWave& a, const NeumannSeriesWave& b, double R) {
  if (a.transverse_index() != b.transverse_index()) return 0.0;
  return a.derivative(R) * std::conj(b.value(R)) - a.value(R) * std::conj(b.derivative(R));
}

namespace {

Complex expected_pairing(const WaveLabel& a, const WaveLabel& b, bool same_mode) {
  using K = WaveLabel::Kind;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const bool a_basis = a.kind == K::BasisIncoming || a.kind == K::BasisOutgoing;
  const bool b_basis = b.kind == K::BasisIncoming || b.kind == K::BasisOutgoing;
  if (a_basis && b_basis) {
    if (a.kind == b.kind && a.index == b.index) {
      return a.kind == K::BasisIncoming ? -kI : kI;
    }
    return 0.0;
  }
  if (a.kind == K::Chain && b.kind == K::Chain) {
    if (!same_mode) return 0.0;
    const bool a_real = a.lambda.imag() == 0.0, b_real = b.lambda.imag() == 0.0;
    if (a_real != b_real) return 0.0;
    const bool chain_match = a.chain_length == b.chain_length && a.sigma + b.sigma == a.chain_length - 1;
    if (a_real) {
      return (a.lambda == b.lambda && chain_match) ? Complex(0.0, a.sign) : Complex(0.0);
    }
    return (std::abs(b.lambda - std::conj(a.lambda)) < 1e-12 && chain_match) ? kI : Complex(0.0);
  }
  return Complex(nan, nan);
}

}  // namespace

PairingReport verify_pairings(const std::vector<NeumannSeriesWave>& waves, double R, double far_R) {
  PairingReport rep;
  const auto n = static_cast<Eigen::Index>(waves.size());
  rep.values.resize(n, n);
  rep.expected.resize(n, n);
  rep.R = R;
  double T = 0.0, L = std::numeric_limits<double>::infinity();
  for (const auto& w : waves) {
    T = std::max(T, w.T);
    L = std::min(L, w.length());
  }
  rep.far_R = far_R > 0.0 ? far_R : T + 4.0;
  const bool far_ok = rep.far_R <= L;
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      const bool same = waves[a].transverse_index() == waves[b].transverse_index();
      rep.values(a, b) = model_pairing(waves[a], waves[b], R);
      rep.expected(a, b) = expected_pairing(waves[a].label, waves[b].label, same);
      if (std::isnan(rep.expected(a, b).real())) continue;
      rep.max_deviation = std::max(rep.max_deviation, std::abs(rep.values(a, b) - rep.expected(a, b)));
      if (!far_ok || !same) continue;
      // Far evaluation only where products of the traces stay well conditioned.
      const double scale = (std::abs(waves[a].value(rep.far_R)) + std::abs(waves[a].derivative(rep.far_R))) *
                           (std::abs(waves[b].value(rep.far_R)) + std::abs(waves[b].derivative(rep.far_R)));
      if (scale > 1e6) continue;
      const Complex far = model_pairing(waves[a], waves[b], rep.far_R);
      rep.far_max_deviation = std::max(rep.far_max_deviation, std::abs(far - rep.expected(a, b)));
      ++rep.far_pairs_checked;
    }
  }
  return rep;
}

ExpansionTable expand_in_chain_waves(const std::vector<NeumannSeriesWave>& z_basis,
                                     const std::vector<NeumannSeriesWave>& w_basis, double R) {
  std::vector<const NeumannSeriesWave*> zp, zm;
  for (const auto& z : z_basis) {
    if (z.label.kind == WaveLabel::Kind::BasisIncoming) zp.push_back(&z);
    if (z.label.kind == WaveLabel::Kind::BasisOutgoing) zm.push_back(&z);
  }
  auto by_index = [](const NeumannSeriesWave* x, const NeumannSeriesWave* y) {
    return x->label.index < y->label.index;
  };
  std::sort(zp.begin(), zp.end(), by_index);
  std::sort(zm.begin(), zm.end(), by_index);
  const auto nw = static_cast<Eigen::Index>(w_basis.size());
  const auto M = static_cast<Eigen::Index>(zp.size());
  ExpansionTable tab;
  tab.a = Eigen::MatrixXcd::Zero(nw, M);
  tab.b = Eigen::MatrixXcd::Zero(nw, static_cast<Eigen::Index>(zm.size()));
  tab.residual = Eigen::VectorXd::Zero(nw);
  for (Eigen::Index r = 0; r < nw; ++r) {
    const auto& w = w_basis[r];
    for (Eigen::Index j = 0; j < M; ++j) tab.a(r, j) = kI * model_pairing(w, *zp[j], R);
    for (Eigen::Index j = 0; j < tab.b.cols(); ++j) tab.b(r, j) = -kI * model_pairing(w, *zm[j], R);
    if (M == 0) continue;
    const double rho = zp[0]->rate;
    const double h = w.dt;
    Eigen::Index N = w.weighted.size();
    for (const auto* z : zp) N = std::min<Eigen::Index>(N, z->weighted.size());
    for (const auto* z : zm) N = std::min<Eigen::Index>(N, z->weighted.size());
    Eigen::VectorXcd diff(N), ref(N);
    for (Eigen::Index n = 0; n < N; ++n) {
      const double t = static_cast<double>(n) * h;
      const Complex wv = std::exp((rho - w.rate) * t) * w.weighted(n);
      Complex acc = 0.0;
      for (Eigen::Index j = 0; j < M; ++j) {
        if (zp[j]->transverse_index() == w.transverse_index()) acc += tab.a(r, j) * zp[j]->weighted(n);
      }
      for (Eigen::Index j = 0; j < tab.b.cols(); ++j) {
        if (zm[j]->transverse_index() == w.transverse_index()) acc += tab.b(r, j) * zm[j]->weighted(n);
      }
      diff(n) = wv - acc;
      ref(n) = wv;
    }
    const double rn = l2_norm(ref, h);
    tab.residual(r) = rn > 0.0 ? l2_norm(diff, h) / rn : l2_norm(diff, h);
    tab.max_residual = std::max(tab.max_residual, tab.residual(r));
  }
  return tab;
}

ModalField localized_source(const NeumannSeriesWave& z, const Cutoff& chi) {
  ModalField F;
  F.dt = z.dt;
  ModalComponent c;
  c.transverse_index = z.transverse_index();
  c.mu = z.base.mu;
  const Eigen::Index N = z.weighted.size();
  c.values = Eigen::VectorXcd::Zero(N);
  for (Eigen::Index n = 0; n < N; ++n) {
    const double t = static_cast<double>(n) * z.dt;
    if (t <= 1.0 || t >= 2.0) continue;
    c.values(n) = -(2.0 * chi.d1(t) * z.derivative(t) + chi.d2(t) * z.value(t));
  }
  F.components.push_back(std::move(c));
  return F;
}

Complex volume_inner(const ModalField& F, const NeumannSeriesWave& z) {
  if (std::abs(F.dt - z.dt) > 1e-12 * z.dt) {
    throw InvalidArgument("volume_inner: source and wave grids differ");
  }
  Complex acc = 0.0;
  for (const auto& c : F.components) {
    if (c.transverse_index != z.transverse_index()) continue;
    const Eigen::Index N = std::min<Eigen::Index>(c.values.size(), z.weighted.size());
    Eigen::VectorXcd integrand = Eigen::VectorXcd::Zero(N);
    for (Eigen::Index n = 0; n < N; ++n) {
      if (c.values(n) == 0.0) continue;
      const double t = static_cast<double>(n) * z.dt;
      integrand(n) = c.values(n) * std::conj(std::exp(-z.rate * t) * z.weighted(n));
    }
    acc += simpson(integrand, z.dt);
  }
  return acc;
}

namespace {

// Solution of L_T u = F in the class with weight e^{rate t}, returned weighted.
Eigen::VectorXcd solve_model(const BlendedOperator& op, const ModalComponent& c, double dt,
                             Eigen::Index N, double rate, double tol, int max_iterations,
                             int& iterations) {
  const Complex lambda = mode_lambda(op.profile.k_infinity, c.mu);
  Eigen::VectorXcd Fw = Eigen::VectorXcd::Zero(N);
  Eigen::VectorXcd delta = Eigen::VectorXcd::Zero(N);
  for (Eigen::Index n = 0; n < N; ++n) {
    const double t = static_cast<double>(n) * dt;
    if (n < c.values.size() && c.values(n) != 0.0) Fw(n) = std::exp(rate * t) * c.values(n);
    delta(n) = op.delta(t);
  }
  Eigen::VectorXcd cur = limit_inverse(Fw, lambda, rate, dt).w;
  for (int q = 1; q <= max_iterations; ++q) {
    const Eigen::VectorXcd next = limit_inverse(delta.cwiseProduct(cur) + Fw, lambda, rate, dt).w;
    const double diff = l2_norm(next - cur, dt);
    cur = next;
    iterations = std::max(iterations, q);
    if (diff <= tol * std::max(l2_norm(cur, dt), std::numeric_limits<double>::min())) return cur;
  }
  throw ContractionError("model problem iteration did not converge");
}

}  // namespace

ModelDecomposition decompose_model_solution(const BlendedOperator& op, const ModalField& rhs,
                                            double gamma,
                                            const std::vector<NeumannSeriesWave>& z_basis,
                                            const SeriesOptions& options) {
  if (z_basis.empty() && rhs.components.empty()) return {};
  const double dt = rhs.dt;
  Eigen::Index N = 0;
  for (const auto& z : z_basis) {
    if (std::abs(z.dt - dt) > 1e-12 * dt) throw InvalidArgument("decompose: grids differ");
    if (std::abs(z.rate + gamma) > 1e-12) throw InvalidArgument("decompose: z basis built at another rate");
    N = N == 0 ? z.weighted.size() : std::min(N, z.weighted.size());
  }
  if (N == 0) {
    const double L = options.L > 0.0 ? options.L : op.T + 3.0 + 40.0 / gamma;
    N = static_cast<Eigen::Index>(std::ceil(L / dt)) + 1;
  }
  for (const auto& c : rhs.components) {
    const Complex lambda = mode_lambda(op.profile.k_infinity, c.mu);
    green_kind(lambda, gamma);
    for (Eigen::Index n = N; n < c.values.size(); ++n) {
      if (c.values(n) != 0.0) throw InvalidArgument("decompose: source extends past the truncation");
    }
  }

  ModelDecomposition out;
  out.u.dt = out.v.dt = dt;
  std::vector<const NeumannSeriesWave*> zp, zm;
  for (const auto& z : z_basis) {
    if (z.label.kind == WaveLabel::Kind::BasisIncoming) zp.push_back(&z);
    if (z.label.kind == WaveLabel::Kind::BasisOutgoing) zm.push_back(&z);
  }
  auto by_index = [](const NeumannSeriesWave* x, const NeumannSeriesWave* y) {
    return x->label.index < y->label.index;
  };
  std::sort(zp.begin(), zp.end(), by_index);
  std::sort(zm.begin(), zm.end(), by_index);
  out.a.resize(static_cast<Eigen::Index>(zp.size()));
  out.b.resize(static_cast<Eigen::Index>(zm.size()));
  for (std::size_t j = 0; j < zp.size(); ++j) out.a(j) = kI * volume_inner(rhs, *zp[j]);
  for (std::size_t j = 0; j < zm.size(); ++j) out.b(j) = -kI * volume_inner(rhs, *zm[j]);

  double res_num = 0.0, res_den = 0.0, rem = 0.0;
  for (const auto& c : rhs.components) {
    const Eigen::VectorXcd uw = solve_model(op, c, dt, N, -gamma, options.tol, options.max_iterations,
                                            out.iterations);
    const Eigen::VectorXcd vw = solve_model(op, c, dt, N, gamma, options.tol, options.max_iterations,
                                            out.iterations);
    ModalComponent uc{c.transverse_index, c.mu, Eigen::VectorXcd(N)};
    ModalComponent vc{c.transverse_index, c.mu, Eigen::VectorXcd(N)};
    Eigen::VectorXcd diff(N);
    for (Eigen::Index n = 0; n < N; ++n) {
      const double t = static_cast<double>(n) * dt;
      uc.values(n) = std::exp(gamma * t) * uw(n);
      vc.values(n) = std::exp(-gamma * t) * vw(n);
      Complex waves = 0.0;
      for (std::size_t j = 0; j < zp.size(); ++j) {
        if (zp[j]->transverse_index() == c.transverse_index) waves += out.a(j) * zp[j]->weighted(n);
      }
      for (std::size_t j = 0; j < zm.size(); ++j) {
        if (zm[j]->transverse_index() == c.transverse_index) waves += out.b(j) * zm[j]->weighted(n);
      }
      diff(n) = uw(n) - std::exp(-2.0 * gamma * t) * vw(n) - waves;
    }
    res_num += std::pow(l2_norm(diff, dt), 2);
    res_den += std::pow(l2_norm(uw, dt), 2);
    rem += std::pow(l2_norm(vw, dt), 2);
    out.u.components.push_back(std::move(uc));
    out.v.components.push_back(std::move(vc));
  }
  out.representation_residual = res_den > 0.0 ? std::sqrt(res_num / res_den) : std::sqrt(res_num);
  out.remainder_norm = std::sqrt(rem);
  return out;
}

ChainDecomposition decompose_in_chain_waves(const ModalField& rhs,
                                            const std::vector<NeumannSeriesWave>& w_basis,
                                            const ModelDecomposition& model) {
  ChainDecomposition out;
  const auto n = static_cast<Eigen::Index>(w_basis.size());
  out.d = Eigen::VectorXcd::Zero(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& lab = w_basis[r].label;
    const bool real = lab.lambda.imag() == 0.0;
    const Complex target = real ? lab.lambda : std::conj(lab.lambda);
    const int partner_sigma = lab.chain_length - lab.sigma - 1;
    const NeumannSeriesWave* partner = nullptr;
    for (const auto& w : w_basis) {
      if (w.transverse_index() == w_basis[r].transverse_index() &&
          std::abs(w.label.lambda - target) < 1e-12 && w.label.sigma == partner_sigma) {
        partner = &w;
      }
    }
    if (!partner) throw InvalidArgument("decompose_in_chain_waves: chain basis lacks a dual wave");
    // (F, X) = sum_mu d_mu q(w_mu, X) and q(w_nu, partner) = sign * i.
    out.d(r) = -(real ? static_cast<double>(lab.sign) : 1.0) * kI * volume_inner(rhs, *partner);
  }
  // Representation u - v - sum d_nu w_nu, measured with the weight of u.
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < model.u.components.size(); ++c) {
    const auto& uc = model.u.components[c];
    const auto& vc = model.v.components[c];
    const double dt = model.u.dt;
    Eigen::Index N = uc.values.size();
    for (const auto& w : w_basis) N = std::min<Eigen::Index>(N, w.weighted.size());
    double gamma = 0.0;
    for (const auto& w : w_basis) gamma = std::max(gamma, std::abs(w.rate));
    Eigen::VectorXcd diff(N), ref(N);
    // Weight e^{-g t} with g above every chain-wave growth rate keeps products finite.
    const double g = gamma;
    for (Eigen::Index m = 0; m < N; ++m) {
      const double t = static_cast<double>(m) * dt;
      Complex acc = 0.0;
      for (Eigen::Index r = 0; r < n; ++r) {
        const auto& w = w_basis[r];
        if (w.transverse_index() != uc.transverse_index) continue;
        acc += out.d(r) * std::exp((-g - w.rate) * t) * w.weighted(m);
      }
      const double e = std::exp(-g * t);
      diff(m) = e * (uc.values(m) - vc.values(m)) - acc;
      ref(m) = e * uc.values(m);
    }
    num += std::pow(l2_norm(diff, dt), 2);
    den += std::pow(l2_norm(ref, dt), 2);
  }
  out.representation_residual = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  return out;
}

Eigen::VectorXcd march_blended(const BlendedOperator& op, double h, double mu_h, Complex f0,
                               Complex f1, int rows) {
  Eigen::VectorXcd f(rows);
  if (rows > 0) f(0) = f0;
  if (rows > 1) f(1) = f1;
  for (int j = 1; j + 1 < rows; ++j) {
    const double t = (j + 0.5) * h;
    f(j + 1) = (2.0 - h * h * (op.k2(t) - mu_h)) * f(j) - f(j - 1);
  }
  return f;
}

Complex decaying_ratio(const BlendedOperator& op, double h, double mu_h, int J) {
  auto coeff = [&](int j) { return 2.0 - h * h * (op.k2((j + 0.5) * h) - mu_h); };
  const double c_far = coeff(J);
  if (!(c_far > 2.0)) throw InvalidArgument("decaying_ratio: mode is not evanescent at the truncation");
  const double kappa = std::acosh(0.5 * c_far) / h;
  const int J_far = J + std::min(200000, static_cast<int>(std::ceil(40.0 / (kappa * h))) + 4);
  const double cf = coeff(J_far);
  const double r = 0.5 * (cf - std::sqrt(cf * cf - 4.0));
  double next = r, cur = 1.0;  // f(J_far + 1), f(J_far)
  for (int j = J_far; j > J - 1; --j) {
    const double prev = coeff(j) * cur - next;
    next = cur;
    cur = prev;
    if (std::abs(cur) > 1e100) {
      cur *= 1e-100;
      next *= 1e-100;
    }
  }
  // cur = f(J - 1), next = f(J)
  return next / cur;
}

}  // namespace augscat
