#include "augscat/wave_basis.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "augscat/error.hpp"
#include "augscat/quadrature.hpp"

namespace augscat {

namespace {

const Complex kI(0.0, 1.0);

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// Coefficients s_l with poly_coeffs[l] = s_l * phi_n.
std::vector<Complex> scalar_coeffs(const WaveSpec& w) {
  const auto& sec = *w.section;
  const Eigen::VectorXcd phi = sec.entries.at(w.transverse_index).phi.cast<Complex>();
  std::vector<Complex> s;
  for (const auto& p : w.poly_coeffs) s.push_back(sec.inner(p, phi));
  return s;
}

void require_section(const WaveSpec& w) {
  if (!w.section) throw InvalidArgument("wave has no cross-section data");
}

}  // namespace

std::string to_string(Direction d) {
  switch (d) {
    case Direction::Incoming:
      return "incoming";
    case Direction::Outgoing:
      return "outgoing";
    case Direction::Unclassified:
      return "unclassified";
  }
  return "unclassified";
}

Eigen::VectorXcd WaveSpec::value(double t) const {
  require_section(*this);
  Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(section->points());
  double tp = 1.0;
  for (const auto& p : poly_coeffs) {
    acc += tp * p;
    tp *= t;
  }
  return normalization * std::exp(kI * lambda * t) * acc;
}

Eigen::VectorXcd WaveSpec::dt(double t) const {
  require_section(*this);
  Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(section->points());
  Eigen::VectorXcd dacc = Eigen::VectorXcd::Zero(section->points());
  double tp = 1.0;
  for (std::size_t l = 0; l < poly_coeffs.size(); ++l) {
    acc += tp * poly_coeffs[l];
    if (l + 1 < poly_coeffs.size()) dacc += static_cast<double>(l + 1) * tp * poly_coeffs[l + 1];
    tp *= t;
  }
  return normalization * std::exp(kI * lambda * t) * (kI * lambda * acc + dacc);
}

Complex WaveSpec::profile(double t) const {
  const auto s = scalar_coeffs(*this);
  Complex acc = 0.0;
  double tp = 1.0;
  for (const auto& c : s) {
    acc += tp * c;
    tp *= t;
  }
  return normalization * std::exp(kI * lambda * t) * acc;
}

Complex WaveSpec::profile_dt(double t) const {
  const auto s = scalar_coeffs(*this);
  Complex acc = 0.0, dacc = 0.0;
  double tp = 1.0;
  for (std::size_t l = 0; l < s.size(); ++l) {
    acc += tp * s[l];
    if (l + 1 < s.size()) dacc += static_cast<double>(l + 1) * tp * s[l + 1];
    tp *= t;
  }
  return normalization * std::exp(kI * lambda * t) * (kI * lambda * acc + dacc);
}

Complex WaveSpec::profile_dtt(double t) const {
  const auto s = scalar_coeffs(*this);
  Complex acc = 0.0, dacc = 0.0, ddacc = 0.0;
  const int n = static_cast<int>(s.size());
  for (int l = 0; l < n; ++l) {
    acc += std::pow(t, l) * s[l];
    if (l >= 1) dacc += static_cast<double>(l) * std::pow(t, l - 1) * s[l];
    if (l >= 2) ddacc += static_cast<double>(l * (l - 1)) * std::pow(t, l - 2) * s[l];
  }
  const Complex il = kI * lambda;
  return normalization * std::exp(il * t) * (il * il * acc + 2.0 * il * dacc + ddacc);
}

int WaveCombination::arm_id() const {
  if (terms.empty()) throw InvalidArgument("empty wave combination");
  return terms.front().second.arm_id;
}

const CrossSectionSpectrum& WaveCombination::section() const {
  if (terms.empty()) throw InvalidArgument("empty wave combination");
  return *terms.front().second.section;
}

Eigen::VectorXcd WaveCombination::value(double t) const {
  Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(section().points());
  for (const auto& [c, w] : terms) acc += c * w.value(t);
  return acc;
}

Eigen::VectorXcd WaveCombination::dt(double t) const {
  Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(section().points());
  for (const auto& [c, w] : terms) acc += c * w.dt(t);
  return acc;
}

WaveCombination as_combination(const WaveSpec& w) {
  WaveCombination c;
  c.terms.push_back({1.0, w});
  c.direction = w.direction;
  return c;
}

Trace trace_at(const WaveSpec& u, double R) {
  if (R < 0.0) throw InvalidArgument("cross-section position lies outside the arm");
  require_section(u);
  return {u.arm_id, u.section.get(), u.value(R), u.dt(R)};
}

Trace trace_at(const WaveCombination& u, double R) {
  if (R < 0.0) throw InvalidArgument("cross-section position lies outside the arm");
  return {u.arm_id(), &u.section(), u.value(R), u.dt(R)};
}

Trace trace_at(const GridField& u, double R) {
  const auto rows = u.samples.cols();
  if (!u.section || rows < 5 || !(u.dt > 0.0)) {
    throw InvalidArgument("grid field needs a section and at least five rows");
  }
  const double pos = (R - u.t0) / u.dt;
  const auto m = static_cast<Eigen::Index>(std::llround(pos));
  if (m < 0 || m >= rows || std::abs(pos - static_cast<double>(m)) > 1e-6) {
    std::ostringstream os;
    os << "cross-section R = " << R << " is not a row of the grid field";
    throw InvalidArgument(os.str());
  }
  // 5-point stencils: offsets o..o+4 containing m.
  const Eigen::Index o = std::clamp<Eigen::Index>(m - 2, 0, rows - 5);
  static const double coeffs[5][5] = {
      {-25.0 / 12, 4.0, -3.0, 4.0 / 3, -0.25},
      {-0.25, -5.0 / 6, 1.5, -0.5, 1.0 / 12},
      {1.0 / 12, -2.0 / 3, 0.0, 2.0 / 3, -1.0 / 12},
      {-1.0 / 12, 0.5, -1.5, 5.0 / 6, 0.25},
      {0.25, -4.0 / 3, 3.0, -4.0, 25.0 / 12},
  };
  const auto row = m - o;
  Eigen::VectorXcd d = Eigen::VectorXcd::Zero(u.samples.rows());
  for (int q = 0; q < 5; ++q) d += coeffs[row][q] * u.samples.col(o + q);
  return {u.arm_id, u.section.get(), u.samples.col(m), d / u.dt};
}

Complex flux_value(const Trace& u, const Trace& v) {
  if (u.arm_id != v.arm_id) return 0.0;
  const auto& w = u.section->weights;
  if (w.size() != u.value.size() || w.size() != v.value.size()) {
    throw InvalidArgument("flux pairing of fields on different cross-section grids");
  }
  Complex acc = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    acc += w(i) * (u.dt(i) * std::conj(v.value(i)) - u.value(i) * std::conj(v.dt(i)));
  }
  return acc;
}

Complex flux_pairing_volume(const WaveCombination& u, const WaveCombination& v,
                            const Cutoff& chi) {
  if (u.arm_id() != v.arm_id()) return 0.0;
  const auto& w = u.section().weights;
  const QuadratureRule rule = composite_gauss(1.0, 2.0, 16, 12);
  Complex acc = 0.0;
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    const double t = rule.nodes[q];
    const double c = chi.value(t), c1 = chi.d1(t), c2 = chi.d2(t);
    const Eigen::VectorXcd uv = u.value(t), ut = u.dt(t);
    const Eigen::VectorXcd vv = v.value(t), vt = v.dt(t);
    Complex row = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const Complex Lu = 2.0 * c1 * ut(i) + c2 * uv(i);
      const Complex Lv = 2.0 * c1 * vt(i) + c2 * vv(i);
      row += w(i) * (Lu * c * std::conj(vv(i)) - c * uv(i) * std::conj(Lv));
    }
    acc += rule.weights[q] * row;
  }
  return acc;
}

WaveSpec make_wave(std::shared_ptr<const CrossSectionSpectrum> section, const PencilPoint& point,
                   int sigma, int chain) {
  if (!section) throw InvalidArgument("make_wave: missing cross-section spectrum");
  if (point.transverse_index < 0 ||
      point.transverse_index >= static_cast<int>(section->entries.size())) {
    throw InvalidArgument("make_wave: transverse index out of range");
  }
  if (sigma < 0 || sigma >= point.chain_length || chain < 1 || chain > point.multiplicity) {
    throw InvalidArgument("make_wave: chain indices invalid for the pencil point");
  }
  WaveSpec w;
  w.arm_id = section->section.arm_id;
  w.lambda = point.lambda;
  w.sigma = sigma;
  w.chain = chain;
  w.transverse_index = point.transverse_index;
  w.chain_length = point.chain_length;
  w.section = section;
  // Canonical Jordan chain of the scalar pencil: phi^(0) = phi_n, phi^(l) = 0.
  const Eigen::VectorXcd phi = section->entries[point.transverse_index].phi.cast<Complex>();
  for (int l = 0; l <= sigma; ++l) {
    const int chain_index = sigma - l;
    if (chain_index == 0) {
      w.poly_coeffs.push_back(std::pow(kI, l) / factorial(l) * phi);
    } else {
      w.poly_coeffs.push_back(Eigen::VectorXcd::Zero(phi.size()));
    }
  }
  return w;
}

double limit_residual(const WaveSpec& u, double k, double t) {
  const double mu = u.section->entries.at(u.transverse_index).mu;
  const Complex r = u.profile_dtt(t) + (k * k - mu) * u.profile(t);
  const auto& phi = u.section->entries[u.transverse_index].phi;
  return std::abs(r) * phi.cwiseAbs().maxCoeff();
}

std::vector<WaveSpec> strip_waves(std::shared_ptr<const CrossSectionSpectrum> section,
                                  const PencilSpectrum& pencil, double rate) {
  std::vector<WaveSpec> out;
  for (const auto& p : pencil.points) {
    const double im = p.lambda.imag();
    if (im != 0.0 && std::abs(im) >= rate) continue;
    if (p.chain_length == 2) {
      for (int s = 0; s < 2; ++s) {
        WaveSpec w = make_wave(section, p, s);
        w.normalization = 1.0;
        out.push_back(std::move(w));
      }
      continue;
    }
    WaveSpec w = make_wave(section, p, 0);
    if (im == 0.0) {
      const double lam = p.lambda.real();
      w.normalization = 1.0 / std::sqrt(2.0 * std::abs(lam));
      w.direction = lam > 0.0 ? Direction::Outgoing : Direction::Incoming;
    } else if (im > 0.0) {
      w.normalization = 1.0 / std::sqrt(2.0 * im);
    } else {
      w.normalization = kI / std::sqrt(-2.0 * im);
    }
    w.rate = im;
    out.push_back(std::move(w));
  }
  return out;
}

NormalizedBasis normalize_basis(const std::vector<WaveSpec>& waves, double R) {
  NormalizedBasis out;
  if (waves.empty()) return out;
  std::map<std::pair<int, int>, std::vector<int>> groups;
  std::vector<std::pair<int, int>> order;
  for (std::size_t a = 0; a < waves.size(); ++a) {
    const auto key = std::make_pair(waves[a].arm_id, waves[a].transverse_index);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(static_cast<int>(a));
  }
  for (const auto& key : order) {
    const auto& idx = groups[key];
    const int m = static_cast<int>(idx.size());
    Eigen::MatrixXcd H(m, m);
    for (int a = 0; a < m; ++a) {
      for (int b = 0; b < m; ++b) {
        H(a, b) = kI * flux_value(trace_at(waves[idx[a]], R), trace_at(waves[idx[b]], R));
      }
    }
    H = 0.5 * (H + H.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    int pos = 0, neg = 0;
    for (int a = 0; a < m; ++a) {
      const double d = es.eigenvalues()(a);
      if (std::abs(d) < 1e-8 * scale) {
        std::ostringstream os;
        os << "pairing Gram matrix is singular for transverse mode " << key.second
           << " (threshold proximity?)";
        throw SingularSystem(os.str());
      }
      (d > 0.0 ? pos : neg) += 1;
    }
    if (pos != neg) {
      throw SingularSystem("waves do not split into equal numbers of incoming and outgoing");
    }
    // Descending eigenvalues: incoming first.
    for (int a = m - 1; a >= 0; --a) {
      const double d = es.eigenvalues()(a);
      Eigen::VectorXcd c = es.eigenvectors().col(a).conjugate() / std::sqrt(std::abs(d));
      const double cmax = c.cwiseAbs().maxCoeff();
      for (int q = 0; q < m; ++q) {
        if (std::abs(c(q)) >= (1.0 - 1e-9) * cmax) {
          c *= std::conj(c(q)) / std::abs(c(q));
          break;
        }
      }
      WaveCombination comb;
      for (int q = 0; q < m; ++q) {
        if (std::abs(c(q)) > 1e-14 * cmax) comb.terms.push_back({c(q), waves[idx[q]]});
      }
      comb.direction = d > 0.0 ? Direction::Incoming : Direction::Outgoing;
      (d > 0.0 ? out.incoming : out.outgoing).push_back(std::move(comb));
    }
  }
  // Signs of the real chains.
  for (std::size_t a = 0; a < waves.size(); ++a) {
    const auto& w = waves[a];
    if (w.lambda.imag() != 0.0 || w.sigma != 0) continue;
    const WaveSpec* partner = &w;
    if (w.chain_length == 2) {
      partner = nullptr;
      for (const auto& o : waves) {
        if (o.arm_id == w.arm_id && o.transverse_index == w.transverse_index && o.sigma == 1) {
          partner = &o;
        }
      }
      if (!partner) continue;
    }
    const Complex q = flux_value(trace_at(w, R), trace_at(*partner, R));
    out.chain_signs.push_back({w.lambda, (q / kI).real() > 0.0 ? 1 : -1});
  }
  std::vector<WaveCombination> all = out.incoming;
  all.insert(all.end(), out.outgoing.begin(), out.outgoing.end());
  const Eigen::MatrixXcd P = pairing_matrix(all, R);
  const int M = out.size();
  Eigen::MatrixXcd canon = Eigen::MatrixXcd::Zero(2 * M, 2 * M);
  for (int a = 0; a < M; ++a) {
    canon(a, a) = -kI;
    canon(M + a, M + a) = kI;
  }
  out.pairing_defect = (P - canon).cwiseAbs().maxCoeff();
  return out;
}

std::pair<WaveCombination, WaveCombination> augmented_pairs(const WaveSpec& w_nu,
                                                            const WaveSpec& w_minus_nu) {
  const Complex q = flux_value(trace_at(w_nu, 2.0), trace_at(w_minus_nu, 2.0));
  if (std::abs(q - kI) > 1e-6) {
    std::ostringstream os;
    os << "augmented_pairs: inputs are not flux-dual (q = " << q.real() << (q.imag() < 0 ? "" : "+")
       << q.imag() << "i, expected i)";
    throw InvalidArgument(os.str());
  }
  const double r = 1.0 / std::sqrt(2.0);
  WaveCombination in, out;
  in.terms = {{r, w_nu}, {-r, w_minus_nu}};
  in.direction = Direction::Incoming;
  out.terms = {{r, w_nu}, {r, w_minus_nu}};
  out.direction = Direction::Outgoing;
  return {in, out};
}

Classification classify(const WaveCombination& wave, double R) {
  Classification c;
  const Trace t = trace_at(wave, R);
  c.iq = (kI * flux_value(t, t)).real();
  if (std::abs(c.iq) < 1e-8) {
    c.direction = Direction::Unclassified;
    c.diagnostic = "zero energy flux: wave is not normalizable as incoming or outgoing";
  } else {
    c.direction = c.iq > 0.0 ? Direction::Incoming : Direction::Outgoing;
  }
  return c;
}

Classification classify(const WaveSpec& wave, double R) {
  return classify(as_combination(wave), R);
}

Eigen::MatrixXcd pairing_matrix(const std::vector<WaveCombination>& waves, double R) {
  const auto n = static_cast<Eigen::Index>(waves.size());
  std::vector<Trace> traces;
  traces.reserve(waves.size());
  for (const auto& w : waves) traces.push_back(trace_at(w, R));
  Eigen::MatrixXcd P(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) P(a, b) = flux_value(traces[a], traces[b]);
  }
  return P;
}

}  // namespace augscat
