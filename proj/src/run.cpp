#include "augscat/run.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <thread>

#include "augscat/cross_section.hpp"
#include "augscat/error.hpp"
#include "augscat/model_problem.hpp"
#include "augscat/scattering.hpp"
#include "augscat/wave_basis.hpp"

namespace augscat {

namespace {

const Complex kI(0.0, 1.0);

std::string to_string(ChannelKind k) { return k == ChannelKind::Propagating ? "propagating" : "evanescent"; }

void warn(StageReport& s, const std::string& msg) {
  s.warnings.push_back(msg);
  if (s.status == "ok") s.status = "warning";
}

void fail_invariant(StageReport& s, const std::string& msg) {
  s.warnings.push_back(msg);
  s.status = "failed";
}

CrossSectionSpec section_spec(const SectionConfig& c) {
  CrossSectionSpec s;
  s.width = c.width;
  s.boundary_kind = c.boundary;
  s.transverse_profile = c.profile;
  return s;
}

// Rate line between the first and second evanescent rates of a section.
double default_model_rate(const CrossSectionSpectrum& sec, double k) {
  std::vector<double> rates;
  for (const auto& m : sec.entries) {
    if (m.mu > k * k) rates.push_back(std::sqrt(m.mu - k * k));
  }
  if (rates.empty()) throw InvalidArgument("no evanescent modes to place the rate line");
  if (rates.size() == 1) return rates[0] + 1.0;
  return 0.5 * (rates[0] + rates[1]);
}

Json channels_json(const DiscreteProblem& p) {
  Json a = Json::array();
  for (const auto& c : p.channels) {
    a.push_back({{"arm", c.arm},
                 {"side", to_string(p.geometry.arms[static_cast<std::size_t>(c.arm)].side)},
                 {"mode", c.mode},
                 {"kind", to_string(c.kind)},
                 {"mu", c.mu},
                 {"lambda", to_json(c.lambda)}});
  }
  return a;
}

Json geometry_json(const JunctionGeometry& g) {
  Json arms = Json::array();
  for (const auto& a : g.arms) {
    Json j = {{"id", a.arm_id}, {"side", to_string(a.side)}, {"edge", a.edge}, {"offset", a.offset},
              {"width", a.width}, {"length", a.length}};
    if (a.profile) {
      j["profile"] = {{"amplitude", a.profile->amplitude}, {"decay_exponent", a.profile->decay_exponent}};
      j["T"] = a.T;
    }
    arms.push_back(j);
  }
  Json rects = Json::array();
  for (const auto& r : g.junction) rects.push_back({r.x0, r.y0, r.x1, r.y1});
  return {{"name", g.name}, {"boundary", to_string(g.boundary_kind)}, {"junction", rects}, {"arms", arms}};
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return v;
}

// ---------------------------------------------------------------------------

void run_spectrum(const RunConfig& c, OutputDir& out, StageReport& st) {
  const CrossSectionSpec spec = section_spec(c.section);
  const CrossSectionSpectrum sec = transverse_spectrum(spec, c.section.modes, c.section.grid_step);
  const double rate = c.beta > 0.0 ? c.beta : default_model_rate(sec, c.k);
  const PencilSpectrum pencil = pencil_spectrum(sec, c.k, rate, c.threshold_tol);
  Json mus = Json::array();
  std::vector<std::vector<std::string>> rows;
  for (std::size_t n = 0; n < sec.entries.size(); ++n) {
    const double mu = sec.entries[n].mu;
    const bool thr = n < pencil.threshold_flags.size() && pencil.threshold_flags[n];
    mus.push_back({{"index", n}, {"mu", mu}, {"threshold_k", std::sqrt(std::max(mu, 0.0))}, {"at_threshold", thr}});
  }
  Json pts = Json::array();
  for (const auto& p : pencil.points) {
    pts.push_back({{"lambda", to_json(p.lambda)},
                   {"multiplicity", p.multiplicity},
                   {"chain_length", p.chain_length},
                   {"transverse_index", p.transverse_index}});
    rows.push_back({std::to_string(p.transverse_index), csv_number(sec.entries[static_cast<std::size_t>(p.transverse_index)].mu),
                    csv_number(p.lambda.real()), csv_number(p.lambda.imag()), std::to_string(p.multiplicity),
                    std::to_string(p.chain_length)});
  }
  const int strip = pencil.strip_multiplicity(rate);
  Json j = {{"k", c.k}, {"rate", rate}, {"width", spec.width}, {"boundary", to_string(spec.boundary_kind)},
            {"transverse", mus}, {"pencil", pts}, {"strip_multiplicity", strip},
            {"pair_count", pencil.pair_count(rate)}, {"real_count", pencil.real_count()}};
  if (c.gamma > 0.0) j["strip_multiplicity_gamma"] = pencil.strip_multiplicity(c.gamma);
  out.write_json("spectrum.json", j);
  out.write_csv("spectrum.csv", {"n", "mu", "lambda_re", "lambda_im", "multiplicity", "chain_length"}, rows);
  st.residuals["strip_multiplicity"] = strip;
  if (pencil.has_threshold()) warn(st, "k sits at a threshold: Jordan chains of length 2 present");
}

void run_modes(const RunConfig& c, OutputDir& out, StageReport& st) {
  const CrossSectionSpec spec = section_spec(c.section);
  auto sec = std::make_shared<const CrossSectionSpectrum>(
      transverse_spectrum(spec, c.section.modes, c.section.grid_step));
  const double rate = c.beta > 0.0 ? c.beta : (c.gamma > 0.0 ? c.gamma : default_model_rate(*sec, c.k));
  const PencilSpectrum pencil = pencil_spectrum(*sec, c.k, rate, c.threshold_tol);
  const auto waves = strip_waves(sec, pencil, rate);
  const NormalizedBasis basis = normalize_basis(waves);
  std::vector<WaveCombination> all = basis.incoming;
  all.insert(all.end(), basis.outgoing.begin(), basis.outgoing.end());
  const Eigen::MatrixXcd P = pairing_matrix(all);
  const int n = basis.size();
  double dev = 0.0;
  Json table = Json::array();
  std::vector<std::vector<std::string>> rows;
  for (int a = 0; a < 2 * n; ++a) {
    for (int b = 0; b < 2 * n; ++b) {
      const Complex want = a != b ? Complex(0.0) : (a < n ? -kI : kI);
      dev = std::max(dev, std::abs(P(a, b) - want));
    }
    const auto& w = all[static_cast<std::size_t>(a)];
    const std::string label = w.label.empty() ? (a < n ? "in" + std::to_string(a) : "out" + std::to_string(a - n)) : w.label;
    const auto& lead = w.terms.front().second;
    const Complex norm = w.terms.front().first * lead.normalization;
    table.push_back({{"label", label},
                     {"direction", to_string(w.direction)},
                     {"lambda", to_json(lead.lambda)},
                     {"transverse_index", lead.transverse_index},
                     {"terms", w.terms.size()},
                     {"normalization", to_json(norm)},
                     {"self_pairing", to_json(P(a, a))}});
    rows.push_back({label, to_string(w.direction), csv_number(lead.lambda.real()), csv_number(lead.lambda.imag()),
                    csv_number(std::abs(norm)), csv_number(P(a, a).real()), csv_number(P(a, a).imag())});
  }
  out.write_json("modes.json", {{"k", c.k}, {"rate", rate}, {"pairs", n}, {"pairing_deviation", dev}, {"waves", table}});
  out.write_csv("modes.csv", {"label", "direction", "lambda_re", "lambda_im", "normalization", "q_re", "q_im"}, rows);
  st.residuals["pairing_deviation"] = dev;
  if (dev > 1e-8) fail_invariant(st, "pairing matrix deviates from the canonical pattern by " + std::to_string(dev));
}

void run_scatter(const RunConfig& c, OutputDir& out, StageReport& st) {
  const AssemblyOptions o = c.assembly();
  const ScatteringPair pair = scattering_pair(c.geometry, c.k, o);
  DiscreteProblem p = assemble(c.geometry, c.k, o);
  const int n = p.channel_count();
  const auto sols = solve_many(p, Eigen::MatrixXcd::Identity(n, n));
  double face = 0.0;
  for (int j = 0; j < n; ++j) {
    const Extraction ex = extract_amplitudes(p, sols[static_cast<std::size_t>(j)].field);
    face = std::max(face, ex.face_residual);
    if (c.write_fields) {
      const std::string name = "field_in" + std::to_string(j) + ".txt";
      write_field(p, sols[static_cast<std::size_t>(j)].field, out.file(name));
      out.record(name);
    }
  }
  Json j = {{"geometry", geometry_json(c.geometry)}, {"channels", channels_json(p)},
            {"T", to_json(pair.T)}, {"S", to_json(pair.S)}, {"extraction_face_residual", face}};
  out.write_json("scatter.json", j);
  if (std::find(c.formats.begin(), c.formats.end(), "csv") != c.formats.end()) {
    std::vector<std::vector<std::string>> rows;
    for (int r = 0; r < n; ++r) {
      for (int q = 0; q < n; ++q) {
        rows.push_back({std::to_string(r), std::to_string(q), csv_number(pair.S.entries(r, q).real()),
                        csv_number(pair.S.entries(r, q).imag()), csv_number(std::abs(pair.S.entries(r, q)))});
      }
    }
    out.write_csv("scatter_S.csv", {"row", "col", "re", "im", "abs"}, rows);
  }
  st.residuals["unitarity_defect"] = pair.S.unitarity_defect;
  st.residuals["inverse_defect"] = pair.S.inverse_defect;
  st.residuals["extraction_face_residual"] = face;
  if (face > 1e-3) warn(st, "amplitude extraction differs between faces by " + std::to_string(face));
  if (pair.S.unitarity_defect > c.unitarity_tolerance) {
    fail_invariant(st, "unitarity defect " + std::to_string(pair.S.unitarity_defect) + " above tolerance");
  }
  if (pair.S.inverse_defect > 2.0 * std::max(c.unitarity_tolerance, pair.S.unitarity_defect)) {
    fail_invariant(st, "inverse relation defect " + std::to_string(pair.S.inverse_defect) + " above tolerance");
  }
}

void run_sweep(const RunConfig& c, const RunOptions& ro, OutputDir& out, StageReport& st, Json& plan) {
  const auto segs = split_at_thresholds(c.geometry, c.k_lo, c.k_hi, c.guard);
  if (segs.empty()) throw InvalidArgument("k range lies entirely within threshold guards");
  double total = 0.0;
  for (const auto& s : segs) total += s.second - s.first;
  std::vector<double> ks;
  Json seg_json = Json::array();
  int assigned = 0;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    int n = i + 1 == segs.size() ? c.points - assigned
                                 : static_cast<int>(std::lround(c.points * (segs[i].second - segs[i].first) / total));
    n = std::max(n, 2);
    assigned += n;
    const auto g = linspace(segs[i].first, segs[i].second, n);
    ks.insert(ks.end(), g.begin(), g.end());
    seg_json.push_back({{"k_lo", segs[i].first}, {"k_hi", segs[i].second}, {"points", n}});
  }
  plan = {{"thresholds", geometry_thresholds(c.geometry, c.k_lo, c.k_hi)}, {"segments", seg_json}};

  std::vector<SweepPoint> pts(ks.size());
  const AssemblyOptions o = c.assembly();
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < ks.size(); i = next++) {
      if (c.beta > 0.0) {
        ScanOptions so;
        so.assembly = o;
        pts[i] = sweep_point(c.geometry, ks[i], c.beta, so);
        continue;
      }
      SweepPoint& pt = pts[i];
      pt.k = ks[i];
      try {
        DiscreteProblem p = assemble(c.geometry, ks[i], o);
        const ScatteringMatrix T = classical_T(p);
        const ScatteringMatrix S = classical_S(T);
        pt.M = pt.M_prime = T.M;
        pt.unitarity_defect = S.unitarity_defect;
        for (Eigen::Index r = 0; r < T.entries.rows(); ++r) {
          pt.energy_defect = std::max(pt.energy_defect, std::abs(T.entries.row(r).squaredNorm() - 1.0));
        }
        pt.min_dist = std::numeric_limits<double>::quiet_NaN();
        pt.ok = true;
      } catch (const Error& e) {
        pt.note = e.what();
        pt.min_dist = std::numeric_limits<double>::quiet_NaN();
      }
    }
  };
  const int threads = std::max(1, ro.threads);
  for (int t = 0; t < threads; ++t) pool.emplace_back(work);
  for (auto& th : pool) th.join();

  std::vector<std::vector<std::string>> rows;
  double worst = 0.0, worst_energy = 0.0;
  int failed = 0;
  for (const auto& p : pts) {
    std::string flags = p.ok ? "ok" : "error";
    if (p.ok && p.unitarity_defect > c.unitarity_tolerance) flags = "unitarity";
    rows.push_back({csv_number(p.k), csv_number(p.ok ? p.unitarity_defect : std::nan("")),
                    csv_number(p.min_dist), csv_number(p.ok ? p.energy_defect : std::nan("")),
                    std::to_string(p.M), std::to_string(p.M_prime), flags});
    if (!p.ok) {
      ++failed;
      continue;
    }
    worst = std::max(worst, p.unitarity_defect);
    worst_energy = std::max(worst_energy, p.energy_defect);
  }
  out.write_csv("sweep.csv", {"k", "defect", "min_eig_dist", "energy_defect", "M", "M_prime", "flags"}, rows);
  st.residuals["max_unitarity_defect"] = worst;
  st.residuals["max_energy_defect"] = worst_energy;
  st.residuals["failed_points"] = failed;
  if (failed > 0) warn(st, std::to_string(failed) + " sweep points failed (see sweep.csv)");
  if (worst > c.unitarity_tolerance) fail_invariant(st, "unitarity defect above tolerance on the sweep");
}

void run_trapped(const RunConfig& c, const RunOptions& ro, OutputDir& out, StageReport& st, Json& plan) {
  ScanOptions so;
  so.assembly = c.assembly();
  so.tolerance = c.eig_tolerance;
  so.guard = c.guard;
  so.threads = std::max(1, ro.threads);
  const SweepReport rep = trapped_mode_scan(c.geometry, c.k_lo, c.k_hi, c.points, c.beta, so);
  Json segs = Json::array();
  for (const auto& s : rep.segments) segs.push_back({{"k_lo", s.first}, {"k_hi", s.second}});
  plan = {{"thresholds", rep.thresholds}, {"segments", segs}};

  std::vector<std::vector<std::string>> rows;
  double worst = 0.0;
  int failed = 0;
  for (const auto& p : rep.points) {
    std::string flags = p.ok ? "ok" : "error";
    if (p.ok && p.min_dist <= c.eig_tolerance) flags = "near_one";
    rows.push_back({csv_number(p.k), csv_number(p.ok ? p.unitarity_defect : std::nan("")), csv_number(p.min_dist),
                    csv_number(p.ok ? p.energy_defect : std::nan("")), std::to_string(p.M),
                    std::to_string(p.M_prime), flags});
    if (p.ok) {
      worst = std::max(worst, p.unitarity_defect);
    } else {
      ++failed;
    }
  }
  out.write_csv("trapped_sweep.csv", {"k", "defect", "min_eig_dist", "energy_defect", "M", "M_prime", "flags"}, rows);

  Json br = Json::array();
  for (const auto& b : rep.brackets) {
    br.push_back({{"k_lo", b.k_lo}, {"k_hi", b.k_hi}, {"k_star", b.k_star}, {"min_dist", b.min_dist},
                  {"oracle_confirmed", b.oracle_confirmed}, {"oracle_k", b.oracle_k}});
  }
  out.write_json("brackets.json", {{"beta", c.beta}, {"tolerance", c.eig_tolerance}, {"brackets", br}});
  out.write_json("oracle.json", {{"available", rep.oracle_available},
                                 {"method", "inertia bisection of the decaying-closure operator"},
                                 {"modes", rep.oracle_modes}});

  st.residuals["brackets"] = rep.brackets.size();
  st.residuals["oracle_modes"] = rep.oracle_modes.size();
  st.residuals["max_unitarity_defect"] = worst;
  if (failed > 0) warn(st, std::to_string(failed) + " sweep points failed (see trapped_sweep.csv)");
  if (worst > c.unitarity_tolerance) fail_invariant(st, "unitarity defect above tolerance on the sweep");
  if (rep.oracle_available) {
    int confirmed = 0;
    for (const auto& b : rep.brackets) {
      if (b.oracle_confirmed) {
        ++confirmed;
      } else {
        fail_invariant(st, "bracket at k = " + std::to_string(b.k_star) + " has no oracle counterpart");
      }
    }
    if (rep.oracle_modes.size() != rep.brackets.size() || confirmed != static_cast<int>(rep.brackets.size())) {
      fail_invariant(st, "brackets and oracle trapped modes disagree");
    }
  } else if (!rep.brackets.empty()) {
    warn(st, "oracle not applicable (propagating channels present); brackets unconfirmed");
  }
}

void run_model_problem(const RunConfig& c, OutputDir& out, StageReport& st) {
  const CrossSectionSpec spec = section_spec(c.section);
  auto sec = std::make_shared<const CrossSectionSpectrum>(
      transverse_spectrum(spec, c.section.modes, c.section.grid_step));
  const double gamma = c.model.gamma > 0.0 ? c.model.gamma : default_model_rate(*sec, c.model.k_infinity);
  ArmCoefficientProfile prof;
  prof.k_infinity = c.model.k_infinity;
  prof.amplitude = c.model.amplitude;
  prof.decay_exponent = c.model.decay_exponent;
  SeriesOptions so;
  so.L = c.model.L;
  so.tol = c.model.series_tol;
  so.dt = c.model.dt;
  Json runs = Json::array();
  std::vector<std::vector<std::string>> rows;
  double prev_ratio = std::numeric_limits<double>::infinity();
  for (double T : c.model.T) {
    Json r = {{"T", T}};
    const BlendedOperator op = blend(prof, T);
    r["delta_norm_estimate"] = op.delta_norm_estimate;
    try {
      const auto z = model_basis(op, sec, gamma, so);
      double ratio = 0.0, resid = 0.0, tail = 0.0;
      int iters = 0;
      for (const auto& w : z) {
        ratio = std::max(ratio, w.contraction_ratio);
        resid = std::max(resid, w.residual);
        tail = std::max(tail, w.tail_ratio);
        iters = std::max(iters, w.iterations);
      }
      const PairingReport pr = verify_pairings(z);
      const auto w = chain_basis(op, sec, gamma, so);
      const ExpansionTable tab = expand_in_chain_waves(z, w);
      const ModalField F = localized_source(z.front());
      const ModelDecomposition d = decompose_model_solution(op, F, gamma, z, so);
      const ChainDecomposition cd = decompose_in_chain_waves(F, w, d);
      r["status"] = "converged";
      r["waves"] = z.size();
      r["contraction_ratio"] = ratio;
      r["iterations"] = iters;
      r["residual"] = resid;
      r["tail_ratio"] = tail;
      r["pairing_deviation"] = pr.max_deviation;
      r["far_pairing_deviation"] = pr.far_max_deviation;
      r["expansion_residual"] = tab.max_residual;
      r["decomposition_a"] = to_json(d.a);
      r["decomposition_b"] = to_json(d.b);
      r["representation_residual"] = d.representation_residual;
      r["chain_residual"] = cd.representation_residual;
      rows.push_back({csv_number(T), "converged", csv_number(ratio), std::to_string(iters), csv_number(resid),
                      csv_number(pr.max_deviation), csv_number(tab.max_residual),
                      csv_number(d.representation_residual), csv_number(cd.representation_residual)});
      if (ratio > prev_ratio + 1e-12) warn(st, "contraction ratio increased with T at T = " + std::to_string(T));
      prev_ratio = ratio;
      if (pr.max_deviation > 1e-5) warn(st, "pairing deviation " + std::to_string(pr.max_deviation) + " at T = " + std::to_string(T));
    } catch (const ContractionError& e) {
      r["status"] = "no_contraction";
      r["error"] = e.what();
      rows.push_back({csv_number(T), "no_contraction", "nan", "0", "nan", "nan", "nan", "nan", "nan"});
      warn(st, std::string("T = ") + std::to_string(T) + ": " + e.what());
    }
    runs.push_back(r);
  }
  out.write_json("model_problem.json", {{"k_infinity", prof.k_infinity}, {"amplitude", prof.amplitude},
                                        {"decay_exponent", prof.decay_exponent}, {"gamma", gamma}, {"runs", runs}});
  out.write_csv("model_problem.csv",
                {"T", "status", "contraction_ratio", "iterations", "residual", "pairing_deviation",
                 "expansion_residual", "representation_residual", "chain_residual"},
                rows);
  st.residuals["gamma"] = gamma;
}

Json stage_json(const StageReport& s) {
  Json j = {{"stage", s.stage}, {"status", s.status}, {"residuals", s.residuals}, {"warnings", s.warnings}};
  if (!s.error.empty()) j["error"] = s.error;
  return j;
}

void finish(RunManifest& m, OutputDir& out, bool strict, std::chrono::steady_clock::time_point t0) {
  for (auto& s : m.stages) {
    if (s.status == "failed") m.exit_code = std::max(m.exit_code, 3);
    if (s.status == "error") m.exit_code = 1;
    if (strict && s.status == "warning") {
      s.status = "error";
      s.error = "warnings treated as errors (--strict)";
      m.exit_code = 1;
    }
  }
  m.outputs = out.listing();
  m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ofstream os(out.file("manifest.json"));
  if (!os) throw Error("cannot write manifest");
  os << m.to_json().dump(2) << '\n';
}

}  // namespace

Json RunManifest::to_json() const {
  Json st = Json::array();
  for (const auto& s : stages) st.push_back(stage_json(s));
  return {{"command", command}, {"version", version}, {"config", config}, {"threads", threads},
          {"wall_time_s", wall_time}, {"stages", st}, {"outputs", outputs}, {"exit_code", exit_code}};
}

RunManifest run(const RunConfig& c, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  OutputDir out(options.out_dir);
  RunManifest m;
  m.command = to_string(c.command);
  m.threads = options.threads;
  m.config = {{"name", c.name}, {"source", c.source_text}, {"h", c.h}, {"beta", c.beta}};
  if (c.has_k) m.config["k"] = c.k;
  if (c.has_range) m.config["k_range"] = {c.k_lo, c.k_hi};
  StageReport st;
  st.stage = m.command;
  try {
    Json plan;
    switch (c.command) {
      case Command::Spectrum: run_spectrum(c, out, st); break;
      case Command::Modes: run_modes(c, out, st); break;
      case Command::Scatter: run_scatter(c, out, st); break;
      case Command::Sweep: run_sweep(c, options, out, st, plan); break;
      case Command::Trapped: run_trapped(c, options, out, st, plan); break;
      case Command::ModelProblem: run_model_problem(c, out, st); break;
    }
    if (!plan.is_null()) m.config["plan"] = plan;
  } catch (const std::exception& e) {
    st.status = "error";
    st.error = e.what();
  }
  m.stages.push_back(st);
  finish(m, out, options.strict, t0);
  return m;
}

RunManifest selfcheck(std::uint64_t seed, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  OutputDir out(options.out_dir);
  RunManifest m;
  m.command = "selfcheck";
  m.threads = options.threads;
  m.config = {{"seed", seed}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N(0.0, 1.0);

  StageReport flux;
  flux.stage = "flux_antisymmetry";
  try {
    double worst_anti = 0.0, worst_r = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      CrossSectionSpec s;
      s.width = 0.5 + U(rng);
      s.boundary_kind = U(rng) < 0.5 ? BoundaryKind::Neumann : BoundaryKind::Dirichlet;
      auto sec = std::make_shared<const CrossSectionSpectrum>(transverse_spectrum(s, 6, s.width / 200.0));
      double k = 0.5 + 6.0 * U(rng);
      const PencilSpectrum pencil = pencil_spectrum(*sec, k, 8.0);
      if (pencil.has_threshold()) continue;
      const auto waves = strip_waves(sec, pencil, 8.0);
      for (int pair = 0; pair < 5; ++pair) {
        const auto& u = waves[static_cast<std::size_t>(U(rng) * waves.size()) % waves.size()];
        const auto& v = waves[static_cast<std::size_t>(U(rng) * waves.size()) % waves.size()];
        const double R = 1.0 + U(rng);
        const Trace tu = trace_at(u, R), tv = trace_at(v, R);
        const double scale =
            std::max(1.0, (tu.value.norm() + tu.dt.norm()) * (tv.value.norm() + tv.dt.norm()));
        const FluxPairing a = flux_pairing(u, v, R), b = flux_pairing(v, u, R);
        worst_anti = std::max(worst_anti, std::abs(a.value + std::conj(b.value)) / scale);
        const Trace su = trace_at(u, R + 1.0), sv = trace_at(v, R + 1.0);
        const double scale2 = std::max(scale, (su.value.norm() + su.dt.norm()) * (sv.value.norm() + sv.dt.norm()));
        worst_r = std::max(worst_r, a.quadrature_residual / scale2);
      }
    }
    flux.residuals["antisymmetry"] = worst_anti;
    flux.residuals["R_variation"] = worst_r;
    if (worst_anti > 1e-12) fail_invariant(flux, "flux antisymmetry violated");
    if (worst_r > 1e-6) fail_invariant(flux, "flux depends on the cross-section");
  } catch (const std::exception& e) {
    flux.status = "error";
    flux.error = e.what();
  }
  m.stages.push_back(flux);

  StageReport unit;
  unit.stage = "unitarity";
  try {
    const double k = 1.0 + 2.0 * U(rng);
    const JunctionGeometry g = t_junction(1.0, BoundaryKind::Neumann, 0.5);
    AssemblyOptions o;
    o.h = 1.0 / 32.0;
    const ScatteringPair cl = scattering_pair(g, k, o);
    o.mode = ScatteringMode::Augmented;
    o.beta = 4.0;
    const ScatteringPair au = scattering_pair(g, k, o);
    unit.residuals["k"] = k;
    unit.residuals["classical_unitarity"] = cl.S.unitarity_defect;
    unit.residuals["classical_inverse"] = cl.S.inverse_defect;
    unit.residuals["augmented_unitarity"] = au.S.unitarity_defect;
    unit.residuals["augmented_inverse"] = au.S.inverse_defect;
    for (double d : {cl.S.unitarity_defect, cl.S.inverse_defect, au.S.unitarity_defect, au.S.inverse_defect}) {
      if (d > 1e-3) fail_invariant(unit, "unitarity or inverse relation violated");
    }

    StageReport ccc;
    ccc.stage = "compatibility_pairing";
    o.mode = ScatteringMode::Classical;
    DiscreteProblem p = assemble(g, k, o);
    const int M = p.M;
    double worst = 0.0;
    for (int t = 0; t < 5; ++t) {
      Eigen::MatrixXcd S(M, M), R(M, M);
      for (int i = 0; i < M; ++i) {
        for (int j = 0; j < M; ++j) {
          S(i, j) = Complex(N(rng), N(rng));
          R(i, j) = Complex(N(rng), N(rng));
        }
      }
      S += 2.0 * Eigen::MatrixXcd::Identity(M, M);
      worst = std::max(worst, radiation_basis_transform(p, S, R).residual);
    }
    ccc.residuals["max_residual"] = worst;
    if (worst > 1e-6) fail_invariant(ccc, "compatibility pairing residual above 1e-6");
    m.stages.push_back(unit);
    m.stages.push_back(ccc);
  } catch (const std::exception& e) {
    unit.status = "error";
    unit.error = e.what();
    m.stages.push_back(unit);
  }
  finish(m, out, options.strict, t0);
  return m;
}

}  // namespace augscat
