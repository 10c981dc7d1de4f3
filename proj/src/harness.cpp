#include "etalab/harness.hpp"

#include "etalab/errors.hpp"
#include "etalab/spectra.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace etalab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kSumRuleTol = 1e-8;

bool is_multiple(double x, double dt) {
  const double k = std::round(x / dt);
  return k >= 0.0 && std::abs(x - k * dt) <= 1e-9 * std::max(1.0, std::abs(x));
}

bool dynamic(ExperimentKind k) {
  return k != ExperimentKind::liouvillian_spectrum && k != ExperimentKind::gce_predict;
}

template <typename T>
T field(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(key, std::string("wrong type: ") + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& prefix) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ValidationError(prefix + key, "unknown field");
  }
}

std::string initial_name(InitialKind k) {
  switch (k) {
    case InitialKind::ground: return "ground";
    case InitialKind::thermal: return "thermal";
    case InitialKind::yang: return "yang";
    case InitialKind::file: return "file";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// samples and sum rules

TimeSample sample_of(const ObservableKit& kit, double t, const DensityMatrix& rho) {
  TimeSample s;
  s.t = t;
  s.corr = eta_correlation_matrix(kit, rho);
  s.stderr_abs.assign(kit.sites(), 0.0);
  s.conserved = conserved_set(kit, rho);
  s.structure = structure_factor(kit, rho);
  s.double_occupancy = double_occupancy(kit, rho);
  return s;
}

TimeSample sample_of(const ObservableKit& kit, double t, const StateVector& psi) {
  TimeSample s;
  s.t = t;
  s.corr = eta_correlation_matrix(kit, psi);
  s.stderr_abs.assign(kit.sites(), 0.0);
  s.conserved = conserved_set(kit, psi);
  s.structure = structure_factor(kit, psi);
  s.double_occupancy = double_occupancy(kit, psi);
  return s;
}

// Flat observable layout for trajectory averaging: distance averages, C_ij,
// T_jk, then <eta+ eta->, <N_up>, <N_down>. All linear in the state.
std::vector<cplx> flat_sample(const ObservableKit& kit, const StateVector& psi) {
  const int m = kit.sites();
  const EtaCorrMatrix c = eta_correlation_matrix(kit, psi);
  const CMatrix t = doublon_two_point(kit, psi);
  const ConservedSet q = conserved_set(kit, psi);
  std::vector<cplx> out;
  out.reserve(m + 2 * m * m + 3);
  for (int j = 0; j < m; ++j) out.push_back(distance_averaged_corr(c, j));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) out.push_back(c.c(i, j));
  }
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) out.push_back(t(i, j));
  }
  out.push_back(q.eta_pair);
  out.push_back(q.n_up);
  out.push_back(q.n_down);
  return out;
}

TimeSample sample_from_flat(int m, double t, const std::vector<cplx>& mean, const std::vector<double>& se_abs) {
  TimeSample s;
  s.t = t;
  s.stderr_abs.assign(se_abs.begin(), se_abs.begin() + m);
  s.corr.c = CMatrix(m, m);
  CMatrix two(m, m);
  std::size_t k = m;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) s.corr.c(i, j) = mean[k++];
  }
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) two(i, j) = mean[k++];
  }
  s.conserved.eta_pair = mean[k++].real();
  s.conserved.n_up = mean[k++].real();
  s.conserved.n_down = mean[k++].real();
  s.conserved.s_z = s.conserved.n_up - s.conserved.n_down;
  s.conserved.eta_z = 0.5 * (s.conserved.n_up + s.conserved.n_down - m);
  s.structure = structure_factor_from_two_point(two);
  s.double_occupancy = s.corr.c.diagonal().real();
  return s;
}

void audit_sample(const TimeSample& s, SumRuleAudit& a) {
  const int m = s.corr.sites();
  const double eta = s.conserved.eta_pair;
  const double herm = s.corr.hermiticity_defect();
  const double total = std::abs(s.corr.total() - eta);
  const double diag = (s.corr.c.diagonal().real() - s.double_occupancy).cwiseAbs().maxCoeff();
  double dsum = 0.0;
  for (double v : s.structure.values) dsum += v;
  const double d_sum = std::abs(dsum - s.double_occupancy.sum());
  const double d_pi = m % 2 == 0 ? std::abs(s.structure.values[m / 2] * m - eta) : 0.0;
  const double min_d = *std::min_element(s.structure.values.begin(), s.structure.values.end());

  a.samples++;
  a.hermiticity = std::max(a.hermiticity, herm);
  a.corr_total = std::max(a.corr_total, total);
  a.diagonal = std::max(a.diagonal, diag);
  a.d_pi = std::max(a.d_pi, d_pi);
  a.d_sum = std::max(a.d_sum, d_sum);
  a.min_d = a.samples == 1 ? min_d : std::min(a.min_d, min_d);

  auto fail = [&](const char* what, double v) {
    throw NumericalInstability(std::string("sum rule '") + what + "' violated by " + format_number(v) +
                               " at t = " + format_number(s.t));
  };
  if (herm > kSumRuleTol) fail("C hermiticity", herm);
  if (total > kSumRuleTol) fail("sum C = <eta+ eta->", total);
  if (diag > kSumRuleTol) fail("C_ii = double occupancy", diag);
  if (d_pi > kSumRuleTol) fail("D(pi) M = <eta+ eta->", d_pi);
  if (d_sum > kSumRuleTol) fail("sum_q D(q) = sum_i double occupancy", d_sum);
  if (min_d < -1e-10) fail("D(q) >= 0", min_d);
}

json audit_json(const SumRuleAudit& a) {
  return {{"samples", a.samples},        {"hermiticity", a.hermiticity}, {"corr_total", a.corr_total},
          {"diagonal", a.diagonal},      {"d_pi", a.d_pi},               {"d_sum", a.d_sum},
          {"min_d", a.min_d}};
}

// ---------------------------------------------------------------------------
// preparation

struct Prepared {
  BasisPtr basis;
  SparseOperator H;
  JumpSet jumps;
  std::optional<StateVector> psi;
  std::optional<DensityMatrix> rho;
};

StateVector load_state_file(const std::string& path, const BasisPtr& basis) {
  std::ifstream in(path);
  if (!in) throw ValidationError("initial.path", "cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("initial.path", std::string("malformed JSON: ") + e.what());
  }
  const json& amps = j.at("amplitudes");
  if (!amps.is_array() || amps.size() != basis->size()) {
    throw ValidationError("initial.path", "expected " + std::to_string(basis->size()) + " amplitudes");
  }
  StateVector psi{basis, CVector(static_cast<Eigen::Index>(basis->size()))};
  for (std::size_t k = 0; k < amps.size(); ++k) {
    psi.amplitudes[static_cast<Eigen::Index>(k)] = cplx(amps[k].at(0).get<double>(), amps[k].at(1).get<double>());
  }
  if (psi.norm() == 0.0) throw ValidationError("initial.path", "zero state");
  psi.normalize();
  return psi;
}

JumpSet build_jump_set(const ExperimentConfig& cfg, const BasisPtr& basis) {
  JumpSet jumps;
  if (cfg.gamma_spin > 0.0) jumps = merge(std::move(jumps), build_jumps(JumpKind::spin, basis, cfg.gamma_spin));
  if (cfg.gamma_charge > 0.0) {
    jumps = merge(std::move(jumps), build_jumps(JumpKind::charge, basis, cfg.gamma_charge));
  }
  return jumps;
}

Prepared prepare(const ExperimentConfig& cfg, json& derived) {
  BasisPtr basis = cfg.full_space ? full_fock_space(cfg.sites)
                                  : enumerate_sector(cfg.sites, cfg.sector.n_up, cfg.sector.n_down);
  Prepared p{basis, build_hubbard(HubbardParams{cfg.sites, cfg.tau, cfg.U}, basis), build_jump_set(cfg, basis),
             std::nullopt, std::nullopt};
  derived["basis_dimension"] = p.basis->size();

  const double u0 = cfg.initial.U.value_or(cfg.U);
  switch (cfg.initial.kind) {
    case InitialKind::ground: {
      const SparseOperator h0 = build_hubbard(HubbardParams{cfg.sites, cfg.tau, u0}, p.basis);
      const EigenPair gs = ground_state(h0);
      derived["initial"] = {{"energy", gs.value}, {"residual", gs.residual}, {"gap", gs.gap},
                            {"degenerate", gs.degenerate}};
      p.psi = gs.vector;
      break;
    }
    case InitialKind::thermal: {
      const SparseOperator h0 = build_hubbard(HubbardParams{cfg.sites, cfg.tau, u0}, p.basis);
      ThermalState th = thermal_state(h0, cfg.initial.beta);
      derived["initial"] = {{"energy", expectation(h0, th.rho).real()}, {"beta", th.beta}};
      p.rho = std::move(th.rho);
      break;
    }
    case InitialKind::yang:
      p.psi = yang_state(cfg.sites, cfg.initial.N);
      break;
    case InitialKind::file:
      p.psi = load_state_file(cfg.initial.path, p.basis);
      break;
  }
  return p;
}

// mu in [H, eta+] = mu eta+ for the run's U, measured on its own sector.
std::optional<double> measured_mu(const ExperimentConfig& cfg, const BasisPtr& basis) {
  const BasisPtr up = shifted_basis(basis, 1, 1);
  if (up->size() == 0) return std::nullopt;
  const HubbardParams hp{cfg.sites, cfg.tau, cfg.U};
  const SparseOperator eplus = build_eta_ops(basis).raise_total;
  const SparseOperator ladder = build_hubbard(hp, up) * eplus - eplus * build_hubbard(hp, basis);
  const CMatrix a = eplus.dense();
  const double n2 = a.squaredNorm();
  if (n2 == 0.0) return std::nullopt;
  return (a.conjugate().cwiseProduct(ladder.dense()).sum() / n2).real();
}

void solve_gce(const ExperimentConfig& cfg, const ConservedSet& q, RunResult& r) {
  GceTargets t;
  t.sites = cfg.sites;
  t.eta_pair = cfg.target_eta_pair.value_or(q.eta_pair);
  t.n_up = cfg.target_eta_pair ? cfg.sector.n_up : q.n_up;
  t.n_down = cfg.target_eta_pair ? cfg.sector.n_down : q.n_down;
  t.mode = cfg.gce_mode;
  // Sector populations are integers up to round-off.
  if (t.mode == GceMode::fixed_sector) {
    t.n_up = std::round(t.n_up);
    t.n_down = std::round(t.n_down);
  }
  GceOptions opts;
  opts.boundary = cfg.gce_boundary;
  json g = {{"mode", to_string(cfg.gce_mode)},
            {"boundary_policy", cfg.gce_boundary == BoundaryPolicy::limit ? "limit" : "error"},
            {"targets", {t.eta_pair, t.n_up, t.n_down}}};
  try {
    r.gce = solve_multipliers(t, opts);
    r.gce_values = gce_expectations(*r.gce);
    const auto& sol = *r.gce;
    auto num = [](double v) -> json {
      if (std::isfinite(v)) return v;
      return v > 0 ? "+inf" : "-inf";
    };
    g["mu"] = {num(sol.mu[0]), num(sol.mu[1]), num(sol.mu[2])};
    g["residuals"] = {sol.residuals[0], sol.residuals[1], sol.residuals[2]};
    g["iterations"] = sol.iterations;
    if (sol.saturated) g["saturated"] = *sol.saturated;
    g["offdiag"] = {r.gce_values->offdiag.real(), r.gce_values->offdiag.imag()};
    g["offdiag_abs"] = std::abs(r.gce_values->offdiag);
    g["offdiag_spread"] = r.gce_values->offdiag_spread;
    g["double_occupancy"] = std::vector<double>(r.gce_values->double_occupancy.data(),
                                                r.gce_values->double_occupancy.data() +
                                                    r.gce_values->double_occupancy.size());
    g["structure_factor"] = r.gce_values->structure.values;
  } catch (const std::exception& e) {
    if (cfg.kind == ExperimentKind::gce_predict) throw;
    r.gce_error = e.what();
    g["error"] = r.gce_error;
  }
  r.derived["gce"] = g;
}

// ---------------------------------------------------------------------------
// runners

std::vector<double> output_grid(const ExperimentConfig& cfg) {
  const auto n = static_cast<long>(std::llround(cfg.t_final / cfg.output_every));
  std::vector<double> times;
  // k T / n is exact on decimal grids where k * output_every is not.
  for (long k = 0; k <= n; ++k) times.push_back(static_cast<double>(k) * cfg.t_final / static_cast<double>(n));
  return times;
}

void run_open_system(const ExperimentConfig& cfg, Prepared& p, const RunOptions& opts, RunResult& r) {
  const ObservableKit kit(p.basis);
  const auto times = output_grid(cfg);
  if (cfg.method == Method::master) {
    const DensityMatrix rho0 = p.rho ? *p.rho : DensityMatrix::pure(*p.psi);
    const LindbladGenerator gen(p.H, p.jumps);
    MasterOptions mo;
    mo.dt = cfg.dt;
    DensityMatrix fin = integrate_master(
        rho0, gen, cfg.t_final, times,
        [&](double, const DensityMatrix& rho) {
          r.samples.push_back(sample_of(kit, times[r.samples.size()], rho));
          audit_sample(r.samples.back(), r.audit);
        },
        mo);
    const double residual = gen.apply(fin.matrix).cwiseAbs().maxCoeff();
    r.derived["generator_residual"] = residual;
    r.final_state = std::move(fin);
    return;
  }

  TrajectoryProblem prob{*p.psi, p.H, p.jumps, cfg.t_final, cfg.dt, times,
                         [&kit](const StateVector& psi) { return flat_sample(kit, psi); }};
  EnsembleOptions eo;
  eo.threads = std::max(1U, opts.threads);
  const EnsembleEstimate est = ensemble_average(prob, cfg.trajectories, cfg.seed, eo);
  for (std::size_t k = 0; k < est.times.size(); ++k) {
    r.samples.push_back(sample_from_flat(cfg.sites, times[k], est.mean[k], est.se_abs[k]));
    audit_sample(r.samples.back(), r.audit);
  }
  r.derived["trajectories"] = {{"count", est.trajectories}, {"total_jumps", est.total_jumps},
                               {"seed_mixer", "splitmix64(master + (index + 1) * 0x9e3779b97f4a7c15)"}};
}

void run_driven(const ExperimentConfig& cfg, Prepared& p, RunResult& r) {
  const ObservableKit kit(p.basis);
  const DriveParams& d = *cfg.drive;
  const std::vector<double> profile = drive_profile(d, cfg.sites);
  const SparseOperator F = build_field_op(profile, p.basis);
  // Step small enough that RK4's norm loss stays inside norm_tol, and an
  // integer fraction of the configured step so outputs stay on the grid.
  const double radius = spectral_radius_bound(p.H) + std::abs(d.V) * spectral_radius_bound(F);
  const double bound = rk4_unitary_step_bound(radius, cfg.t_final, cfg.norm_tol);
  const double substeps = std::max(1.0, std::ceil(cfg.dt / (0.5 * bound)));
  DrivenOptions dopt;
  dopt.dt = cfg.dt / substeps;
  dopt.norm_tol = cfg.norm_tol;
  r.derived["drive"] = {{"profile", to_string(d.profile)}, {"f", profile},
                        {"spectral_bound", radius},    {"dt_used", dopt.dt}};

  const auto times = output_grid(cfg);
  integrate_schrodinger_td(
      *p.psi, p.H, F, DriveSchedule{d.V, d.Omega}, cfg.t_final, times,
      [&](double, const StateVector& psi) {
        r.samples.push_back(sample_of(kit, times[r.samples.size()], psi));
        audit_sample(r.samples.back(), r.audit);
      },
      dopt);
}

void long_time_summary(const ExperimentConfig& cfg, RunResult& r) {
  const int m = cfg.sites;
  const double t0 = cfg.t_final * (1.0 - cfg.window_fraction);
  CMatrix mean_abs_c = CMatrix::Zero(m, m);
  std::size_t n = 0;
  for (const auto& s : r.samples) {
    if (s.t + 1e-9 < t0) continue;
    mean_abs_c += s.corr.c.cwiseAbs().cast<cplx>();
    ++n;
  }
  if (n == 0) return;
  mean_abs_c /= static_cast<double>(n);
  json lt = {{"window", {t0, cfg.t_final}}, {"samples", n}};
  json pairs = json::array();
  double max_rel = 0.0;
  const bool have_gce = r.gce_values.has_value();
  const double ref = have_gce ? std::abs(r.gce_values->offdiag) : 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      const double v = mean_abs_c(i, j).real();
      json e = {{"i", i}, {"j", j}, {"mean_abs", v}};
      if (have_gce && ref > 0.0) {
        const double rel = std::abs(v - ref) / ref;
        e["rel_dev_gce"] = rel;
        max_rel = std::max(max_rel, rel);
      }
      pairs.push_back(e);
    }
  }
  lt["pairs"] = pairs;
  if (have_gce && ref > 0.0) lt["max_rel_dev_gce"] = max_rel;
  r.derived["long_time"] = lt;
}

void final_state_summary(const ExperimentConfig& cfg, RunResult& r) {
  if (r.samples.empty()) return;
  const TimeSample& last = r.samples.back();
  r.derived["final"] = {{"offdiag_spread", last.corr.offdiag_spread()},
                        {"offdiag_mean", {last.corr.offdiag_mean().real(), last.corr.offdiag_mean().imag()}}};
  if (!r.final_state || !r.gce_values || cfg.gamma_charge > 0.0) return;
  // The steady-state comparison is meaningful once the run has converged.
  const double residual = r.derived.value("generator_residual", 1.0);
  double dc = 0.0, ds = 0.0, dd = 0.0;
  dc = (last.corr.c - r.gce_values->corr.c).cwiseAbs().maxCoeff();
  for (std::size_t n = 0; n < last.structure.values.size(); ++n) {
    ds = std::max(ds, std::abs(last.structure.values[n] - r.gce_values->structure.values[n]));
  }
  dd = (last.double_occupancy - r.gce_values->double_occupancy).cwiseAbs().maxCoeff();
  r.derived["gce_agreement"] = {{"converged", residual < 1e-9}, {"corr", dc}, {"structure", ds},
                                {"double_occupancy", dd}};
}

void window_summary(const ExperimentConfig& cfg, RunResult& r) {
  std::vector<double> t, v;
  for (const auto& s : r.samples) {
    double acc = 0.0;
    for (int j = 1; j < cfg.sites; ++j) acc += std::abs(distance_averaged_corr(s.corr, j));
    t.push_back(s.t);
    v.push_back(acc / (cfg.sites - 1));
  }
  r.window = measure_window(t, v, cfg.t_ref);
  r.derived["window"] = {{"observable", "mean over j >= 1 of |distance-averaged C_j|"},
                         {"t_ref", r.window->t_ref},
                         {"value_ref", r.window->value_ref},
                         {"threshold", r.window->threshold},
                         {"dt", r.window->dt},
                         {"censored", r.window->censored}};
}

void projection_summary(Prepared& p, RunResult& r) {
  const DensityMatrix rho0 = p.rho ? *p.rho : DensityMatrix::pure(*p.psi);
  json pj = json::object();
  auto add = [&](const std::string& name, const DensityMatrix& rho, ProjectionKind kind) {
    try {
      ProjectedBlock b = project_sector_matrix(rho, kind);
      const Eigen::Index n = b.matrix.rows();
      double off = 0.0, diag_spread = 0.0, lo = std::numeric_limits<double>::infinity(), hi = 0.0;
      const double d0 = b.matrix(0, 0).real();
      for (Eigen::Index i = 0; i < n; ++i) {
        diag_spread = std::max(diag_spread, std::abs(b.matrix(i, i).real() - d0));
        for (Eigen::Index j = 0; j < n; ++j) {
          if (i == j) continue;
          const double a = std::abs(b.matrix(i, j));
          off = std::max(off, a);
          lo = std::min(lo, a);
          hi = std::max(hi, a);
        }
      }
      pj[name] = {{"dimension", n},        {"trace_before", b.trace_before}, {"max_offdiag", off},
                  {"diag_spread", diag_spread}, {"offdiag_abs_spread", n > 1 ? hi - lo : 0.0}};
      r.projections.push_back({name, std::move(b)});
    } catch (const DegenerateProjection& e) {
      pj[name] = {{"error", e.what()}};
    }
  };
  add("spin-initial", rho0, ProjectionKind::spin);
  add("doublon-initial", rho0, ProjectionKind::doublon);
  if (r.final_state) {
    add("spin-final", *r.final_state, ProjectionKind::spin);
    add("doublon-final", *r.final_state, ProjectionKind::doublon);
  }
  r.derived["projections"] = pj;
}

void run_liouvillian(const ExperimentConfig& cfg, Prepared& p, RunResult& r) {
  const CMatrix lv = liouvillian_dense(p.H, p.jumps);
  r.spectrum = steady_space_analysis(lv);
  const EtaPairSpectrum eps =
      etapair_spectrum(cfg.sites, cfg.full_space ? std::nullopt : std::optional<Sector>(cfg.sector));

  // Every joint (eta+ eta-, N_up, N_down) projector should be stationary.
  const LindbladGenerator gen(p.H, p.jumps);
  double worst = 0.0;
  for (const auto& blk : eps.blocks) {
    for (std::size_t l = 0; l < blk.levels.size(); ++l) {
      const CMatrix v = blk.eigenvectors.middleCols(blk.level_start[l], blk.degeneracy[l]);
      CMatrix proj = CMatrix::Zero(p.basis->size(), p.basis->size());
      if (cfg.full_space) {
        CMatrix embed = CMatrix::Zero(p.basis->size(), v.cols());
        for (std::size_t k = 0; k < blk.basis->size(); ++k) {
          embed.row(static_cast<Eigen::Index>(*p.basis->index_of(blk.basis->state(k)))) =
              v.row(static_cast<Eigen::Index>(k));
        }
        proj = embed * embed.adjoint();
      } else {
        proj = v * v.adjoint();
      }
      worst = std::max(worst, gen.apply(proj).cwiseAbs().maxCoeff());
    }
  }

  const auto mu = measured_mu(cfg, p.basis);
  const auto& s = *r.spectrum;
  json d = {{"dimension", lv.rows()},
            {"max_real", s.max_real},
            {"kernel_dim", s.kernel_dim},
            {"kernel_eigen_count", s.kernel_eigen_count},
            {"joint_projector_count", eps.joint_level_count()},
            {"projector_residual", worst},
            {"imaginary", s.imaginary},
            {"ladder_spacing", s.ladder_spacing},
            {"ladder_residual", s.ladder_residual}};
  if (mu) {
    d["mu"] = *mu;
    if (*mu != 0.0) d["spacing_over_mu"] = s.ladder_spacing / *mu;
  }
  r.derived["liouvillian"] = d;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";  // folds -0
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::quench_dephasing: return "quench-dephasing";
    case ExperimentKind::thermal_projections: return "thermal-projections";
    case ExperimentKind::floquet_vs_dephasing: return "floquet-vs-dephasing";
    case ExperimentKind::perturbation_window: return "perturbation-window";
    case ExperimentKind::structure_factor: return "structure-factor";
    case ExperimentKind::liouvillian_spectrum: return "liouvillian-spectrum";
    case ExperimentKind::gce_predict: return "gce-predict";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (auto k : {ExperimentKind::quench_dephasing, ExperimentKind::thermal_projections,
                 ExperimentKind::floquet_vs_dephasing, ExperimentKind::perturbation_window,
                 ExperimentKind::structure_factor, ExperimentKind::liouvillian_spectrum,
                 ExperimentKind::gce_predict}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("kind", "unknown experiment kind '" + name + "'");
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("(root)", "config must be a JSON object");
  reject_unknown(j,
                 {"kind", "M", "sector", "space", "tau", "U", "initial", "gamma_spin", "gamma_charge", "drive",
                  "t_final", "dt", "output_every", "method", "trajectories", "seed", "gce_mode", "gce_boundary",
                  "target_eta_pair", "t_ref", "window_fraction", "norm_tol"},
                 "");
  ExperimentConfig c;
  if (!j.contains("kind")) throw ValidationError("kind", "missing");
  c.kind = parse_experiment_kind(field<std::string>(j, "kind", ""));
  c.sites = field<int>(j, "M", c.sites);
  if (j.contains("sector")) {
    const auto s = field<std::vector<int>>(j, "sector", {});
    if (s.size() != 2) throw ValidationError("sector", "expected [n_up, n_down]");
    c.sector = {s[0], s[1]};
  } else {
    c.sector = {c.sites / 2, c.sites / 2};
  }
  const auto space = field<std::string>(j, "space", "sector");
  if (space != "sector" && space != "full") throw ValidationError("space", "expected 'sector' or 'full'");
  c.full_space = space == "full";
  c.tau = field<double>(j, "tau", c.tau);
  c.U = field<double>(j, "U", c.U);

  if (j.contains("initial")) {
    const json& ij = j.at("initial");
    if (!ij.is_object()) throw ValidationError("initial", "expected an object");
    reject_unknown(ij, {"type", "U", "beta", "N", "path"}, "initial.");
    const auto type = field<std::string>(ij, "type", "ground");
    if (type == "ground") c.initial.kind = InitialKind::ground;
    else if (type == "thermal") c.initial.kind = InitialKind::thermal;
    else if (type == "yang") c.initial.kind = InitialKind::yang;
    else if (type == "file") c.initial.kind = InitialKind::file;
    else throw ValidationError("initial.type", "unknown initial state '" + type + "'");
    if (ij.contains("U")) c.initial.U = field<double>(ij, "U", 0.0);
    c.initial.beta = field<double>(ij, "beta", 0.0);
    c.initial.N = field<int>(ij, "N", 0);
    c.initial.path = field<std::string>(ij, "path", "");
  }
  c.gamma_spin = field<double>(j, "gamma_spin", c.gamma_spin);
  c.gamma_charge = field<double>(j, "gamma_charge", c.gamma_charge);
  if (j.contains("drive")) {
    const json& dj = j.at("drive");
    if (!dj.is_object()) throw ValidationError("drive", "expected an object");
    reject_unknown(dj, {"V", "Omega", "profile", "seed", "values"}, "drive.");
    DriveParams d;
    d.V = field<double>(dj, "V", 0.0);
    d.Omega = field<double>(dj, "Omega", 1.0);
    try {
      d.profile = parse_profile_kind(field<std::string>(dj, "profile", "linear"));
    } catch (const DomainError& e) {
      throw ValidationError("drive.profile", e.what());
    }
    d.seed = field<std::uint64_t>(dj, "seed", 0);
    d.custom = field<std::vector<double>>(dj, "values", {});
    c.drive = d;
  }
  c.t_final = field<double>(j, "t_final", c.t_final);
  c.dt = field<double>(j, "dt", c.dt);
  c.output_every = field<double>(j, "output_every", c.output_every);
  const auto method = field<std::string>(j, "method", "master");
  if (method == "master") c.method = Method::master;
  else if (method == "trajectories") c.method = Method::trajectories;
  else throw ValidationError("method", "expected 'master' or 'trajectories'");
  c.trajectories = field<std::size_t>(j, "trajectories", c.trajectories);
  c.seed = field<std::uint64_t>(j, "seed", c.seed);
  try {
    c.gce_mode = parse_gce_mode(field<std::string>(j, "gce_mode", "fixed-sector"));
  } catch (const DomainError& e) {
    throw ValidationError("gce_mode", e.what());
  }
  const auto boundary = field<std::string>(j, "gce_boundary", "limit");
  if (boundary == "limit") c.gce_boundary = BoundaryPolicy::limit;
  else if (boundary == "error") c.gce_boundary = BoundaryPolicy::error;
  else throw ValidationError("gce_boundary", "expected 'limit' or 'error'");
  if (j.contains("target_eta_pair")) c.target_eta_pair = field<double>(j, "target_eta_pair", 0.0);
  c.t_ref = field<double>(j, "t_ref", c.t_ref);
  c.window_fraction = field<double>(j, "window_fraction", c.window_fraction);
  c.norm_tol = field<double>(j, "norm_tol", c.norm_tol);
  return c;
}

json ExperimentConfig::to_json() const {
  json j = {{"kind", to_string(kind)},
            {"M", sites},
            {"sector", {sector.n_up, sector.n_down}},
            {"space", full_space ? "full" : "sector"},
            {"tau", tau},
            {"U", U},
            {"gamma_spin", gamma_spin},
            {"gamma_charge", gamma_charge},
            {"t_final", t_final},
            {"dt", dt},
            {"output_every", output_every},
            {"method", method == Method::master ? "master" : "trajectories"},
            {"trajectories", trajectories},
            {"seed", seed},
            {"gce_mode", to_string(gce_mode)},
            {"gce_boundary", gce_boundary == BoundaryPolicy::limit ? "limit" : "error"},
            {"t_ref", t_ref},
            {"window_fraction", window_fraction},
            {"norm_tol", norm_tol}};
  json ij = {{"type", initial_name(initial.kind)}};
  if (initial.U) ij["U"] = *initial.U;
  if (initial.kind == InitialKind::thermal) ij["beta"] = initial.beta;
  if (initial.kind == InitialKind::yang) ij["N"] = initial.N;
  if (initial.kind == InitialKind::file) ij["path"] = initial.path;
  j["initial"] = ij;
  if (drive) {
    j["drive"] = {{"V", drive->V}, {"Omega", drive->Omega}, {"profile", to_string(drive->profile)},
                  {"seed", drive->seed}, {"values", drive->custom}};
  }
  if (target_eta_pair) j["target_eta_pair"] = *target_eta_pair;
  return j;
}

void ExperimentConfig::validate() const {
  if (sites < 2 || sites > 8) throw ValidationError("M", "expected 2 <= M <= 8");
  if (sector.n_up < 0 || sector.n_up > sites || sector.n_down < 0 || sector.n_down > sites) {
    throw ValidationError("sector", "particle numbers outside [0, M]");
  }
  if (!(tau > 0.0)) throw ValidationError("tau", "must be positive");
  if (!(gamma_spin >= 0.0)) throw ValidationError("gamma_spin", "must be non-negative");
  if (!(gamma_charge >= 0.0)) throw ValidationError("gamma_charge", "must be non-negative");
  if (full_space && kind != ExperimentKind::liouvillian_spectrum) {
    throw ValidationError("space", "the full Fock space is only used by liouvillian-spectrum");
  }
  if (initial.kind == InitialKind::thermal && !(initial.beta >= 0.0)) {
    throw ValidationError("initial.beta", "must be non-negative");
  }
  if (initial.kind == InitialKind::yang &&
      (initial.N < 0 || initial.N > sites || sector.n_up != initial.N || sector.n_down != initial.N)) {
    throw ValidationError("initial.N", "Yang state (N, N) must match the sector");
  }
  if (initial.kind == InitialKind::file && initial.path.empty()) {
    throw ValidationError("initial.path", "required for file initial states");
  }
  if (kind == ExperimentKind::thermal_projections &&
      (sites % 2 != 0 || sector.n_up != sites / 2 || sector.n_down != sites / 2)) {
    throw ValidationError("sector", "thermal-projections needs even M at symmetric half filling");
  }
  if (!(window_fraction > 0.0 && window_fraction <= 1.0)) {
    throw ValidationError("window_fraction", "expected 0 < fraction <= 1");
  }

  const std::size_t dim =
      full_space ? (std::size_t{1} << (2 * sites)) : enumerate_sector(sites, sector.n_up, sector.n_down)->size();
  if ((initial.kind == InitialKind::thermal || kind == ExperimentKind::gce_predict) && dim > dense_limit()) {
    throw CapacityError("dense dimension " + std::to_string(dim) + " exceeds the limit " +
                        std::to_string(dense_limit()));
  }

  if (kind == ExperimentKind::liouvillian_spectrum) {
    if (dim * dim > 4096) {
      throw CapacityError("Liouvillian dimension " + std::to_string(dim * dim) + " exceeds 4096");
    }
    return;
  }
  if (kind == ExperimentKind::gce_predict) return;

  if (!(t_final > 0.0)) throw ValidationError("t_final", "must be positive");
  if (!(dt > 0.0)) throw ValidationError("dt", "must be positive");
  if (!(output_every > 0.0) || !is_multiple(output_every, dt)) {
    throw ValidationError("output_every", "must be a positive multiple of dt");
  }
  if (!is_multiple(t_final, output_every)) throw ValidationError("t_final", "must be a multiple of output_every");

  if (kind == ExperimentKind::floquet_vs_dephasing) {
    if (!drive) throw ValidationError("drive", "required for floquet-vs-dephasing");
    if (!(drive->Omega > 0.0)) throw ValidationError("drive.Omega", "must be positive");
    if (drive->profile == ProfileKind::custom && static_cast<int>(drive->custom.size()) != sites) {
      throw ValidationError("drive.values", "custom profile needs M values");
    }
    if (initial.kind == InitialKind::thermal) {
      throw ValidationError("initial.type", "the driven integrator evolves pure states");
    }
    if (!(norm_tol > 0.0)) throw ValidationError("norm_tol", "must be positive");
    return;
  }
  if (drive) throw ValidationError("drive", "only used by floquet-vs-dephasing");

  if (method == Method::trajectories) {
    if (trajectories < 2) throw ValidationError("trajectories", "need at least 2");
    if (initial.kind == InitialKind::thermal) {
      throw ValidationError("initial.type", "trajectories start from a pure state");
    }
    if (kind == ExperimentKind::thermal_projections) {
      throw ValidationError("method", "projections need the density matrix path");
    }
    if (dim > 4900) throw CapacityError("trajectory sector dimension " + std::to_string(dim) + " exceeds 4900");
  } else if (dim > 500) {
    throw CapacityError("density-matrix sector dimension " + std::to_string(dim) + " exceeds 500");
  }
  if (kind == ExperimentKind::perturbation_window && !(t_ref >= 0.0 && t_ref < t_final)) {
    throw ValidationError("t_ref", "must lie inside [0, t_final)");
  }
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("(file)", "cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("(file)", std::string("malformed JSON: ") + e.what());
  }
  ExperimentConfig c = ExperimentConfig::from_json(j);
  c.validate();
  return c;
}

WindowResult measure_window(const std::vector<double>& t, const std::vector<double>& value, double t_ref) {
  if (t.size() != value.size() || t.size() < 2) throw DomainError("window series needs matching t and values");
  if (t_ref < t.front() || t_ref > t.back()) throw DomainError("window series does not cover t_ref");
  std::size_t k = 0;
  while (k + 1 < t.size() && t[k + 1] <= t_ref) ++k;
  double v_ref = value[k];
  if (t[k] < t_ref && k + 1 < t.size()) {
    const double w = (t_ref - t[k]) / (t[k + 1] - t[k]);
    v_ref = value[k] + w * (value[k + 1] - value[k]);
  }
  if (!(v_ref > 0.0)) throw DomainError("window reference value must be positive");

  WindowResult w;
  w.t_ref = t_ref;
  w.value_ref = v_ref;
  w.threshold = v_ref / 3.0;
  double t_prev = t_ref, v_prev = v_ref;
  for (std::size_t n = k + 1; n < t.size(); ++n) {
    if (t[n] <= t_ref) continue;
    if (value[n] <= w.threshold) {
      const double frac = (v_prev - w.threshold) / (v_prev - value[n]);
      w.dt = t_prev + frac * (t[n] - t_prev) - t_ref;
      return w;
    }
    t_prev = t[n];
    v_prev = value[n];
  }
  w.censored = true;
  w.dt = t.back() - t_ref;
  return w;
}

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  RunResult r;
  r.config = cfg;
  Prepared p = prepare(cfg, r.derived);
  if (auto mu = measured_mu(cfg, p.basis)) r.derived["mu"] = *mu;

  if (cfg.kind == ExperimentKind::liouvillian_spectrum) {
    run_liouvillian(cfg, p, r);
  } else {
    const ObservableKit kit(p.basis);
    const ConservedSet q0 = p.rho ? conserved_set(kit, *p.rho) : conserved_set(kit, *p.psi);
    r.derived["initial_conserved"] = {{"eta_pair", q0.eta_pair}, {"n_up", q0.n_up}, {"n_down", q0.n_down},
                                      {"s_z", q0.s_z}};
    solve_gce(cfg, q0, r);
    if (cfg.kind == ExperimentKind::floquet_vs_dephasing) {
      run_driven(cfg, p, r);
    } else if (dynamic(cfg.kind)) {
      run_open_system(cfg, p, opts, r);
    }
    if (dynamic(cfg.kind)) {
      r.derived["sum_rules"] = audit_json(r.audit);
      final_state_summary(cfg, r);
      long_time_summary(cfg, r);
    }
    if (cfg.kind == ExperimentKind::perturbation_window) window_summary(cfg, r);
    if (cfg.kind == ExperimentKind::thermal_projections) projection_summary(p, r);
  }
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<std::string> write_outputs(const RunResult& r, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<std::string> written;
  auto open = [&](const std::string& name, const std::string& header) {
    written.push_back(name);
    auto out = std::make_unique<std::ofstream>(dir / name, std::ios::binary);
    if (!*out) throw std::runtime_error("cannot write " + (dir / name).string());
    *out << header << '\n';
    return out;
  };
  const auto f = format_number;
  const int m = r.config.sites;

  if (!r.samples.empty()) {
    auto ts = open("corr_timeseries.csv", "t,j,re,im,abs,stderr");
    auto cm = open("corr_matrix.csv", "t,i,j,re,im,abs");
    auto sf = open("structure_factor.csv", "t,n,qa,value");
    auto cs = open("conserved.csv", "t,eta_pair,n_up,n_down,s_z");
    for (const auto& s : r.samples) {
      for (int j = 0; j < m; ++j) {
        const cplx c = distance_averaged_corr(s.corr, j);
        *ts << f(s.t) << ',' << j << ',' << f(c.real()) << ',' << f(c.imag()) << ',' << f(std::abs(c)) << ','
            << f(s.stderr_abs[j]) << '\n';
      }
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
          const cplx c = s.corr.c(i, j);
          *cm << f(s.t) << ',' << i << ',' << j << ',' << f(c.real()) << ',' << f(c.imag()) << ','
              << f(std::abs(c)) << '\n';
        }
      }
      for (std::size_t n = 0; n < s.structure.values.size(); ++n) {
        *sf << f(s.t) << ',' << n << ',' << f(s.structure.qa[n]) << ',' << f(s.structure.values[n]) << '\n';
      }
      *cs << f(s.t) << ',' << f(s.conserved.eta_pair) << ',' << f(s.conserved.n_up) << ','
          << f(s.conserved.n_down) << ',' << f(s.conserved.s_z) << '\n';
    }
  } else if (r.config.kind == ExperimentKind::gce_predict && r.gce_values) {
    // Steady-state prediction, stamped t = inf.
    const auto& g = *r.gce_values;
    auto cm = open("corr_matrix.csv", "t,i,j,re,im,abs");
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        const cplx c = g.corr.c(i, j);
        *cm << "inf," << i << ',' << j << ',' << f(c.real()) << ',' << f(c.imag()) << ',' << f(std::abs(c)) << '\n';
      }
    }
    auto sf = open("structure_factor.csv", "t,n,qa,value");
    for (std::size_t n = 0; n < g.structure.values.size(); ++n) {
      *sf << "inf," << n << ',' << f(g.structure.qa[n]) << ',' << f(g.structure.values[n]) << '\n';
    }
  }

  if (!r.projections.empty()) {
    auto pr = open("projection.csv", "block,i,j,re,im,abs");
    for (const auto& rec : r.projections) {
      const CMatrix& a = rec.data.matrix;
      for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
          *pr << rec.block << ',' << i + 1 << ',' << j + 1 << ',' << f(a(i, j).real()) << ',' << f(a(i, j).imag())
              << ',' << f(std::abs(a(i, j))) << '\n';
        }
      }
    }
  }

  if (r.spectrum) {
    auto sp = open("spectrum.csv", "re,im");
    for (const cplx& l : r.spectrum->eigenvalues) *sp << f(l.real()) << ',' << f(l.imag()) << '\n';
  }

  json labels = json::object();
  for (const auto& rec : r.projections) labels[rec.block] = rec.data.labels;
  json manifest = {{"version", kVersion},
                   {"config", r.config.to_json()},
                   {"wall_time_s", r.wall_time},
                   {"outputs", written},
                   {"derived", r.derived}};
  if (!labels.empty()) manifest["projection_labels"] = labels;
  std::ofstream mf(dir / "manifest.json", std::ios::binary);
  mf << manifest.dump(2) << '\n';
  written.push_back("manifest.json");
  return written;
}

}  // namespace etalab
