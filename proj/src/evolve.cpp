#include "etalab/evolve.hpp"

#include "etalab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

namespace etalab {

namespace {

constexpr cplx kI(0.0, 1.0);

void require_on_basis(const SparseOperator& op, const BasisPtr& basis, const char* what) {
  if (!op.square() || !op.domain()->same_space(*basis)) {
    throw ShapeError(std::string(what) + " does not act on " + basis->label());
  }
}

double uniform_open(std::mt19937_64& gen) {
  return (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53;
}

template <class F>
CVector rk4_step(const F& f, double t, const CVector& y, double h) {
  const CVector k1 = f(t, y);
  const CVector k2 = f(t + 0.5 * h, y + (0.5 * h) * k1);
  const CVector k3 = f(t + 0.5 * h, y + (0.5 * h) * k2);
  const CVector k4 = f(t + h, y + h * k3);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

// --- master equation -------------------------------------------------------

LindbladGenerator::LindbladGenerator(const SparseOperator& H, const JumpSet& jumps)
    : basis_(H.domain()), h_(H.matrix()) {
  if (!H.square()) throw ShapeError("Hamiltonian must be square");
  if (jumps.operators.size() != jumps.rates.size()) throw ShapeError("one rate per jump operator");
  for (const auto& L : jumps.operators) require_on_basis(L, basis_, "jump operator");
  diagonal_ = jumps.all_diagonal();

  const auto d = static_cast<Eigen::Index>(basis_->size());
  if (diagonal_) {
    dephasing_ = CMatrix::Zero(d, d);
    for (std::size_t k = 0; k < jumps.size(); ++k) {
      CVector l = jumps.operators[k].matrix().diagonal();
      const double g = jumps.rates[k];
      for (Eigen::Index b = 0; b < d; ++b) {
        for (Eigen::Index a = 0; a < d; ++a) {
          dephasing_(a, b) += g * (l[a] * std::conj(l[b]) - 0.5 * std::norm(l[a]) - 0.5 * std::norm(l[b]));
        }
      }
    }
  } else {
    damping_ = SparseMat(d, d);
    for (std::size_t k = 0; k < jumps.size(); ++k) {
      SparseMat l = std::sqrt(jumps.rates[k]) * jumps.operators[k].matrix();
      damping_ += 0.5 * SparseMat(SparseMat(l.adjoint()) * l);
      jumps_.push_back(std::move(l));
    }
  }
}

CMatrix LindbladGenerator::apply(const CMatrix& rho) const {
  // rho H = (H rho^dag)^dag for Hermitian H; Eigen's sparse-times-dense
  // kernel is much faster than dense-times-sparse.
  const CMatrix hr = h_ * rho;
  const CMatrix rh = (h_ * rho.adjoint()).adjoint();
  CMatrix out = -kI * (hr - rh);
  if (diagonal_) {
    out += dephasing_.cwiseProduct(rho);
  } else {
    for (const auto& l : jumps_) {
      CMatrix lr = l * rho;
      out += (lr * SparseMat(l.adjoint()));
    }
    out -= damping_ * rho;
    out -= rho * damping_;
  }
  return out;
}

DensityMatrix lindblad_rhs(const DensityMatrix& rho, const SparseOperator& H, const JumpSet& jumps) {
  LindbladGenerator gen(H, jumps);
  if (!rho.basis->same_space(*gen.basis()) || rho.size() != gen.dim()) {
    throw ShapeError("density matrix basis differs from generator basis");
  }
  return DensityMatrix{rho.basis, gen.apply(rho.matrix)};
}

std::vector<std::size_t> output_steps(const std::vector<double>& times, double dt, double t_final) {
  if (!(dt > 0.0)) throw DomainError("time step must be positive");
  std::vector<std::size_t> steps;
  steps.reserve(times.size());
  for (double t : times) {
    if (t < 0.0 || t > t_final * (1.0 + 1e-12)) {
      throw DomainError("output time " + std::to_string(t) + " outside [0, t_final]");
    }
    const double k = std::round(t / dt);
    if (std::abs(k * dt - t) > 1e-9 * std::max(1.0, t)) {
      throw DomainError("output time " + std::to_string(t) + " is not a multiple of dt");
    }
    steps.push_back(static_cast<std::size_t>(k));
  }
  if (!std::is_sorted(steps.begin(), steps.end())) throw DomainError("output times must be sorted");
  return steps;
}

DensityMatrix integrate_master(const DensityMatrix& rho0, const LindbladGenerator& gen, double t_final,
                               const std::vector<double>& output_times, const DensityObserver& observer,
                               const MasterOptions& opts) {
  if (!rho0.basis->same_space(*gen.basis()) || rho0.size() != gen.dim()) {
    throw ShapeError("initial density matrix basis differs from generator basis");
  }
  const double dt = opts.dt;
  const auto steps = output_steps(output_times, dt, t_final);
  const auto n_steps = static_cast<std::size_t>(std::llround(t_final / dt));
  const cplx trace0 = rho0.trace();

  DensityMatrix rho = rho0;
  std::size_t next = 0;
  auto emit = [&](std::size_t step) {
    while (next < steps.size() && steps[next] == step) {
      if (!(std::abs(rho.trace() - trace0) <= opts.trace_tol)) {
        throw NumericalInstability("trace drifted by " + std::to_string(std::abs(rho.trace() - trace0)) +
                                   "; reduce dt");
      }
      const double lam = rho.min_eigenvalue();
      if (!(lam >= opts.positivity_floor)) {
        throw NumericalInstability("density matrix lost positivity (min eigenvalue " +
                                   std::to_string(lam) + "); reduce dt");
      }
      if (observer) observer(static_cast<double>(step) * dt, rho);
      ++next;
    }
  };

  emit(0);
  const double h = dt;
  for (std::size_t s = 1; s <= n_steps; ++s) {
    const CMatrix& y = rho.matrix;
    const CMatrix k1 = gen.apply(y);
    const CMatrix k2 = gen.apply(y + (0.5 * h) * k1);
    const CMatrix k3 = gen.apply(y + (0.5 * h) * k2);
    const CMatrix k4 = gen.apply(y + h * k3);
    rho.matrix += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    rho.hermitize();
    if (!rho.matrix.allFinite()) throw NumericalInstability("density matrix diverged; reduce dt");
    emit(s);
  }
  return rho;
}

std::vector<std::pair<double, DensityMatrix>> integrate_master(const DensityMatrix& rho0,
                                                               const SparseOperator& H,
                                                               const JumpSet& jumps, double t_final,
                                                               const std::vector<double>& output_times,
                                                               const MasterOptions& opts) {
  LindbladGenerator gen(H, jumps);
  std::vector<std::pair<double, DensityMatrix>> out;
  integrate_master(rho0, gen, t_final, output_times,
                   [&](double t, const DensityMatrix& rho) { out.emplace_back(t, rho); }, opts);
  return out;
}

// --- trajectories ----------------------------------------------------------

std::uint64_t trajectory_seed(std::uint64_t master_seed, std::uint64_t index) {
  std::uint64_t z = master_seed + (index + 1) * 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

TrajectoryRecord run_trajectory(const TrajectoryProblem& p, std::uint64_t seed) {
  const BasisPtr& basis = p.H.domain();
  if (!p.psi0.basis->same_space(*basis)) throw ShapeError("initial state basis differs from H");
  if (!p.psi0.is_normalized()) throw DomainError("trajectory initial state must be normalized");
  for (const auto& L : p.jumps.operators) require_on_basis(L, basis, "jump operator");
  const auto steps = output_steps(p.output_times, p.dt, p.t_final);
  const auto n_steps = static_cast<std::size_t>(std::llround(p.t_final / p.dt));

  // -i H_eff = -i H - (1/2) sum_k g_k L_k^dag L_k
  SparseMat gen = cplx(0.0, -1.0) * p.H.matrix();
  std::vector<SparseMat> channels;
  for (std::size_t k = 0; k < p.jumps.size(); ++k) {
    SparseMat l = std::sqrt(p.jumps.rates[k]) * p.jumps.operators[k].matrix();
    gen -= 0.5 * SparseMat(SparseMat(l.adjoint()) * l);
    channels.push_back(std::move(l));
  }
  auto f = [&gen](double, const CVector& y) -> CVector { return gen * y; };

  std::mt19937_64 rng(seed);
  TrajectoryRecord rec;
  rec.seed = seed;
  CVector psi = p.psi0.amplitudes;
  double r = uniform_open(rng);

  std::size_t next = 0;
  auto emit = [&](std::size_t step) {
    while (next < steps.size() && steps[next] == step) {
      StateVector v{basis, psi / psi.norm()};
      rec.times.push_back(static_cast<double>(step) * p.dt);
      rec.samples.push_back(p.sampler ? p.sampler(v) : std::vector<cplx>{});
      ++next;
    }
  };
  emit(0);

  for (std::size_t s = 1; s <= n_steps; ++s) {
    double t = static_cast<double>(s - 1) * p.dt;
    double remaining = p.dt;
    while (remaining > 0.0) {
      const double n0 = psi.squaredNorm();
      CVector trial = rk4_step(f, t, psi, remaining);
      const double n1 = trial.squaredNorm();
      if (n1 >= r || channels.empty()) {
        psi = std::move(trial);
        break;
      }
      const double frac = std::clamp((n0 - r) / (n0 - n1), 0.0, 1.0);
      const double h = frac * remaining;
      CVector at_jump = h > 0.0 ? rk4_step(f, t, psi, h) : psi;

      std::vector<double> weights(channels.size());
      double total = 0.0;
      for (std::size_t k = 0; k < channels.size(); ++k) {
        weights[k] = (channels[k] * at_jump).squaredNorm();
        total += weights[k];
      }
      if (!(total > 0.0)) {
        throw AlgorithmError("jump fired but every channel weight vanished at t = " +
                             std::to_string(t + h) + " (state norm " +
                             std::to_string(at_jump.norm()) + ")");
      }
      double pick = uniform_open(rng) * total;
      std::size_t k = 0;
      while (k + 1 < channels.size() && pick >= weights[k]) {
        pick -= weights[k];
        ++k;
      }
      psi = channels[k] * at_jump;
      psi /= psi.norm();
      t += h;
      remaining -= h;
      rec.jumps.push_back({t, static_cast<int>(k)});
      r = uniform_open(rng);
      if (remaining <= 1e-15 * p.dt) break;
    }
    emit(s);
  }
  return rec;
}

EnsembleEstimate ensemble_average(const TrajectoryProblem& problem, std::size_t n,
                                  std::uint64_t master_seed, const EnsembleOptions& opts) {
  if (n < 2) throw DomainError("ensemble needs at least two trajectories");
  std::vector<TrajectoryRecord> records(n);
  const unsigned threads = std::max(1U, std::min<unsigned>(opts.threads, static_cast<unsigned>(n)));

  auto seed_of = [&](std::size_t i) {
    return trajectory_seed(master_seed, opts.identical_seeds ? 0 : i);
  };
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) records[i] = run_trajectory(problem, seed_of(i));
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += threads) records[i] = run_trajectory(problem, seed_of(i));
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  EnsembleEstimate est;
  est.trajectories = n;
  est.times = records[0].times;
  const std::size_t nt = est.times.size();
  const std::size_t nobs = nt > 0 ? records[0].samples[0].size() : 0;
  est.mean.assign(nt, std::vector<cplx>(nobs));
  est.se_re.assign(nt, std::vector<double>(nobs));
  est.se_im.assign(nt, std::vector<double>(nobs));
  est.se_abs.assign(nt, std::vector<double>(nobs));
  for (const auto& r : records) est.total_jumps += r.jumps.size();

  const double dn = static_cast<double>(n);
  for (std::size_t t = 0; t < nt; ++t) {
    for (std::size_t k = 0; k < nobs; ++k) {
      cplx sum = 0.0;
      for (const auto& r : records) sum += r.samples[t][k];
      const cplx mean = sum / dn;
      double vre = 0.0, vim = 0.0, cov = 0.0;
      for (const auto& r : records) {
        const cplx d = r.samples[t][k] - mean;
        vre += d.real() * d.real();
        vim += d.imag() * d.imag();
        cov += d.real() * d.imag();
      }
      vre /= dn - 1.0;
      vim /= dn - 1.0;
      cov /= dn - 1.0;
      est.mean[t][k] = mean;
      est.se_re[t][k] = std::sqrt(vre / dn);
      est.se_im[t][k] = std::sqrt(vim / dn);
      const double a2 = std::norm(mean);
      const double vabs = a2 > 0.0
                              ? (mean.real() * mean.real() * vre + mean.imag() * mean.imag() * vim +
                                 2.0 * mean.real() * mean.imag() * cov) / a2
                              : vre + vim;
      est.se_abs[t][k] = std::sqrt(std::max(0.0, vabs) / dn);
    }
  }
  return est;
}

// --- driven closed evolution -----------------------------------------------

double spectral_radius_bound(const SparseOperator& op) {
  double best = 0.0;
  const SparseMat& m = op.matrix();
  for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
    double row = 0.0;
    for (SparseMat::InnerIterator it(m, r); it; ++it) row += std::abs(it.value());
    best = std::max(best, row);
  }
  return best;
}

double rk4_unitary_step_bound(double spectral_bound, double t_final, double tol) {
  if (!(spectral_bound > 0.0) || !(t_final > 0.0)) return std::numeric_limits<double>::infinity();
  return std::pow(144.0 * tol / (t_final * std::pow(spectral_bound, 6.0)), 0.2);
}

StateVector integrate_schrodinger_td(const StateVector& psi0, const SparseOperator& H,
                                     const SparseOperator& F, const DriveSchedule& drive,
                                     double t_final, const std::vector<double>& output_times,
                                     const PureObserver& observer, const DrivenOptions& opts) {
  const BasisPtr& basis = H.domain();
  require_on_basis(H, psi0.basis, "Hamiltonian");
  require_on_basis(F, psi0.basis, "field operator");
  if (!psi0.is_normalized()) throw DomainError("initial state must be normalized");
  if (!(drive.Omega > 0.0)) throw DomainError("drive frequency must be positive");
  const auto steps = output_steps(output_times, opts.dt, t_final);
  const auto n_steps = static_cast<std::size_t>(std::llround(t_final / opts.dt));

  const SparseMat& h = H.matrix();
  const bool diag = F.is_diagonal();
  const CVector fdiag = F.matrix().diagonal();
  const SparseMat& fm = F.matrix();
  auto rhs = [&](double t, const CVector& y) -> CVector {
    const double b = drive.V * std::cos(drive.Omega * t);
    CVector out = h * y;
    if (b != 0.0) {
      if (diag) {
        out += b * fdiag.cwiseProduct(y);
      } else {
        out += b * (fm * y);
      }
    }
    return -kI * out;
  };

  CVector psi = psi0.amplitudes;
  std::size_t next = 0;
  auto emit = [&](std::size_t step) {
    while (next < steps.size() && steps[next] == step) {
      const double drift = std::abs(psi.norm() - 1.0);
      if (!(drift <= opts.norm_tol)) {
        throw NumericalInstability("norm drifted by " + std::to_string(drift) + " at t = " +
                                   std::to_string(static_cast<double>(step) * opts.dt) +
                                   "; reduce dt");
      }
      if (observer) observer(static_cast<double>(step) * opts.dt, StateVector{basis, psi});
      ++next;
    }
  };
  emit(0);
  for (std::size_t s = 1; s <= n_steps; ++s) {
    psi = rk4_step(rhs, static_cast<double>(s - 1) * opts.dt, psi, opts.dt);
    emit(s);
  }
  const double drift = std::abs(psi.norm() - 1.0);
  if (!(drift <= opts.norm_tol)) {
    throw NumericalInstability("norm drifted by " + std::to_string(drift) + "; reduce dt");
  }
  return StateVector{basis, psi};
}

// --- Krylov propagation ----------------------------------------------------

StateVector krylov_propagate(const SparseOperator& H, const StateVector& psi, double t, int subspace,
                             double tol) {
  require_on_basis(H, psi.basis, "Hamiltonian");
  const SparseMat& h = H.matrix();
  const Eigen::Index n = h.rows();
  CVector v = psi.amplitudes;
  const double scale = v.norm();
  if (scale == 0.0 || t == 0.0) return psi;

  double done = 0.0;
  double step = t;
  while (std::abs(t - done) > 1e-14 * std::abs(t)) {
    step = std::copysign(std::min(std::abs(step), std::abs(t - done)), t);
    const int m = static_cast<int>(std::min<Eigen::Index>(subspace, n));
    std::vector<CVector> basis{v / v.norm()};
    std::vector<double> alpha, beta;
    double tail = 0.0;
    for (int j = 0; j < m; ++j) {
      CVector w = h * basis[j];
      alpha.push_back(basis[j].dot(w).real());
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& b : basis) w -= b * b.dot(w);
      }
      const double b = w.norm();
      if (b < 1e-13) break;
      if (j + 1 == m) {
        tail = b;
        break;
      }
      beta.push_back(b);
      basis.push_back(w / b);
    }
    const auto k = static_cast<Eigen::Index>(alpha.size());
    Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
      tri(i, i) = alpha[i];
      if (i + 1 < k) tri(i, i + 1) = tri(i + 1, i) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tri);
    const Eigen::MatrixXd& q = es.eigenvectors();
    CVector phase(k);
    for (Eigen::Index i = 0; i < k; ++i) phase[i] = std::exp(-kI * es.eigenvalues()[i] * step) * q(0, i);
    CVector coeff = q.cast<cplx>() * phase;
    if (tail * std::abs(coeff[k - 1]) > tol && std::abs(step) > 1e-12) {
      step *= 0.5;
      continue;
    }
    CVector next = CVector::Zero(n);
    for (Eigen::Index i = 0; i < k; ++i) next += coeff[i] * basis[i];
    v = next * v.norm();
    done += step;
    step *= 1.5;
  }
  return StateVector{psi.basis, v};
}

}  // namespace etalab
