#include "etalab/gce.hpp"

#include "etalab/errors.hpp"
#include "etalab/spectra.hpp"

#include <algorithm>
#include <cmath>

namespace etalab {

namespace {

constexpr double kLevelTol = 1e-8;

struct Level {
  std::size_t block;
  std::size_t level;
  double log_degeneracy;
  std::array<double, 3> charges;  // eta+ eta-, N_up, N_down
};

std::vector<Level> flatten(const EtaPairSpectrum& s) {
  std::vector<Level> out;
  for (std::size_t b = 0; b < s.blocks.size(); ++b) {
    const auto& blk = s.blocks[b];
    const Sector sec = *blk.basis->sector();
    for (std::size_t l = 0; l < blk.levels.size(); ++l) {
      out.push_back({b, l, std::log(static_cast<double>(blk.degeneracy[l])),
                     {blk.levels[l], static_cast<double>(sec.n_up), static_cast<double>(sec.n_down)}});
    }
  }
  return out;
}

// Probabilities of each level for multipliers mu, restricted to `active`
// levels (inactive ones get zero weight).
std::vector<double> level_probabilities(const std::vector<Level>& levels, const std::vector<bool>& active,
                                        const std::array<double, 3>& mu) {
  std::vector<double> logw(levels.size(), -std::numeric_limits<double>::infinity());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!active[i]) continue;
    double e = levels[i].log_degeneracy;
    for (int c = 0; c < 3; ++c) {
      if (mu[c] != 0.0) e += mu[c] * levels[i].charges[c];
    }
    logw[i] = e;
    top = std::max(top, e);
  }
  std::vector<double> p(levels.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!active[i]) continue;
    p[i] = std::exp(logw[i] - top);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

std::array<double, 3> moments_of(const std::vector<Level>& levels, const std::vector<double>& p) {
  std::array<double, 3> m{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < levels.size(); ++i) {
    for (int c = 0; c < 3; ++c) m[c] += p[i] * levels[i].charges[c];
  }
  return m;
}

Eigen::MatrixXd covariance(const std::vector<Level>& levels, const std::vector<double>& p,
                           const std::vector<int>& idx) {
  const auto m = moments_of(levels, p);
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    for (Eigen::Index a = 0; a < n; ++a) {
      for (Eigen::Index b = 0; b < n; ++b) {
        cov(a, b) += p[i] * (levels[i].charges[idx[a]] - m[idx[a]]) * (levels[i].charges[idx[b]] - m[idx[b]]);
      }
    }
  }
  return cov;
}

void store_weights(GceSolution& sol, const std::vector<Level>& levels, const std::vector<double>& p) {
  sol.level_weights.assign(sol.spectrum.blocks.size(), {});
  for (std::size_t b = 0; b < sol.spectrum.blocks.size(); ++b) {
    sol.level_weights[b].assign(sol.spectrum.blocks[b].levels.size(), 0.0);
  }
  for (std::size_t i = 0; i < levels.size(); ++i) sol.level_weights[levels[i].block][levels[i].level] = p[i];
}

}  // namespace

std::string to_string(GceMode mode) {
  return mode == GceMode::fixed_sector ? "fixed-sector" : "full-space";
}

GceMode parse_gce_mode(const std::string& name) {
  if (name == "fixed-sector") return GceMode::fixed_sector;
  if (name == "full-space") return GceMode::full_space;
  throw DomainError("unknown GCE mode '" + name + "'");
}

double EtaPairSpectrum::min_level() const {
  double v = std::numeric_limits<double>::infinity();
  for (const auto& b : blocks) {
    if (!b.levels.empty()) v = std::min(v, b.levels.front());
  }
  return v;
}

double EtaPairSpectrum::max_level() const {
  double v = -std::numeric_limits<double>::infinity();
  for (const auto& b : blocks) {
    if (!b.levels.empty()) v = std::max(v, b.levels.back());
  }
  return v;
}

std::size_t EtaPairSpectrum::joint_level_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.levels.size();
  return n;
}

EtaPairSpectrum etapair_spectrum(int sites, std::optional<Sector> sector) {
  EtaPairSpectrum out;
  out.sites = sites;
  std::vector<Sector> sectors;
  if (sector) {
    sectors.push_back(*sector);
  } else {
    for (int u = 0; u <= sites; ++u) {
      for (int d = 0; d <= sites; ++d) sectors.push_back({u, d});
    }
  }
  for (const Sector& s : sectors) {
    BasisPtr basis = enumerate_sector(sites, s.n_up, s.n_down);
    const EtaOperators eta = build_eta_ops(basis);
    DenseSpectrum ds = dense_spectrum(eta.pair_number);
    EtaPairBlock blk;
    blk.basis = basis;
    blk.eigenvalues = ds.values;
    blk.eigenvectors = std::move(ds.vectors);
    for (Eigen::Index k = 0; k < blk.eigenvalues.size(); ++k) {
      if (blk.levels.empty() || blk.eigenvalues[k] - blk.eigenvalues[blk.level_start.back()] > kLevelTol) {
        blk.level_start.push_back(static_cast<int>(k));
        blk.degeneracy.push_back(1);
        blk.levels.push_back(blk.eigenvalues[k]);
      } else {
        ++blk.degeneracy.back();
      }
    }
    // Level value = mean of its cluster, so round-off does not bias moments.
    for (std::size_t l = 0; l < blk.levels.size(); ++l) {
      blk.levels[l] = blk.eigenvalues.segment(blk.level_start[l], blk.degeneracy[l]).mean();
    }
    out.blocks.push_back(std::move(blk));
  }
  return out;
}

std::vector<DensityMatrix> GceSolution::density_blocks() const {
  std::vector<DensityMatrix> out;
  for (std::size_t b = 0; b < spectrum.blocks.size(); ++b) {
    const auto& blk = spectrum.blocks[b];
    const auto d = static_cast<Eigen::Index>(blk.basis->size());
    Eigen::VectorXd diag(d);
    for (std::size_t l = 0; l < blk.levels.size(); ++l) {
      diag.segment(blk.level_start[l], blk.degeneracy[l]).setConstant(level_weights[b][l] / blk.degeneracy[l]);
    }
    CMatrix rho = blk.eigenvectors * diag.cast<cplx>().asDiagonal() * blk.eigenvectors.adjoint();
    out.push_back(DensityMatrix{blk.basis, 0.5 * (rho + rho.adjoint())});
  }
  return out;
}

std::array<double, 3> GceSolution::moments() const {
  std::array<double, 3> m{0.0, 0.0, 0.0};
  for (std::size_t b = 0; b < spectrum.blocks.size(); ++b) {
    const auto& blk = spectrum.blocks[b];
    const Sector s = *blk.basis->sector();
    for (std::size_t l = 0; l < blk.levels.size(); ++l) {
      const double p = level_weights[b][l];
      m[0] += p * blk.levels[l];
      m[1] += p * s.n_up;
      m[2] += p * s.n_down;
    }
  }
  return m;
}

GceSolution gce_state(EtaPairSpectrum spectrum, std::array<double, 3> mu, GceMode mode) {
  GceSolution sol;
  sol.mode = mode;
  sol.mu = mu;
  sol.spectrum = std::move(spectrum);
  const auto levels = flatten(sol.spectrum);
  store_weights(sol, levels, level_probabilities(levels, std::vector<bool>(levels.size(), true), mu));
  return sol;
}

GceSolution solve_multipliers(const GceTargets& targets, const GceOptions& opts) {
  std::optional<Sector> sector;
  if (targets.mode == GceMode::fixed_sector) {
    const double u = std::round(targets.n_up), d = std::round(targets.n_down);
    if (std::abs(u - targets.n_up) > 1e-12 || std::abs(d - targets.n_down) > 1e-12) {
      throw DomainError("fixed-sector mode needs integer N_up and N_down targets");
    }
    sector = Sector{static_cast<int>(u), static_cast<int>(d)};
  }
  return solve_multipliers(targets, etapair_spectrum(targets.sites, sector), opts);
}

GceSolution solve_multipliers(const GceTargets& targets, EtaPairSpectrum spectrum, const GceOptions& opts) {
  GceSolution sol;
  sol.mode = targets.mode;
  sol.spectrum = std::move(spectrum);
  const auto levels = flatten(sol.spectrum);
  const std::array<double, 3> target{targets.eta_pair, targets.n_up, targets.n_down};
  const int m = sol.spectrum.sites;

  std::vector<int> free_mu = targets.mode == GceMode::fixed_sector ? std::vector<int>{0}
                                                                   : std::vector<int>{0, 1, 2};
  std::vector<bool> active(levels.size(), true);

  // Range checks against the extreme eigenvalues.
  const double lo = sol.spectrum.min_level();
  const double hi = sol.spectrum.max_level();
  const double btol = 1e-9 * std::max(1.0, std::abs(hi));
  auto boundary = [&](const std::string& charge, bool upper, double value, double edge) {
    throw GceBoundaryError(charge, upper,
                           charge + " target " + std::to_string(value) + (upper ? " at/above" : " at/below") +
                               " the achievable " + (upper ? "maximum " : "minimum ") + std::to_string(edge));
  };
  if (targets.mode == GceMode::full_space) {
    if (targets.n_up <= 0.0) boundary("n_up", false, targets.n_up, 0.0);
    if (targets.n_up >= m) boundary("n_up", true, targets.n_up, m);
    if (targets.n_down <= 0.0) boundary("n_down", false, targets.n_down, 0.0);
    if (targets.n_down >= m) boundary("n_down", true, targets.n_down, m);
  }
  if (targets.eta_pair < lo - btol) boundary("eta_pair", false, targets.eta_pair, lo);
  if (targets.eta_pair > hi + btol) boundary("eta_pair", true, targets.eta_pair, hi);
  const bool at_lo = std::abs(targets.eta_pair - lo) <= btol;
  const bool at_hi = std::abs(targets.eta_pair - hi) <= btol;
  if (at_lo || at_hi) {
    if (opts.boundary == BoundaryPolicy::error) boundary("eta_pair", at_hi, targets.eta_pair, at_hi ? hi : lo);
    const double edge = at_hi ? hi : lo;
    for (std::size_t i = 0; i < levels.size(); ++i) active[i] = std::abs(levels[i].charges[0] - edge) <= btol;
    free_mu.erase(free_mu.begin());
    sol.mu[0] = at_hi ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    sol.saturated = "eta_pair";
  }

  std::array<double, 3> mu{0.0, 0.0, 0.0};
  auto residual = [&](const std::array<double, 3>& x) {
    const auto p = level_probabilities(levels, active, x);
    const auto mom = moments_of(levels, p);
    Eigen::VectorXd r(static_cast<Eigen::Index>(free_mu.size()));
    for (std::size_t a = 0; a < free_mu.size(); ++a) r[a] = mom[free_mu[a]] - target[free_mu[a]];
    return r;
  };

  int it = 0;
  if (!free_mu.empty()) {
    Eigen::VectorXd r = residual(mu);
    bool newton_failed = false;
    while (r.cwiseAbs().maxCoeff() > opts.tol) {
      if (++it > opts.max_iterations) {
        newton_failed = true;
        break;
      }
      const auto p = level_probabilities(levels, active, mu);
      const Eigen::MatrixXd cov = covariance(levels, p, free_mu);
      const Eigen::VectorXd step = cov.fullPivLu().solve(-r);
      if (!step.allFinite()) {
        newton_failed = true;
        break;
      }
      double s = 1.0;
      bool improved = false;
      for (int h = 0; h <= 60; ++h, s *= 0.5) {
        std::array<double, 3> trial = mu;
        for (std::size_t a = 0; a < free_mu.size(); ++a) trial[free_mu[a]] += s * step[a];
        const Eigen::VectorXd rt = residual(trial);
        if (rt.allFinite() && rt.norm() < r.norm()) {
          mu = trial;
          r = rt;
          improved = true;
          break;
        }
      }
      if (!improved) {
        newton_failed = true;
        break;
      }
    }
    if (newton_failed) {
      if (free_mu.size() != 1) {
        throw ConvergenceError("GCE Newton iteration did not converge", r.cwiseAbs().maxCoeff());
      }
      // Monotone 1D moment: bracket and bisect.
      const int c = free_mu[0];
      auto g = [&](double x) {
        std::array<double, 3> t = mu;
        t[c] = x;
        return residual(t)[0];
      };
      double a = -1.0, b = 1.0;
      for (int k = 0; k < 200 && g(a) > 0.0; ++k) a *= 2.0;
      for (int k = 0; k < 200 && g(b) < 0.0; ++k) b *= 2.0;
      double x = 0.5 * (a + b);
      for (int k = 0; k < 400; ++k) {
        x = 0.5 * (a + b);
        const double gx = g(x);
        if (std::abs(gx) <= opts.tol) break;
        (gx > 0.0 ? b : a) = x;
      }
      mu[c] = x;
      r = residual(mu);
      if (std::abs(r[0]) > opts.tol) throw ConvergenceError("GCE bisection did not converge", std::abs(r[0]));
    }
  }

  for (int c : free_mu) sol.mu[c] = mu[c];
  const auto p = level_probabilities(levels, active, mu);
  store_weights(sol, levels, p);
  sol.iterations = it;
  const auto mom = moments_of(levels, p);
  for (int c = 0; c < 3; ++c) sol.residuals[c] = mom[c] - target[c];
  if (targets.mode == GceMode::fixed_sector) {
    sol.residuals[1] = sol.residuals[2] = 0.0;
  }
  return sol;
}

GceExpectations gce_expectations(const GceSolution& sol) {
  const int m = sol.spectrum.sites;
  GceExpectations out;
  out.corr.c = CMatrix::Zero(m, m);
  out.double_occupancy = Eigen::VectorXd::Zero(m);
  CMatrix two_point = CMatrix::Zero(m, m);
  for (const DensityMatrix& rho : sol.density_blocks()) {
    ObservableKit kit(rho.basis);
    out.corr.c += eta_correlation_matrix(kit, rho).c;
    out.double_occupancy += double_occupancy(kit, rho);
    two_point += doublon_two_point(kit, rho);
    out.eta_pair += expectation(kit.eta().pair_number, rho).real();
  }
  out.structure = structure_factor_from_two_point(two_point);
  out.offdiag = out.corr.offdiag_mean();
  out.offdiag_spread = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i != j) out.offdiag_spread = std::max(out.offdiag_spread, std::abs(out.corr.c(i, j) - out.offdiag));
    }
  }
  if (m > 1) {
    out.offdiag_sum_rule = (out.eta_pair - out.corr.c.trace()) / static_cast<double>(m * (m - 1));
  }
  if (out.offdiag_spread > 1e-10) {
    throw AlgorithmError("GCE off-diagonal correlations are not uniform (spread " +
                         std::to_string(out.offdiag_spread) + ")");
  }
  return out;
}

}  // namespace etalab
