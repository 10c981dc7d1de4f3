#pragma once

#include "etalab/errors.hpp"
#include "etalab/fock.hpp"
#include "etalab/observables.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace etalab {

/// Eigen-decomposition of eta+ eta- inside one (N_up, N_down) sector, with
/// eigenvalues grouped into degenerate levels.
struct EtaPairBlock {
  BasisPtr basis;
  Eigen::VectorXd eigenvalues;  // ascending
  CMatrix eigenvectors;         // columns match eigenvalues
  std::vector<double> levels;   // distinct eigenvalues
  std::vector<int> level_start; // first column of each level
  std::vector<int> degeneracy;
};

struct EtaPairSpectrum {
  int sites = 0;
  std::vector<EtaPairBlock> blocks;

  double min_level() const;
  double max_level() const;
  /// Number of distinct (eta+ eta-, N_up, N_down) labels.
  std::size_t joint_level_count() const;
};

/// One sector, or every sector of the full Fock space when `sector` is empty.
/// CapacityError when a block exceeds the dense limit.
EtaPairSpectrum etapair_spectrum(int sites, std::optional<Sector> sector);

enum class GceMode { fixed_sector, full_space };

std::string to_string(GceMode mode);
GceMode parse_gce_mode(const std::string& name);

struct GceTargets {
  int sites = 2;
  double eta_pair = 0.0;
  double n_up = 0.0;
  double n_down = 0.0;
  GceMode mode = GceMode::fixed_sector;
};

enum class BoundaryPolicy {
  /// Targets on the edge of the achievable range raise GceBoundaryError.
  error,
  /// A target on the edge of the eta+ eta- range selects the mu1 -> +-inf
  /// limit: the state is supported on the extremal eta+ eta- level(s) only.
  limit,
};

struct GceOptions {
  double tol = 1e-10;
  int max_iterations = 200;
  BoundaryPolicy boundary = BoundaryPolicy::error;
};

class GceBoundaryError : public DomainError {
 public:
  GceBoundaryError(std::string charge, bool upper, const std::string& what)
      : DomainError(what), charge_(std::move(charge)), upper_(upper) {}
  const std::string& charge() const { return charge_; }
  bool upper() const { return upper_; }

 private:
  std::string charge_;
  bool upper_;
};

/// rho proportional to exp(mu1 eta+ eta- + mu2 N_up + mu3 N_down), stored as
/// a probability per (block, level).
struct GceSolution {
  GceMode mode = GceMode::fixed_sector;
  std::array<double, 3> mu{0.0, 0.0, 0.0};
  EtaPairSpectrum spectrum;
  std::vector<std::vector<double>> level_weights;
  std::array<double, 3> residuals{0.0, 0.0, 0.0};
  int iterations = 0;
  /// Set when the boundary-limit policy was used; names the saturated charge.
  std::optional<std::string> saturated;

  /// Block density matrices, each scaled by its block probability (traces
  /// sum to 1 across blocks).
  std::vector<DensityMatrix> density_blocks() const;
  /// Moments <eta+ eta->, <N_up>, <N_down>.
  std::array<double, 3> moments() const;
};

/// Builds the state for given multipliers (no root solve).
GceSolution gce_state(EtaPairSpectrum spectrum, std::array<double, 3> mu, GceMode mode);

/// Newton iteration on the moment equations with covariance Jacobian and step
/// halving; the single-multiplier fixed-sector mode falls back to bisection.
/// In fixed-sector mode only mu1 is solved (mu2 = mu3 = 0) and the sector is
/// (n_up, n_down), which must be integers.
GceSolution solve_multipliers(const GceTargets& targets, const GceOptions& opts = {});
GceSolution solve_multipliers(const GceTargets& targets, EtaPairSpectrum spectrum,
                              const GceOptions& opts = {});

struct GceExpectations {
  EtaCorrMatrix corr;
  /// Common value of C_ij, i != j.
  cplx offdiag = 0.0;
  /// (<eta+ eta-> - sum_i C_ii) / (M (M - 1))
  cplx offdiag_sum_rule = 0.0;
  double offdiag_spread = 0.0;
  Eigen::VectorXd double_occupancy;
  StructureFactor structure;
  double eta_pair = 0.0;
};

/// AlgorithmError if the off-diagonal correlations are not uniform to 1e-10.
GceExpectations gce_expectations(const GceSolution& sol);

}  // namespace etalab
