#pragma once

#include "etalab/fock.hpp"
#include "etalab/model.hpp"

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace etalab {

/// Precomputed Lindblad generator
///   L rho = -i[H, rho] + sum_k g_k (L_k rho L_k^dag - {L_k^dag L_k, rho} / 2).
/// Diagonal jump sets collapse the dissipator into an entrywise rate matrix.
class LindbladGenerator {
 public:
  LindbladGenerator(const SparseOperator& H, const JumpSet& jumps);

  CMatrix apply(const CMatrix& rho) const;
  const BasisPtr& basis() const { return basis_; }
  std::size_t dim() const { return basis_->size(); }

 private:
  BasisPtr basis_;
  SparseMat h_;
  bool diagonal_ = true;
  CMatrix dephasing_;             // diagonal jumps
  std::vector<SparseMat> jumps_;  // general jumps, pre-scaled by sqrt(rate)
  SparseMat damping_;             // sum_k g_k L_k^dag L_k / 2
};

/// d rho / dt for a single state.
DensityMatrix lindblad_rhs(const DensityMatrix& rho, const SparseOperator& H, const JumpSet& jumps);

/// Output times must be integer multiples of dt (to 1e-9 relative); t = 0
/// may be included. Times outside [0, t_final] are rejected.
std::vector<std::size_t> output_steps(const std::vector<double>& times, double dt, double t_final);

struct MasterOptions {
  double dt = 0.01;
  double trace_tol = 1e-8;
  /// Minimum eigenvalue allowed at output times.
  double positivity_floor = -1e-6;
};

using DensityObserver = std::function<void(double t, const DensityMatrix& rho)>;

/// Classical RK4 on rho with re-Hermitization after every step. The observer
/// runs at each output time. NumericalInstability on positivity or trace loss.
DensityMatrix integrate_master(const DensityMatrix& rho0, const LindbladGenerator& gen, double t_final,
                               const std::vector<double>& output_times, const DensityObserver& observer,
                               const MasterOptions& opts = {});

/// Convenience overload that stores every output state.
std::vector<std::pair<double, DensityMatrix>> integrate_master(const DensityMatrix& rho0,
                                                               const SparseOperator& H,
                                                               const JumpSet& jumps, double t_final,
                                                               const std::vector<double>& output_times,
                                                               const MasterOptions& opts = {});

using PureSampler = std::function<std::vector<cplx>(const StateVector& psi)>;

struct JumpEvent {
  double time;
  int channel;
};

struct TrajectoryRecord {
  std::uint64_t seed = 0;
  std::vector<JumpEvent> jumps;
  std::vector<double> times;
  /// samples[t][k]: k-th observable of the normalized state at times[t].
  std::vector<std::vector<cplx>> samples;
};

struct TrajectoryProblem {
  StateVector psi0;
  SparseOperator H;
  JumpSet jumps;
  double t_final = 0.0;
  double dt = 0.01;
  std::vector<double> output_times;
  PureSampler sampler;
};

/// Waiting-time unraveling: the unnormalized state evolves under
/// H_eff = H - (i/2) sum_k g_k L_k^dag L_k with RK4; a jump fires when
/// ||psi||^2 drops below a uniform draw r, at a time found by linear
/// interpolation of ||psi||^2 inside the step. The step is re-integrated up
/// to that time, channel k is picked with weight g_k ||L_k psi||^2, and the
/// remainder of the step is integrated after the jump.
TrajectoryRecord run_trajectory(const TrajectoryProblem& problem, std::uint64_t seed);

/// splitmix64 finalizer applied to master + (index + 1) * 0x9e3779b97f4a7c15.
std::uint64_t trajectory_seed(std::uint64_t master_seed, std::uint64_t index);

struct EnsembleEstimate {
  std::size_t trajectories = 0;
  std::vector<double> times;
  std::vector<std::vector<cplx>> mean;
  /// Standard errors (sample std / sqrt(N)) of the real and imaginary parts,
  /// and of |mean| by first-order error propagation.
  std::vector<std::vector<double>> se_re;
  std::vector<std::vector<double>> se_im;
  std::vector<std::vector<double>> se_abs;
  std::size_t total_jumps = 0;
};

struct EnsembleOptions {
  unsigned threads = 1;
  /// Every trajectory uses trajectory_seed(master_seed, 0).
  bool identical_seeds = false;
};

/// Runs N >= 2 trajectories and reduces them in index order, so the result
/// does not depend on the thread count.
EnsembleEstimate ensemble_average(const TrajectoryProblem& problem, std::size_t n,
                                  std::uint64_t master_seed, const EnsembleOptions& opts = {});

using PureObserver = std::function<void(double t, const StateVector& psi)>;

struct DriveSchedule {
  double V = 0.0;
  double Omega = 1.0;
};

struct DrivenOptions {
  double dt = 0.005;
  double norm_tol = 1e-8;
};

/// RK4 for i d psi/dt = (H + V cos(Omega t) F) psi with H(t) evaluated at the
/// stage times. NumericalInstability when | ||psi|| - 1 | exceeds norm_tol.
StateVector integrate_schrodinger_td(const StateVector& psi0, const SparseOperator& H,
                                     const SparseOperator& F, const DriveSchedule& drive,
                                     double t_final, const std::vector<double>& output_times,
                                     const PureObserver& observer, const DrivenOptions& opts = {});

/// Largest RK4 step for which the accumulated norm loss over t_final stays
/// below `tol`, given a bound on the spectral radius of H(t). Uses the
/// imaginary-axis stability polynomial, |R(iy)| ~ 1 - y^6 / 144.
double rk4_unitary_step_bound(double spectral_bound, double t_final, double tol);

/// Gershgorin bound on the spectral radius.
double spectral_radius_bound(const SparseOperator& op);

/// exp(-i H t) psi by Lanczos with a fixed subspace size; substeps are
/// halved until the Krylov error estimate falls below tol.
StateVector krylov_propagate(const SparseOperator& H, const StateVector& psi, double t,
                             int subspace = 20, double tol = 1e-13);

}  // namespace etalab
