#pragma once

#include "etalab/fock.hpp"

#include <cstdint>

namespace etalab {

struct EigenPair {
  double value = 0.0;
  StateVector vector;
  /// ||H v - E v||_2
  double residual = 0.0;
  /// E_1 - E_0 when known; the ground space is flagged degenerate below 1e-8.
  double gap = 0.0;
  bool degenerate = false;
};

struct ThermalState {
  double beta = 0.0;
  DensityMatrix rho;
};

struct LanczosOptions {
  int krylov_size = 120;
  int max_restarts = 30;
  double tolerance = 1e-10;
  std::uint64_t seed = 20190607;
  /// Sectors at or below this dimension are diagonalized densely.
  std::size_t dense_fallback = 512;
};

/// Dense-path capacity: ETALAB_DENSE_LIMIT if set, else 5000.
std::size_t dense_limit();

/// Lowest eigenpair. DomainError for non-Hermitian input, ConvergenceError
/// when restarted Lanczos stalls.
EigenPair ground_state(const SparseOperator& H, const LanczosOptions& opts = {});
EigenPair ground_state_dense(const SparseOperator& H);
/// Always takes the Lanczos path regardless of dimension.
EigenPair ground_state_lanczos(const SparseOperator& H, const LanczosOptions& opts = {});

/// rho = exp(-beta H) / Z within H's basis.
ThermalState thermal_state(const SparseOperator& H, double beta);

/// Eigen-decomposition of a Hermitian sparse operator through a dense copy.
struct DenseSpectrum {
  Eigen::VectorXd values;
  CMatrix vectors;
};
DenseSpectrum dense_spectrum(const SparseOperator& H);

}  // namespace etalab
